#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(replay) = cagkit_core::review::parse_log(data) {
        assert!(replay.valid_len <= data.len());
        assert!(replay.events.windows(2).all(|w| w[0].seq() < w[1].seq()));
    }
});
