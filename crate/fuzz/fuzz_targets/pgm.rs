#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = cagkit_core::ingest::decode_pgm(data) {
        assert_eq!(img.pixels.len(), img.width as usize * img.height as usize);
    }
});
