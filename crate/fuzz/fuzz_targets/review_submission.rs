#![no_main]
use cagkit_core::review::ReviewSubmission;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(sub) = serde_json::from_slice::<ReviewSubmission>(data) {
        if let Ok(record) = sub.validate(chrono::DateTime::UNIX_EPOCH) {
            assert!(record.overall <= cagkit_core::review::MAX_OVERALL as u8);
        }
    }
});
