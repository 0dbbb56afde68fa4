#![no_main]
use cagkit_core::review::AnnotationSubmission;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(sub) = serde_json::from_slice::<AnnotationSubmission>(data) {
        let _ = sub.validate(chrono::DateTime::UNIX_EPOCH);
    }
});
