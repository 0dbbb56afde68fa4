#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cine) = cagkit_core::ingest::parse_dicom(data) {
        let per_frame = cine.rows as usize * cine.columns as usize;
        assert!(cine.frames.iter().all(|f| f.len() == per_frame));
    }
});
