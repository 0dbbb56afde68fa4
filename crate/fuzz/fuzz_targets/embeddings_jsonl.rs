#![no_main]
use cagkit_core::vlscore::{parse_jsonl, LoadOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_jsonl(text, &LoadOptions::default());
    let opts = LoadOptions {
        model_id: Some("m".into()),
        backbone_id: Some("b".into()),
        unit_norm: false,
        normalize_on_load: false,
    };
    let _ = parse_jsonl(text, &opts);
});
