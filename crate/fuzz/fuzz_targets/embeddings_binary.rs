#![no_main]
use cagkit_core::vlscore::{parse_binary, BinaryMeta, LoadOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let meta = BinaryMeta { model_id: "m".into(), backbone_id: "b".into() };
    for opts in [
        LoadOptions::default(),
        LoadOptions { unit_norm: false, ..LoadOptions::default() },
        LoadOptions { normalize_on_load: true, ..LoadOptions::default() },
    ] {
        if let Ok(triples) = parse_binary(data, &meta, &opts) {
            for t in &triples {
                assert!(t.i_e.len() == t.g_e.len() && t.g_e.len() == t.r_e.len());
            }
        }
    }
});
