#![no_main]
use cagkit_core::dataset::validate_split;
use cagkit_core::{CorpusRecord, SplitManifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(manifest) = serde_json::from_slice::<SplitManifest>(data) else { return };
    let _ = validate_split::<CorpusRecord>(&manifest, &[]);
    for (group, _) in &manifest.assignment {
        let _ = manifest.split_of(group);
    }
    let _ = serde_json::to_vec(&manifest);
});
