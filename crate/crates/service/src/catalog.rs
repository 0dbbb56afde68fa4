//! Read-only view of the corpus the service reviews.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use cagkit_core::dataset::{CorpusRecord, Split, SplitManifest};
use cagkit_core::sampler::CandidateSet;

use crate::ServiceError;

pub struct Catalog {
    records: BTreeMap<String, CorpusRecord>,
    manifest: Option<SplitManifest>,
    frames: BTreeSet<(String, usize)>,
    models: Vec<String>,
    frame_root: PathBuf,
}

impl Catalog {
    pub fn load(
        corpus: &Path,
        frame_root: &Path,
        manifest: Option<&Path>,
        candidates: Option<&Path>,
    ) -> Result<Self, ServiceError> {
        let records: Vec<CorpusRecord> =
            cagkit_core::jsonl::read_path(corpus).map_err(|e| ServiceError::Corpus(e.to_string()))?;
        let manifest = match manifest {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Corpus(format!("{}: {e}", p.display())))?;
                Some(serde_json::from_str(&text).map_err(|e| ServiceError::Corpus(format!("{}: {e}", p.display())))?)
            }
            None => None,
        };
        let mut frames: BTreeSet<(String, usize)> =
            records.iter().map(|r| (r.video_id.clone(), r.frame_index)).collect();
        if let Some(p) = candidates {
            let sets: Vec<CandidateSet> =
                cagkit_core::jsonl::read_path(p).map_err(|e| ServiceError::Corpus(e.to_string()))?;
            for set in sets {
                frames.extend(set.selected.iter().map(|&i| (set.video_id.clone(), i)));
            }
        }
        let models: BTreeSet<String> = records.iter().flat_map(|r| r.generated.keys().cloned()).collect();
        Ok(Self {
            records: records.into_iter().map(|r| (r.case_id(), r)).collect(),
            manifest,
            frames,
            models: models.into_iter().collect(),
            frame_root: frame_root.to_path_buf(),
        })
    }

    pub fn get(&self, case_id: &str) -> Option<&CorpusRecord> {
        self.records.get(case_id)
    }

    pub fn records(&self) -> impl Iterator<Item = &CorpusRecord> {
        self.records.values()
    }

    pub fn has_manifest(&self) -> bool {
        self.manifest.is_some()
    }

    pub fn split_of(&self, record: &CorpusRecord) -> Option<Split> {
        let m = self.manifest.as_ref()?;
        m.split_of(m.granularity.group_of(record))
    }

    pub fn has_frame(&self, video_id: &str, frame_index: usize) -> bool {
        self.frames.contains(&(video_id.to_string(), frame_index))
    }

    /// Model ids with generated texts, sorted.
    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn frame_path(&self, record: &CorpusRecord) -> PathBuf {
        self.frame_root.join(&record.image_ref)
    }
}
