//! Pipeline configuration file (TOML).
//!
//! Relative paths are resolved against the directory holding the config
//! file, so a config and its inputs can be moved together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cagkit_core::classify::SelectionPolicy;
use cagkit_core::dataset::{Granularity, SplitRatios};
use cagkit_core::ingest::FormatHint;
use cagkit_core::vlscore::{BackboneConstants, EmbeddingFormat};
use cagkit_core::SamplerConfig;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Read { path: String, reason: String },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{key}: path {path} does not exist")]
    MissingPath { key: String, path: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub inputs: Inputs,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub vlscore: BackboneConstants,
    #[serde(default)]
    pub service: ServiceSection,
    /// Directory of the config file. Not read from the file.
    #[serde(skip)]
    pub base: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// DICOM files or image directories, one per video.
    #[serde(default)]
    pub cines: Vec<PathBuf>,
    #[serde(default)]
    pub format: FormatHint,
    pub reports: Option<PathBuf>,
    pub summaries: Option<PathBuf>,
    pub generated: Option<PathBuf>,
    /// Ground-truth frame labels for classification metrics.
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub embeddings: Vec<EmbeddingInput>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingInput {
    pub path: PathBuf,
    pub format: Option<String>,
    pub model_id: Option<String>,
    pub backbone_id: Option<String>,
    #[serde(default = "yes")]
    pub unit_norm: bool,
    #[serde(default)]
    pub normalize_on_load: bool,
}

fn yes() -> bool {
    true
}

impl EmbeddingInput {
    pub fn resolved_format(&self) -> Result<EmbeddingFormat, ConfigError> {
        match self.format.as_deref() {
            None => Ok(EmbeddingFormat::from_path(&self.path)),
            Some("jsonl") => Ok(EmbeddingFormat::Jsonl),
            Some("binary") => Ok(EmbeddingFormat::Binary),
            Some(other) => Err(ConfigError::Invalid(format!(
                "embedding format must be jsonl or binary, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    /// Lookup table of per-frame probabilities or labels.
    pub stub: Option<PathBuf>,
    /// External predictor process, program first.
    pub command: Option<Vec<String>>,
    #[serde(default = "default_resize")]
    pub resize: [u32; 2],
    #[serde(default)]
    pub selection: SelectionPolicy,
}

fn default_resize() -> [u32; 2] {
    [224, 224]
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            stub: None,
            command: None,
            resize: default_resize(),
            selection: SelectionPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default)]
    pub ratios: SplitRatios,
    #[serde(default)]
    pub seed: u64,
    /// Which manifest drives the per-split corpus exports and the service.
    #[serde(default = "exam")]
    pub export: Granularity,
}

fn exam() -> Granularity {
    Granularity::Exam
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: SplitRatios::default(),
            seed: 0,
            export: Granularity::Exam,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSection {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_store")]
    pub store: PathBuf,
    /// Bearer token to reviewer id.
    #[serde(default)]
    pub tokens: BTreeMap<String, String>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_store() -> PathBuf {
    PathBuf::from("review_store")
}

fn default_snapshot_every() -> usize {
    500
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            bind: default_bind(),
            store: default_store(),
            tokens: BTreeMap::new(),
            snapshot_every: default_snapshot_every(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut config: PipelineConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        config.base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Ok(config)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.out)
    }

    /// Checks value ranges and that every input path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sampler.window_radius == 0 {
            return Err(ConfigError::Invalid("sampler.window_radius must be at least 1".into()));
        }
        if self.sampler.min_gap == 0 {
            return Err(ConfigError::Invalid("sampler.min_gap must be at least 1".into()));
        }
        self.split
            .ratios
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("split.ratios: {e}")))?;
        if self.predictor.stub.is_some() && self.predictor.command.is_some() {
            return Err(ConfigError::Invalid("set only one of predictor.stub and predictor.command".into()));
        }
        if self.predictor.command.as_ref().is_some_and(|c| c.is_empty()) {
            return Err(ConfigError::Invalid("predictor.command is empty".into()));
        }
        if self.predictor.resize.contains(&0) {
            return Err(ConfigError::Invalid("predictor.resize must be positive".into()));
        }
        if self.service.snapshot_every == 0 {
            return Err(ConfigError::Invalid("service.snapshot_every must be at least 1".into()));
        }
        for e in &self.inputs.embeddings {
            e.resolved_format()?;
        }

        let mut paths: Vec<(String, &Path)> = Vec::new();
        for (i, c) in self.inputs.cines.iter().enumerate() {
            paths.push((format!("inputs.cines[{i}]"), c));
        }
        for (key, p) in [
            ("inputs.reports", &self.inputs.reports),
            ("inputs.summaries", &self.inputs.summaries),
            ("inputs.generated", &self.inputs.generated),
            ("inputs.labels", &self.inputs.labels),
            ("predictor.stub", &self.predictor.stub),
        ] {
            if let Some(p) = p {
                paths.push((key.to_string(), p));
            }
        }
        for (i, e) in self.inputs.embeddings.iter().enumerate() {
            paths.push((format!("inputs.embeddings[{i}].path"), &e.path));
        }
        for (key, p) in paths {
            if !self.resolve(p).exists() {
                return Err(ConfigError::MissingPath {
                    key,
                    path: p.display().to_string(),
                });
            }
        }
        Ok(())
    }
}
