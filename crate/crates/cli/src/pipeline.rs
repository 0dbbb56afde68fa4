//! Pipeline stages. Each stage reads its declared inputs from the config or
//! from earlier artifacts in the output directory and writes its own
//! artifacts there.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use cagkit_core::classify::{
    predict_frames, select_top_confidence, ClassifyError, ExternalProcessPredictor, KeyFrame, LookupPredictor,
    PredictorAdapter,
};
use cagkit_core::dataset::{
    attach_generated, build_corpus, load_table, split_by_group, training_export, validate_split, CorpusRecord,
    DatasetError, GeneratedRow, Granularity, ReportRow, Split, SplitError, SplitManifest, SummaryRow,
};
use cagkit_core::ingest::{encode_png, load_cine, FormatHint, FrameStats, IngestError};
use cagkit_core::jsonl::{self, JsonlError};
use cagkit_core::review::StoreError;
use cagkit_core::sampler::{candidates_from_stats, SamplerError};
use cagkit_core::vlscore::{evaluate_corpus, load_embeddings, GroupSummary, LoadOptions, VlScoreError};
use cagkit_core::{CandidateSet, CineSequence, FramePrediction};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};

pub const INGEST: &str = "ingest.jsonl";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const PREDICTIONS: &str = "predictions.jsonl";
pub const KEYFRAMES: &str = "keyframes.jsonl";
pub const CORPUS: &str = "corpus.jsonl";
pub const VLSCORE_RESULTS: &str = "vlscore_results.jsonl";
pub const VLSCORE_SUMMARY: &str = "vlscore_summary.json";
pub const VLSCORE_TABLE: &str = "vlscore_table.txt";
pub const HISTOGRAMS_DIR: &str = "histograms";

pub fn split_file(g: Granularity) -> String {
    format!("split_{}.json", granularity_name(g))
}

pub fn granularity_name(g: Granularity) -> &'static str {
    match g {
        Granularity::Video => "video",
        Granularity::Exam => "exam",
    }
}

pub fn corpus_split_file(s: Split) -> String {
    format!("corpus_{}.jsonl", s.as_str())
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Cine { path: String, source: IngestError },
    #[error("video {0} appears in more than one input")]
    DuplicateVideo(String),
    #[error("{video_id}: {source}")]
    Sampler { video_id: String, source: SamplerError },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    VlScore(#[from] VlScoreError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Artifact { path: String, source: JsonlError },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{0}")]
    Inconsistent(String),
    #[error("service: {0}")]
    Service(String),
}

pub type Result<T> = std::result::Result<T, StageError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> StageError {
    StageError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    jsonl::read_path(path).map_err(|source| StageError::Artifact {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    jsonl::write_path(path, records).map_err(|source| StageError::Artifact {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// One ingested video: where it came from plus its frame statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub exam_id: String,
    pub video_id: String,
    /// Input path as written in the config.
    pub source: String,
    pub format: FormatHint,
    pub width: u32,
    pub height: u32,
    pub bits: u8,
    pub frames: usize,
    pub stats: Vec<FrameStats>,
}

pub struct Stage<'a> {
    pub config: &'a PipelineConfig,
    pub out: PathBuf,
}

impl<'a> Stage<'a> {
    pub fn new(config: &'a PipelineConfig) -> Result<Self> {
        let out = config.out_dir();
        create_dir(&out)?;
        Ok(Self { config, out })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn load_source(&self, rec: &IngestRecord) -> Result<CineSequence> {
        let seq = load_cine(&self.config.resolve(Path::new(&rec.source)), rec.format).map_err(|source| {
            StageError::Cine {
                path: rec.source.clone(),
                source,
            }
        })?;
        if seq.video_id() != rec.video_id || seq.len() != rec.frames {
            return Err(StageError::Inconsistent(format!(
                "{} changed since ingest: expected video {} with {} frames",
                rec.source, rec.video_id, rec.frames
            )));
        }
        Ok(seq)
    }

    fn ingest_index(&self) -> Result<HashMap<String, IngestRecord>> {
        let records: Vec<IngestRecord> = read_jsonl(&self.path(INGEST))?;
        Ok(records.into_iter().map(|r| (r.video_id.clone(), r)).collect())
    }

    pub fn ingest(&self) -> Result<Vec<IngestRecord>> {
        let inputs = &self.config.inputs;
        let mut records = Vec::with_capacity(inputs.cines.len());
        for p in &inputs.cines {
            let path = self.config.resolve(p);
            let source = p.to_string_lossy().replace('\\', "/");
            let format = match inputs.format {
                FormatHint::Auto if path.is_dir() => FormatHint::Imagedir,
                FormatHint::Auto => FormatHint::Dicom,
                other => other,
            };
            let seq = load_cine(&path, format).map_err(|e| StageError::Cine {
                path: source.clone(),
                source: e,
            })?;
            records.push(IngestRecord {
                exam_id: seq.exam_id().to_string(),
                video_id: seq.video_id().to_string(),
                source,
                format,
                width: seq.width(),
                height: seq.height(),
                bits: seq.bit_depth().bits(),
                frames: seq.len(),
                stats: cagkit_core::ingest::frame_stats(&seq),
            });
        }
        records.sort_by(|a, b| (&a.exam_id, &a.video_id).cmp(&(&b.exam_id, &b.video_id)));
        let mut seen = std::collections::HashSet::new();
        if let Some(r) = records.iter().find(|r| !seen.insert(r.video_id.as_str())) {
            return Err(StageError::DuplicateVideo(r.video_id.clone()));
        }
        write_jsonl(&self.path(INGEST), &records)?;
        Ok(records)
    }

    pub fn sample(&self) -> Result<Vec<CandidateSet>> {
        let records: Vec<IngestRecord> = read_jsonl(&self.path(INGEST))?;
        let sampler = self.config.sampler;
        let sets = records
            .par_iter()
            .map(|r| {
                candidates_from_stats(&r.exam_id, &r.video_id, &r.stats, &sampler).map_err(|source| {
                    StageError::Sampler {
                        video_id: r.video_id.clone(),
                        source,
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_jsonl(&self.path(CANDIDATES), &sets)?;
        Ok(sets)
    }

    pub fn classify(&self) -> Result<(Vec<FramePrediction>, Vec<KeyFrame>)> {
        let predictor = &self.config.predictor;
        let factory = match (&predictor.stub, &predictor.command) {
            (Some(stub), _) => AdapterFactory::Stub(LookupPredictor::from_file(&self.config.resolve(stub))?),
            (None, Some(cmd)) => AdapterFactory::Command(cmd.clone()),
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "classify needs predictor.stub or predictor.command".into(),
                )
                .into())
            }
        };
        let index = self.ingest_index()?;
        let sets: Vec<CandidateSet> = read_jsonl(&self.path(CANDIDATES))?;
        let resize = (predictor.resize[0], predictor.resize[1]);

        let per_video = sets
            .par_iter()
            .map_init(
                || factory.make(),
                |adapter, set| -> Result<Vec<FramePrediction>> {
                    let adapter = adapter
                        .as_mut()
                        .map_err(|e| ClassifyError::PredictorUnavailable(e.to_string()))?;
                    let rec = index.get(&set.video_id).ok_or_else(|| {
                        StageError::Inconsistent(format!("video {} is not in {INGEST}", set.video_id))
                    })?;
                    let seq = self.load_source(rec)?;
                    Ok(predict_frames(&seq, &set.selected, adapter.as_mut(), resize)?)
                },
            )
            .collect::<Result<Vec<_>>>()?;
        let preds: Vec<FramePrediction> = per_video.into_iter().flatten().collect();

        let exams: HashMap<&str, &str> = sets
            .iter()
            .map(|s| (s.video_id.as_str(), s.exam_id.as_str()))
            .collect();
        let keyframes: Vec<KeyFrame> = select_top_confidence(&preds, predictor.selection)?
            .into_iter()
            .map(|p| KeyFrame {
                exam_id: exams[p.video_id.as_str()].to_string(),
                prediction: p,
            })
            .collect();
        write_jsonl(&self.path(PREDICTIONS), &preds)?;
        write_jsonl(&self.path(KEYFRAMES), &keyframes)?;
        Ok((preds, keyframes))
    }

    /// Splits key frames at both granularities. Returns the warnings.
    pub fn split(&self, seed: u64) -> Result<Vec<String>> {
        let keyframes: Vec<KeyFrame> = read_jsonl(&self.path(KEYFRAMES))?;
        let mut warnings = Vec::new();
        for g in [Granularity::Video, Granularity::Exam] {
            let (manifest, warns) = split_by_group(&keyframes, g, self.config.split.ratios, seed)?;
            validate_split(&manifest, &keyframes)?;
            warnings.extend(warns.iter().map(|w| format!("{} split: {w:?}", granularity_name(g))));
            write_json(&self.path(&split_file(g)), &manifest)?;
        }
        Ok(warnings)
    }

    pub fn corpus(&self) -> Result<Vec<CorpusRecord>> {
        let inputs = &self.config.inputs;
        let need = |key: &str, p: &Option<PathBuf>| -> Result<PathBuf> {
            p.as_ref()
                .map(|p| self.config.resolve(p))
                .ok_or_else(|| ConfigError::Invalid(format!("corpus needs {key}")).into())
        };
        let reports: Vec<ReportRow> = load_table(&need("inputs.reports", &inputs.reports)?)?;
        let summaries: Vec<SummaryRow> = load_table(&need("inputs.summaries", &inputs.summaries)?)?;
        let keyframes: Vec<KeyFrame> = read_jsonl(&self.path(KEYFRAMES))?;
        let mut records = build_corpus(&keyframes, &reports, &summaries)?;
        if let Some(p) = &inputs.generated {
            let rows: Vec<GeneratedRow> = load_table(&self.config.resolve(p))?;
            attach_generated(&mut records, &rows)?;
        }

        let index = self.ingest_index()?;
        let mut by_video: BTreeMap<&str, Vec<&CorpusRecord>> = BTreeMap::new();
        for r in &records {
            by_video.entry(r.video_id.as_str()).or_default().push(r);
        }
        for (video, recs) in by_video {
            let rec = index
                .get(video)
                .ok_or_else(|| StageError::Inconsistent(format!("video {video} is not in {INGEST}")))?;
            let seq = self.load_source(rec)?;
            for r in recs {
                let frame = seq.frame(r.frame_index).ok_or(ClassifyError::UnknownFrame {
                    video_id: video.to_string(),
                    frame_index: r.frame_index,
                })?;
                let path = self.out.join(&r.image_ref);
                create_dir(path.parent().expect("frame path has a parent"))?;
                let png = encode_png(seq.width(), seq.height(), seq.bit_depth(), &frame.pixels);
                write_bytes(&path, &png)?;
            }
        }
        write_jsonl(&self.path(CORPUS), &records)?;

        let export = self.config.split.export;
        let manifest: SplitManifest = read_json(&self.path(&split_file(export)))?;
        validate_split(&manifest, &records)?;
        let parts = manifest.partition(&records);
        for s in Split::ALL {
            let idx = parts.get(&s).map(Vec::as_slice).unwrap_or(&[]);
            let subset: Vec<CorpusRecord> = idx.iter().map(|&i| records[i].clone()).collect();
            let complete: Vec<&CorpusRecord> = training_export(&subset).collect();
            write_jsonl(&self.path(&corpus_split_file(s)), &complete)?;
        }
        Ok(records)
    }

    pub fn vlscore(&self) -> Result<VlScoreSummary> {
        let mut triples = Vec::new();
        for e in &self.config.inputs.embeddings {
            let opts = LoadOptions {
                model_id: e.model_id.clone(),
                backbone_id: e.backbone_id.clone(),
                unit_norm: e.unit_norm,
                normalize_on_load: e.normalize_on_load,
            };
            let path = self.config.resolve(&e.path);
            triples.extend(load_embeddings(&path, e.resolved_format()?, &opts)?);
        }
        let eval = evaluate_corpus(&triples, &self.config.vlscore)?;
        write_jsonl(&self.path(VLSCORE_RESULTS), &eval.results)?;
        let summary = VlScoreSummary {
            models: eval.models.clone(),
            backbones: eval.backbones.clone(),
            summaries: eval.summaries.clone(),
            warnings: eval.warnings.clone(),
        };
        write_json(&self.path(VLSCORE_SUMMARY), &summary)?;
        write_text(&self.path(VLSCORE_TABLE), &eval.render_table())?;

        let hist_dir = self.path(HISTOGRAMS_DIR);
        if hist_dir.exists() {
            std::fs::remove_dir_all(&hist_dir).map_err(|e| io_err(&hist_dir, e))?;
        }
        create_dir(&hist_dir)?;
        for h in &eval.histograms {
            let name = format!("{}__{}.csv", file_safe(&h.model_id), file_safe(&h.backbone_id));
            write_text(&hist_dir.join(name), &h.to_csv())?;
        }
        Ok(summary)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-') { c } else { '_' })
        .collect()
}

/// The (model x backbone) grid without per-case results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlScoreSummary {
    pub models: Vec<String>,
    pub backbones: Vec<String>,
    pub summaries: Vec<GroupSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

enum AdapterFactory {
    Stub(LookupPredictor),
    Command(Vec<String>),
}

impl AdapterFactory {
    fn make(&self) -> std::result::Result<Box<dyn PredictorAdapter + Send>, ClassifyError> {
        Ok(match self {
            AdapterFactory::Stub(p) => Box::new(p.clone()),
            AdapterFactory::Command(cmd) => Box::new(ExternalProcessPredictor::spawn(cmd)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_names() {
        assert_eq!(split_file(Granularity::Video), "split_video.json");
        assert_eq!(corpus_split_file(Split::Val), "corpus_val.jsonl");
        assert_eq!(file_safe("m/1 x"), "m_1_x");
    }
}
