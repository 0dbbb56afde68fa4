//! Summary tables from the pipeline artifacts.
//!
//! Sections whose inputs have not been produced yet are skipped with a note.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use cagkit_core::classify::{collapse_keyframe3, collapse_laterality, StubEntry};
use cagkit_core::dataset::{validate_split, CorpusRecord, Granularity, SplitManifest, SplitReport};
use cagkit_core::metrics::{collapse_confusion, confusion_matrix, weighted_f1, ConfusionMatrix};
use cagkit_core::review::{export_review_table, parse_log, Event, ReviewTable, EVENTS_FILE};
use cagkit_core::vlscore::CorpusEvaluation;
use cagkit_core::{FramePrediction, KeyFrame, SixClassLabel};
use serde::Serialize;

use crate::pipeline::{
    read_json, read_jsonl, split_file, write_json, write_text, Result, Stage, StageError, VlScoreSummary, CORPUS,
    KEYFRAMES, PREDICTIONS, VLSCORE_SUMMARY,
};

pub const TABLES: &str = "tables.txt";
pub const REPORT: &str = "report.json";

#[derive(Debug, Serialize)]
pub struct Report {
    pub keyframe_split: Option<SplitReport>,
    pub corpus_split: Option<SplitReport>,
    pub vlscore: Option<VlScoreSummary>,
    pub review: Option<ReviewTable>,
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ClassificationReport {
    pub frames: usize,
    pub six_class: Scored,
    pub laterality: Scored,
    pub keyframe3: Scored,
}

#[derive(Debug, Serialize)]
pub struct Scored {
    pub weighted_f1: f64,
    pub matrix: ConfusionMatrix<String>,
}

fn scored<L: Clone + Eq + std::hash::Hash + std::fmt::Display>(cm: &ConfusionMatrix<L>) -> Result<Scored> {
    let f1 = weighted_f1(cm).map_err(|e| StageError::Inconsistent(e.to_string()))?;
    Ok(Scored {
        weighted_f1: f1,
        matrix: ConfusionMatrix {
            classes: cm.classes.iter().map(ToString::to_string).collect(),
            counts: cm.counts.clone(),
        },
    })
}

/// Frame-level metrics of predictions against labelled frames. Only
/// predicted frames that carry a label count.
pub fn classification(preds: &[FramePrediction], truth: &[StubEntry]) -> Result<Option<ClassificationReport>> {
    let labels: HashMap<(&str, usize), SixClassLabel> = truth
        .iter()
        .filter_map(|e| e.label.map(|l| ((e.video_id.as_str(), e.frame_index), l)))
        .collect();
    let (t, p): (Vec<SixClassLabel>, Vec<SixClassLabel>) = preds
        .iter()
        .filter_map(|pr| labels.get(&(pr.video_id.as_str(), pr.frame_index)).map(|&t| (t, pr.label)))
        .unzip();
    if t.is_empty() {
        return Ok(None);
    }
    let six = confusion_matrix(&t, &p, &SixClassLabel::ALL).map_err(|e| StageError::Inconsistent(e.to_string()))?;
    Ok(Some(ClassificationReport {
        frames: t.len(),
        six_class: scored(&six)?,
        laterality: scored(&collapse_confusion(&six, |l| collapse_laterality(*l)))?,
        keyframe3: scored(&collapse_confusion(&six, |l| collapse_keyframe3(*l)))?,
    }))
}

fn split_section<R: cagkit_core::dataset::GroupKeyed>(
    stage: &Stage,
    g: Granularity,
    records_file: &str,
    load: impl Fn(&Path) -> Result<Vec<R>>,
    notes: &mut Vec<String>,
) -> Result<Option<SplitReport>> {
    let manifest_path = stage.path(&split_file(g));
    let records_path = stage.path(records_file);
    for p in [&manifest_path, &records_path] {
        if !p.exists() {
            notes.push(format!("{} missing", p.file_name().unwrap_or_default().to_string_lossy()));
            return Ok(None);
        }
    }
    let manifest: SplitManifest = read_json(&manifest_path)?;
    Ok(Some(validate_split(&manifest, &load(&records_path)?)?))
}

pub fn build(stage: &Stage) -> Result<Report> {
    let mut notes = Vec::new();
    let keyframe_split = split_section(stage, Granularity::Video, KEYFRAMES, read_jsonl::<KeyFrame>, &mut notes)?;
    let corpus_split = split_section(stage, Granularity::Exam, CORPUS, read_jsonl::<CorpusRecord>, &mut notes)?;

    let vlscore_path = stage.path(VLSCORE_SUMMARY);
    let vlscore = if vlscore_path.exists() {
        Some(read_json::<VlScoreSummary>(&vlscore_path)?)
    } else {
        notes.push(format!("{VLSCORE_SUMMARY} missing"));
        None
    };

    let corpus_path = stage.path(CORPUS);
    let store_dir = stage.config.resolve(&stage.config.service.store);
    let review = if corpus_path.exists() {
        let records: Vec<CorpusRecord> = read_jsonl(&corpus_path)?;
        let models: Vec<String> = records
            .iter()
            .flat_map(|r| r.generated.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let events_path = store_dir.join(EVENTS_FILE);
        let reviews = if events_path.exists() {
            // Read-only: the log alone is authoritative, a torn tail is ignored.
            let bytes = std::fs::read(&events_path).map_err(|e| StageError::Io {
                path: events_path.display().to_string(),
                reason: e.to_string(),
            })?;
            parse_log(&bytes)?
                .events
                .into_iter()
                .filter_map(|e| match e {
                    Event::Review(r) => Some(r),
                    Event::Annotation(_) => None,
                })
                .collect()
        } else {
            notes.push("no review store; review table is empty".into());
            Vec::new()
        };
        Some(export_review_table(&reviews, &models))
    } else {
        None
    };

    let classification = match &stage.config.inputs.labels {
        Some(labels) if stage.path(PREDICTIONS).exists() => {
            let truth: Vec<StubEntry> = read_jsonl(&stage.config.resolve(labels))?;
            let preds: Vec<FramePrediction> = read_jsonl(&stage.path(PREDICTIONS))?;
            let c = classification(&preds, &truth)?;
            if c.is_none() {
                notes.push("no predicted frame has a label".into());
            }
            c
        }
        Some(_) => {
            notes.push(format!("{PREDICTIONS} missing"));
            None
        }
        None => None,
    };

    Ok(Report {
        keyframe_split,
        corpus_split,
        vlscore,
        review,
        classification,
        notes,
    })
}

impl Report {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut section = |title: &str, body: Option<String>| {
            if let Some(body) = body {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(title);
                out.push('\n');
                out.push_str(&body);
            }
        };
        section(
            "Key-frame images by split (video-disjoint)",
            self.keyframe_split.as_ref().map(SplitReport::render_text),
        );
        section(
            "Report corpus by split (exam-disjoint)",
            self.corpus_split.as_ref().map(SplitReport::render_text),
        );
        section(
            "VLScore mean and standard deviation",
            self.vlscore.as_ref().map(|v| {
                CorpusEvaluation {
                    results: Vec::new(),
                    models: v.models.clone(),
                    backbones: v.backbones.clone(),
                    summaries: v.summaries.clone(),
                    histograms: Vec::new(),
                    warnings: Vec::new(),
                }
                .render_table()
            }),
        );
        section("Physician review", self.review.as_ref().map(ReviewTable::render_text));
        section(
            "Frame classification",
            self.classification.as_ref().map(|c| {
                format!(
                    "frames: {}\nweighted F1, six classes:  {:.4}\nweighted F1, laterality:   {:.4}\nweighted F1, key frame:    {:.4}\n",
                    c.frames, c.six_class.weighted_f1, c.laterality.weighted_f1, c.keyframe3.weighted_f1
                )
            }),
        );
        if !self.notes.is_empty() {
            section("Notes", Some(self.notes.iter().map(|n| format!("- {n}\n")).collect()));
        }
        out
    }
}

pub fn run(stage: &Stage) -> Result<Report> {
    let report = build(stage)?;
    write_text(&stage.path(TABLES), &report.render_text())?;
    write_json(&stage.path(REPORT), &report)?;
    Ok(report)
}
