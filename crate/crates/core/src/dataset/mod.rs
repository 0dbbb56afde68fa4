//! Bilingual corpus construction and group-atomic splitting.

mod prompt;
mod split;
mod tables;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{KeyFrame, Laterality};

pub use prompt::{build_prompt, Lang, PROMPT_TEMPLATE_VERSION};
pub use split::{
    split_by_group, validate_split, Granularity, GroupKeyed, Split, SplitCounts, SplitError,
    SplitManifest, SplitRatios, SplitReport, SplitReportRow, SplitWarning, RATIO_TOLERANCE,
};
pub use tables::{load_table, GeneratedRow, ReportRow, SummaryRow};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("exam {0} has no report")]
    UnresolvedExam(String),
    #[error("duplicate record for video {video_id} frame {frame_index}")]
    DuplicateRecordKey { video_id: String, frame_index: usize },
    #[error("duplicate {table} row for {key}")]
    DuplicateTableKey { table: &'static str, key: String },
    #[error("record {case_id} has no {lang} report")]
    MissingLanguage { case_id: String, lang: Lang },
    #[error("no corpus record for video {video_id} frame {frame_index}")]
    UnknownCase { video_id: String, frame_index: usize },
    #[error("{path}: {reason}")]
    Table { path: String, reason: String },
}

/// Generated report texts of one model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedText {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_jp: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_en: Option<String>,
}

/// One key frame with its reports, summaries and generated outputs.
/// Missing texts are empty strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub exam_id: String,
    pub video_id: String,
    pub frame_index: usize,
    pub image_ref: String,
    pub laterality: Laterality,
    pub report_jp: String,
    pub report_en: String,
    pub gt_summary_jp: String,
    pub gt_summary_en: String,
    #[serde(default)]
    pub generated: BTreeMap<String, GeneratedText>,
    /// Both language pairs present.
    pub complete: bool,
}

impl CorpusRecord {
    pub fn case_id(&self) -> String {
        case_id(&self.exam_id, &self.video_id, self.frame_index)
    }

    pub fn has_pair(&self, lang: Lang) -> bool {
        match lang {
            Lang::Jp => !self.report_jp.is_empty() && !self.gt_summary_jp.is_empty(),
            Lang::En => !self.report_en.is_empty() && !self.gt_summary_en.is_empty(),
        }
    }

    fn refresh_complete(&mut self) {
        self.complete = self.has_pair(Lang::Jp) && self.has_pair(Lang::En);
    }
}

pub fn case_id(exam_id: &str, video_id: &str, frame_index: usize) -> String {
    format!("{exam_id}:{video_id}:{frame_index}")
}

fn path_component(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    match s.as_str() {
        "" | "." | ".." => format!("_{s}"),
        _ => s,
    }
}

/// Relative path of the rendered frame for a record.
pub fn image_ref(exam_id: &str, video_id: &str, frame_index: usize) -> String {
    format!(
        "frames/{}/{}/{frame_index:05}.png",
        path_component(exam_id),
        path_component(video_id)
    )
}

fn text(v: &Option<String>) -> String {
    v.as_deref().map(str::trim).unwrap_or_default().to_string()
}

/// Pairs each key frame with its exam report and the most specific summary
/// (per video, else per exam). Output is sorted by exam, video and frame.
pub fn build_corpus(
    keyframes: &[KeyFrame],
    reports: &[ReportRow],
    summaries: &[SummaryRow],
) -> Result<Vec<CorpusRecord>, DatasetError> {
    let mut report_by_exam = HashMap::new();
    for r in reports {
        if report_by_exam.insert(r.exam_id.as_str(), r).is_some() {
            return Err(DatasetError::DuplicateTableKey { table: "report", key: r.exam_id.clone() });
        }
    }
    let mut summary_by_key = HashMap::new();
    for s in summaries {
        let key = (s.exam_id.as_str(), s.video_id.as_deref().filter(|v| !v.is_empty()));
        if summary_by_key.insert(key, s).is_some() {
            let key = match key.1 {
                Some(v) => format!("{}/{v}", key.0),
                None => key.0.to_string(),
            };
            return Err(DatasetError::DuplicateTableKey { table: "summary", key });
        }
    }

    let mut seen = HashMap::new();
    let mut out = Vec::with_capacity(keyframes.len());
    for kf in keyframes {
        if seen.insert((kf.video_id(), kf.frame_index()), ()).is_some() {
            return Err(DatasetError::DuplicateRecordKey {
                video_id: kf.video_id().to_string(),
                frame_index: kf.frame_index(),
            });
        }
        let report = report_by_exam
            .get(kf.exam_id.as_str())
            .ok_or_else(|| DatasetError::UnresolvedExam(kf.exam_id.clone()))?;
        let summary = summary_by_key
            .get(&(kf.exam_id.as_str(), Some(kf.video_id())))
            .or_else(|| summary_by_key.get(&(kf.exam_id.as_str(), None)));
        let mut record = CorpusRecord {
            exam_id: kf.exam_id.clone(),
            video_id: kf.video_id().to_string(),
            frame_index: kf.frame_index(),
            image_ref: image_ref(&kf.exam_id, kf.video_id(), kf.frame_index()),
            laterality: kf.laterality(),
            report_jp: text(&report.report_jp),
            report_en: text(&report.report_en),
            gt_summary_jp: summary.map(|s| text(&s.gt_summary_jp)).unwrap_or_default(),
            gt_summary_en: summary.map(|s| text(&s.gt_summary_en)).unwrap_or_default(),
            generated: BTreeMap::new(),
            complete: false,
        };
        record.refresh_complete();
        out.push(record);
    }
    out.sort_by(|a, b| {
        (&a.exam_id, &a.video_id, a.frame_index).cmp(&(&b.exam_id, &b.video_id, b.frame_index))
    });
    Ok(out)
}

/// Merges generated texts into the matching records. Later rows for the
/// same model overwrite earlier ones field by field.
pub fn attach_generated(records: &mut [CorpusRecord], rows: &[GeneratedRow]) -> Result<(), DatasetError> {
    let index: HashMap<(String, usize), usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.video_id.clone(), r.frame_index), i))
        .collect();
    for row in rows {
        let &i = index.get(&(row.video_id.clone(), row.frame_index)).ok_or_else(|| {
            DatasetError::UnknownCase { video_id: row.video_id.clone(), frame_index: row.frame_index }
        })?;
        let entry = records[i].generated.entry(row.model_id.clone()).or_default();
        if let Some(t) = row.text_jp.as_ref().filter(|t| !t.is_empty()) {
            entry.text_jp = Some(t.clone());
        }
        if let Some(t) = row.text_en.as_ref().filter(|t| !t.is_empty()) {
            entry.text_en = Some(t.clone());
        }
    }
    Ok(())
}

/// Records eligible for training exports; incomplete ones stay in the
/// corpus but are left out here.
pub fn training_export<'a>(records: &'a [CorpusRecord]) -> impl Iterator<Item = &'a CorpusRecord> + 'a {
    records.iter().filter(|r| r.complete)
}

impl GroupKeyed for CorpusRecord {
    fn exam_id(&self) -> &str {
        &self.exam_id
    }

    fn video_id(&self) -> &str {
        &self.video_id
    }
}

impl GroupKeyed for KeyFrame {
    fn exam_id(&self) -> &str {
        &self.exam_id
    }

    fn video_id(&self) -> &str {
        &self.prediction.video_id
    }
}
