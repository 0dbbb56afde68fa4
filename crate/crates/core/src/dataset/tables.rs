//! Report, summary and generated-text input tables (CSV or JSONL).

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub exam_id: String,
    #[serde(default)]
    pub report_jp: Option<String>,
    #[serde(default)]
    pub report_en: Option<String>,
}

/// Summary keyed by exam, or by exam and video when `video_id` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub exam_id: String,
    #[serde(default)]
    pub video_id: Option<String>,
    #[serde(default)]
    pub gt_summary_jp: Option<String>,
    #[serde(default)]
    pub gt_summary_en: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedRow {
    pub video_id: String,
    pub frame_index: usize,
    pub model_id: String,
    #[serde(default)]
    pub text_jp: Option<String>,
    #[serde(default)]
    pub text_en: Option<String>,
}

/// Reads a table as CSV (`.csv`, with header row) or JSONL (anything else).
pub fn load_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let err = |reason: String| DatasetError::Table { path: path.display().to_string(), reason };
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        reader
            .deserialize()
            .collect::<Result<Vec<T>, _>>()
            .map_err(|e| err(e.to_string()))
    } else {
        crate::jsonl::read_path(path).map_err(|e| err(e.to_string()))
    }
}
