//! Physician annotations and report reviews.
//!
//! Records are append-only: every submission gets a store-wide sequence
//! number and a per-key revision, and readers take the latest revision.

mod conflicts;
mod export;
mod store;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::SixClassLabel;

pub use conflicts::{find_conflicts, Conflict};
pub use export::{export_review_table, ReviewTable, ReviewTableRow, REVIEW_TABLE_COLUMNS};
pub use store::{parse_log, Event, LogReplay, ReviewStore, StoreError, EVENTS_FILE, SNAPSHOT_FILE};

pub const MAX_OVERALL: i64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {message}")]
pub struct ValidationFailure {
    pub field: String,
    pub message: String,
}

impl ValidationFailure {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_string(), message: message.into() }
    }
}

/// A stored record with its store-wide sequence number and per-key revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revisioned<T> {
    pub seq: u64,
    pub revision: u64,
    #[serde(flatten)]
    pub record: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub case_id: String,
    pub model_id: String,
    pub reviewer_id: String,
    pub overall: u8,
    pub laterality_error: bool,
    pub vessel_error: bool,
    pub treatment_error: bool,
    pub logical_error: bool,
    pub stenosis_error: bool,
    #[serde(default)]
    pub comment: String,
    pub timestamp: DateTime<Utc>,
}

impl ReviewRecord {
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.case_id, &self.model_id, &self.reviewer_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub frame_index: usize,
    pub annotator_id: String,
    pub label: SixClassLabel,
    /// Adjudicates any earlier disagreement on this frame.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub resolving: bool,
    pub timestamp: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn key(&self) -> (&str, usize, &str) {
        (&self.video_id, self.frame_index, &self.annotator_id)
    }
}

/// Review body as received; checked by [`ReviewSubmission::validate`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewSubmission {
    #[serde(default)]
    pub case_id: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub reviewer_id: String,
    pub overall: Option<i64>,
    #[serde(default)]
    pub laterality_error: bool,
    #[serde(default)]
    pub vessel_error: bool,
    #[serde(default)]
    pub treatment_error: bool,
    #[serde(default)]
    pub logical_error: bool,
    #[serde(default)]
    pub stenosis_error: bool,
    #[serde(default)]
    pub comment: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

fn non_empty(field: &str, v: &str) -> Result<(), ValidationFailure> {
    if v.trim().is_empty() {
        return Err(ValidationFailure::new(field, "must not be empty"));
    }
    Ok(())
}

impl ReviewSubmission {
    /// `now` stamps submissions that carry no timestamp.
    pub fn validate(self, now: DateTime<Utc>) -> Result<ReviewRecord, ValidationFailure> {
        non_empty("case_id", &self.case_id)?;
        non_empty("model_id", &self.model_id)?;
        non_empty("reviewer_id", &self.reviewer_id)?;
        let overall = self.overall.ok_or_else(|| ValidationFailure::new("overall", "required"))?;
        if !(0..=MAX_OVERALL).contains(&overall) {
            return Err(ValidationFailure::new("overall", format!("{overall} is outside 0..=10")));
        }
        Ok(ReviewRecord {
            case_id: self.case_id,
            model_id: self.model_id,
            reviewer_id: self.reviewer_id,
            overall: overall as u8,
            laterality_error: self.laterality_error,
            vessel_error: self.vessel_error,
            treatment_error: self.treatment_error,
            logical_error: self.logical_error,
            stenosis_error: self.stenosis_error,
            comment: self.comment,
            timestamp: self.timestamp.unwrap_or(now),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSubmission {
    #[serde(default)]
    pub video_id: String,
    pub frame_index: Option<i64>,
    #[serde(default)]
    pub annotator_id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub resolving: bool,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

impl AnnotationSubmission {
    pub fn validate(self, now: DateTime<Utc>) -> Result<AnnotationRecord, ValidationFailure> {
        non_empty("video_id", &self.video_id)?;
        let frame_index = self.frame_index.ok_or_else(|| ValidationFailure::new("frame_index", "required"))?;
        let frame_index = usize::try_from(frame_index)
            .map_err(|_| ValidationFailure::new("frame_index", format!("{frame_index} is negative")))?;
        non_empty("annotator_id", &self.annotator_id)?;
        let label = self
            .label
            .parse::<SixClassLabel>()
            .map_err(|_| ValidationFailure::new("label", format!("{:?} is not a six-class label", self.label)))?;
        Ok(AnnotationRecord {
            video_id: self.video_id,
            frame_index,
            annotator_id: self.annotator_id,
            label,
            resolving: self.resolving,
            timestamp: self.timestamp.unwrap_or(now),
        })
    }
}
