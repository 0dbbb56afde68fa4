use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ReviewRecord, Revisioned};
use crate::metrics::summarize;
use crate::table::{self, Align};

pub const REVIEW_TABLE_COLUMNS: [&str; 8] = [
    "Model",
    "Mean",
    "SD",
    "Laterality Error",
    "Vessel Error",
    "Treatment Error",
    "Logical Error",
    "Stenosis Detect Error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTableRow {
    pub model_id: String,
    pub n: usize,
    /// `None` when the model has no reviews.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub laterality_error: usize,
    pub vessel_error: usize,
    pub treatment_error: usize,
    pub logical_error: usize,
    pub stenosis_error: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewTable {
    pub rows: Vec<ReviewTableRow>,
}

impl ReviewTable {
    pub fn render_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.model_id.clone(),
                    fmt(r.mean),
                    fmt(r.sd),
                    r.laterality_error.to_string(),
                    r.vessel_error.to_string(),
                    r.treatment_error.to_string(),
                    r.logical_error.to_string(),
                    r.stenosis_error.to_string(),
                ]
            })
            .collect();
        let mut aligns = vec![Align::Right; REVIEW_TABLE_COLUMNS.len()];
        aligns[0] = Align::Left;
        table::render(&REVIEW_TABLE_COLUMNS, &aligns, &rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Aggregates the latest revision per (case, model, reviewer). Rows follow
/// `models`, then any other reviewed models in sorted order.
pub fn export_review_table(reviews: &[Revisioned<ReviewRecord>], models: &[String]) -> ReviewTable {
    let mut latest: BTreeMap<(&str, &str, &str), &Revisioned<ReviewRecord>> = BTreeMap::new();
    for r in reviews {
        let slot = latest.entry(r.record.key()).or_insert(r);
        if r.seq > slot.seq {
            *slot = r;
        }
    }
    let mut by_model: BTreeMap<&str, Vec<&ReviewRecord>> = BTreeMap::new();
    for r in latest.values() {
        by_model.entry(r.record.model_id.as_str()).or_default().push(&r.record);
    }

    let mut order: Vec<&str> = Vec::new();
    let mut seen = BTreeSet::new();
    for m in models.iter().map(String::as_str).chain(by_model.keys().copied()) {
        if seen.insert(m) {
            order.push(m);
        }
    }

    let rows = order
        .into_iter()
        .map(|model| {
            let recs = by_model.get(model).map(Vec::as_slice).unwrap_or_default();
            let scores: Vec<f64> = recs.iter().map(|r| f64::from(r.overall)).collect();
            let summary = summarize(&scores).ok();
            let count = |f: fn(&ReviewRecord) -> bool| recs.iter().filter(|r| f(r)).count();
            ReviewTableRow {
                model_id: model.to_string(),
                n: recs.len(),
                mean: summary.as_ref().map(|s| s.mean),
                sd: summary.as_ref().map(|s| s.std),
                laterality_error: count(|r| r.laterality_error),
                vessel_error: count(|r| r.vessel_error),
                treatment_error: count(|r| r.treatment_error),
                logical_error: count(|r| r.logical_error),
                stenosis_error: count(|r| r.stenosis_error),
            }
        })
        .collect();
    ReviewTable { rows }
}
