//! Classification metrics and score summaries.

use std::collections::HashMap;
use std::fmt::Display;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{self, Align};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("truth has {truth} labels but predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {0} is not one of the declared classes")]
    UnknownLabel(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no values to summarize")]
    EmptyInput,
}

/// Square count matrix; rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix<L> {
    pub classes: Vec<L>,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl<L: Clone + Eq + Hash + Display> ConfusionMatrix<L> {
    pub fn new(classes: Vec<L>) -> Self {
        let n = classes.len();
        Self {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Per-class precision, recall, F1 and support. Undefined ratios are 0.
    pub fn per_class(&self) -> Vec<ClassScore> {
        (0..self.classes.len())
            .map(|i| {
                let tp = self.counts[i][i];
                let row = self.row_sum(i);
                let col = self.col_sum(i);
                let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
                // 2PR/(P+R) reduces to 2tp/(row+col) whenever P+R > 0.
                ClassScore {
                    precision: ratio(tp, col),
                    recall: ratio(tp, row),
                    f1: ratio(2 * tp, row + col),
                    support: row,
                }
            })
            .collect()
    }

    /// Each row divided by its support; rows without support stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    fn render_with(&self, cell: impl Fn(usize, usize) -> String) -> String {
        let names: Vec<String> = self.classes.iter().map(ToString::to_string).collect();
        let mut headers = vec!["truth \\ pred"];
        headers.extend(names.iter().map(String::as_str));
        let mut aligns = vec![Align::Left];
        aligns.extend(std::iter::repeat_n(Align::Right, names.len()));
        let rows: Vec<Vec<String>> = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                std::iter::once(name.clone())
                    .chain((0..names.len()).map(|j| cell(i, j)))
                    .collect()
            })
            .collect();
        table::render(&headers, &aligns, &rows)
    }

    pub fn render_counts(&self) -> String {
        self.render_with(|i, j| self.counts[i][j].to_string())
    }

    pub fn render_normalized(&self) -> String {
        let norm = self.row_normalized();
        self.render_with(|i, j| format!("{:.3}", norm[i][j]))
    }
}

pub fn confusion_matrix<L: Clone + Eq + Hash + Display>(
    truth: &[L],
    pred: &[L],
    classes: &[L],
) -> Result<ConfusionMatrix<L>, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let position: HashMap<&L, usize> = classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let lookup = |l: &L| {
        position
            .get(l)
            .copied()
            .ok_or_else(|| MetricsError::UnknownLabel(l.to_string()))
    };
    let mut cm = ConfusionMatrix::new(classes.to_vec());
    for (t, p) in truth.iter().zip(pred) {
        cm.counts[lookup(t)?][lookup(p)?] += 1;
    }
    Ok(cm)
}

/// Support-weighted mean of per-class F1. Classes without support carry no
/// weight.
pub fn weighted_f1<L: Clone + Eq + Hash + Display>(
    cm: &ConfusionMatrix<L>,
) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let weighted: f64 = cm
        .per_class()
        .iter()
        .map(|s| s.support as f64 * s.f1)
        .sum();
    Ok(weighted / total as f64)
}

/// Sums a matrix into coarser classes. Collapsed classes keep the order in
/// which they first appear when mapping `cm.classes`.
pub fn collapse_confusion<L, M>(
    cm: &ConfusionMatrix<L>,
    collapse: impl Fn(&L) -> M,
) -> ConfusionMatrix<M>
where
    L: Clone + Eq + Hash + Display,
    M: Clone + Eq + Hash + Display,
{
    let mapped: Vec<M> = cm.classes.iter().map(&collapse).collect();
    let mut classes: Vec<M> = Vec::new();
    for m in &mapped {
        if !classes.contains(m) {
            classes.push(m.clone());
        }
    }
    let slot: Vec<usize> = mapped
        .iter()
        .map(|m| classes.iter().position(|c| c == m).expect("collected above"))
        .collect();
    let mut out = ConfusionMatrix::new(classes);
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            out.counts[slot[i]][slot[j]] += c;
        }
    }
    out
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Arithmetic mean and `n - 1` standard deviation (0 for a single value).
pub fn summarize(values: &[f64]) -> Result<ScoreSummary, MetricsError> {
    let n = values.len();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(ScoreSummary { mean, std, n })
}
