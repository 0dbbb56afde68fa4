//! VLScore: embedding-triangle evaluation of generated reports.
//!
//! For image embedding `i`, ground-truth report embedding `g` and generated
//! report embedding `r`, the distance `T` is the area of the triangle they
//! span,
//!
//! ```text
//! T = 1/2 * sqrt(<i-g, i-g> <i-r, i-r> - <i-g, i-r>^2)
//! ```
//!
//! and the score is `max(1 - T / C, 0)` where `C` is the largest attainable
//! area. For unit-normalized embeddings `C = 3*sqrt(3)/4`, the equilateral
//! triangle inscribed in a great circle.
//!
//! Any `r` on the line through `i` and `g` gives `T = 0` and a perfect score,
//! even when `r` is far from `g`. That is a property of the metric itself,
//! not of this implementation.

mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{summarize, ScoreSummary};
use crate::table::{self, Align};

pub use io::{
    load_embeddings, parse_binary, parse_jsonl, write_binary, BinaryMeta, EmbeddingFormat,
    LoadOptions, BINARY_MAGIC,
};

/// Negative radicands down to `-RADICAND_TOLERANCE * max(1, |u|^2 |v|^2)`
/// are treated as rounding on a degenerate triangle.
pub const RADICAND_TOLERANCE: f64 = 1e-12;

/// Allowed deviation from unit norm when normalization is enforced.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Histogram bin width over the score range `[0, 1]`.
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.05;
const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum VlScoreError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("embeddings must have at least 2 components, got {0}")]
    DimensionTooSmall(usize),
    #[error("non-finite embedding component")]
    NonFiniteInput,
    #[error("negative radicand {0} in triangle area")]
    NegativeRadicand(f64),
    #[error("max-area constant must be positive and finite, got {0}")]
    NonPositiveConstant(f64),
    #[error("backbone {backbone_id} mixes dimensions {first} and {other}")]
    MixedDimensions {
        backbone_id: String,
        first: usize,
        other: usize,
    },
    #[error("embedding {vector} of case {case_id} has norm {norm}, expected 1")]
    NotUnitNorm {
        case_id: String,
        vector: &'static str,
        norm: f64,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTriple {
    pub case_id: String,
    pub model_id: String,
    pub backbone_id: String,
    pub i_e: Vec<f64>,
    pub g_e: Vec<f64>,
    pub r_e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlScoreResult {
    pub case_id: String,
    pub model_id: String,
    pub backbone_id: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub score: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Area of the triangle spanned by three embeddings.
///
/// The Gram determinant is evaluated as `|u|^2 |v_perp|^2`, where `v_perp`
/// is `v` with its component along `u` removed. The two are algebraically
/// identical; the projected form keeps full relative precision on thin
/// triangles where the expanded difference cancels.
pub fn triangle_area(i_e: &[f64], g_e: &[f64], r_e: &[f64]) -> Result<f64, VlScoreError> {
    area_and_square(i_e, g_e, r_e).map(|(t, _)| t)
}

/// Area and squared area; the square is taken before the final `sqrt`.
fn area_and_square(i_e: &[f64], g_e: &[f64], r_e: &[f64]) -> Result<(f64, f64), VlScoreError> {
    let d = i_e.len();
    if g_e.len() != d || r_e.len() != d {
        return Err(VlScoreError::DimensionMismatch(format!(
            "i_e has {d}, g_e has {}, r_e has {}",
            g_e.len(),
            r_e.len()
        )));
    }
    if d < 2 {
        return Err(VlScoreError::DimensionTooSmall(d));
    }
    if i_e.iter().chain(g_e).chain(r_e).any(|v| !v.is_finite()) {
        return Err(VlScoreError::NonFiniteInput);
    }

    let u: Vec<f64> = i_e.iter().zip(g_e).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = i_e.iter().zip(r_e).map(|(a, b)| a - b).collect();
    let uu = dot(&u, &u);
    let vv = dot(&v, &v);
    let uv = dot(&u, &v);

    let gram = uu * vv - uv * uv;
    if !gram.is_finite() {
        return Err(VlScoreError::NonFiniteInput);
    }
    if gram < -RADICAND_TOLERANCE * (uu * vv).max(1.0) {
        return Err(VlScoreError::NegativeRadicand(gram));
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok((0.0, 0.0));
    }

    let k = uv / uu;
    let perp_sq: f64 = u.iter().zip(&v).map(|(a, b)| (b - k * a).powi(2)).sum();
    let radicand = uu * perp_sq;
    Ok((0.5 * radicand.sqrt(), 0.25 * radicand))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxArea {
    /// Unit-normalized embeddings: `3*sqrt(3)/4` in any dimension `>= 2`.
    #[default]
    UnitSphere,
    Custom(f64),
}

pub fn max_area_constant(normalization: MaxArea) -> Result<f64, VlScoreError> {
    match normalization {
        MaxArea::UnitSphere => Ok(3.0 * 3f64.sqrt() / 4.0),
        MaxArea::Custom(c) if c > 0.0 && c.is_finite() => Ok(c),
        MaxArea::Custom(c) => Err(VlScoreError::NonPositiveConstant(c)),
    }
}

/// Scores one triple against the max-area constant `c`.
pub fn vlscore(triple: &EmbeddingTriple, c: f64) -> Result<VlScoreResult, VlScoreError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(VlScoreError::NonPositiveConstant(c));
    }
    let (t, t_sq) = area_and_square(&triple.i_e, &triple.g_e, &triple.r_e)?;
    // 1 - T/C written as (C^2 - T^2) / (C^2 + C T) so the numerator uses the
    // squared area before its sqrt is rounded.
    let score = ((c * c - t_sq) / (c * c + c * t)).max(0.0);
    Ok(VlScoreResult {
        case_id: triple.case_id.clone(),
        model_id: triple.model_id.clone(),
        backbone_id: triple.backbone_id.clone(),
        t,
        score,
        c,
    })
}

/// Max-area constants per backbone. Backbones listed here are expected in
/// every model's results; missing groups are reported as warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConstants {
    #[serde(default)]
    pub default: MaxArea,
    #[serde(default)]
    pub backbones: BTreeMap<String, MaxArea>,
}

impl BackboneConstants {
    pub fn constant_for(&self, backbone_id: &str) -> Result<f64, VlScoreError> {
        max_area_constant(self.backbones.get(backbone_id).copied().unwrap_or(self.default))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub model_id: String,
    pub backbone_id: String,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(flatten)]
    pub summary: ScoreSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupHistogram {
    pub model_id: String,
    pub backbone_id: String,
    pub bins: Vec<HistogramBin>,
}

impl GroupHistogram {
    /// `bin_low,bin_high,count` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for b in &self.bins {
            out.push_str(&format!("{},{},{}\n", b.bin_low, b.bin_high, b.count));
        }
        out
    }
}

/// Per-case results plus a (model x backbone) summary grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub results: Vec<VlScoreResult>,
    /// Model ids in order of first appearance.
    pub models: Vec<String>,
    /// Backbone ids in order of first appearance, then configured extras.
    pub backbones: Vec<String>,
    pub summaries: Vec<GroupSummary>,
    pub histograms: Vec<GroupHistogram>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn histogram(scores: &[f64]) -> Vec<HistogramBin> {
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &s in scores {
        let bin = ((s / HISTOGRAM_BIN_WIDTH).floor() as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(k, &count)| HistogramBin {
            bin_low: k as f64 / HISTOGRAM_BINS as f64,
            bin_high: (k + 1) as f64 / HISTOGRAM_BINS as f64,
            count,
        })
        .collect()
}

fn push_unique(list: &mut Vec<String>, id: &str) {
    if !list.iter().any(|x| x == id) {
        list.push(id.to_string());
    }
}

/// Scores every triple and summarizes per (model, backbone) group.
///
/// Within a group, results are ordered by case id before summarizing.
pub fn evaluate_corpus(
    triples: &[EmbeddingTriple],
    constants: &BackboneConstants,
) -> Result<CorpusEvaluation, VlScoreError> {
    let mut dims: BTreeMap<&str, usize> = BTreeMap::new();
    let mut models = Vec::new();
    let mut backbones = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<VlScoreResult>> = BTreeMap::new();

    for t in triples {
        let d = t.i_e.len();
        let first = *dims.entry(t.backbone_id.as_str()).or_insert(d);
        if first != d {
            return Err(VlScoreError::MixedDimensions {
                backbone_id: t.backbone_id.clone(),
                first,
                other: d,
            });
        }
        push_unique(&mut models, &t.model_id);
        push_unique(&mut backbones, &t.backbone_id);
        let c = constants.constant_for(&t.backbone_id)?;
        let result = vlscore(t, c)?;
        groups
            .entry((t.model_id.clone(), t.backbone_id.clone()))
            .or_default()
            .push(result);
    }
    for b in constants.backbones.keys() {
        push_unique(&mut backbones, b);
    }

    let mut warnings = Vec::new();
    let mut results = Vec::new();
    let mut summaries = Vec::new();
    let mut histograms = Vec::new();
    for model in &models {
        for backbone in &backbones {
            let Some(group) = groups.get_mut(&(model.clone(), backbone.clone())) else {
                warnings.push(format!(
                    "no embeddings for model {model} under backbone {backbone}; group omitted"
                ));
                continue;
            };
            group.sort_by(|a, b| a.case_id.cmp(&b.case_id));
            let scores: Vec<f64> = group.iter().map(|r| r.score).collect();
            let summary = summarize(&scores).expect("groups are non-empty");
            summaries.push(GroupSummary {
                model_id: model.clone(),
                backbone_id: backbone.clone(),
                c: group[0].c,
                summary,
            });
            histograms.push(GroupHistogram {
                model_id: model.clone(),
                backbone_id: backbone.clone(),
                bins: histogram(&scores),
            });
            results.extend(group.iter().cloned());
        }
    }

    Ok(CorpusEvaluation {
        results,
        models,
        backbones,
        summaries,
        histograms,
        warnings,
    })
}

impl CorpusEvaluation {
    pub fn summary(&self, model_id: &str, backbone_id: &str) -> Option<&GroupSummary> {
        self.summaries
            .iter()
            .find(|s| s.model_id == model_id && s.backbone_id == backbone_id)
    }

    /// Model rows by backbone column pairs of mean and standard deviation.
    pub fn render_table(&self) -> String {
        let mut header_cells = vec!["Model".to_string()];
        for b in &self.backbones {
            header_cells.push(format!("{b} Mean"));
            header_cells.push(format!("{b} Std. Dev."));
        }
        let headers: Vec<&str> = header_cells.iter().map(String::as_str).collect();
        let mut aligns = vec![Align::Left];
        aligns.extend(std::iter::repeat_n(Align::Right, 2 * self.backbones.len()));
        let rows: Vec<Vec<String>> = self
            .models
            .iter()
            .map(|m| {
                let mut row = vec![m.clone()];
                for b in &self.backbones {
                    match self.summary(m, b) {
                        Some(s) => {
                            row.push(format!("{:.4}", s.summary.mean));
                            row.push(format!("{:.4}", s.summary.std));
                        }
                        None => {
                            row.push("-".into());
                            row.push("-".into());
                        }
                    }
                }
                row
            })
            .collect();
        table::render(&headers, &aligns, &rows)
    }
}
