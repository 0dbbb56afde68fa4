//! Still-frame candidate sampling at local extrema of per-frame statistics.
//!
//! A frame is a candidate when its mean or variance is a strict local
//! extremum within `window_radius` frames on either side. Runs of equal
//! values count as one extremum reported at their leftmost index, judged
//! against the window around the whole run. Near the clip ends the window is
//! truncated, so the first and last frames are eligible.
//!
//! Candidates from both series are merged and thinned greedily by
//! prominence so that no two kept frames are closer than `min_gap`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{frame_stats, CineSequence, FrameStats};

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("series value at index {0} is not finite")]
    NonFiniteValue(usize),
    #[error("window radius must be at least 1")]
    InvalidWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Series {
    Mean,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremumPoint {
    pub index: usize,
    pub series: Series,
    pub kind: ExtremumKind,
    /// Distance from the median of the surrounding window, in series units.
    pub prominence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub window_radius: usize,
    pub min_gap: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            window_radius: 2,
            min_gap: 5,
        }
    }
}

/// Selected still-frame candidates of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub video_id: String,
    pub exam_id: String,
    #[serde(rename = "indices")]
    pub selected: Vec<usize>,
    /// Extrema behind each selected frame, from either series.
    pub provenance: BTreeMap<usize, Vec<ExtremumPoint>>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Finds strict local maxima and minima of `series`.
///
/// Series shorter than `2 * window_radius + 1` yield no extrema. Output is
/// ordered by index.
pub fn find_extrema(
    series: &[f64],
    window_radius: usize,
    tag: Series,
) -> Result<Vec<ExtremumPoint>, SamplerError> {
    if window_radius == 0 {
        return Err(SamplerError::InvalidWindow);
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(SamplerError::NonFiniteValue(i));
    }
    let n = series.len();
    if n < 2 * window_radius + 1 {
        return Ok(Vec::new());
    }

    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let value = series[start];
        let mut end = start;
        while end + 1 < n && series[end + 1] == value {
            end += 1;
        }
        let lo = start.saturating_sub(window_radius);
        let hi = (end + window_radius).min(n - 1);
        let neighbours = series[lo..start].iter().chain(&series[end + 1..=hi]);

        let mut any = false;
        let mut all_below = true;
        let mut all_above = true;
        for &v in neighbours {
            any = true;
            all_below &= v < value;
            all_above &= v > value;
        }
        let kind = match (any, all_below, all_above) {
            (true, true, _) => Some(ExtremumKind::Max),
            (true, _, true) => Some(ExtremumKind::Min),
            _ => None,
        };
        if let Some(kind) = kind {
            let mut window = series[lo..=hi].to_vec();
            let prominence = (value - median(&mut window)).abs();
            out.push(ExtremumPoint {
                index: start,
                series: tag,
                kind,
                prominence,
            });
        }
        start = end + 1;
    }
    Ok(out)
}

/// Ranking used for gap thinning: higher prominence first, then lower frame
/// index, then mean before variance.
fn rank(a: &ExtremumPoint, b: &ExtremumPoint) -> Ordering {
    b.prominence
        .total_cmp(&a.prominence)
        .then(a.index.cmp(&b.index))
        .then(a.series.cmp(&b.series))
}

/// Greedily keeps the most prominent points such that every pair of kept
/// frame indices is at least `min_gap` apart. A gap of 0 behaves as 1.
/// Returns the kept indices in ascending order.
pub fn enforce_min_gap(points: &[ExtremumPoint], min_gap: usize) -> Vec<usize> {
    let min_gap = min_gap.max(1);
    let mut ranked: Vec<&ExtremumPoint> = points.iter().collect();
    ranked.sort_by(|a, b| rank(a, b));
    let mut kept: Vec<usize> = Vec::new();
    for p in ranked {
        if kept.iter().all(|&k| k.abs_diff(p.index) >= min_gap) {
            kept.push(p.index);
        }
    }
    kept.sort_unstable();
    kept
}

/// Candidate selection from precomputed frame statistics.
pub fn candidates_from_stats(
    exam_id: &str,
    video_id: &str,
    stats: &[FrameStats],
    config: &SamplerConfig,
) -> Result<CandidateSet, SamplerError> {
    let means: Vec<f64> = stats.iter().map(|s| s.mean).collect();
    let variances: Vec<f64> = stats.iter().map(|s| s.variance).collect();
    let mut by_index: BTreeMap<usize, Vec<ExtremumPoint>> = BTreeMap::new();
    for p in find_extrema(&means, config.window_radius, Series::Mean)?
        .into_iter()
        .chain(find_extrema(&variances, config.window_radius, Series::Variance)?)
    {
        by_index.entry(p.index).or_default().push(p);
    }

    // One ranking point per frame, carrying the larger prominence.
    let merged: Vec<ExtremumPoint> = by_index
        .values()
        .map(|hits| {
            *hits
                .iter()
                .min_by(|a, b| rank(a, b))
                .expect("non-empty hit list")
        })
        .collect();
    let selected = enforce_min_gap(&merged, config.min_gap);
    let provenance = selected
        .iter()
        .map(|i| (*i, by_index[i].clone()))
        .collect();
    Ok(CandidateSet {
        video_id: video_id.to_string(),
        exam_id: exam_id.to_string(),
        selected,
        provenance,
    })
}

/// Computes frame statistics and selects still-frame candidates.
pub fn sample_keyframe_candidates(
    seq: &CineSequence,
    config: &SamplerConfig,
) -> Result<CandidateSet, SamplerError> {
    candidates_from_stats(seq.exam_id(), seq.video_id(), &frame_stats(seq), config)
}
