//! Six-class key-frame gating.
//!
//! A [`PredictorAdapter`] maps one normalized grayscale frame to six class
//! probabilities. [`predict`] validates that output and derives the label and
//! confidence; [`select_top_confidence`] picks key frames from a batch of
//! predictions.

mod adapter;
mod labels;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CineSequence, Frame};

pub use adapter::{
    parse_response_line, prepare_frame, AdapterRequest, AdapterResponse, ExternalProcessPredictor,
    LookupPredictor, NormalizedImage, PredictorAdapter, StubEntry,
};
pub use labels::{
    collapse_keyframe3, collapse_laterality, KeyFrameClass, Laterality, Quality, SixClassLabel,
};

/// Probability vectors may drift this far from summing to one before they
/// are rejected.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("predictor unavailable: {0}")]
    PredictorUnavailable(String),
    #[error("malformed prediction: {0}")]
    MalformedPrediction(String),
    #[error("no predictions to select from")]
    EmptyInput,
    #[error("frame {frame_index} not found in video {video_id}")]
    UnknownFrame { video_id: String, frame_index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub video_id: String,
    pub frame_index: usize,
    pub probs: [f64; 6],
    pub label: SixClassLabel,
    pub confidence: f64,
    /// Set when the raw vector was rescaled to sum to one.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub renormalized: bool,
}

/// A selected key frame with the exam it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyFrame {
    pub exam_id: String,
    #[serde(flatten)]
    pub prediction: FramePrediction,
}

impl KeyFrame {
    pub fn video_id(&self) -> &str {
        &self.prediction.video_id
    }

    pub fn frame_index(&self) -> usize {
        self.prediction.frame_index
    }

    pub fn laterality(&self) -> Laterality {
        self.prediction.label.laterality()
    }
}

/// Checks a raw probability vector: six finite values in `[0, 1]` summing
/// to one within [`NORMALIZATION_TOLERANCE`]. Drift inside the tolerance is
/// renormalized and reported through the returned flag.
pub fn validate_probs(raw: &[f64]) -> Result<([f64; 6], bool), ClassifyError> {
    let probs: [f64; 6] = raw.try_into().map_err(|_| {
        ClassifyError::MalformedPrediction(format!("expected 6 probabilities, got {}", raw.len()))
    })?;
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0 || **p > 1.0 + NORMALIZATION_TOLERANCE)
    {
        return Err(ClassifyError::MalformedPrediction(format!(
            "probability {i} is {p}"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(ClassifyError::MalformedPrediction(format!(
            "probabilities sum to {sum}"
        )));
    }
    if sum == 1.0 {
        return Ok((probs, false));
    }
    Ok((probs.map(|p| p / sum), true))
}

/// Index of the largest probability; ties go to the earlier class.
pub fn argmax(probs: &[f64; 6]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

impl FramePrediction {
    pub fn from_raw(
        video_id: impl Into<String>,
        frame_index: usize,
        raw: &[f64],
    ) -> Result<Self, ClassifyError> {
        let (probs, renormalized) = validate_probs(raw)?;
        let best = argmax(&probs);
        Ok(Self {
            video_id: video_id.into(),
            frame_index,
            probs,
            label: SixClassLabel::ALL[best],
            confidence: probs[best],
            renormalized,
        })
    }
}

/// Runs the adapter on one frame of `seq`.
pub fn predict(
    seq: &CineSequence,
    frame: &Frame,
    adapter: &mut dyn PredictorAdapter,
    resize: (u32, u32),
) -> Result<FramePrediction, ClassifyError> {
    let image = prepare_frame(seq, frame, resize);
    let request = AdapterRequest {
        video_id: seq.video_id(),
        frame_index: frame.index,
        image: &image,
    };
    let raw = adapter.predict(&request)?;
    FramePrediction::from_raw(seq.video_id(), frame.index, &raw)
}

/// Runs the adapter on every listed frame index of `seq`.
pub fn predict_frames(
    seq: &CineSequence,
    indices: &[usize],
    adapter: &mut dyn PredictorAdapter,
    resize: (u32, u32),
) -> Result<Vec<FramePrediction>, ClassifyError> {
    indices
        .iter()
        .map(|&i| {
            let frame = seq.frame(i).ok_or_else(|| ClassifyError::UnknownFrame {
                video_id: seq.video_id().to_string(),
                frame_index: i,
            })?;
            predict(seq, frame, adapter, resize)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// The `k` most confident predictions overall.
    TopK(usize),
    /// The most confident `better`-class frame per video and laterality.
    #[default]
    PerVideoBest,
    /// Every prediction with confidence at or above the threshold.
    Threshold(f64),
}

fn output_order(a: &FramePrediction, b: &FramePrediction) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.video_id.cmp(&b.video_id))
        .then(a.frame_index.cmp(&b.frame_index))
}

/// Key-frame selection. Output is ordered by confidence (descending), then
/// video id, then frame index. `TopK` with `k` above the input size returns
/// every prediction.
pub fn select_top_confidence(
    preds: &[FramePrediction],
    policy: SelectionPolicy,
) -> Result<Vec<FramePrediction>, ClassifyError> {
    let mut out: Vec<FramePrediction> = match policy {
        SelectionPolicy::TopK(k) => {
            if preds.is_empty() {
                return Err(ClassifyError::EmptyInput);
            }
            let mut all = preds.to_vec();
            all.sort_by(output_order);
            all.truncate(k);
            all
        }
        SelectionPolicy::Threshold(t) => {
            preds.iter().filter(|p| p.confidence >= t).cloned().collect()
        }
        SelectionPolicy::PerVideoBest => {
            let mut best: BTreeMap<(&str, Laterality), &FramePrediction> = BTreeMap::new();
            for p in preds.iter().filter(|p| p.label.quality() == Quality::Better) {
                let slot = best
                    .entry((p.video_id.as_str(), p.label.laterality()))
                    .or_insert(p);
                if output_order(p, slot) == Ordering::Less {
                    *slot = p;
                }
            }
            best.into_values().cloned().collect()
        }
    };
    out.sort_by(output_order);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(video: &str, frame: usize, label: SixClassLabel, confidence: f64) -> FramePrediction {
        let mut probs = [(1.0 - confidence) / 5.0; 6];
        probs[label.position()] = confidence;
        FramePrediction {
            video_id: video.into(),
            frame_index: frame,
            probs,
            label,
            confidence,
            renormalized: false,
        }
    }

    #[test]
    fn one_hot_passthrough() {
        let p = FramePrediction::from_raw("v1", 0, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.label, SixClassLabel::LcaBetter);
        assert_eq!(p.confidence, 1.0);
        assert!(!p.renormalized);
    }

    #[test]
    fn tie_goes_to_class_order() {
        let p = FramePrediction::from_raw("v", 0, &[0.3, 0.3, 0.1, 0.1, 0.1, 0.1]).unwrap();
        assert_eq!(p.label, SixClassLabel::LcaBetter);
        let p = FramePrediction::from_raw("v", 0, &[0.1, 0.1, 0.1, 0.35, 0.35, 0.0]).unwrap();
        assert_eq!(p.label, SixClassLabel::RcaBetter);
    }

    #[test]
    fn wrong_arity_is_malformed() {
        let err = FramePrediction::from_raw("v", 0, &[0.2; 5]).unwrap_err();
        assert!(matches!(err, ClassifyError::MalformedPrediction(_)));
    }

    #[test]
    fn nan_and_negative_are_malformed() {
        for raw in [
            [f64::NAN, 0.2, 0.2, 0.2, 0.2, 0.2],
            [-0.1, 0.3, 0.2, 0.2, 0.2, 0.2],
            [0.5, 0.5, 0.5, 0.0, 0.0, 0.0],
        ] {
            assert!(matches!(
                FramePrediction::from_raw("v", 0, &raw),
                Err(ClassifyError::MalformedPrediction(_))
            ));
        }
    }

    #[test]
    fn small_drift_is_renormalized_and_flagged() {
        let p = FramePrediction::from_raw("v", 0, &[0.5, 0.5 + 5e-7, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(p.renormalized);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(p.label, SixClassLabel::LcaBad);
    }

    #[test]
    fn top_k() {
        let preds = vec![
            pred("a", 0, SixClassLabel::LcaBad, 0.7),
            pred("a", 1, SixClassLabel::LcaBad, 0.9),
            pred("b", 0, SixClassLabel::LcaBad, 0.8),
        ];
        let out = select_top_confidence(&preds, SelectionPolicy::TopK(2)).unwrap();
        let conf: Vec<f64> = out.iter().map(|p| p.confidence).collect();
        assert_eq!(conf, vec![0.9, 0.8]);
        assert!(matches!(
            select_top_confidence(&[], SelectionPolicy::TopK(1)),
            Err(ClassifyError::EmptyInput)
        ));
    }

    #[test]
    fn per_video_best_one_per_video() {
        let preds = vec![
            pred("v1", 0, SixClassLabel::LcaBetter, 0.6),
            pred("v1", 7, SixClassLabel::LcaBetter, 0.8),
            pred("v2", 0, SixClassLabel::RcaBetter, 0.9),
            pred("v2", 9, SixClassLabel::RcaBetter, 0.5),
        ];
        let out = select_top_confidence(&preds, SelectionPolicy::PerVideoBest).unwrap();
        let keys: Vec<(&str, usize)> = out.iter().map(|p| (p.video_id.as_str(), p.frame_index)).collect();
        assert_eq!(keys, vec![("v2", 0), ("v1", 7)]);
    }

    #[test]
    fn per_video_best_ignores_non_better_and_splits_laterality() {
        let preds = vec![
            pred("v1", 0, SixClassLabel::LcaBad, 0.99),
            pred("v1", 3, SixClassLabel::LcaBetter, 0.6),
            pred("v1", 8, SixClassLabel::RcaBetter, 0.7),
        ];
        let out = select_top_confidence(&preds, SelectionPolicy::PerVideoBest).unwrap();
        let frames: Vec<usize> = out.iter().map(|p| p.frame_index).collect();
        assert_eq!(frames, vec![8, 3]);
    }

    #[test]
    fn threshold() {
        let preds = vec![
            pred("v", 0, SixClassLabel::LcaBad, 0.9),
            pred("v", 1, SixClassLabel::LcaBad, 0.96),
        ];
        let out = select_top_confidence(&preds, SelectionPolicy::Threshold(0.95)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].frame_index, 1);
    }

    #[test]
    fn policy_serde() {
        let p: SelectionPolicy = serde_json::from_str(r#"{"top_k": 3}"#).unwrap();
        assert_eq!(p, SelectionPolicy::TopK(3));
        let p: SelectionPolicy = serde_json::from_str(r#""per_video_best""#).unwrap();
        assert_eq!(p, SelectionPolicy::PerVideoBest);
    }

    #[test]
    fn keyframe_flattens() {
        let kf = KeyFrame {
            exam_id: "E1".into(),
            prediction: pred("v", 2, SixClassLabel::RcaBetter, 1.0),
        };
        let json = serde_json::to_string(&kf).unwrap();
        assert!(json.starts_with(r#"{"exam_id":"E1","video_id":"v","frame_index":2"#));
        assert_eq!(serde_json::from_str::<KeyFrame>(&json).unwrap(), kf);
    }
}
