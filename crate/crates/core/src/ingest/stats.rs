use serde::{Deserialize, Serialize};

use super::{CineSequence, Frame};

/// Intensity mean and population variance of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub index: usize,
    pub mean: f64,
    pub variance: f64,
}

impl FrameStats {
    /// Computed from exact integer sums, so the only rounding is the final
    /// division.
    pub fn of(frame: &Frame) -> Self {
        let n = frame.pixels.len() as u128;
        let (sum, sum_sq) = frame.pixels.iter().fold((0u128, 0u128), |(s, q), &v| {
            let v = v as u128;
            (s + v, q + v * v)
        });
        let mean = sum as f64 / n as f64;
        let numerator = n * sum_sq - sum * sum;
        let variance = numerator as f64 / (n * n) as f64;
        Self {
            index: frame.index,
            mean,
            variance,
        }
    }
}

/// One [`FrameStats`] per frame, in frame order.
pub fn frame_stats(seq: &CineSequence) -> Vec<FrameStats> {
    seq.frames().iter().map(FrameStats::of).collect()
}
