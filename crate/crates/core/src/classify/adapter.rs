//! Predictor adapters.
//!
//! The core never links an ML runtime. A predictor is either a lookup table
//! read from a sidecar truth file, or an external process speaking
//! line-delimited JSON over its standard streams:
//!
//! ```text
//! -> {"video_id":"V1","frame_index":12,"width":224,"height":224,"pixels":[0.0, ...]}
//! <- {"video_id":"V1","frame_index":12,"probs":[0.9,0.02,0.02,0.02,0.02,0.02]}
//! ```
//!
//! Exactly one request is in flight per process.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{ClassifyError, SixClassLabel};
use crate::ingest::{CineSequence, Frame};

/// A frame scaled to `[0, 1]` and resized for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

pub struct AdapterRequest<'a> {
    pub video_id: &'a str,
    pub frame_index: usize,
    pub image: &'a NormalizedImage,
}

pub trait PredictorAdapter {
    /// Returns the raw six-class probability vector for one frame.
    fn predict(&mut self, request: &AdapterRequest<'_>) -> Result<Vec<f64>, ClassifyError>;
}

/// Scales intensities by the bit-depth maximum and resizes with bilinear
/// interpolation (half-pixel centres, edge clamping).
pub fn prepare_frame(seq: &CineSequence, frame: &Frame, target: (u32, u32)) -> NormalizedImage {
    let (src_w, src_h) = (seq.width() as usize, seq.height() as usize);
    let (dst_w, dst_h) = (target.0.max(1) as usize, target.1.max(1) as usize);
    let scale = seq.bit_depth().max_value() as f32;
    let px = |x: usize, y: usize| frame.pixels[y * src_w + x] as f32 / scale;

    let axis = |dst: usize, src: usize| -> Vec<(usize, usize, f32)> {
        (0..dst)
            .map(|d| {
                let s = ((d as f32 + 0.5) * src as f32 / dst as f32 - 0.5).clamp(0.0, (src - 1) as f32);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, s - lo as f32)
            })
            .collect()
    };
    let xs = axis(dst_w, src_w);
    let ys = axis(dst_h, src_h);

    let mut data = Vec::with_capacity(dst_w * dst_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = px(x0, y0) * (1.0 - fx) + px(x1, y0) * fx;
            let bottom = px(x0, y1) * (1.0 - fx) + px(x1, y1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    NormalizedImage {
        width: dst_w as u32,
        height: dst_h as u32,
        data,
    }
}

/// One line of a stub truth file. Either `probs` or `label` must be set; a
/// label expands to a one-hot vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubEntry {
    pub video_id: String,
    pub frame_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<SixClassLabel>,
}

/// Predictor answering from a fixed `(video_id, frame_index)` table.
#[derive(Debug, Clone, Default)]
pub struct LookupPredictor {
    table: HashMap<(String, usize), Vec<f64>>,
}

impl LookupPredictor {
    pub fn new(entries: impl IntoIterator<Item = StubEntry>) -> Result<Self, ClassifyError> {
        let mut table = HashMap::new();
        for e in entries {
            let probs = match (e.probs, e.label) {
                (Some(p), _) => p,
                (None, Some(label)) => {
                    let mut p = vec![0.0; 6];
                    p[label.position()] = 1.0;
                    p
                }
                (None, None) => {
                    return Err(ClassifyError::MalformedPrediction(format!(
                        "stub entry {}:{} has neither probs nor label",
                        e.video_id, e.frame_index
                    )))
                }
            };
            table.insert((e.video_id, e.frame_index), probs);
        }
        Ok(Self { table })
    }

    /// Reads a line-delimited JSON truth file of [`StubEntry`] records.
    pub fn from_file(path: &Path) -> Result<Self, ClassifyError> {
        let entries: Vec<StubEntry> = crate::jsonl::read_path(path)
            .map_err(|e| ClassifyError::PredictorUnavailable(e.to_string()))?;
        Self::new(entries)
    }
}

impl PredictorAdapter for LookupPredictor {
    fn predict(&mut self, request: &AdapterRequest<'_>) -> Result<Vec<f64>, ClassifyError> {
        self.table
            .get(&(request.video_id.to_string(), request.frame_index))
            .cloned()
            .ok_or_else(|| {
                ClassifyError::PredictorUnavailable(format!(
                    "no stub entry for {}:{}",
                    request.video_id, request.frame_index
                ))
            })
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    video_id: &'a str,
    frame_index: usize,
    width: u32,
    height: u32,
    pixels: &'a [f32],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct AdapterResponse {
    pub video_id: String,
    pub frame_index: usize,
    pub probs: Vec<f64>,
}

/// Parses one response line from an external predictor.
pub fn parse_response_line(line: &str) -> Result<AdapterResponse, ClassifyError> {
    serde_json::from_str(line.trim_end())
        .map_err(|e| ClassifyError::MalformedPrediction(format!("bad response line: {e}")))
}

/// Predictor backed by a child process.
pub struct ExternalProcessPredictor {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    line: String,
}

impl ExternalProcessPredictor {
    /// Launches `command[0]` with the remaining elements as arguments.
    pub fn spawn(command: &[String]) -> Result<Self, ClassifyError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ClassifyError::PredictorUnavailable("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ClassifyError::PredictorUnavailable(format!("{program}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child,
            stdin,
            stdout,
            line: String::new(),
        })
    }
}

impl PredictorAdapter for ExternalProcessPredictor {
    fn predict(&mut self, request: &AdapterRequest<'_>) -> Result<Vec<f64>, ClassifyError> {
        let unavailable = |e: std::io::Error| ClassifyError::PredictorUnavailable(e.to_string());
        let wire = WireRequest {
            video_id: request.video_id,
            frame_index: request.frame_index,
            width: request.image.width,
            height: request.image.height,
            pixels: &request.image.data,
        };
        let mut payload = serde_json::to_vec(&wire).expect("request serializes");
        payload.push(b'\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| ClassifyError::PredictorUnavailable("stdin closed".into()))?;
        stdin.write_all(&payload).map_err(unavailable)?;
        stdin.flush().map_err(unavailable)?;

        self.line.clear();
        let n = self.stdout.read_line(&mut self.line).map_err(unavailable)?;
        if n == 0 {
            return Err(ClassifyError::PredictorUnavailable(
                "predictor process closed its output".into(),
            ));
        }
        let response = parse_response_line(&self.line)?;
        if response.video_id != request.video_id || response.frame_index != request.frame_index {
            return Err(ClassifyError::MalformedPrediction(format!(
                "response for {}:{} answered request {}:{}",
                response.video_id, response.frame_index, request.video_id, request.frame_index
            )));
        }
        Ok(response.probs)
    }
}

impl Drop for ExternalProcessPredictor {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved predictor exit on EOF.
        drop(self.stdin.take());
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
