//! Embedding file formats.
//!
//! * JSONL: one `{"case_id", "model_id", "backbone_id", "i_e", "g_e", "r_e"}`
//!   object per line. Model and backbone ids may be omitted when supplied
//!   through [`LoadOptions`].
//! * Binary: 4-byte magic `VLS1`, then `d` and `count` as little-endian
//!   `u32`, then `count` triples of `i_e`, `g_e`, `r_e`, each `d`
//!   little-endian `f32`. Case ids are the zero-based record positions.

use std::path::Path;

use serde::Deserialize;

use super::{EmbeddingTriple, VlScoreError, UNIT_NORM_TOLERANCE};

pub const BINARY_MAGIC: &[u8; 4] = b"VLS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Jsonl,
    Binary,
}

impl EmbeddingFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => EmbeddingFormat::Binary,
            _ => EmbeddingFormat::Jsonl,
        }
    }
}

/// Provider metadata applied while loading.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub model_id: Option<String>,
    pub backbone_id: Option<String>,
    /// Require every vector to have unit norm.
    pub unit_norm: bool,
    /// Rescale vectors to unit norm instead of rejecting them.
    pub normalize_on_load: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            model_id: None,
            backbone_id: None,
            unit_norm: true,
            normalize_on_load: false,
        }
    }
}

/// Identifiers for the records of a binary file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMeta {
    pub model_id: String,
    pub backbone_id: String,
}

#[derive(Deserialize)]
struct JsonRecord {
    case_id: String,
    #[serde(default)]
    model_id: Option<String>,
    #[serde(default)]
    backbone_id: Option<String>,
    i_e: Vec<f64>,
    g_e: Vec<f64>,
    r_e: Vec<f64>,
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn check(mut t: EmbeddingTriple, opts: &LoadOptions, line: usize) -> Result<EmbeddingTriple, VlScoreError> {
    let d = t.i_e.len();
    if t.g_e.len() != d || t.r_e.len() != d {
        return Err(VlScoreError::DimensionMismatch(format!(
            "record {line} ({}): i_e has {d}, g_e has {}, r_e has {}",
            t.case_id,
            t.g_e.len(),
            t.r_e.len()
        )));
    }
    if d < 2 {
        return Err(VlScoreError::DimensionTooSmall(d));
    }
    if t.i_e.iter().chain(&t.g_e).chain(&t.r_e).any(|v| !v.is_finite()) {
        return Err(VlScoreError::NonFiniteInput);
    }
    if opts.unit_norm || opts.normalize_on_load {
        for (name, v) in [("i_e", &mut t.i_e), ("g_e", &mut t.g_e), ("r_e", &mut t.r_e)] {
            let norm = if opts.normalize_on_load {
                let n = normalize(v);
                if n > 0.0 { 1.0 } else { 0.0 }
            } else {
                v.iter().map(|x| x * x).sum::<f64>().sqrt()
            };
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(VlScoreError::NotUnitNorm {
                    case_id: t.case_id.clone(),
                    vector: name,
                    norm,
                });
            }
        }
    }
    Ok(t)
}

pub fn parse_jsonl(text: &str, opts: &LoadOptions) -> Result<Vec<EmbeddingTriple>, VlScoreError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(line).map_err(|e| VlScoreError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let missing = |what: &str| VlScoreError::MalformedRecord {
            line: line_no,
            reason: format!("no {what} in record or load options"),
        };
        let triple = EmbeddingTriple {
            case_id: rec.case_id,
            model_id: rec.model_id.or_else(|| opts.model_id.clone()).ok_or_else(|| missing("model_id"))?,
            backbone_id: rec
                .backbone_id
                .or_else(|| opts.backbone_id.clone())
                .ok_or_else(|| missing("backbone_id"))?,
            i_e: rec.i_e,
            g_e: rec.g_e,
            r_e: rec.r_e,
        };
        out.push(check(triple, opts, line_no)?);
    }
    Ok(out)
}

pub fn parse_binary(
    bytes: &[u8],
    meta: &BinaryMeta,
    opts: &LoadOptions,
) -> Result<Vec<EmbeddingTriple>, VlScoreError> {
    let malformed = |reason: String| VlScoreError::MalformedRecord { line: 0, reason };
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(malformed("missing VLS1 header".into()));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if count > 0 && d < 2 {
        return Err(VlScoreError::DimensionTooSmall(d));
    }
    let expected = d
        .checked_mul(count)
        .and_then(|n| n.checked_mul(12))
        .ok_or_else(|| malformed("header sizes overflow".into()))?;
    if body.len() != expected {
        return Err(malformed(format!(
            "expected {expected} payload bytes for d={d}, count={count}, found {}",
            body.len()
        )));
    }
    let floats: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    floats
        .chunks_exact(3 * d.max(1))
        .take(count)
        .enumerate()
        .map(|(k, chunk)| {
            let triple = EmbeddingTriple {
                case_id: k.to_string(),
                model_id: meta.model_id.clone(),
                backbone_id: meta.backbone_id.clone(),
                i_e: chunk[..d].to_vec(),
                g_e: chunk[d..2 * d].to_vec(),
                r_e: chunk[2 * d..].to_vec(),
            };
            check(triple, opts, k)
        })
        .collect()
}

/// Serializes triples in the binary layout; all triples must share `d`.
pub fn write_binary(triples: &[EmbeddingTriple]) -> Result<Vec<u8>, VlScoreError> {
    let d = triples.first().map_or(0, |t| t.i_e.len());
    let mut out = Vec::with_capacity(12 + triples.len() * 12 * d);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(triples.len() as u32).to_le_bytes());
    for t in triples {
        for v in [&t.i_e, &t.g_e, &t.r_e] {
            if v.len() != d {
                return Err(VlScoreError::DimensionMismatch(format!(
                    "case {} has dimension {}, expected {d}",
                    t.case_id,
                    v.len()
                )));
            }
            for &x in v.iter() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Loads a JSONL or binary embedding file. Binary files take their model and
/// backbone ids from `opts`.
pub fn load_embeddings(
    path: &Path,
    format: EmbeddingFormat,
    opts: &LoadOptions,
) -> Result<Vec<EmbeddingTriple>, VlScoreError> {
    let io = |e: std::io::Error| VlScoreError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    match format {
        EmbeddingFormat::Jsonl => parse_jsonl(&std::fs::read_to_string(path).map_err(io)?, opts),
        EmbeddingFormat::Binary => {
            let meta = BinaryMeta {
                model_id: opts.model_id.clone().unwrap_or_default(),
                backbone_id: opts.backbone_id.clone().unwrap_or_default(),
            };
            parse_binary(&std::fs::read(path).map_err(io)?, &meta, opts)
        }
    }
}
