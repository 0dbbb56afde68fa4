//! Cine ingestion.
//!
//! Two input layouts are supported:
//!
//! * a single multi-frame DICOM file in explicit-VR little-endian transfer
//!   syntax with uncompressed 8- or 16-bit grayscale pixel data, and
//! * an image directory holding an `index.txt` (one relative file name per
//!   line, in acquisition order) plus grayscale PGM or PNG frames.
//!
//! Both decode into a [`CineSequence`]. Identifiers come from the DICOM
//! study/series UIDs when present, otherwise from the `<exam>/<video>` path
//! convention.

mod dicom;
mod imagedir;
mod stats;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dicom::{parse_dicom, DicomCine, Tag, EXPLICIT_VR_LITTLE_ENDIAN};
pub use imagedir::{
    decode_image, decode_pgm, decode_png, encode_pgm, encode_png, load_imagedir, write_imagedir,
    DecodedImage, ImageFormat, INDEX_FILE,
};
pub use stats::{frame_stats, FrameStats};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unsupported transfer syntax: {0}")]
    UnsupportedTransferSyntax(String),
    #[error("missing required tag {0}")]
    MissingRequiredTag(Tag),
    #[error("frame {index} is {found}, expected {expected}")]
    FrameSizeMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("pixel data truncated: need {expected} bytes, found {found}")]
    TruncatedPixelData { expected: u64, found: u64 },
    #[error("cine has no frames")]
    EmptySequence,
    #[error("unsupported pixel format: {0}")]
    UnsupportedPixelFormat(String),
    #[error("malformed input at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("image decode failed: {0}")]
    ImageDecode(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn malformed(offset: usize, reason: impl Into<String>) -> Self {
        Self::Malformed {
            offset,
            reason: reason.into(),
        }
    }
}

/// Stored sample width of a cine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u8 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    pub fn from_bits(bits: u16) -> Option<Self> {
        match bits {
            8 => Some(BitDepth::Eight),
            16 => Some(BitDepth::Sixteen),
            _ => None,
        }
    }
}

impl From<BitDepth> for u8 {
    fn from(d: BitDepth) -> u8 {
        d.bits()
    }
}

impl TryFrom<u8> for BitDepth {
    type Error = String;

    fn try_from(bits: u8) -> Result<Self, Self::Error> {
        BitDepth::from_bits(bits as u16).ok_or_else(|| format!("unsupported bit depth {bits}"))
    }
}

impl fmt::Display for BitDepth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-bit", self.bits())
    }
}

/// One decoded grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    pub pixels: Vec<u16>,
}

/// One exam video as an ordered stack of equally sized grayscale frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CineSequence {
    exam_id: String,
    video_id: String,
    width: u32,
    height: u32,
    bit_depth: BitDepth,
    frames: Vec<Frame>,
}

impl CineSequence {
    /// Builds a sequence from raw frame buffers in acquisition order.
    ///
    /// Frame indices are assigned 0.. in the order given.
    pub fn new(
        exam_id: impl Into<String>,
        video_id: impl Into<String>,
        width: u32,
        height: u32,
        bit_depth: BitDepth,
        frames: Vec<Vec<u16>>,
    ) -> Result<Self, IngestError> {
        if frames.is_empty() {
            return Err(IngestError::EmptySequence);
        }
        if width == 0 || height == 0 {
            return Err(IngestError::UnsupportedPixelFormat(format!(
                "zero-sized frame {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        let max = bit_depth.max_value();
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(index, pixels)| {
                if pixels.len() != expected {
                    return Err(IngestError::FrameSizeMismatch {
                        index,
                        expected: format!("{expected} pixels"),
                        found: format!("{} pixels", pixels.len()),
                    });
                }
                if let Some(&v) = pixels.iter().find(|&&v| v > max) {
                    return Err(IngestError::UnsupportedPixelFormat(format!(
                        "frame {index} holds value {v} above the {bit_depth} range"
                    )));
                }
                Ok(Frame { index, pixels })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            exam_id: exam_id.into(),
            video_id: video_id.into(),
            width,
            height,
            bit_depth,
            frames,
        })
    }

    pub fn exam_id(&self) -> &str {
        &self.exam_id
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> Option<&Frame> {
        self.frames.get(index)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn with_ids(mut self, exam_id: impl Into<String>, video_id: impl Into<String>) -> Self {
        self.exam_id = exam_id.into();
        self.video_id = video_id.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatHint {
    #[default]
    Auto,
    Dicom,
    Imagedir,
}

impl std::str::FromStr for FormatHint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(FormatHint::Auto),
            "dicom" => Ok(FormatHint::Dicom),
            "imagedir" => Ok(FormatHint::Imagedir),
            other => Err(format!("unknown input format {other:?}")),
        }
    }
}

/// Loads a cine from a DICOM file or an image directory.
///
/// With [`FormatHint::Auto`] directories are read as image directories and
/// regular files as DICOM.
pub fn load_cine(path: &Path, hint: FormatHint) -> Result<CineSequence, IngestError> {
    let meta = std::fs::metadata(path).map_err(|e| IngestError::io(path, e))?;
    let format = match hint {
        FormatHint::Auto if meta.is_dir() => FormatHint::Imagedir,
        FormatHint::Auto => FormatHint::Dicom,
        other => other,
    };
    let (exam_fallback, video_fallback) = path_ids(path);
    match format {
        FormatHint::Imagedir => {
            let seq = load_imagedir(path)?;
            Ok(seq.with_ids(exam_fallback, video_fallback))
        }
        _ => {
            let bytes = std::fs::read(path).map_err(|e| IngestError::io(path, e))?;
            let cine = parse_dicom(&bytes)?;
            let exam_id = cine.study_uid.clone().unwrap_or(exam_fallback);
            let video_id = cine.series_uid.clone().unwrap_or(video_fallback);
            cine.into_sequence(exam_id, video_id)
        }
    }
}

/// `<exam>/<video>` identifiers from a path: the last component (minus any
/// extension for files) is the video, its parent directory the exam.
pub fn path_ids(path: &Path) -> (String, String) {
    let video = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    let exam = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    (exam, video)
}
