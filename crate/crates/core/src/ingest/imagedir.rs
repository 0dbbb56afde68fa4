//! Image-directory cines and the grayscale PGM/PNG codecs they use.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use super::{BitDepth, CineSequence, IngestError};

/// Name of the ordered frame list inside an image directory.
pub const INDEX_FILE: &str = "index.txt";

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Png => "png",
        }
    }
}

/// A single decoded grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedImage {
    pub width: u32,
    pub height: u32,
    pub bit_depth: BitDepth,
    pub pixels: Vec<u16>,
}

impl DecodedImage {
    fn shape(&self) -> String {
        format!("{}x{} {}", self.width, self.height, self.bit_depth)
    }
}

struct PgmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmHeader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, IngestError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| IngestError::malformed(start, format!("PGM {what} is not a number")))
    }
}

/// Decodes a binary (`P5`) or plain (`P2`) PGM image. Samples are kept at
/// their stored values; maxval only selects 8- or 16-bit storage.
pub fn decode_pgm(bytes: &[u8]) -> Result<DecodedImage, IngestError> {
    let plain = match bytes.get(..2) {
        Some(b"P5") => false,
        Some(b"P2") => true,
        _ => return Err(IngestError::ImageDecode("not a P2/P5 PGM image".into())),
    };
    let mut header = PgmHeader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(IngestError::UnsupportedPixelFormat(format!(
            "zero-sized PGM {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > u16::MAX as u32 {
        return Err(IngestError::ImageDecode(format!("PGM maxval {maxval} out of range")));
    }
    let bit_depth = if maxval <= 255 {
        BitDepth::Eight
    } else {
        BitDepth::Sixteen
    };
    let count = width as u64 * height as u64;

    let pixels: Vec<u16> = if plain {
        let mut out = Vec::new();
        for i in 0..count {
            let v = header.number("sample")?;
            if v > maxval {
                return Err(IngestError::ImageDecode(format!(
                    "PGM sample {i} = {v} exceeds maxval {maxval}"
                )));
            }
            out.push(v as u16);
        }
        out
    } else {
        // Exactly one whitespace byte separates maxval from the raster.
        if !bytes.get(header.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(IngestError::malformed(header.pos, "PGM header not terminated"));
        }
        let raster = &bytes[header.pos + 1..];
        let sample_bytes = if bit_depth == BitDepth::Eight { 1 } else { 2 };
        let expected = count * sample_bytes;
        if (raster.len() as u64) < expected {
            return Err(IngestError::TruncatedPixelData {
                expected,
                found: raster.len() as u64,
            });
        }
        let raster = &raster[..expected as usize];
        let pixels: Vec<u16> = match bit_depth {
            BitDepth::Eight => raster.iter().map(|&b| b as u16).collect(),
            // Netpbm stores 16-bit samples most significant byte first.
            BitDepth::Sixteen => raster
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]))
                .collect(),
        };
        if let Some((i, v)) = pixels.iter().enumerate().find(|(_, &v)| v as u32 > maxval) {
            return Err(IngestError::ImageDecode(format!(
                "PGM sample {i} = {v} exceeds maxval {maxval}"
            )));
        }
        pixels
    };

    Ok(DecodedImage {
        width,
        height,
        bit_depth,
        pixels,
    })
}

/// Encodes a binary PGM with maxval 255 or 65535.
pub fn encode_pgm(width: u32, height: u32, bit_depth: BitDepth, pixels: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{}\n", bit_depth.max_value()).into_bytes();
    match bit_depth {
        BitDepth::Eight => out.extend(pixels.iter().map(|&v| v as u8)),
        BitDepth::Sixteen => {
            for &v in pixels {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    out
}

/// Decodes a grayscale PNG (1/2/4-bit inputs are expanded to 8-bit).
pub fn decode_png(bytes: &[u8]) -> Result<DecodedImage, IngestError> {
    let decode_err = |e: png::DecodingError| IngestError::ImageDecode(e.to_string());
    let mut decoder = png::Decoder::new_with_limits(
        Cursor::new(bytes),
        png::Limits {
            bytes: 256 * 1024 * 1024,
        },
    );
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        return Err(IngestError::UnsupportedPixelFormat(format!(
            "PNG color type {color:?}; only grayscale without alpha is supported"
        )));
    }
    let bit_depth = match depth {
        png::BitDepth::Eight => BitDepth::Eight,
        png::BitDepth::Sixteen => BitDepth::Sixteen,
        other => {
            return Err(IngestError::UnsupportedPixelFormat(format!(
                "PNG bit depth {other:?}"
            )))
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| IngestError::ImageDecode("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    buf.truncate(info.buffer_size());
    let pixels = match bit_depth {
        BitDepth::Eight => buf.iter().map(|&b| b as u16).collect(),
        BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect(),
    };
    Ok(DecodedImage {
        width: info.width,
        height: info.height,
        bit_depth,
        pixels,
    })
}

/// Encodes a grayscale PNG at the given bit depth.
pub fn encode_png(width: u32, height: u32, bit_depth: BitDepth, pixels: &[u16]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width, height);
        encoder.set_color(png::ColorType::Grayscale);
        let data: Vec<u8> = match bit_depth {
            BitDepth::Eight => {
                encoder.set_depth(png::BitDepth::Eight);
                pixels.iter().map(|&v| v as u8).collect()
            }
            BitDepth::Sixteen => {
                encoder.set_depth(png::BitDepth::Sixteen);
                pixels.iter().flat_map(|v| v.to_be_bytes()).collect()
            }
        };
        // Writing into a Vec cannot fail for a well-formed header.
        let mut writer = encoder.write_header().expect("png header");
        writer.write_image_data(&data).expect("png data");
        writer.finish().expect("png finish");
    }
    out
}

/// Decodes a PGM or PNG by sniffing its magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<DecodedImage, IngestError> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(bytes)
    } else {
        Err(IngestError::ImageDecode("unrecognized image format".into()))
    }
}

/// Loads an image directory. Identifiers are left empty; [`super::load_cine`]
/// fills them from the path.
pub fn load_imagedir(dir: &Path) -> Result<CineSequence, IngestError> {
    let index_path = dir.join(INDEX_FILE);
    let index = fs::read_to_string(&index_path).map_err(|e| IngestError::io(&index_path, e))?;
    let names: Vec<&str> = index
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if names.is_empty() {
        return Err(IngestError::EmptySequence);
    }

    let mut first: Option<DecodedImage> = None;
    let mut frames = Vec::with_capacity(names.len());
    for (index, name) in names.iter().enumerate() {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| IngestError::io(&path, e))?;
        let image = decode_image(&bytes)?;
        if let Some(reference) = &first {
            if (image.width, image.height, image.bit_depth)
                != (reference.width, reference.height, reference.bit_depth)
            {
                return Err(IngestError::FrameSizeMismatch {
                    index,
                    expected: reference.shape(),
                    found: image.shape(),
                });
            }
        } else {
            first = Some(DecodedImage {
                pixels: Vec::new(),
                ..image.clone()
            });
        }
        frames.push(image.pixels);
    }
    let reference = first.expect("at least one frame");
    CineSequence::new(
        "",
        "",
        reference.width,
        reference.height,
        reference.bit_depth,
        frames,
    )
}

/// Writes a cine as an image directory (`frame_00000.<ext>` + `index.txt`).
pub fn write_imagedir(
    seq: &CineSequence,
    dir: &Path,
    format: ImageFormat,
) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    let mut index = String::new();
    for frame in seq.frames() {
        let name = format!("frame_{:05}.{}", frame.index, format.extension());
        let bytes = match format {
            ImageFormat::Pgm => encode_pgm(seq.width(), seq.height(), seq.bit_depth(), &frame.pixels),
            ImageFormat::Png => encode_png(seq.width(), seq.height(), seq.bit_depth(), &frame.pixels),
        };
        let path = dir.join(&name);
        fs::write(&path, bytes).map_err(|e| IngestError::io(&path, e))?;
        index.push_str(&name);
        index.push('\n');
    }
    let index_path = dir.join(INDEX_FILE);
    fs::write(&index_path, index).map_err(|e| IngestError::io(&index_path, e))
}
