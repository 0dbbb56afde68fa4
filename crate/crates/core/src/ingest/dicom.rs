//! Minimal multi-frame DICOM reader.
//!
//! Reads a Part 10 file (128-byte preamble, `DICM`, group 0002 meta header)
//! or a bare dataset, both in explicit-VR little-endian. Only the handful of
//! image-pixel attributes needed to rebuild the frame stack are decoded;
//! everything else, including nested sequences of undefined length, is
//! skipped. Parsing stops at Pixel Data.

use std::fmt;

use super::{BitDepth, CineSequence, IngestError};

pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";

const MAX_SEQUENCE_DEPTH: usize = 32;
const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub group: u16,
    pub element: u16,
}

impl Tag {
    pub const fn new(group: u16, element: u16) -> Self {
        Self { group, element }
    }

    pub const TRANSFER_SYNTAX_UID: Tag = Tag::new(0x0002, 0x0010);
    pub const STUDY_INSTANCE_UID: Tag = Tag::new(0x0020, 0x000D);
    pub const SERIES_INSTANCE_UID: Tag = Tag::new(0x0020, 0x000E);
    pub const SAMPLES_PER_PIXEL: Tag = Tag::new(0x0028, 0x0002);
    pub const NUMBER_OF_FRAMES: Tag = Tag::new(0x0028, 0x0008);
    pub const ROWS: Tag = Tag::new(0x0028, 0x0010);
    pub const COLUMNS: Tag = Tag::new(0x0028, 0x0011);
    pub const BITS_ALLOCATED: Tag = Tag::new(0x0028, 0x0100);
    pub const PIXEL_REPRESENTATION: Tag = Tag::new(0x0028, 0x0103);
    pub const PIXEL_DATA: Tag = Tag::new(0x7FE0, 0x0010);

    const ITEM: Tag = Tag::new(0xFFFE, 0xE000);
    const ITEM_DELIMITATION: Tag = Tag::new(0xFFFE, 0xE00D);
    const SEQUENCE_DELIMITATION: Tag = Tag::new(0xFFFE, 0xE0DD);
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:04X},{:04X})", self.group, self.element)
    }
}

/// Decoded image attributes and frames of a multi-frame file.
#[derive(Debug, Clone, PartialEq)]
pub struct DicomCine {
    pub rows: u16,
    pub columns: u16,
    pub bit_depth: BitDepth,
    pub study_uid: Option<String>,
    pub series_uid: Option<String>,
    pub frames: Vec<Vec<u16>>,
}

impl DicomCine {
    pub fn into_sequence(
        self,
        exam_id: String,
        video_id: String,
    ) -> Result<CineSequence, IngestError> {
        CineSequence::new(
            exam_id,
            video_id,
            self.columns as u32,
            self.rows as u32,
            self.bit_depth,
            self.frames,
        )
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        if self.remaining() < n {
            return Err(IngestError::malformed(
                self.pos,
                format!("need {n} bytes, {} left", self.remaining()),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, IngestError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, IngestError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn peek_group(&self) -> Option<u16> {
        self.bytes
            .get(self.pos..self.pos + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn tag(&mut self) -> Result<Tag, IngestError> {
        Ok(Tag::new(self.u16()?, self.u16()?))
    }
}

struct ElementHeader {
    tag: Tag,
    vr: [u8; 2],
    length: u32,
    offset: usize,
}

fn has_long_length(vr: [u8; 2]) -> bool {
    matches!(
        &vr,
        b"OB" | b"OD" | b"OF" | b"OL" | b"OV" | b"OW" | b"SQ" | b"SV" | b"UC" | b"UN" | b"UR"
            | b"UT" | b"UV"
    )
}

fn read_header(cur: &mut Cursor<'_>) -> Result<ElementHeader, IngestError> {
    let offset = cur.pos;
    let tag = cur.tag()?;
    if tag.group == 0xFFFE {
        return Err(IngestError::malformed(
            offset,
            format!("unexpected delimiter {tag} outside a sequence"),
        ));
    }
    let vr_bytes = cur.take(2)?;
    let vr = [vr_bytes[0], vr_bytes[1]];
    if !vr.iter().all(u8::is_ascii_uppercase) {
        return Err(IngestError::UnsupportedTransferSyntax(format!(
            "element {tag} at byte {offset} has no explicit VR"
        )));
    }
    let length = if has_long_length(vr) {
        cur.take(2)?;
        cur.u32()?
    } else {
        cur.u16()? as u32
    };
    Ok(ElementHeader {
        tag,
        vr,
        length,
        offset,
    })
}

/// Skips the items of a sequence with undefined length, up to and including
/// the sequence delimiter.
fn skip_undefined_sequence(cur: &mut Cursor<'_>, depth: usize) -> Result<(), IngestError> {
    if depth > MAX_SEQUENCE_DEPTH {
        return Err(IngestError::malformed(cur.pos, "sequences nested too deeply"));
    }
    loop {
        let offset = cur.pos;
        let tag = cur.tag()?;
        let length = cur.u32()?;
        match tag {
            Tag::SEQUENCE_DELIMITATION => return Ok(()),
            Tag::ITEM if length == UNDEFINED_LENGTH => skip_undefined_item(cur, depth + 1)?,
            Tag::ITEM => {
                cur.take(length as usize)?;
            }
            other => {
                return Err(IngestError::malformed(
                    offset,
                    format!("expected item or sequence delimiter, found {other}"),
                ))
            }
        }
    }
}

fn skip_undefined_item(cur: &mut Cursor<'_>, depth: usize) -> Result<(), IngestError> {
    loop {
        if cur.peek_group() == Some(0xFFFE) {
            let offset = cur.pos;
            let tag = cur.tag()?;
            cur.u32()?;
            if tag == Tag::ITEM_DELIMITATION {
                return Ok(());
            }
            return Err(IngestError::malformed(
                offset,
                format!("unexpected {tag} inside an item"),
            ));
        }
        let header = read_header(cur)?;
        skip_value(cur, &header, depth)?;
    }
}

fn skip_value(cur: &mut Cursor<'_>, header: &ElementHeader, depth: usize) -> Result<(), IngestError> {
    if header.length == UNDEFINED_LENGTH {
        if &header.vr == b"SQ" || &header.vr == b"UN" {
            return skip_undefined_sequence(cur, depth);
        }
        return Err(IngestError::malformed(
            header.offset,
            format!("undefined length on non-sequence element {}", header.tag),
        ));
    }
    cur.take(header.length as usize)?;
    Ok(())
}

fn text_value(raw: &[u8]) -> String {
    String::from_utf8_lossy(raw)
        .trim_end_matches(['\0', ' '])
        .trim_start()
        .to_string()
}

fn us_value(header: &ElementHeader, raw: &[u8]) -> Result<u16, IngestError> {
    if raw.len() < 2 {
        return Err(IngestError::malformed(
            header.offset,
            format!("{} is too short for US", header.tag),
        ));
    }
    Ok(u16::from_le_bytes([raw[0], raw[1]]))
}

/// Reads the group 0002 meta header and checks the transfer syntax.
fn read_meta(cur: &mut Cursor<'_>) -> Result<(), IngestError> {
    let mut transfer_syntax = None;
    while cur.peek_group() == Some(0x0002) {
        let header = read_header(cur)?;
        if header.length == UNDEFINED_LENGTH {
            return Err(IngestError::malformed(
                header.offset,
                "undefined length in file meta",
            ));
        }
        let raw = cur.take(header.length as usize)?;
        if header.tag == Tag::TRANSFER_SYNTAX_UID {
            transfer_syntax = Some(text_value(raw));
        }
    }
    match transfer_syntax {
        None => Err(IngestError::MissingRequiredTag(Tag::TRANSFER_SYNTAX_UID)),
        Some(ts) if ts == EXPLICIT_VR_LITTLE_ENDIAN => Ok(()),
        Some(ts) => Err(IngestError::UnsupportedTransferSyntax(ts)),
    }
}

/// Parses a multi-frame grayscale DICOM file held in memory.
pub fn parse_dicom(bytes: &[u8]) -> Result<DicomCine, IngestError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() >= 132 && &bytes[128..132] == b"DICM" {
        cur.pos = 132;
        read_meta(&mut cur)?;
    }

    let mut rows = None;
    let mut columns = None;
    let mut frames = None;
    let mut bits = None;
    let mut study_uid = None;
    let mut series_uid = None;
    let mut pixel_data: Option<&[u8]> = None;

    while cur.remaining() > 0 {
        let header = read_header(&mut cur)?;
        if header.tag == Tag::PIXEL_DATA {
            if header.length == UNDEFINED_LENGTH {
                return Err(IngestError::UnsupportedTransferSyntax(
                    "encapsulated (compressed) pixel data".to_string(),
                ));
            }
            let len = (header.length as usize).min(cur.remaining());
            pixel_data = Some(cur.take(len)?);
            break;
        }
        if header.length == UNDEFINED_LENGTH {
            skip_value(&mut cur, &header, 0)?;
            continue;
        }
        let raw = cur.take(header.length as usize)?;
        match header.tag {
            Tag::ROWS => rows = Some(us_value(&header, raw)?),
            Tag::COLUMNS => columns = Some(us_value(&header, raw)?),
            Tag::BITS_ALLOCATED => bits = Some(us_value(&header, raw)?),
            Tag::SAMPLES_PER_PIXEL => {
                let spp = us_value(&header, raw)?;
                if spp != 1 {
                    return Err(IngestError::UnsupportedPixelFormat(format!(
                        "{spp} samples per pixel; only grayscale is supported"
                    )));
                }
            }
            Tag::PIXEL_REPRESENTATION => {
                if us_value(&header, raw)? != 0 {
                    return Err(IngestError::UnsupportedPixelFormat(
                        "signed pixel representation".to_string(),
                    ));
                }
            }
            Tag::NUMBER_OF_FRAMES => {
                let text = text_value(raw);
                let first = text.split('\\').next().unwrap_or("").trim();
                let n = first.parse::<u32>().map_err(|_| {
                    IngestError::malformed(
                        header.offset,
                        format!("NumberOfFrames {text:?} is not an integer"),
                    )
                })?;
                frames = Some(n);
            }
            Tag::STUDY_INSTANCE_UID => study_uid = Some(text_value(raw)).filter(|s| !s.is_empty()),
            Tag::SERIES_INSTANCE_UID => {
                series_uid = Some(text_value(raw)).filter(|s| !s.is_empty())
            }
            _ => {}
        }
    }

    let rows = rows.ok_or(IngestError::MissingRequiredTag(Tag::ROWS))?;
    let columns = columns.ok_or(IngestError::MissingRequiredTag(Tag::COLUMNS))?;
    let frames = frames.ok_or(IngestError::MissingRequiredTag(Tag::NUMBER_OF_FRAMES))?;
    let bits = bits.ok_or(IngestError::MissingRequiredTag(Tag::BITS_ALLOCATED))?;
    let pixel_data = pixel_data.ok_or(IngestError::MissingRequiredTag(Tag::PIXEL_DATA))?;

    let bit_depth = BitDepth::from_bits(bits).ok_or_else(|| {
        IngestError::UnsupportedPixelFormat(format!("BitsAllocated {bits}"))
    })?;
    if frames == 0 {
        return Err(IngestError::EmptySequence);
    }
    if rows == 0 || columns == 0 {
        return Err(IngestError::UnsupportedPixelFormat(format!(
            "zero-sized frame {columns}x{rows}"
        )));
    }

    let bytes_per_sample = (bits / 8) as u64;
    let frame_bytes = rows as u64 * columns as u64 * bytes_per_sample;
    let expected = frame_bytes * frames as u64;
    if (pixel_data.len() as u64) < expected {
        return Err(IngestError::TruncatedPixelData {
            expected,
            found: pixel_data.len() as u64,
        });
    }

    let frame_bytes = frame_bytes as usize;
    let frames = pixel_data[..expected as usize]
        .chunks_exact(frame_bytes)
        .map(|chunk| match bit_depth {
            BitDepth::Eight => chunk.iter().map(|&b| b as u16).collect(),
            BitDepth::Sixteen => chunk
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]))
                .collect(),
        })
        .collect();

    Ok(DicomCine {
        rows,
        columns,
        bit_depth,
        study_uid,
        series_uid,
        frames,
    })
}
