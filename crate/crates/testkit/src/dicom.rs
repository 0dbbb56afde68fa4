//! Minimal explicit-VR little-endian multi-frame writer.
//!
//! Byte layout follows the standard directly and shares no code with the
//! parser, so files written here can be fed to it as independent fixtures.

pub const EXPLICIT_LE: &str = "1.2.840.10008.1.2.1";

const LONG_VRS: [&[u8; 2]; 6] = [b"OB", b"OW", b"SQ", b"UN", b"UT", b"UC"];

fn element(out: &mut Vec<u8>, group: u16, elem: u16, vr: &[u8; 2], value: &[u8]) {
    let mut value = value.to_vec();
    if value.len() % 2 == 1 {
        value.push(if matches!(vr, b"UI" | b"OB") { 0 } else { b' ' });
    }
    out.extend_from_slice(&group.to_le_bytes());
    out.extend_from_slice(&elem.to_le_bytes());
    out.extend_from_slice(vr);
    if LONG_VRS.contains(&vr) {
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(value.len() as u32).to_le_bytes());
    } else {
        out.extend_from_slice(&(value.len() as u16).to_le_bytes());
    }
    out.extend_from_slice(&value);
}

fn us(out: &mut Vec<u8>, group: u16, elem: u16, v: u16) {
    element(out, group, elem, b"US", &v.to_le_bytes());
}

/// A multi-frame MONOCHROME2 file with 8- or 16-bit samples. Study and
/// series UIDs are written when given.
pub fn multiframe(
    rows: u16,
    cols: u16,
    bits: u16,
    frames: &[Vec<u16>],
    study_uid: Option<&str>,
    series_uid: Option<&str>,
) -> Vec<u8> {
    assert!(bits == 8 || bits == 16, "8 or 16 bits");
    let mut meta = Vec::new();
    element(&mut meta, 0x0002, 0x0001, b"OB", &[0, 1]);
    element(&mut meta, 0x0002, 0x0002, b"UI", b"1.2.840.10008.5.1.4.1.1.12.1");
    element(&mut meta, 0x0002, 0x0003, b"UI", b"1.2.826.0.1.3680043.9.7777.2");
    element(&mut meta, 0x0002, 0x0010, b"UI", EXPLICIT_LE.as_bytes());

    let mut out = vec![0u8; 128];
    out.extend_from_slice(b"DICM");
    element(&mut out, 0x0002, 0x0000, b"UL", &(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);

    if let Some(uid) = study_uid {
        element(&mut out, 0x0020, 0x000D, b"UI", uid.as_bytes());
    }
    if let Some(uid) = series_uid {
        element(&mut out, 0x0020, 0x000E, b"UI", uid.as_bytes());
    }
    us(&mut out, 0x0028, 0x0002, 1);
    element(&mut out, 0x0028, 0x0004, b"CS", b"MONOCHROME2");
    element(&mut out, 0x0028, 0x0008, b"IS", frames.len().to_string().as_bytes());
    us(&mut out, 0x0028, 0x0010, rows);
    us(&mut out, 0x0028, 0x0011, cols);
    us(&mut out, 0x0028, 0x0100, bits);
    us(&mut out, 0x0028, 0x0101, bits);
    us(&mut out, 0x0028, 0x0102, bits - 1);
    us(&mut out, 0x0028, 0x0103, 0);

    let mut pixels = Vec::new();
    for f in frames {
        assert_eq!(f.len(), rows as usize * cols as usize, "frame size");
        for &v in f {
            if bits == 8 {
                pixels.push(u8::try_from(v).expect("8-bit sample"));
            } else {
                pixels.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    element(&mut out, 0x7FE0, 0x0010, if bits == 8 { b"OB" } else { b"OW" }, &pixels);
    out
}
