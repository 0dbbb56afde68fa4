#!/usr/bin/env python3
"""Hand-assembles the binary fixtures used by the ingest and vlscore tests.

Written with `struct` only so the byte layout does not depend on the Rust
code under test. Run with `--verify` to dump every DICOM fixture through
pydicom as an independent cross-check.
"""
import os
import struct
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
EXPLICIT_LE = "1.2.840.10008.1.2.1"
IMPLICIT_LE = "1.2.840.10008.1.2"
JPEG_BASELINE = "1.2.840.10008.1.2.4.50"
LONG_VRS = {b"OB", b"OD", b"OF", b"OL", b"OV", b"OW", b"SQ", b"SV", b"UC", b"UN", b"UR", b"UT", b"UV"}


def pad(value: bytes, vr: bytes) -> bytes:
    if len(value) % 2 == 0:
        return value
    return value + (b"\0" if vr in (b"UI", b"OB") else b" ")


def element(group, elem, vr, value, undefined=False):
    head = struct.pack("<HH", group, elem) + vr
    if vr in LONG_VRS:
        length = 0xFFFFFFFF if undefined else len(value)
        return head + b"\0\0" + struct.pack("<I", length) + value
    return head + struct.pack("<H", len(value)) + value


def us(group, elem, v):
    return element(group, elem, b"US", struct.pack("<H", v))


def text(group, elem, vr, s):
    return element(group, elem, vr, pad(s.encode("ascii"), vr))


def meta(ts):
    body = (
        element(0x0002, 0x0001, b"OB", b"\0\1")
        + text(0x0002, 0x0002, b"UI", "1.2.840.10008.5.1.4.1.1.12.1")
        + text(0x0002, 0x0003, b"UI", "1.2.826.0.1.3680043.9.7777.1")
        + text(0x0002, 0x0010, b"UI", ts)
    )
    return (
        b"\0" * 128
        + b"DICM"
        + element(0x0002, 0x0000, b"UL", struct.pack("<I", len(body)))
        + body
    )


def image_module(rows, cols, frames, bits, skip=()):
    parts = [
        (0x00280002, us(0x0028, 0x0002, 1)),
        (0x00280004, text(0x0028, 0x0004, b"CS", "MONOCHROME2")),
        (0x00280008, text(0x0028, 0x0008, b"IS", str(frames))),
        (0x00280010, us(0x0028, 0x0010, rows)),
        (0x00280011, us(0x0028, 0x0011, cols)),
        (0x00280100, us(0x0028, 0x0100, bits)),
        (0x00280101, us(0x0028, 0x0101, bits)),
        (0x00280102, us(0x0028, 0x0102, bits - 1)),
        (0x00280103, us(0x0028, 0x0103, 0)),
    ]
    return b"".join(p for tag, p in parts if tag not in skip)


def pixel_data(raw, vr=b"OB"):
    return element(0x7FE0, 0x0010, vr, pad(raw, vr))


def write(name, data):
    with open(os.path.join(HERE, "dicom", name), "wb") as f:
        f.write(data)


def sequence_with_nested_item():
    # (0008,1140) SQ, undefined length, one undefined-length item holding
    # (0008,1150) UI and (0008,1155) UI.
    item_body = text(0x0008, 0x1150, b"UI", "1.2.3") + text(0x0008, 0x1155, b"UI", "1.2.3.4.5")
    item = struct.pack("<HHI", 0xFFFE, 0xE000, 0xFFFFFFFF) + item_body + struct.pack("<HHI", 0xFFFE, 0xE00D, 0)
    seq_end = struct.pack("<HHI", 0xFFFE, 0xE0DD, 0)
    return element(0x0008, 0x1140, b"SQ", item + seq_end, undefined=True)


def build():
    # 4 frames of 8x8, 8-bit, pixel k of the whole stack has value k (0..255).
    raw8 = bytes(range(256))
    write("multiframe_8x8x4.dcm", meta(EXPLICIT_LE) + image_module(8, 8, 4, 8) + pixel_data(raw8))

    # 2 frames of 3 rows x 4 columns, 16-bit, value 1000 + 37 * k, with
    # study/series identifiers and a nested undefined-length sequence.
    raw16 = b"".join(struct.pack("<H", 1000 + 37 * k) for k in range(24))
    write(
        "multiframe_16bit_sq.dcm",
        meta(EXPLICIT_LE)
        + sequence_with_nested_item()
        + text(0x0020, 0x000D, b"UI", "1.2.826.0.1.3680043.9.7777.10")
        + text(0x0020, 0x000E, b"UI", "1.2.826.0.1.3680043.9.7777.10.1")
        + image_module(3, 4, 2, 16)
        + pixel_data(raw16, b"OW"),
    )

    # PixelData shorter than Rows x Columns x Frames.
    write("truncated_pixels.dcm", meta(EXPLICIT_LE) + image_module(8, 8, 4, 8) + pixel_data(raw8[:200]))

    # Rows missing.
    write(
        "missing_rows.dcm",
        meta(EXPLICIT_LE) + image_module(8, 8, 4, 8, skip={0x00280010}) + pixel_data(raw8),
    )

    # Transfer syntaxes outside the supported set.
    write("implicit_vr.dcm", meta(IMPLICIT_LE) + image_module(8, 8, 4, 8) + pixel_data(raw8))
    write("jpeg_baseline.dcm", meta(JPEG_BASELINE) + image_module(8, 8, 4, 8) + pixel_data(raw8))

    # Embedding binary: magic, d, count, then count x (i, g, r) x d f32 LE.
    triples = [
        ([1, 0, 0], [0, 1, 0], [0, 0, 1]),
        ([1, 0, 0], [0, 1, 0], [0, 1, 0]),
    ]
    blob = b"VLS1" + struct.pack("<II", 3, len(triples))
    for tri in triples:
        for vec in tri:
            blob += struct.pack("<3f", *vec)
    with open(os.path.join(HERE, "embeddings", "two_triples_d3.bin"), "wb") as f:
        f.write(blob)


def verify():
    import pydicom

    for name in sorted(os.listdir(os.path.join(HERE, "dicom"))):
        path = os.path.join(HERE, "dicom", name)
        ds = pydicom.dcmread(path, force=True)
        ts = ds.file_meta.get("TransferSyntaxUID")
        print(f"== {name}  ts={ts}")
        for tag in ("Rows", "Columns", "NumberOfFrames", "BitsAllocated"):
            print(f"   {tag}: {ds.get(tag)}")
        if "PixelData" in ds:
            print(f"   PixelData bytes: {len(ds.PixelData)}")
            if name.startswith("multiframe"):
                arr = ds.pixel_array
                print(f"   pixel_array shape={arr.shape} first={arr.flat[0]} last={arr.flat[-1]}")


if __name__ == "__main__":
    build()
    if "--verify" in sys.argv:
        verify()
