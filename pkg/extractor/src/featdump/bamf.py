"""Writer (and a reader for self-checks) of the binary feature dump format.

Implements the layout frozen in the monitor repository's FORMATS.md:
little-endian, magic ``BAMF``, u16 version, u32 dimension, u64 record
count, length-prefixed UTF-8 strings, one label byte per record
(0 ID / 1 OOD / 2 UNLABELED), f32 score, then ``dimension`` f32 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"BAMF"
VERSION = 1

LABEL_ID = 0
LABEL_OOD = 1
LABEL_UNLABELED = 2

_HEADER = struct.Struct("<4sHIQ")
_U16 = struct.Struct("<H")
_REC_FIXED = struct.Struct("<Bf")


@dataclass(frozen=True)
class DumpRecord:
    class_key: str
    label: int
    score: float
    values: np.ndarray  # 1-D float32


def _pack_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"string too long for u16 prefix: {len(raw)} bytes")
    return _U16.pack(len(raw)) + raw


def write_dump(path, layer_tag: str, dimension: int, records) -> int:
    """Write records to ``path``; returns the record count in the header."""
    if not layer_tag:
        raise ValueError("layer_tag must be non-empty")
    if dimension < 1:
        raise ValueError("dimension must be at least 1")
    records = list(records)
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dimension, len(records)))
        fh.write(_pack_string(layer_tag))
        for rec in records:
            values = np.ascontiguousarray(rec.values, dtype="<f4")
            if values.shape != (dimension,):
                raise ValueError(
                    f"record for {rec.class_key!r} has shape {values.shape}, "
                    f"expected ({dimension},)"
                )
            if rec.label not in (LABEL_ID, LABEL_OOD, LABEL_UNLABELED):
                raise ValueError(f"bad label {rec.label!r}")
            if not (0.0 <= rec.score <= 1.0):
                raise ValueError(f"score {rec.score!r} outside [0, 1]")
            fh.write(_pack_string(rec.class_key))
            fh.write(_REC_FIXED.pack(rec.label, rec.score))
            fh.write(values.tobytes())
    return len(records)


def read_dump(path):
    """Parse a dump back; used by tests to check what was written."""
    raw = Path(path).read_bytes()
    magic, version, dimension, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"not a supported dump: magic={magic!r} version={version}")
    offset = _HEADER.size
    (tag_len,) = _U16.unpack_from(raw, offset)
    offset += 2
    layer_tag = raw[offset : offset + tag_len].decode("utf-8")
    offset += tag_len
    records = []
    for _ in range(count):
        (key_len,) = _U16.unpack_from(raw, offset)
        offset += 2
        class_key = raw[offset : offset + key_len].decode("utf-8")
        offset += key_len
        label, score = _REC_FIXED.unpack_from(raw, offset)
        offset += _REC_FIXED.size
        values = np.frombuffer(raw, dtype="<f4", count=dimension, offset=offset).copy()
        offset += 4 * dimension
        records.append(DumpRecord(class_key, label, float(score), values))
    if offset != len(raw):
        raise ValueError("trailing bytes after the declared record count")
    return layer_tag, dimension, records
