"""On-disk encodings: BAMF feature dumps, CSV dumps, monitor files.

Layouts are fixed in FORMATS.md at the repository root. Feature payloads
are little-endian 32-bit floats; monitor bounds are serialized as JSON
numbers via ``repr``, which round-trips float64 exactly. Writers are
deterministic: identical in-memory values produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import InvariantViolationError, SchemaError
from .features import FeatureSet, Label
from .monitor import BuildMeta, ClassMonitor, MonitorRegistry

BAMF_MAGIC = b"BAMF"
BAMF_VERSION = 1
MONITOR_FORMAT = "boxmon-monitor"
MONITOR_SCHEMA_VERSION = 1

_HEADER = struct.Struct("<4sHIQ")  # magic, version, dimension, record_count
_U16 = struct.Struct("<H")
_REC_FIXED = struct.Struct("<Bf")  # label byte, score


def _write_string(fh: BinaryIO, text: str) -> None:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise SchemaError(f"string too long for u16 length prefix: {len(raw)} bytes")
    fh.write(_U16.pack(len(raw)))
    fh.write(raw)


def _read_exact(fh: BinaryIO, count: int, what: str) -> bytes:
    raw = fh.read(count)
    if len(raw) != count:
        raise SchemaError(f"truncated file while reading {what}")
    return raw


def _read_string(fh: BinaryIO, what: str) -> str:
    (length,) = _U16.unpack(_read_exact(fh, 2, f"{what} length"))
    raw = _read_exact(fh, length, what)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{what} is not valid UTF-8") from exc


def write_bamf(features: FeatureSet, destination) -> None:
    """Write a feature set in the binary dump layout (magic ``BAMF``)."""
    with _open_binary(destination, "wb") as fh:
        fh.write(_HEADER.pack(BAMF_MAGIC, BAMF_VERSION, features.dimension, len(features)))
        _write_string(fh, features.layer_tag)
        values = np.ascontiguousarray(features.values, dtype="<f4")
        for i in range(len(features)):
            _write_string(fh, features.class_keys[i])
            fh.write(_REC_FIXED.pack(int(features.labels[i]), float(features.scores[i])))
            fh.write(values[i].tobytes())


def read_bamf(source) -> FeatureSet:
    """Read and validate a binary feature dump.

    Rejects bad magic/version, truncation, trailing bytes, out-of-range
    labels or scores, and non-finite payload values.
    """
    with _open_binary(source, "rb") as fh:
        magic, version, dimension, count = _HEADER.unpack(
            _read_exact(fh, _HEADER.size, "header")
        )
        if magic != BAMF_MAGIC:
            raise SchemaError(f"bad magic {magic!r}; expected {BAMF_MAGIC!r}")
        if version != BAMF_VERSION:
            raise SchemaError(f"unsupported format version {version}")
        if dimension < 1:
            raise SchemaError("dimension must be at least 1")
        layer_tag = _read_string(fh, "layer_tag")
        if not layer_tag:
            raise SchemaError("layer_tag must be non-empty")
        keys: list[str] = []
        labels = np.empty(count, dtype=np.uint8)
        scores = np.empty(count, dtype=np.float32)
        values = np.empty((count, dimension), dtype=np.float32)
        row_bytes = 4 * dimension
        for i in range(count):
            keys.append(_read_string(fh, f"record {i} class_key"))
            label, score = _REC_FIXED.unpack(
                _read_exact(fh, _REC_FIXED.size, f"record {i} label/score")
            )
            labels[i] = label
            scores[i] = score
            values[i] = np.frombuffer(
                _read_exact(fh, row_bytes, f"record {i} values"), dtype="<f4"
            )
        trailing = fh.read(1)
        if trailing:
            raise SchemaError(
                "trailing bytes after the declared record count"
            )
    try:
        return FeatureSet(layer_tag, values, keys, labels, scores)
    except ValueError as exc:
        raise SchemaError(f"dump payload failed validation: {exc}") from exc


_CSV_TAG_PREFIX = "# layer_tag="


def write_csv(features: FeatureSet, destination) -> None:
    """Human-editable twin of the binary dump (see FORMATS.md)."""
    with _open_text(destination, "w") as fh:
        fh.write(f"{_CSV_TAG_PREFIX}{features.layer_tag}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["class_key", "label", "score"]
            + [f"f{i}" for i in range(features.dimension)]
        )
        for i in range(len(features)):
            writer.writerow(
                [
                    features.class_keys[i],
                    Label(int(features.labels[i])).name,
                    repr(float(features.scores[i])),
                ]
                + [repr(float(v)) for v in features.values[i]]
            )


def read_csv(source, default_layer_tag: str = "csv") -> FeatureSet:
    try:
        with _open_text(source, "r") as fh:
            first = fh.readline()
            if first.startswith(_CSV_TAG_PREFIX):
                layer_tag = first[len(_CSV_TAG_PREFIX):].strip()
                header_line = fh.readline()
            else:
                layer_tag = default_layer_tag
                header_line = first
            header = next(csv.reader([header_line])) if header_line else []
            if header[:3] != ["class_key", "label", "score"]:
                raise SchemaError(
                    "CSV header must start with class_key,label,score"
                )
            dimension = len(header) - 3
            if dimension < 1:
                raise SchemaError("CSV header declares no feature columns")
            keys: list[str] = []
            labels: list[int] = []
            scores: list[float] = []
            rows: list[list[float]] = []
            for lineno, row in enumerate(csv.reader(fh), start=3):
                if not row:
                    continue
                if len(row) != len(header):
                    raise SchemaError(
                        f"CSV row {lineno} has {len(row)} fields, "
                        f"expected {len(header)}"
                    )
                keys.append(row[0])
                try:
                    labels.append(int(Label[row[1]]))
                except KeyError as exc:
                    raise SchemaError(
                        f"CSV row {lineno}: unknown label {row[1]!r}"
                    ) from exc
                try:
                    scores.append(float(row[2]))
                    rows.append([float(v) for v in row[3:]])
                except ValueError as exc:
                    raise SchemaError(f"CSV row {lineno}: {exc}") from exc
    except (csv.Error, UnicodeDecodeError) as exc:
        raise SchemaError(f"not a parseable CSV dump: {exc}") from exc
    values = (
        np.array(rows, dtype=np.float32)
        if rows
        else np.empty((0, dimension), dtype=np.float32)
    )
    try:
        return FeatureSet(layer_tag, values, keys, labels, scores)
    except ValueError as exc:
        raise SchemaError(f"CSV payload failed validation: {exc}") from exc


def read_features(path) -> FeatureSet:
    """Load a feature dump, sniffing the binary magic, else CSV."""
    p = Path(path)
    with p.open("rb") as fh:
        head = fh.read(4)
    if head == BAMF_MAGIC:
        return read_bamf(p)
    return read_csv(p)


def registry_to_json_bytes(registry: MonitorRegistry) -> bytes:
    """Deterministic monitor-file encoding (sorted keys, repr floats)."""
    doc = {
        "format": MONITOR_FORMAT,
        "schema_version": MONITOR_SCHEMA_VERSION,
        "layer_tag": registry.layer_tag,
        "dimension": registry.dimension,
        "build_meta": registry.build_meta.to_dict(),
        "classes": {
            key: {
                "lower": mon.lower.tolist(),
                "upper": mon.upper.tolist(),
            }
            for key, mon in registry.monitors.items()
        },
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def save_registry(registry: MonitorRegistry, destination) -> None:
    with _open_binary(destination, "wb") as fh:
        fh.write(registry_to_json_bytes(registry))


def _reject_duplicate_keys(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise InvariantViolationError(f"duplicate key {key!r} in monitor file")
        seen[key] = value
    return seen


def load_registry(source) -> MonitorRegistry:
    """Parse and re-validate a monitor file.

    Wrong magic/version or malformed JSON raise ``SchemaError``; parseable
    documents that break invariants (lower above upper, dimension drift,
    duplicate classes) raise ``InvariantViolationError``.
    """
    with _open_binary(source, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw.decode("utf-8"), object_pairs_hook=_reject_duplicate_keys)
    except InvariantViolationError:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"monitor file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("monitor file must be a JSON object")
    if doc.get("format") != MONITOR_FORMAT:
        raise SchemaError(
            f"bad format marker {doc.get('format')!r}; expected {MONITOR_FORMAT!r}"
        )
    if doc.get("schema_version") != MONITOR_SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported schema_version {doc.get('schema_version')!r}"
        )
    try:
        layer_tag = doc["layer_tag"]
        dimension = int(doc["dimension"])
        meta = BuildMeta.from_dict(doc["build_meta"])
        classes = doc["classes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"monitor file is missing required fields: {exc}") from exc
    if not isinstance(classes, dict) or not classes:
        raise SchemaError("monitor file must define at least one class")
    monitors = {}
    for key, entry in classes.items():
        try:
            lower = np.array(entry["lower"], dtype=np.float64)
            upper = np.array(entry["upper"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"class {key!r}: malformed bounds: {exc}") from exc
        try:
            monitors[key] = ClassMonitor(key, lower, upper)
        except Exception as exc:
            raise InvariantViolationError(f"class {key!r}: {exc}") from exc
    try:
        return MonitorRegistry(layer_tag, dimension, monitors, meta)
    except Exception as exc:
        raise InvariantViolationError(str(exc)) from exc


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _open_binary(obj, mode):
    if isinstance(obj, (str, Path)):
        return Path(obj).open(mode)
    return _NonClosing(obj)


def _open_text(obj, mode):
    if isinstance(obj, (str, Path)):
        return Path(obj).open(mode, encoding="utf-8", newline="")
    return _NonClosing(obj)


class _NonClosing:
    """Context manager over an already-open stream that leaves it open."""

    def __init__(self, fh):
        self._fh = fh

    def __enter__(self):
        return self._fh

    def __exit__(self, *exc):
        return False
