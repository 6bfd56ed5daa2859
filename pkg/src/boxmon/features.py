"""Feature records and sets: class-tagged detector feature vectors.

Payload values are canonically 32-bit floats (the on-disk encoding); all
geometry and clustering promote to float64 on entry, so a set built from
a file and one built in memory with identical values behave identically.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError


class Label(enum.IntEnum):
    """Provenance label of one record; values double as the wire encoding."""

    ID = 0
    OOD = 1
    UNLABELED = 2


@dataclass(frozen=True)
class FeatureRecord:
    """One extracted feature vector with its predicted class and score."""

    class_key: str
    label: Label
    score: float
    values: np.ndarray  # 1-D float32

    def __post_init__(self):
        if not self.class_key:
            raise ValueError("class_key must be non-empty")
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("values must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        score = float(self.score)
        if not (0.0 <= score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "label", Label(self.label))


class FeatureSet:
    """An ordered, dimension-consistent collection of feature records.

    Stored column-wise (keys, labels, scores, value matrix) for cheap
    slicing; ``records`` materializes row views on demand. Instances are
    immutable.
    """

    __slots__ = ("layer_tag", "class_keys", "labels", "scores", "values")

    def __init__(
        self,
        layer_tag: str,
        values: np.ndarray,
        class_keys: Sequence[str],
        labels: Sequence[int] | np.ndarray,
        scores: Sequence[float] | np.ndarray,
    ):
        if not layer_tag:
            raise ValueError("layer_tag must be non-empty")
        vals = np.asarray(values, dtype=np.float32)
        if vals.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {vals.shape}")
        if vals.shape[1] < 1:
            raise ValueError("dimension must be at least 1")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        m = vals.shape[0]
        keys = tuple(str(k) for k in class_keys)
        if any(not k for k in keys):
            raise ValueError("class keys must be non-empty strings")
        lab = np.asarray(labels, dtype=np.uint8)
        sco = np.asarray(scores, dtype=np.float32)
        if len(keys) != m or lab.shape != (m,) or sco.shape != (m,):
            raise ValueError(
                f"column lengths disagree: {m} rows, {len(keys)} keys, "
                f"{lab.shape[0]} labels, {sco.shape[0]} scores"
            )
        if lab.size and not np.all(np.isin(lab, (0, 1, 2))):
            raise ValueError("labels must be 0 (ID), 1 (OOD) or 2 (UNLABELED)")
        if sco.size and (np.any(~np.isfinite(sco)) or np.any(sco < 0) or np.any(sco > 1)):
            raise ValueError("scores must lie in [0, 1]")
        vals = vals.copy()
        vals.setflags(write=False)
        lab = lab.copy()
        lab.setflags(write=False)
        sco = sco.copy()
        sco.setflags(write=False)
        object.__setattr__(self, "layer_tag", str(layer_tag))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "class_keys", keys)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "scores", sco)

    def __setattr__(self, name, value):
        raise AttributeError("FeatureSet is immutable")

    @classmethod
    def from_records(
        cls,
        records: Iterable[FeatureRecord],
        layer_tag: str,
        dimension: int | None = None,
    ) -> "FeatureSet":
        recs = list(records)
        if not recs:
            if dimension is None:
                raise EmptyInputError(
                    "an empty FeatureSet needs an explicit dimension"
                )
            return cls(
                layer_tag,
                np.empty((0, dimension), dtype=np.float32),
                [],
                np.empty(0, dtype=np.uint8),
                np.empty(0, dtype=np.float32),
            )
        n = recs[0].values.size
        for r in recs:
            if r.values.size != n:
                raise DimensionMismatchError(
                    f"record for {r.class_key!r} has dimension {r.values.size}, "
                    f"expected {n}"
                )
        return cls(
            layer_tag,
            np.stack([r.values for r in recs]),
            [r.class_key for r in recs],
            np.array([int(r.label) for r in recs], dtype=np.uint8),
            np.array([r.score for r in recs], dtype=np.float32),
        )

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def record(self, i: int) -> FeatureRecord:
        return FeatureRecord(
            self.class_keys[i],
            Label(int(self.labels[i])),
            float(self.scores[i]),
            self.values[i],
        )

    def __iter__(self) -> Iterator[FeatureRecord]:
        for i in range(len(self)):
            yield self.record(i)

    @property
    def records(self) -> list[FeatureRecord]:
        return list(self)

    def values64(self) -> np.ndarray:
        """Payload promoted to float64 (the arithmetic domain)."""
        return self.values.astype(np.float64)

    def unique_class_keys(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.class_keys)))

    def subset(self, indices) -> "FeatureSet":
        idx = np.asarray(indices, dtype=np.intp)
        return FeatureSet(
            self.layer_tag,
            self.values[idx],
            [self.class_keys[i] for i in idx],
            self.labels[idx],
            self.scores[idx],
        )

    def for_class(self, class_key: str) -> "FeatureSet":
        idx = [i for i, k in enumerate(self.class_keys) if k == class_key]
        if not idx:
            raise EmptyInputError(f"no records for class {class_key!r}")
        return self.subset(idx)

    def content_digest(self) -> str:
        """Deterministic sha256 over a canonical little-endian encoding."""
        h = hashlib.sha256()
        tag = self.layer_tag.encode("utf-8")
        h.update(struct.pack("<IQH", self.dimension, len(self), len(tag)))
        h.update(tag)
        for i in range(len(self)):
            key = self.class_keys[i].encode("utf-8")
            h.update(struct.pack("<H", len(key)))
            h.update(key)
            h.update(struct.pack("<Bf", int(self.labels[i]), float(self.scores[i])))
            h.update(self.values[i].astype("<f4").tobytes())
        return "sha256:" + h.hexdigest()

    def __repr__(self) -> str:
        return (
            f"FeatureSet(layer_tag={self.layer_tag!r}, dimension={self.dimension}, "
            f"records={len(self)}, classes={len(set(self.class_keys))})"
        )
