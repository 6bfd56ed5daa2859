"""Axis-aligned box geometry: containment, distances, tight boxes, enlargement.

A box is one closed interval per feature dimension. The distance from a
point to a box is the sum over dimensions of the distance to each interval
(zero inside, gap to the nearer bound outside), i.e. the total effort to
move the point inside when dimensions are independent.

Arithmetic contract: all math runs in float64 and per-dimension terms are
accumulated strictly left to right (dimension 0 first). Every distance
path in this package (scalar, vectorized, compiled) follows that order, so
results are bit-identical across paths and runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    InvalidIntervalError,
)


def interval_distance(x: float, lo: float, hi: float) -> float:
    """Distance from scalar ``x`` to the closed interval ``[lo, hi]``.

    Returns 0 when ``lo <= x <= hi``, ``lo - x`` below, ``x - hi`` above.
    """
    if lo > hi:
        raise InvalidIntervalError(f"invalid interval: lower {lo} > upper {hi}")
    x = float(x)
    if x < lo:
        return float(lo) - x
    if x > hi:
        return x - float(hi)
    return 0.0


def _linear_sum(values: np.ndarray) -> float:
    """Left-to-right float64 sum (cumsum is sequential, unlike np.sum)."""
    if values.size == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def _frozen_f64(values, *, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyInputError(f"{name} must have at least one dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    """A closed axis-aligned box: per-dimension ``[lower[i], upper[i]]``.

    Immutable after construction; zero-width intervals are legal (they
    arise from single-point clusters and constant activations).
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _frozen_f64(self.lower, name="lower")
        upper = _frozen_f64(self.upper, name="upper")
        if lower.shape != upper.shape:
            raise DimensionMismatchError(
                f"lower has dimension {lower.size}, upper has {upper.size}"
            )
        if np.any(lower > upper):
            i = int(np.argmax(lower > upper))
            raise InvalidIntervalError(
                f"invalid interval in dimension {i}: "
                f"lower {lower[i]} > upper {upper[i]}"
            )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self) -> int:
        return self.lower.size

    def _check_point(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"point must be 1-D, got shape {arr.shape}")
        if arr.size != self.dimension:
            raise DimensionMismatchError(
                f"point has dimension {arr.size}, box has {self.dimension}"
            )
        return arr

    def contains(self, x) -> bool:
        """True iff every coordinate lies within its closed interval.

        Short-circuits on the first violated dimension.
        """
        arr = self._check_point(x)
        lower, upper = self.lower, self.upper
        for i in range(arr.size):
            v = arr[i]
            if v < lower[i] or v > upper[i]:
                return False
        return True

    def distance(self, x) -> float:
        """Sum of per-dimension interval distances; 0 iff ``contains(x)``."""
        arr = self._check_point(x)
        deficits = np.maximum(self.lower - arr, 0.0) + np.maximum(arr - self.upper, 0.0)
        return _linear_sum(deficits)

    def enlarged(self, delta) -> "Box":
        """Box widened by a non-negative buffer per dimension.

        ``lower[i] - delta[i]`` / ``upper[i] + delta[i]``; the result
        contains this box interval-wise. The all-zero buffer is the
        identity.
        """
        d = np.asarray(delta, dtype=np.float64)
        if d.ndim != 1 or d.size != self.dimension:
            raise DimensionMismatchError(
                f"delta has dimension {d.size}, box has {self.dimension}"
            )
        if np.any(np.isnan(d)) or np.any(d < 0.0):
            raise ValueError("delta must be non-negative in every dimension")
        return Box(self.lower - d, self.upper + d)

    def including(self, x) -> "Box":
        """Smallest box containing both this box and the point ``x``.

        Per dimension: ``lower -> min(lower, x)``, ``upper -> max(upper, x)``.
        A no-op when the point is already contained.
        """
        arr = self._check_point(x)
        if not np.all(np.isfinite(arr)):
            raise ValueError("point must be finite")
        return Box(np.minimum(self.lower, arr), np.maximum(self.upper, arr))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(
            self.upper, other.upper
        )

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))

    def __repr__(self) -> str:
        pairs = ", ".join(
            f"[{float(lo)!r}, {float(hi)!r}]" for lo, hi in zip(self.lower, self.upper)
        )
        return f"Box({pairs})"


def tight_box(points: Iterable[Sequence[float]] | np.ndarray) -> Box:
    """Smallest box containing every point: per-dimension min/max.

    Every input point is contained, and each bound is attained by at
    least one point, so no strictly smaller box contains the set.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("tight_box needs at least one point")
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"points must form a 2-D array, got shape {arr.shape}")
    return Box(arr.min(axis=0), arr.max(axis=0))
