"""Small input-validation helpers used at API boundaries.

Core numeric routines assume validated inputs; everything that crosses a
public surface (estimator, CLI, file readers) goes through these first.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError


def as_float_vector(x, *, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting empty and non-finite input."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyInputError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def as_float_matrix(X, *, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array with at least one row and column."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise EmptyInputError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return arr


def check_dimension(got: int, expected: int, *, context: str) -> None:
    if got != expected:
        raise DimensionMismatchError(
            f"{context}: expected dimension {expected}, got {got}"
        )


def check_unit_interval(value: float, *, name: str, open_low: bool = False) -> float:
    """Validate a probability-like scalar; (0,1] when ``open_low`` is set."""
    v = float(value)
    if np.isnan(v) or v > 1.0 or v < 0.0 or (open_low and v == 0.0):
        lo = "(0" if open_low else "[0"
        raise ValueError(f"{name} must lie in {lo}, 1], got {value!r}")
    return v
