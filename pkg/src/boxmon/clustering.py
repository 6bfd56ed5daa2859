"""Seeded k-means over per-class feature vectors, density-driven choice of k.

Determinism contract: for fixed input order, k, and seed, the partition is
bit-identical on every run and platform. Randomness comes only from a
PCG64 generator (``numpy.random.Generator``); ties in assignment go to the
lowest centroid index; centroid sums run in ascending record order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import EmptyInputError
from .features import FeatureSet

# Keep the per-chunk distance workspace around this many float64 elements.
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class ClusterConfig:
    """Clustering knobs: targeted points per cluster and iteration limits."""

    density: float = 100.0
    cap: int = 10000
    seed: int = 0
    max_iterations: int = 100
    shift_tolerance: float = 1e-6

    def __post_init__(self):
        if not (self.density > 0):
            raise ValueError(f"density must be positive, got {self.density!r}")
        if self.cap < 1:
            raise ValueError(f"cap must be at least 1, got {self.cap!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not (self.shift_tolerance >= 0):
            raise ValueError("shift_tolerance must be non-negative")


@dataclass(frozen=True)
class Partition:
    """Cluster assignments plus centroids; no cluster is empty."""

    assignments: np.ndarray  # (m,) intp in [0, k)
    centroids: np.ndarray  # (k, n) float64
    k: int

    def __post_init__(self):
        assignments = np.asarray(self.assignments, dtype=np.intp)
        centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.k < 1 or centroids.shape[0] != self.k:
            raise ValueError(f"expected {self.k} centroids, got {centroids.shape}")
        counts = np.bincount(assignments, minlength=self.k)
        if assignments.size and (assignments.min() < 0 or assignments.max() >= self.k):
            raise ValueError("assignment index out of range")
        if np.any(counts == 0):
            empty = np.flatnonzero(counts == 0)
            raise ValueError(f"empty clusters in partition: {empty.tolist()}")
        assignments.setflags(write=False)
        centroids.setflags(write=False)
        object.__setattr__(self, "assignments", assignments)
        object.__setattr__(self, "centroids", centroids)


def select_k(m: int, density: float, cap: int) -> int:
    """Number of clusters for ``m`` points at the given density.

    ``floor(m / density)`` clamped to ``[1, min(cap, m)]``: a class with
    fewer points than the density still gets one box, and k-means cannot
    produce more non-empty clusters than points.
    """
    if m < 1:
        raise EmptyInputError(f"m must be at least 1, got {m}")
    if not (density > 0):
        raise ValueError(f"density must be positive, got {density!r}")
    if cap < 1:
        raise ValueError(f"cap must be at least 1, got {cap!r}")
    return max(1, min(math.floor(m / density), cap, m))


def _assign(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point (lowest index on ties) and squared distance.

    Exact ``(x - c)^2`` arithmetic, chunked over points; no BLAS matmul, so
    the result does not depend on thread count or library build.
    """
    m, n = X.shape
    k = centroids.shape[0]
    assignments = np.empty(m, dtype=np.intp)
    best_sq = np.empty(m, dtype=np.float64)
    chunk = max(1, _CHUNK_BUDGET // max(1, k * n))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        diff = X[start:stop, None, :] - centroids[None, :, :]
        d2 = np.einsum("pkn,pkn->pk", diff, diff)
        # argmin returns the first occurrence: lowest centroid index wins ties
        idx = np.argmin(d2, axis=1)
        assignments[start:stop] = idx
        best_sq[start:stop] = d2[np.arange(stop - start), idx]
    return assignments, best_sq


def _repair_empty(
    X: np.ndarray, centroids: np.ndarray, assignments: np.ndarray, k: int
) -> np.ndarray:
    """Reseed empty clusters at the point farthest from their centroid.

    The stolen point must come from a cluster of size >= 2 (guaranteed to
    exist by pigeonhole while any cluster is empty and k <= m) and is
    force-assigned, so repair always terminates even with duplicate points.
    """
    counts = np.bincount(assignments, minlength=k)
    for c in np.flatnonzero(counts == 0):
        diff = X - centroids[c]
        dist_sq = np.einsum("pn,pn->p", diff, diff)
        eligible = counts[assignments] >= 2
        dist_sq = np.where(eligible, dist_sq, -1.0)
        j = int(np.argmax(dist_sq))
        counts[assignments[j]] -= 1
        assignments[j] = c
        counts[c] = 1
        centroids[c] = X[j]
    return assignments


def _update_centroids(X: np.ndarray, assignments: np.ndarray, k: int) -> np.ndarray:
    """Per-cluster means, summed in ascending record order (fixed reduction)."""
    order = np.argsort(assignments, kind="stable")
    starts = np.searchsorted(assignments[order], np.arange(k), side="left")
    sums = np.add.reduceat(X[order], starts, axis=0)
    counts = np.bincount(assignments, minlength=k).astype(np.float64)
    return sums / counts[:, None]


def _lloyd_steps(
    X: np.ndarray, centroids: np.ndarray, k: int
) -> Iterator[tuple[np.ndarray, np.ndarray, float]]:
    """Yield (assignments, centroids, objective) after each Lloyd iteration.

    The objective is the within-cluster sum of squared distances against
    the updated centroids; it is non-increasing across iterations (up to
    rounding) except when an empty-cluster repair fires.
    """
    centroids = np.array(centroids, dtype=np.float64, copy=True)
    while True:
        assignments, _ = _assign(X, centroids)
        assignments = _repair_empty(X, centroids, assignments, k)
        centroids = _update_centroids(X, assignments, k)
        diff = X - centroids[assignments]
        objective = float(np.einsum("pn,pn->", diff, diff))
        yield assignments, centroids, objective


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first centroid uniform, the rest D^2-weighted."""
    m = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    first = int(rng.integers(m))
    centroids[0] = X[first]
    if k == 1:
        return centroids
    diff = X - centroids[0]
    closest_sq = np.einsum("pn,pn->p", diff, diff)
    for j in range(1, k):
        total = float(np.cumsum(closest_sq)[-1])
        if total <= 0.0:
            idx = int(rng.integers(m))  # all remaining mass on duplicates
        else:
            r = float(rng.random()) * total
            idx = int(np.searchsorted(np.cumsum(closest_sq), r, side="right"))
            idx = min(idx, m - 1)
        centroids[j] = X[idx]
        diff = X - centroids[j]
        np.minimum(closest_sq, np.einsum("pn,pn->p", diff, diff), out=closest_sq)
    return centroids


def kmeans(points, k: int, config: ClusterConfig) -> Partition:
    """Lloyd's algorithm with k-means++ seeding from ``PCG64(config.seed)``.

    Stops when assignments repeat, when the largest centroid shift falls
    below ``shift_tolerance``, or after ``max_iterations``. Deterministic
    for fixed (point order, k, seed).
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"points must form a 2-D array, got shape {X.shape}")
    m = X.shape[0]
    if m == 0:
        raise EmptyInputError("kmeans needs at least one point")
    if not (1 <= k <= m):
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    rng = np.random.Generator(np.random.PCG64(config.seed))
    centroids = _plusplus_init(X, k, rng)
    assignments = None
    prev_assignments = None
    iteration = 0
    for assignments, new_centroids, _ in _lloyd_steps(X, centroids, k):
        iteration += 1
        delta = new_centroids - centroids
        shift_sq = float(np.max(np.einsum("kn,kn->k", delta, delta)))
        centroids = new_centroids
        if prev_assignments is not None and np.array_equal(assignments, prev_assignments):
            break
        if shift_sq < config.shift_tolerance ** 2:
            break
        if iteration >= config.max_iterations:
            break
        prev_assignments = assignments
    return Partition(assignments=assignments, centroids=centroids, k=k)


def partition_features(features: FeatureSet, config: ClusterConfig) -> list[np.ndarray]:
    """Split one class's records into ``select_k`` clusters of indices.

    Returns disjoint index arrays (ascending within each) covering every
    record; subsets are ordered by cluster index.
    """
    m = len(features)
    if m == 0:
        raise EmptyInputError("cannot partition an empty feature set")
    k = select_k(m, config.density, config.cap)
    part = kmeans(features.values64(), k, config)
    return [np.flatnonzero(part.assignments == c) for c in range(k)]
