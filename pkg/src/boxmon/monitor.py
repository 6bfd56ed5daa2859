"""Per-class box-union monitors: build, query, verdicts.

A class monitor is a finite union of boxes enclosing the feature vectors
the detector produced for that class on in-distribution data. A query is
accepted iff some box contains it; otherwise the minimum box distance is
the out-of-distribution score.

The nearest-box scan is compiled (numba) with strict IEEE semantics: per
dimension terms accumulate left to right exactly as in ``Box.distance``,
a box is abandoned as soon as its partial sum can no longer beat the best
so far, and the scan returns at the first containing box. Pruning never
changes the result, only the work done. Queries are pure and thread-safe;
registries are immutable after build/load.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numba
import numpy as np

from .clustering import ClusterConfig, partition_features
from .errors import (
    DimensionMismatchError,
    EmptyClassError,
    EmptyInputError,
)
from .features import FeatureSet, Label
from .geometry import Box, tight_box
from .validation import check_unit_interval

__all__ = [
    "BuildConfig",
    "ClassMonitor",
    "Decision",
    "MonitorRegistry",
    "Verdict",
    "build_class_monitor",
    "build_registry",
    "enlarge_to_tpr",
]


@dataclass(frozen=True)
class BuildConfig:
    """Clustering configuration plus the training coverage target."""

    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    target_tpr: float = 0.95
    score_threshold: float = 0.0
    include_unlabeled: bool = False

    def __post_init__(self):
        check_unit_interval(self.target_tpr, name="target_tpr", open_low=True)
        check_unit_interval(self.score_threshold, name="score_threshold")


class Decision(enum.Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"
    UNKNOWN_CLASS = "UNKNOWN_CLASS"


@dataclass(frozen=True)
class Verdict:
    """Runtime answer for one query: decision plus the distance score.

    ``distance`` is 0 exactly when accepted and None for an unknown class;
    ``nearest_box_index`` is the lowest box index attaining the distance.
    """

    decision: Decision
    distance: float | None
    nearest_box_index: int | None

    def __post_init__(self):
        if self.decision is Decision.UNKNOWN_CLASS:
            if self.distance is not None or self.nearest_box_index is not None:
                raise ValueError("unknown-class verdicts carry no distance")
            return
        if self.distance is None or self.distance < 0:
            raise ValueError("distance must be a non-negative real")
        if (self.decision is Decision.ACCEPT) != (self.distance == 0.0):
            raise ValueError("ACCEPT exactly when distance is 0")


@numba.njit(cache=True, nogil=True)
def _nearest_box(lower, upper, z):  # pragma: no cover - exercised via wrappers
    """(min distance, lowest attaining index) over stacked box bounds.

    Left-to-right accumulation per box; abandons a box once its partial
    sum reaches the current best (sums of non-negative terms only grow);
    returns immediately at the first containing box.
    """
    k, n = lower.shape
    best = np.inf
    best_idx = -1
    for j in range(k):
        s = 0.0
        i = 0
        pruned = False
        while i < n:
            stop = i + 64
            if stop > n:
                stop = n
            while i < stop:
                v = z[i]
                a = lower[j, i] - v
                b = v - upper[j, i]
                c = a if a > b else b
                s += c if c > 0.0 else 0.0
                i += 1
            if s >= best:
                pruned = True
                break
        if not pruned and s < best:
            best = s
            best_idx = j
            if best == 0.0:
                return best, best_idx
    return best, best_idx


class ClassMonitor:
    """The union of boxes for one class key; immutable; queries are pure."""

    __slots__ = ("class_key", "lower", "upper")

    def __init__(self, class_key: str, lower: np.ndarray, upper: np.ndarray):
        if not class_key:
            raise ValueError("class_key must be non-empty")
        lo = np.ascontiguousarray(lower, dtype=np.float64)
        up = np.ascontiguousarray(upper, dtype=np.float64)
        if lo.ndim != 2 or lo.shape != up.shape:
            raise ValueError(
                f"bounds must be matching 2-D arrays, got {lo.shape} and {up.shape}"
            )
        if lo.shape[0] < 1 or lo.shape[1] < 1:
            raise EmptyInputError("a class monitor needs at least one box")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(up))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > up):
            raise ValueError("every lower bound must not exceed its upper bound")
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "class_key", str(class_key))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    def __setattr__(self, name, value):
        raise AttributeError("ClassMonitor is immutable")

    @classmethod
    def from_boxes(cls, class_key: str, boxes: Sequence[Box]) -> "ClassMonitor":
        if not boxes:
            raise EmptyInputError("a class monitor needs at least one box")
        dim = boxes[0].dimension
        for b in boxes:
            if b.dimension != dim:
                raise DimensionMismatchError(
                    f"box dimensions disagree: {b.dimension} vs {dim}"
                )
        return cls(
            class_key,
            np.stack([b.lower for b in boxes]),
            np.stack([b.upper for b in boxes]),
        )

    @property
    def dimension(self) -> int:
        return self.lower.shape[1]

    @property
    def box_count(self) -> int:
        return self.lower.shape[0]

    @property
    def boxes(self) -> list[Box]:
        return [Box(self.lower[j], self.upper[j]) for j in range(self.box_count)]

    def _check(self, z) -> np.ndarray:
        arr = np.ascontiguousarray(z, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"query must be 1-D, got shape {arr.shape}")
        if arr.size != self.dimension:
            raise DimensionMismatchError(
                f"query has dimension {arr.size}, monitor has {self.dimension}"
            )
        return arr

    def distance(self, z) -> tuple[float, int]:
        """Minimum box distance and the lowest box index attaining it."""
        arr = self._check(z)
        dist, idx = _nearest_box(self.lower, self.upper, arr)
        return float(dist), int(idx)

    def contains(self, z) -> bool:
        return self.distance(z)[0] == 0.0

    def coverage(self, vectors) -> float:
        """Fraction of the given vectors at distance 0 (training TPR)."""
        V = np.ascontiguousarray(vectors, dtype=np.float64)
        if V.ndim != 2:
            raise ValueError("vectors must form a 2-D array")
        inside = sum(1 for row in V if _nearest_box(self.lower, self.upper, row)[0] == 0.0)
        return inside / V.shape[0] if V.shape[0] else 0.0


@dataclass(frozen=True)
class BuildMeta:
    """Provenance stamped into a registry at build time."""

    density: float
    cap: int
    target_tpr: float
    seed: int
    max_iterations: int
    shift_tolerance: float
    score_threshold: float
    include_unlabeled: bool
    source_digest: str

    def to_dict(self) -> dict:
        return {
            "density": self.density,
            "cap": self.cap,
            "target_tpr": self.target_tpr,
            "seed": self.seed,
            "max_iterations": self.max_iterations,
            "shift_tolerance": self.shift_tolerance,
            "score_threshold": self.score_threshold,
            "include_unlabeled": self.include_unlabeled,
            "source_digest": self.source_digest,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BuildMeta":
        return cls(
            density=float(d["density"]),
            cap=int(d["cap"]),
            target_tpr=float(d["target_tpr"]),
            seed=int(d["seed"]),
            max_iterations=int(d["max_iterations"]),
            shift_tolerance=float(d["shift_tolerance"]),
            score_threshold=float(d["score_threshold"]),
            include_unlabeled=bool(d["include_unlabeled"]),
            source_digest=str(d["source_digest"]),
        )


class MonitorRegistry:
    """Map from class key to its monitor, plus build provenance."""

    __slots__ = ("layer_tag", "dimension", "monitors", "build_meta")

    def __init__(
        self,
        layer_tag: str,
        dimension: int,
        monitors: Mapping[str, ClassMonitor],
        build_meta: BuildMeta,
    ):
        if not layer_tag:
            raise ValueError("layer_tag must be non-empty")
        if dimension < 1:
            raise ValueError("dimension must be at least 1")
        ordered: dict[str, ClassMonitor] = {}
        for key in sorted(monitors):
            mon = monitors[key]
            if mon.class_key != key:
                raise ValueError(
                    f"monitor keyed {key!r} carries class_key {mon.class_key!r}"
                )
            if mon.dimension != dimension:
                raise DimensionMismatchError(
                    f"monitor {key!r} has dimension {mon.dimension}, "
                    f"registry has {dimension}"
                )
            ordered[key] = mon
        if not ordered:
            raise EmptyInputError("a registry needs at least one class monitor")
        object.__setattr__(self, "layer_tag", str(layer_tag))
        object.__setattr__(self, "dimension", int(dimension))
        object.__setattr__(self, "monitors", ordered)
        object.__setattr__(self, "build_meta", build_meta)

    def __setattr__(self, name, value):
        raise AttributeError("MonitorRegistry is immutable")

    def class_keys(self) -> tuple[str, ...]:
        return tuple(self.monitors)

    def __contains__(self, class_key: str) -> bool:
        return class_key in self.monitors

    def verdict(self, z, class_key: str) -> Verdict:
        """ACCEPT iff some box of the class contains ``z``; REJECT with the
        minimum box distance otherwise; UNKNOWN_CLASS when no monitor exists
        for the key (a normal outcome, not an error)."""
        monitor = self.monitors.get(class_key)
        if monitor is None:
            return Verdict(Decision.UNKNOWN_CLASS, None, None)
        dist, idx = monitor.distance(z)
        decision = Decision.ACCEPT if dist == 0.0 else Decision.REJECT
        return Verdict(decision, dist, idx)


def enlarge_to_tpr(
    boxes: Sequence[Box], features, target_tpr: float
) -> list[Box]:
    """Grow boxes until at least ``ceil(target_tpr * m)`` features sit inside.

    Features already inside count first. The outside ones are sorted by
    ascending distance to the ORIGINAL boxes (ties by input order) and the
    nearest ones are absorbed into their nearest original box (lowest
    index on ties) via minimal per-dimension extension. Distances are not
    recomputed between absorptions; points swallowed incidentally only
    push coverage above the target.
    """
    check_unit_interval(target_tpr, name="target_tpr", open_low=True)
    if not boxes:
        raise EmptyInputError("enlarge_to_tpr needs at least one box")
    V = np.ascontiguousarray(features, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] == 0:
        raise EmptyInputError("enlarge_to_tpr needs at least one feature vector")
    dim = boxes[0].dimension
    if V.shape[1] != dim:
        raise DimensionMismatchError(
            f"features have dimension {V.shape[1]}, boxes have {dim}"
        )
    monitor = ClassMonitor.from_boxes("_", boxes)
    m = V.shape[0]
    dists = np.empty(m, dtype=np.float64)
    nearest = np.empty(m, dtype=np.intp)
    for i in range(m):
        dists[i], nearest[i] = _nearest_box(monitor.lower, monitor.upper, V[i])
    need = math.ceil(target_tpr * m)
    outside = np.flatnonzero(dists > 0.0)
    inside = m - outside.size
    if inside >= need:
        return list(boxes)
    order = outside[np.argsort(dists[outside], kind="stable")]
    lower = np.array(monitor.lower, copy=True)
    upper = np.array(monitor.upper, copy=True)
    for i in order[: need - inside]:
        j = nearest[i]
        np.minimum(lower[j], V[i], out=lower[j])
        np.maximum(upper[j], V[i], out=upper[j])
    return [Box(lower[j], upper[j]) for j in range(lower.shape[0])]


def build_class_monitor(features: FeatureSet, config: BuildConfig) -> ClassMonitor:
    """Cluster one class's vectors, wrap each cluster in a tight box, then
    enlarge until the class's training coverage meets ``target_tpr``."""
    keys = set(features.class_keys)
    if len(keys) != 1:
        raise ValueError(
            f"build_class_monitor expects a single-class view, got {sorted(keys)}"
        )
    (class_key,) = keys
    subsets = partition_features(features, config.cluster)
    V = features.values64()
    boxes = [tight_box(V[idx]) for idx in subsets]
    boxes = enlarge_to_tpr(boxes, V, config.target_tpr)
    return ClassMonitor.from_boxes(class_key, boxes)


def _participating(features: FeatureSet, config: BuildConfig) -> np.ndarray:
    allowed = {int(Label.ID)}
    if config.include_unlabeled:
        allowed.add(int(Label.UNLABELED))
    mask = np.isin(features.labels, sorted(allowed))
    mask &= features.scores.astype(np.float64) >= config.score_threshold
    return mask


def build_registry(
    features: FeatureSet,
    config: BuildConfig,
    source_digest: str | None = None,
) -> MonitorRegistry:
    """Group records by class key and build one monitor per class.

    Participation: records labeled ID (plus UNLABELED when opted in) with
    score at or above ``score_threshold``. A class whose records are all
    filtered away is an error naming that class; so is an input with no
    surviving records at all.
    """
    if len(features) == 0:
        raise EmptyInputError("cannot build a registry from an empty feature set")
    mask = _participating(features, config)
    if not mask.any():
        raise EmptyClassError(
            "no records survive label/score filtering for the whole set"
        )
    survivors_by_class: dict[str, list[int]] = {}
    seen_classes: dict[str, int] = {}
    for i, key in enumerate(features.class_keys):
        seen_classes[key] = seen_classes.get(key, 0) + 1
        if mask[i]:
            survivors_by_class.setdefault(key, []).append(i)
    starved = tuple(sorted(k for k in seen_classes if k not in survivors_by_class))
    if starved:
        raise EmptyClassError(
            "label/score filtering removed every record of: " + ", ".join(starved),
            class_keys=starved,
        )
    monitors = {}
    for key in sorted(survivors_by_class):
        view = features.subset(survivors_by_class[key])
        monitors[key] = build_class_monitor(view, config)
    meta = BuildMeta(
        density=config.cluster.density,
        cap=config.cluster.cap,
        target_tpr=config.target_tpr,
        seed=config.cluster.seed,
        max_iterations=config.cluster.max_iterations,
        shift_tolerance=config.cluster.shift_tolerance,
        score_threshold=config.score_threshold,
        include_unlabeled=config.include_unlabeled,
        source_digest=source_digest or features.content_digest(),
    )
    return MonitorRegistry(features.layer_tag, features.dimension, monitors, meta)
