"""Deterministic synthetic feature sets: multi-center ID data and OoD
samples kept away from every ID center by an exclusion radius.

These generators stand in for real detector dumps at desk scale: the
mixture presets produce the multi-center, non-convex class geometry the
box monitors are built for, and the OoD presets produce points that are
out-of-distribution *by construction* (no sample within the exclusion
radius of any component mean).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError
from .features import FeatureSet, Label


class SynthPreset(str, enum.Enum):
    GAUSS_MIX = "gauss-mix"
    MOONS = "moons"
    RING_OOD = "ring-ood"
    UNIFORM_OOD = "uniform-ood"


_MAX_REJECTION_ROUNDS = 1000


@dataclass(frozen=True)
class SynthConfig:
    """Shared knobs for every preset; OoD-only fields are ignored by the
    ID presets and vice versa."""

    preset: SynthPreset
    n_points: int
    dimension: int = 2
    n_components: int = 3
    separation: float = 10.0
    spread: float = 1.0
    means: np.ndarray | None = None
    class_keys: tuple[str, ...] | None = None
    exclusion_radius: float | None = None  # default: 3 * spread
    margin: float = 0.0
    ring_inner: float | None = None
    ring_outer: float | None = None
    seed: int = 0
    layer_tag: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "preset", SynthPreset(self.preset))
        if self.n_points < 1:
            raise ValueError("n_points must be at least 1")
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if self.n_components < 1:
            raise ValueError("n_components must be at least 1")
        if not (self.spread > 0):
            raise ValueError("spread must be positive")
        if not (self.separation > 0):
            raise ValueError("separation must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.class_keys is not None:
            object.__setattr__(self, "class_keys", tuple(self.class_keys))


def component_means(config: SynthConfig) -> np.ndarray:
    """Component means: explicit, or vertices of a regular simplex with
    edge length ``separation`` (so every pair is exactly that far apart)."""
    if config.means is not None:
        means = np.asarray(config.means, dtype=np.float64)
        if means.shape != (config.n_components, config.dimension):
            raise ValueError(
                f"means must have shape ({config.n_components}, "
                f"{config.dimension}), got {means.shape}"
            )
        return means
    k, dim = config.n_components, config.dimension
    if k == 1:
        return np.zeros((1, dim))
    if k > dim + 1:
        raise ValueError(
            f"cannot auto-place {k} means pairwise-equidistant in "
            f"{dim} dimensions; pass explicit means"
        )
    # Gram matrix of unit vectors at mutual 60 degrees has unit diagonal
    # and 1/2 off-diagonal; its Cholesky rows give simplex vertices.
    gram = (np.eye(k - 1) + np.ones((k - 1, k - 1))) / 2.0
    verts = np.vstack([np.zeros(k - 1), np.linalg.cholesky(gram)])
    means = np.zeros((k, dim))
    means[:, : k - 1] = verts * config.separation
    return means


def _component_keys(config: SynthConfig) -> tuple[str, ...]:
    if config.class_keys is None:
        return tuple(f"c{i}" for i in range(config.n_components))
    keys = config.class_keys
    if len(keys) == 1:
        return keys * config.n_components
    if len(keys) != config.n_components:
        raise ValueError(
            f"class_keys must have 1 or {config.n_components} entries, "
            f"got {len(keys)}"
        )
    return keys


def _split_counts(total: int, groups: int) -> list[int]:
    base, extra = divmod(total, groups)
    return [base + (1 if i < extra else 0) for i in range(groups)]


def _scores(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.uniform(0.5, 1.0, size=count).astype(np.float32)


def _gauss_mix(config: SynthConfig, rng: np.random.Generator):
    means = component_means(config)
    keys = _component_keys(config)
    counts = _split_counts(config.n_points, config.n_components)
    rows, row_keys = [], []
    for mean, key, count in zip(means, keys, counts):
        if count == 0:
            continue
        rows.append(mean + rng.normal(size=(count, config.dimension)) * config.spread)
        row_keys.extend([key] * count)
    return np.vstack(rows), row_keys


def _moons(config: SynthConfig, rng: np.random.Generator):
    if config.dimension != 2:
        raise ValueError("the moons preset is 2-dimensional")
    if config.class_keys is not None and len(config.class_keys) not in (1, 2):
        raise ValueError("moons accepts 1 or 2 class keys")
    keys = config.class_keys or ("moons",)
    if len(keys) == 1:
        keys = keys * 2
    n_outer, n_inner = _split_counts(config.n_points, 2)
    t_outer = rng.uniform(0.0, np.pi, size=n_outer)
    t_inner = rng.uniform(0.0, np.pi, size=n_inner)
    outer = np.column_stack([np.cos(t_outer), np.sin(t_outer)])
    inner = np.column_stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)])
    pts = np.vstack([outer, inner]) * config.separation
    pts += rng.normal(size=pts.shape) * config.spread
    return pts, [keys[0]] * n_outer + [keys[1]] * n_inner


def _ood_keys(config: SynthConfig) -> tuple[str, ...]:
    return tuple(sorted(set(_component_keys(config))))


def _rejection_fill(config: SynthConfig, rng, propose) -> np.ndarray:
    """Draw batches from ``propose`` until n_points clear the exclusion zone."""
    means = component_means(config)
    radius = (
        config.exclusion_radius
        if config.exclusion_radius is not None
        else 3.0 * config.spread
    )
    kept: list[np.ndarray] = []
    have = 0
    for _ in range(_MAX_REJECTION_ROUNDS):
        batch = propose(max(config.n_points, 64))
        gaps = np.linalg.norm(batch[:, None, :] - means[None, :, :], axis=2)
        ok = batch[np.min(gaps, axis=1) >= radius]
        if ok.size:
            kept.append(ok)
            have += ok.shape[0]
        if have >= config.n_points:
            return np.vstack(kept)[: config.n_points]
    raise ValueError(
        "exclusion radius rejects almost every sample; widen the region "
        "or lower exclusion_radius"
    )


def _uniform_ood(config: SynthConfig, rng: np.random.Generator):
    means = component_means(config)
    lo = means.min(axis=0) - config.margin
    hi = means.max(axis=0) + config.margin
    if np.all(hi - lo <= 0.0):
        raise ValueError(
            "uniform region has no volume; pass margin > 0 or several "
            "distinct means"
        )
    def propose(count):
        return rng.uniform(lo, hi, size=(count, config.dimension))
    return _rejection_fill(config, rng, propose)


def _ring_ood(config: SynthConfig, rng: np.random.Generator):
    means = component_means(config)
    center = means.mean(axis=0)
    reach = float(np.max(np.linalg.norm(means - center, axis=1)))
    inner = (
        config.ring_inner
        if config.ring_inner is not None
        else reach + 3.0 * config.spread
    )
    outer = config.ring_outer if config.ring_outer is not None else inner + 3.0 * config.spread
    if not (0 < inner < outer):
        raise ValueError(f"need 0 < ring_inner < ring_outer, got {inner}, {outer}")
    def propose(count):
        direction = rng.normal(size=(count, config.dimension))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = rng.uniform(inner, outer, size=(count, 1))
        return center + direction * radius
    return _rejection_fill(config, rng, propose)


def synth_generate(config: SynthConfig) -> FeatureSet:
    """Generate a labeled feature set; byte-identical for equal configs.

    ID presets key records by component group; OoD presets cycle through
    the component class keys (an OoD object still arrives with some
    predicted class) and label every record OOD.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    if config.preset is SynthPreset.GAUSS_MIX:
        values, keys = _gauss_mix(config, rng)
        label = Label.ID
    elif config.preset is SynthPreset.MOONS:
        values, keys = _moons(config, rng)
        label = Label.ID
    elif config.preset is SynthPreset.UNIFORM_OOD:
        values = _uniform_ood(config, rng)
        pool = _ood_keys(config)
        keys = [pool[i % len(pool)] for i in range(values.shape[0])]
        label = Label.OOD
    elif config.preset is SynthPreset.RING_OOD:
        values = _ring_ood(config, rng)
        pool = _ood_keys(config)
        keys = [pool[i % len(pool)] for i in range(values.shape[0])]
        label = Label.OOD
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown preset {config.preset!r}")
    if values.shape[0] == 0:
        raise EmptyInputError("generator produced no samples")
    return FeatureSet(
        config.layer_tag,
        values.astype(np.float32),
        keys,
        np.full(values.shape[0], int(label), dtype=np.uint8),
        _scores(rng, values.shape[0]),
    )
