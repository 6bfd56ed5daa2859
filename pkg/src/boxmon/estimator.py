"""Scikit-learn style front door for the box monitors.

``BoxEnvelope`` is a novelty detector in the spirit of
``EllipticEnvelope``: fit on in-distribution feature rows, predict +1
(inside some training box) or -1 (outside all of them). Unlike the
single-ellipsoid family it conditions on a class key per row, so one
estimator carries one monitor per class; omit ``y`` to treat the data as
a single class.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin

from .clustering import ClusterConfig
from .features import FeatureSet, Label
from .monitor import BuildConfig, Decision, Verdict, build_registry
from .validation import as_float_matrix

_SINGLE_CLASS = "all"


class BoxEnvelope(BaseEstimator, OutlierMixin):
    """Per-class union-of-boxes novelty detector.

    Parameters mirror the build pipeline: ``density`` is the targeted
    points per box, ``cap`` the per-class box budget, ``target_tpr`` the
    training coverage the boxes are enlarged to reach, and ``seed`` fixes
    the clustering stream. Inputs are treated as 32-bit feature payloads
    (matching the on-disk dump formats) and promoted to float64 for all
    arithmetic.
    """

    def __init__(
        self,
        density: float = 100.0,
        cap: int = 10000,
        target_tpr: float = 0.95,
        seed: int = 0,
        max_iterations: int = 100,
        shift_tolerance: float = 1e-6,
        layer_tag: str = "features",
    ):
        self.density = density
        self.cap = cap
        self.target_tpr = target_tpr
        self.seed = seed
        self.max_iterations = max_iterations
        self.shift_tolerance = shift_tolerance
        self.layer_tag = layer_tag

    def _keys(self, y, m: int) -> list[str]:
        if y is None:
            return [_SINGLE_CLASS] * m
        keys = [str(k) for k in np.asarray(y).ravel()]
        if len(keys) != m:
            raise ValueError(f"y has {len(keys)} entries for {m} rows")
        return keys

    def fit(self, X, y=None):
        """Build one monitor per class key in ``y`` (or a single one)."""
        X = as_float_matrix(X)
        keys = self._keys(y, X.shape[0])
        features = FeatureSet(
            self.layer_tag,
            X.astype(np.float32),
            keys,
            np.full(X.shape[0], int(Label.ID), dtype=np.uint8),
            np.ones(X.shape[0], dtype=np.float32),
        )
        config = BuildConfig(
            cluster=ClusterConfig(
                density=self.density,
                cap=self.cap,
                seed=self.seed,
                max_iterations=self.max_iterations,
                shift_tolerance=self.shift_tolerance,
            ),
            target_tpr=self.target_tpr,
        )
        self.registry_ = build_registry(features, config)
        self.classes_ = np.array(self.registry_.class_keys())
        self.n_features_in_ = X.shape[1]
        return self

    def verdicts(self, X, y=None) -> list[Verdict]:
        """Full verdict objects (decision, distance, nearest box index)."""
        self._check_fitted()
        X = as_float_matrix(X)
        keys = self._keys(y, X.shape[0])
        X32 = X.astype(np.float32).astype(np.float64)
        return [self.registry_.verdict(X32[i], keys[i]) for i in range(X.shape[0])]

    def decision_function(self, X, y=None) -> np.ndarray:
        """Negated monitor distance: 0 on inliers, negative outside,
        ``-inf`` for rows whose class key has no monitor."""
        verdicts = self.verdicts(X, y)
        out = np.empty(len(verdicts), dtype=np.float64)
        for i, v in enumerate(verdicts):
            out[i] = -np.inf if v.decision is Decision.UNKNOWN_CLASS else -v.distance
        return out

    def score_samples(self, X, y=None) -> np.ndarray:
        return self.decision_function(X, y)

    def predict(self, X, y=None) -> np.ndarray:
        """+1 where some box of the row's class contains it, else -1."""
        return np.where(self.decision_function(X, y) == 0.0, 1, -1)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X, y).predict(X, y)

    def _check_fitted(self):
        if not hasattr(self, "registry_"):
            raise RuntimeError("this BoxEnvelope instance is not fitted yet")
