"""Evaluation: FPR at a target TPR, micro-F1 score thresholds, and a
single-Gaussian baseline for comparison against the box monitors.

Scores follow the monitor convention throughout: lower means more
in-distribution, and 0 means accepted outright.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError
from .features import FeatureSet
from .monitor import MonitorRegistry
from .validation import check_unit_interval


@dataclass(frozen=True)
class EvalReport:
    """FPR at the threshold where the target TPR is first reached."""

    target_tpr: float
    distance_threshold: float
    achieved_tpr: float
    fpr: float
    id_count: int
    ood_count: int
    per_class: dict[str, "EvalReport"] = field(default_factory=dict)

    def __post_init__(self):
        if self.achieved_tpr < self.target_tpr:
            raise ValueError(
                f"achieved TPR {self.achieved_tpr} below target {self.target_tpr}"
            )
        if not (0.0 <= self.fpr <= 1.0):
            raise ValueError(f"fpr must lie in [0, 1], got {self.fpr}")

    def to_dict(self) -> dict:
        d = {
            "target_tpr": self.target_tpr,
            "distance_threshold": self.distance_threshold,
            "achieved_tpr": self.achieved_tpr,
            "fpr": self.fpr,
            "id_count": self.id_count,
            "ood_count": self.ood_count,
        }
        if self.per_class:
            d["per_class"] = {k: v.to_dict() for k, v in self.per_class.items()}
        return d


def fpr_at_tpr(id_distances, ood_distances, target_tpr: float) -> EvalReport:
    """False-positive rate of OoD scores at the target ID acceptance rate.

    The threshold is the smallest candidate (the ID scores, plus 0) whose
    inclusive coverage of the ID list reaches ``target_tpr``; the FPR is
    the fraction of OoD scores at or below it. Rank-based, so any strictly
    increasing transform applied to both lists leaves the rates unchanged.
    """
    check_unit_interval(target_tpr, name="target_tpr", open_low=True)
    ids = np.asarray(id_distances, dtype=np.float64)
    oods = np.asarray(ood_distances, dtype=np.float64)
    if ids.size == 0:
        raise EmptyInputError("id_distances must be non-empty")
    if oods.size == 0:
        raise EmptyInputError("ood_distances must be non-empty")
    ids_sorted = np.sort(ids)
    need = int(np.ceil(target_tpr * ids.size))
    # The need-th smallest ID score is the least candidate whose inclusive
    # coverage reaches the target; the extra 0 candidate can never beat it.
    threshold = float(ids_sorted[need - 1])
    achieved = float(np.searchsorted(ids_sorted, threshold, side="right") / ids.size)
    fpr = float(np.count_nonzero(oods <= threshold) / oods.size)
    return EvalReport(
        target_tpr=float(target_tpr),
        distance_threshold=threshold,
        achieved_tpr=achieved,
        fpr=fpr,
        id_count=int(ids.size),
        ood_count=int(oods.size),
    )


@dataclass(frozen=True)
class ThresholdChoice:
    """Result of a micro-F1 threshold sweep.

    ``degenerate`` is set when no threshold yields a true positive; the
    returned threshold then sits just above the maximum score so that
    nothing passes it.
    """

    threshold: float
    f1: float
    degenerate: bool


def micro_f1_threshold(
    scored, total_ground_truth: int, degenerate_epsilon: float = 1e-6
) -> ThresholdChoice:
    """Confidence cutoff maximizing micro F1, lowest score on ties.

    ``scored`` holds (score, is_true_positive) pairs; candidates are the
    distinct scores. At a candidate t: TP = true positives with score >= t,
    FP = the other entries with score >= t, FN = total_ground_truth - TP.
    """
    pairs = [(float(s), bool(tp)) for s, tp in scored]
    if not pairs:
        raise EmptyInputError("micro_f1_threshold needs at least one entry")
    tp_total = sum(1 for _, tp in pairs if tp)
    if total_ground_truth < tp_total:
        raise ValueError(
            f"total_ground_truth {total_ground_truth} below the "
            f"{tp_total} true-positive entries supplied"
        )
    scores = np.array([s for s, _ in pairs], dtype=np.float64)
    truths = np.array([tp for _, tp in pairs], dtype=bool)
    best_f1 = -1.0
    best_t = None
    for t in np.unique(scores):  # ascending, so ties keep the lowest t
        keep = scores >= t
        tp = int(np.count_nonzero(truths & keep))
        fp = int(np.count_nonzero(~truths & keep))
        fn = total_ground_truth - tp
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom else 0.0
        if f1 > best_f1:
            best_f1 = f1
            best_t = float(t)
    if best_f1 <= 0.0:
        return ThresholdChoice(
            threshold=float(scores.max()) + degenerate_epsilon,
            f1=0.0,
            degenerate=True,
        )
    return ThresholdChoice(threshold=best_t, f1=best_f1, degenerate=False)


class GaussianMonitor:
    """Per-class Gaussian fit scored by Mahalanobis distance.

    The convex stand-in baseline: one mean and one covariance per class,
    so multi-center classes collapse onto a single ellipsoid and points
    between the centers score as more normal than the centers' edges.
    """

    def __init__(self, means: dict[str, np.ndarray], covariances: dict[str, np.ndarray]):
        if not means or set(means) != set(covariances):
            raise ValueError("means and covariances must cover the same classes")
        self._means: dict[str, np.ndarray] = {}
        self._chol: dict[str, np.ndarray] = {}
        for key in sorted(means):
            mu = np.asarray(means[key], dtype=np.float64)
            cov = np.asarray(covariances[key], dtype=np.float64)
            if mu.ndim != 1 or cov.shape != (mu.size, mu.size):
                raise ValueError(f"class {key!r}: mean/covariance shapes disagree")
            if not np.allclose(cov, cov.T):
                raise ValueError(f"class {key!r}: covariance must be symmetric")
            try:
                L = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise ValueError(
                    f"class {key!r}: covariance is not positive definite; "
                    "increase the regularization strength"
                ) from exc
            self._means[key] = mu
            self._chol[key] = L

    @classmethod
    def fit(cls, features: FeatureSet, regularization: float = 1e-6) -> "GaussianMonitor":
        """Estimate a mean and regularized covariance per class key.

        Adds ``regularization * I`` to each sample covariance; post-ReLU
        features have dead dimensions, so the raw covariance is routinely
        singular. Each class needs at least two records.
        """
        if regularization < 0:
            raise ValueError("regularization must be non-negative")
        means, covs = {}, {}
        for key in features.unique_class_keys():
            view = features.for_class(key)
            if len(view) < 2:
                raise EmptyInputError(
                    f"class {key!r} has {len(view)} record(s); "
                    "covariance estimation needs at least 2"
                )
            V = view.values64()
            means[key] = V.mean(axis=0)
            cov = np.cov(V, rowvar=False)
            cov = np.atleast_2d(cov) + regularization * np.eye(V.shape[1])
            covs[key] = cov
        return cls(means, covs)

    def class_keys(self) -> tuple[str, ...]:
        return tuple(self._means)

    def score(self, z, class_key: str) -> float:
        """Mahalanobis distance to the class mean (0 exactly at the mean)."""
        if class_key not in self._means:
            raise KeyError(f"no Gaussian fit for class {class_key!r}")
        mu = self._means[class_key]
        arr = np.asarray(z, dtype=np.float64)
        if arr.shape != mu.shape:
            raise DimensionMismatchError(
                f"query has dimension {arr.size}, class {class_key!r} has {mu.size}"
            )
        y = np.linalg.solve(self._chol[class_key], arr - mu)
        return float(np.sqrt(y @ y))

    def scores(self, values, class_keys) -> np.ndarray:
        V = np.asarray(values, dtype=np.float64)
        return np.array(
            [self.score(V[i], class_keys[i]) for i in range(V.shape[0])],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class ScoredSet:
    """Distances for one dump against a registry, minus unknown classes."""

    distances: np.ndarray
    class_keys: tuple[str, ...]
    skipped_unknown: int


def registry_distances(registry: MonitorRegistry, features: FeatureSet) -> ScoredSet:
    """Monitor distance per record via its own class key.

    Records whose class has no monitor are skipped and counted; in
    deployment they yield UNKNOWN_CLASS rather than a score.
    """
    if features.dimension != registry.dimension:
        raise DimensionMismatchError(
            f"dump has dimension {features.dimension}, "
            f"registry has {registry.dimension}"
        )
    dists = []
    keys = []
    skipped = 0
    values = features.values64()
    for i, key in enumerate(features.class_keys):
        monitor = registry.monitors.get(key)
        if monitor is None:
            skipped += 1
            continue
        dists.append(monitor.distance(values[i])[0])
        keys.append(key)
    return ScoredSet(np.array(dists, dtype=np.float64), tuple(keys), skipped)


@dataclass(frozen=True)
class EvalOutcome:
    """Everything the eval command reports for one monitor/dump pairing."""

    monitor_report: EvalReport
    baseline_report: EvalReport | None
    verdict_tpr: float
    verdict_fpr: float
    skipped_id: int
    skipped_ood: int

    def to_dict(self) -> dict:
        return {
            "monitor": self.monitor_report.to_dict(),
            "baseline": (
                self.baseline_report.to_dict() if self.baseline_report else None
            ),
            "verdict_tpr": self.verdict_tpr,
            "verdict_fpr": self.verdict_fpr,
            "skipped_unknown_class": {"id": self.skipped_id, "ood": self.skipped_ood},
        }


def _per_class_reports(
    id_dists, id_keys, ood_dists, ood_keys, target_tpr
) -> dict[str, EvalReport]:
    reports = {}
    for key in sorted(set(id_keys) & set(ood_keys)):
        id_slice = id_dists[[k == key for k in id_keys]]
        ood_slice = ood_dists[[k == key for k in ood_keys]]
        reports[key] = fpr_at_tpr(id_slice, ood_slice, target_tpr)
    return reports


def evaluate_registry(
    registry: MonitorRegistry,
    id_features: FeatureSet,
    ood_features: FeatureSet,
    target_tpr: float = 0.95,
    baseline: GaussianMonitor | None = None,
) -> EvalOutcome:
    """FPR at the target TPR, overall and per class, with an optional
    Gaussian baseline evaluated on exactly the same records.

    Also reports the verdict-level operating point baked into the boxes:
    the fraction of each dump at distance 0.
    """
    id_set = registry_distances(registry, id_features)
    ood_set = registry_distances(registry, ood_features)
    if id_set.distances.size == 0:
        raise EmptyInputError("no ID records match the registry's classes")
    if ood_set.distances.size == 0:
        raise EmptyInputError("no OoD records match the registry's classes")
    overall = fpr_at_tpr(id_set.distances, ood_set.distances, target_tpr)
    per_class = _per_class_reports(
        id_set.distances,
        id_set.class_keys,
        ood_set.distances,
        ood_set.class_keys,
        target_tpr,
    )
    monitor_report = EvalReport(
        target_tpr=overall.target_tpr,
        distance_threshold=overall.distance_threshold,
        achieved_tpr=overall.achieved_tpr,
        fpr=overall.fpr,
        id_count=overall.id_count,
        ood_count=overall.ood_count,
        per_class=per_class,
    )
    baseline_report = None
    if baseline is not None:
        base_id = _baseline_scores(baseline, id_features, registry)
        base_ood = _baseline_scores(baseline, ood_features, registry)
        baseline_report = fpr_at_tpr(base_id, base_ood, target_tpr)
    return EvalOutcome(
        monitor_report=monitor_report,
        baseline_report=baseline_report,
        verdict_tpr=float(np.mean(id_set.distances == 0.0)),
        verdict_fpr=float(np.mean(ood_set.distances == 0.0)),
        skipped_id=id_set.skipped_unknown,
        skipped_ood=ood_set.skipped_unknown,
    )


def _baseline_scores(
    baseline: GaussianMonitor, features: FeatureSet, registry: MonitorRegistry
) -> np.ndarray:
    known = set(baseline.class_keys()) & set(registry.class_keys())
    values = features.values64()
    scores = [
        baseline.score(values[i], key)
        for i, key in enumerate(features.class_keys)
        if key in known
    ]
    if not scores:
        raise EmptyInputError("no records match the baseline's classes")
    return np.array(scores, dtype=np.float64)
