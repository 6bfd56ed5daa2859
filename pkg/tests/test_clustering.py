"""Deterministic k-means and the density-driven cluster count."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from boxmon import ClusterConfig, EmptyInputError, kmeans, partition_features, select_k
from boxmon.clustering import _assign, _lloyd_steps, _repair_empty
from boxmon.features import FeatureSet


def make_features(values, class_key="obj", layer_tag="t"):
    values = np.asarray(values, dtype=np.float32)
    m = values.shape[0]
    return FeatureSet(
        layer_tag,
        values,
        [class_key] * m,
        np.zeros(m, dtype=np.uint8),
        np.ones(m, dtype=np.float32),
    )


class TestSelectK:
    def test_density_below_cap(self):
        assert select_k(950, 100, 10000) == 9

    def test_floor_zero_clamps_to_one(self):
        assert select_k(50, 100, 10000) == 1

    def test_cap_applies(self):
        assert select_k(2_000_000, 100, 10000) == 10000

    def test_never_exceeds_point_count(self):
        assert select_k(5, 0.5, 10000) == 5

    def test_rejects_non_positive_m(self):
        with pytest.raises(EmptyInputError):
            select_k(0, 100, 10)

    @given(
        m=st.integers(1, 10**9),
        density=st.floats(1e-3, 1e6, allow_nan=False),
        cap=st.integers(1, 10**6),
    )
    def test_matches_direct_recomputation(self, m, density, cap):
        assert select_k(m, density, cap) == max(1, min(math.floor(m / density), cap, m))

    @given(density=st.floats(1.0, 1e4, allow_nan=False), scale=st.floats(0.0, 8000.0))
    def test_budget_arithmetic_keeps_k_at_most_8000(self, density, scale):
        """Datasets up to 8000 * density points can never need more than
        8000 boxes, whatever the cap above that allows."""
        m = max(1, math.floor(scale * density))
        assert select_k(m, density, 10000) <= 8000


class TestClusterConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"density": 0.0},
            {"density": -1.0},
            {"cap": 0},
            {"max_iterations": 0},
            {"shift_tolerance": -1e-9},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            ClusterConfig(**kwargs)


def brute_force_two_clusters(X):
    """Best 2-cluster partition by exhaustive WCSS minimization."""
    m = X.shape[0]
    best = None
    best_cost = np.inf
    for mask_bits in range(1, 2**m - 1):
        mask = np.array([(mask_bits >> i) & 1 for i in range(m)], dtype=bool)
        cost = 0.0
        for part in (X[mask], X[~mask]):
            cost += ((part - part.mean(axis=0)) ** 2).sum()
        if cost < best_cost:
            best_cost = cost
            best = frozenset(np.flatnonzero(mask).tolist())
    return best, frozenset(range(m)) - best


class TestKmeans:
    def test_k1_centroid_is_the_mean(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(17, 3))
        part = kmeans(X, 1, ClusterConfig(seed=4))
        assert part.k == 1
        np.testing.assert_allclose(part.centroids[0], X.mean(axis=0), rtol=1e-12)

    def test_finds_the_optimal_two_way_split(self):
        X = np.array([[0, 0], [0.1, 0], [10, 10], [10.1, 10]], dtype=np.float64)
        part = kmeans(X, 2, ClusterConfig(seed=1))
        got = {
            frozenset(np.flatnonzero(part.assignments == c).tolist())
            for c in range(2)
        }
        assert got == set(brute_force_two_clusters(X))

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(60, 4))
        a = kmeans(X, 5, ClusterConfig(seed=9))
        b = kmeans(X, 5, ClusterConfig(seed=9))
        assert np.array_equal(a.assignments, b.assignments)
        assert a.centroids.tobytes() == b.centroids.tobytes()

    def test_centroids_are_cluster_means(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 2))
        part = kmeans(X, 4, ClusterConfig(seed=7))
        for c in range(4):
            members = X[part.assignments == c]
            np.testing.assert_allclose(
                part.centroids[c], members.mean(axis=0), rtol=1e-12
            )

    def test_no_empty_clusters_even_with_duplicates(self):
        X = np.array([[0.0], [0.0], [0.0], [10.0], [10.0], [10.0]])
        for seed in range(8):
            part = kmeans(X, 3, ClusterConfig(seed=seed))
            counts = np.bincount(part.assignments, minlength=3)
            assert np.all(counts >= 1)

    def test_objective_never_increases(self):
        rng = np.random.default_rng(4)
        X = np.vstack(
            [rng.normal(loc=c, size=(30, 3)) for c in ((0, 0, 0), (8, 8, 8), (0, 8, 0))]
        )
        rng2 = np.random.default_rng(5)
        centroids = X[rng2.choice(X.shape[0], size=3, replace=False)]
        objectives = []
        for _, _, obj in itertools.islice(_lloyd_steps(X, centroids, 3), 25):
            objectives.append(obj)
        for prev, nxt in zip(objectives, objectives[1:]):
            assert nxt <= prev * (1 + 1e-9)

    def test_rejects_k_above_m(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), 4, ClusterConfig())

    def test_max_iterations_bounds_work(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(50, 2))
        part = kmeans(X, 3, ClusterConfig(seed=1, max_iterations=1))
        assert part.k == 3  # still a valid partition after a single sweep


class TestAssignmentTieBreaks:
    def test_equidistant_point_goes_to_lowest_index(self):
        X = np.array([[0.0]])
        centroids = np.array([[1.0], [-1.0]])
        assignments, _ = _assign(X, centroids)
        assert assignments[0] == 0

    def test_repair_moves_farthest_point_into_empty_cluster(self):
        X = np.array([[0.0], [1.0], [10.0]])
        centroids = np.array([[0.5], [100.0]])
        assignments = np.array([0, 0, 0], dtype=np.intp)
        repaired = _repair_empty(X, centroids.copy(), assignments.copy(), 2)
        assert np.bincount(repaired, minlength=2).min() >= 1
        # x=0 is farthest from the empty cluster's centroid at 100
        assert repaired[0] == 1


class TestPartitionFeatures:
    def test_single_record_single_subset(self):
        features = make_features([[1.0, 2.0]])
        subsets = partition_features(features, ClusterConfig(density=100))
        assert len(subsets) == 1
        assert subsets[0].tolist() == [0]

    def test_cardinality_bookkeeping(self):
        rng = np.random.default_rng(8)
        features = make_features(rng.normal(size=(200, 2)))
        subsets = partition_features(features, ClusterConfig(density=100, seed=3))
        assert len(subsets) == 2
        flat = np.concatenate(subsets)
        assert len(flat) == 200
        assert len(np.unique(flat)) == 200

    def test_separated_blobs_recover_the_blobs(self):
        rng = np.random.default_rng(10)
        centers = np.array([(0, 0), (50, 0), (0, 50), (50, 50)], dtype=np.float64)
        blob_of = np.repeat(np.arange(4), 100)
        X = centers[blob_of] + rng.normal(size=(400, 2)) * 0.5
        features = make_features(X)
        subsets = partition_features(features, ClusterConfig(density=100, seed=12))
        assert len(subsets) == 4
        majorities = []
        for idx in subsets:
            labels, counts = np.unique(blob_of[idx], return_counts=True)
            assert counts.max() == len(idx)  # each subset is pure
            majorities.append(labels[counts.argmax()])
        assert sorted(majorities) == [0, 1, 2, 3]
