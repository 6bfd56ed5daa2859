"""The scikit-learn facade: fit/predict semantics and API compatibility."""

import numpy as np
import pytest
from sklearn.base import clone

from boxmon import BoxEnvelope, Decision


@pytest.fixture()
def blobs():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(size=(80, 3)), rng.normal(size=(80, 3)) + 40])
    y = np.array(["car"] * 80 + ["person"] * 80)
    return X, y


class TestFitPredict:
    def test_training_rows_are_inliers(self, blobs):
        X, y = blobs
        est = BoxEnvelope(density=40, seed=1).fit(X, y)
        assert np.all(est.predict(X, y) == 1)

    def test_far_points_are_outliers(self, blobs):
        X, y = blobs
        est = BoxEnvelope(density=40, seed=1).fit(X, y)
        outliers = np.full((5, 3), 1e6)
        assert np.all(est.predict(outliers, ["car"] * 5) == -1)

    def test_single_class_mode_without_y(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(50, 2))
        est = BoxEnvelope(density=25, seed=2).fit(X)
        assert est.classes_.tolist() == ["all"]
        assert np.all(est.predict(X) == 1)
        assert np.all(est.fit_predict(X) == 1)

    def test_unknown_class_key_is_an_outlier(self, blobs):
        X, y = blobs
        est = BoxEnvelope(density=40).fit(X, y)
        scores = est.decision_function(X[:2], ["zebra", "car"])
        assert scores[0] == -np.inf
        assert scores[1] == 0.0
        assert est.predict(X[:2], ["zebra", "car"]).tolist() == [-1, 1]

    def test_decision_function_is_negated_distance(self, blobs):
        X, y = blobs
        est = BoxEnvelope(density=40).fit(X, y)
        probe = np.full((1, 3), 1e3)
        score = est.decision_function(probe, ["car"])[0]
        assert score < 0.0
        verdict = est.verdicts(probe, ["car"])[0]
        assert verdict.decision is Decision.REJECT
        assert score == -verdict.distance

    def test_wrong_length_y_rejected(self, blobs):
        X, y = blobs
        with pytest.raises(ValueError):
            BoxEnvelope().fit(X, y[:-1])

    def test_predict_before_fit_raises(self):
        with pytest.raises(RuntimeError, match="not fitted"):
            BoxEnvelope().predict(np.zeros((1, 2)))


class TestSklearnProtocol:
    def test_get_params_round_trips(self):
        est = BoxEnvelope(density=7.0, cap=3, target_tpr=0.9, seed=5)
        params = est.get_params()
        assert params["density"] == 7.0
        rebuilt = BoxEnvelope(**params)
        assert rebuilt.get_params() == params

    def test_clone_preserves_parameters(self):
        est = BoxEnvelope(density=12.5, seed=3, layer_tag="fc2")
        copy = clone(est)
        assert copy.get_params() == est.get_params()

    def test_set_params(self):
        est = BoxEnvelope().set_params(density=9.0, target_tpr=0.99)
        assert est.density == 9.0
        assert est.target_tpr == 0.99

    def test_registry_attribute_exposes_the_pipeline(self, blobs):
        X, y = blobs
        est = BoxEnvelope(density=40, seed=4).fit(X, y)
        assert est.registry_.class_keys() == ("car", "person")
        assert est.n_features_in_ == 3
