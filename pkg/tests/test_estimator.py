import math

import numpy as np
import pytest
from sklearn.base import clone

from salera.data import batches_per_epoch, make_blob_split
from salera.estimator import SaleraClassifier


def blob_arrays(seed=0, n=300, n_features=6, n_classes=3):
    train, test = make_blob_split(n, n // 2, n_features=n_features, n_classes=n_classes, seed=seed)
    return train.inputs, train.labels, test.inputs, test.labels


class TestFitPredict:
    def test_learns_separable_blobs(self):
        # detector off: its zero-initialized baseline drifts on short stationary
        # runs and halves the rate; trigger behavior has its own tests
        X, y, X_test, y_test = blob_arrays()
        clf = SaleraClassifier(
            eta0=0.5, rho=0.1, epochs=10, ph_threshold=math.inf, random_state=0
        )
        clf.fit(X, y)
        assert clf.score(X_test, y_test) >= 0.9
        assert clf.n_triggers_ == 0

    def test_predict_returns_original_labels(self):
        X, y, _, _ = blob_arrays()
        y_mapped = np.array([3, 7, 11])[y]  # non-contiguous label values
        clf = SaleraClassifier(eta0=0.5, rho=0.1, epochs=5, random_state=0)
        clf.fit(X, y_mapped)
        assert list(clf.classes_) == [3, 7, 11]
        assert set(np.unique(clf.predict(X))) <= {3, 7, 11}

    def test_string_labels(self):
        X, y, _, _ = blob_arrays()
        names = np.array(["ant", "bee", "cat"])
        clf = SaleraClassifier(eta0=0.5, rho=0.1, epochs=5, random_state=0)
        clf.fit(X, names[y])
        assert list(clf.classes_) == ["ant", "bee", "cat"]
        preds = clf.predict(X[:10])
        assert preds.shape == (10,)
        assert set(preds) <= set(names)

    def test_probabilities_normalize(self):
        X, y, _, _ = blob_arrays()
        clf = SaleraClassifier(eta0=0.5, rho=0.1, epochs=3, random_state=0).fit(X, y)
        proba = clf.predict_proba(X[:25])
        assert proba.shape == (25, 3)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, rtol=1e-12)
        assert (proba >= 0.0).all()

    def test_decision_function_shape_and_argmax(self):
        X, y, _, _ = blob_arrays()
        clf = SaleraClassifier(eta0=0.5, rho=0.1, epochs=3, random_state=0).fit(X, y)
        scores = clf.decision_function(X[:25])
        assert scores.shape == (25, 3)
        np.testing.assert_array_equal(
            clf.classes_[np.argmax(scores, axis=1)], clf.predict(X[:25])
        )

    def test_hidden_layers(self):
        X, y, X_test, y_test = blob_arrays()
        clf = SaleraClassifier(
            hidden_layer_sizes=(8,),
            eta0=0.5,
            rho=0.1,
            epochs=15,
            ph_threshold=math.inf,
            random_state=0,
        )
        clf.fit(X, y)
        assert clf.net_.sizes == (6, 8, 3)
        assert clf.score(X_test, y_test) >= 0.85


class TestFittedState:
    def test_attributes_after_fit(self):
        X, y, _, _ = blob_arrays()
        clf = SaleraClassifier(eta0=0.5, rho=0.1, epochs=4, random_state=0).fit(X, y)
        assert clf.n_features_in_ == 6
        assert clf.n_iter_ == 4
        assert clf.theta_.shape == (6 * 3 + 3,)
        assert clf.n_triggers_ >= 0
        assert len(clf.loss_curve_) == 4 * batches_per_epoch(300, 0.1)
        assert all(math.isfinite(v) for v in clf.loss_curve_)

    def test_determinism_via_random_state(self):
        X, y, _, _ = blob_arrays()
        a = SaleraClassifier(eta0=0.5, rho=0.1, epochs=3, random_state=7).fit(X, y)
        b = SaleraClassifier(eta0=0.5, rho=0.1, epochs=3, random_state=7).fit(X, y)
        np.testing.assert_array_equal(a.theta_, b.theta_)
        assert a.loss_curve_ == b.loss_curve_

    def test_different_seeds_differ(self):
        X, y, _, _ = blob_arrays()
        a = SaleraClassifier(eta0=0.5, rho=0.1, epochs=3, random_state=0).fit(X, y)
        b = SaleraClassifier(eta0=0.5, rho=0.1, epochs=3, random_state=1).fit(X, y)
        assert not np.array_equal(a.theta_, b.theta_)

    def test_refit_resets_state(self):
        X, y, _, _ = blob_arrays()
        clf = SaleraClassifier(eta0=0.5, rho=0.1, epochs=2, random_state=0)
        clf.fit(X, y)
        first = clf.theta_.copy()
        clf.fit(X, y)
        np.testing.assert_array_equal(clf.theta_, first)
        assert len(clf.loss_curve_) == 2 * batches_per_epoch(300, 0.1)


class TestSklearnProtocol:
    def test_get_params_round_trip(self):
        clf = SaleraClassifier(eta0=0.25, optimizer="agadam", hidden_layer_sizes=(5, 4))
        params = clf.get_params()
        rebuilt = SaleraClassifier(**params)
        assert rebuilt.get_params() == params

    def test_clone_preserves_params_and_clears_fit(self):
        X, y, _, _ = blob_arrays()
        clf = SaleraClassifier(eta0=0.5, rho=0.1, epochs=2, random_state=0).fit(X, y)
        other = clone(clf)
        assert other.get_params() == clf.get_params()
        with pytest.raises(AttributeError):
            other.predict(X)

    def test_unfitted_access_raises(self):
        clf = SaleraClassifier()
        X = np.zeros((3, 2))
        for method in (clf.predict, clf.predict_proba, clf.decision_function):
            with pytest.raises(AttributeError):
                method(X)


class TestValidation:
    def setup_method(self):
        self.X, self.y, _, _ = blob_arrays()

    def test_rejects_1d_input(self):
        with pytest.raises(ValueError, match="2-D"):
            SaleraClassifier().fit(self.X[:, 0], self.y)

    def test_rejects_non_finite(self):
        X = self.X.copy()
        X[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            SaleraClassifier().fit(X, self.y)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            SaleraClassifier().fit(self.X, self.y[:-1])

    def test_rejects_single_class(self):
        with pytest.raises(ValueError, match="two classes"):
            SaleraClassifier(epochs=1).fit(self.X, np.zeros(len(self.X), dtype=int))

    def test_rejects_bad_random_state(self):
        with pytest.raises(ValueError, match="random_state"):
            SaleraClassifier(random_state="seed").fit(self.X, self.y)

    def test_predict_feature_count_must_match(self):
        clf = SaleraClassifier(eta0=0.5, rho=0.1, epochs=1, random_state=0).fit(self.X, self.y)
        with pytest.raises(ValueError):
            clf.predict(self.X[:, :4])
