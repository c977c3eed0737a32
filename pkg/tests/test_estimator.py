import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hresnas import GrowingNetClassifier, GrowingNetRegressor
from hresnas.data import gen_grid_regression, gen_spiral


def classifier(**kw):
    defaults = dict(neurons_to_add=16, prune_count=4, learning_rate=1e-2,
                    max_train_epochs=10, decay_epochs=0, iterations=3, seed=0)
    defaults.update(kw)
    return GrowingNetClassifier(**defaults)


class TestClassifier:
    def test_fits_spiral(self):
        ds = gen_spiral(150, 0.02, seed=0)
        model = classifier(neurons_to_add=24, iterations=4,
                           max_train_epochs=30).fit(ds.inputs, ds.targets)
        assert model.score(ds.inputs, ds.targets) > 0.9

    def test_preserves_label_values(self):
        ds = gen_spiral(60, 0.02, seed=1)
        labels = np.where(ds.targets == 0, "inner", "outer")
        model = classifier(iterations=1, max_train_epochs=3)
        model.fit(ds.inputs, labels)
        predictions = model.predict(ds.inputs)
        assert set(predictions) <= {"inner", "outer"}
        assert list(model.classes_) == ["inner", "outer"]

    def test_predict_proba_rows_sum_to_one(self):
        ds = gen_spiral(60, 0.02, seed=2)
        model = classifier(iterations=1, max_train_epochs=3)
        model.fit(ds.inputs, ds.targets)
        probs = model.predict_proba(ds.inputs[:10])
        assert np.allclose(probs.sum(axis=1), 1.0)
        assert (probs >= 0).all()

    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            classifier().predict(np.zeros((2, 2)))

    def test_feature_count_checked(self):
        ds = gen_spiral(40, 0.02, seed=3)
        model = classifier(iterations=1, max_train_epochs=2).fit(ds.inputs,
                                                                 ds.targets)
        with pytest.raises(ValueError, match="features"):
            model.predict(np.zeros((2, 5)))

    def test_sklearn_clone_compatible(self):
        model = classifier(learning_rate=0.5)
        cloned = clone(model)
        assert cloned.get_params() == model.get_params()
        assert cloned.get_params()["learning_rate"] == 0.5

    def test_set_params(self):
        model = classifier()
        model.set_params(neurons_to_add=99)
        assert model.neurons_to_add == 99

    def test_history_and_params_exposed(self):
        ds = gen_spiral(40, 0.02, seed=4)
        model = classifier(iterations=2, max_train_epochs=3)
        model.fit(ds.inputs, ds.targets)
        assert model.n_params_ > 0
        assert len(model.history_) > 0
        assert len(model.reports_) == 2


class TestRegressor:
    def test_fits_smooth_surface(self):
        ds = gen_grid_regression(400, seed=0)
        model = GrowingNetRegressor(neurons_to_add=16, prune_count=4,
                                    learning_rate=1e-2, max_train_epochs=10,
                                    decay_epochs=0, iterations=3, seed=0)
        model.fit(ds.inputs, ds.targets[:, 0])
        assert model.score(ds.inputs, ds.targets[:, 0]) > 0.5

    def test_single_output_shape(self):
        ds = gen_grid_regression(100, seed=1)
        model = GrowingNetRegressor(iterations=1, max_train_epochs=2,
                                    decay_epochs=0)
        model.fit(ds.inputs, ds.targets[:, 0])
        assert model.predict(ds.inputs[:7]).shape == (7,)

    def test_multi_output(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(120, 3))
        y = np.stack([x[:, 0] + x[:, 1], x[:, 2] * 2.0], axis=1)
        model = GrowingNetRegressor(iterations=1, max_train_epochs=5,
                                    decay_epochs=0, learning_rate=1e-2)
        model.fit(x, y)
        assert model.predict(x[:5]).shape == (5, 2)
