"""scikit-learn style front door: estimators whose fit() runs the full
grow/train/shrink search in-process, so the method drops into pipelines,
cross-validation, and grid search like any other model.
"""
from __future__ import annotations

import tempfile

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import tree
from .data import Dataset
from .engine import MetaParams, RunConfig, SearchEngine


class _GrowingNetBase(BaseEstimator):
    def __init__(self, neurons_to_add=24, prune_count=8, prune_ratio=None,
                 learning_rate=1e-2, max_train_epochs=20, decay_epochs=1,
                 iterations=5, batch_size=64, dropout_p=0.0, seed=0,
                 dtype="float64", out_dir=None):
        self.neurons_to_add = neurons_to_add
        self.prune_count = prune_count
        self.prune_ratio = prune_ratio
        self.learning_rate = learning_rate
        self.max_train_epochs = max_train_epochs
        self.decay_epochs = decay_epochs
        self.iterations = iterations
        self.batch_size = batch_size
        self.dropout_p = dropout_p
        self.seed = seed
        self.dtype = dtype
        self.out_dir = out_dir

    def _config(self) -> RunConfig:
        meta = MetaParams(
            neurons_to_add=self.neurons_to_add,
            prune_count=self.prune_count,
            prune_ratio=self.prune_ratio,
            learning_rate=self.learning_rate,
            max_train_epochs=self.max_train_epochs,
            decay_epochs=self.decay_epochs,
        )
        return RunConfig(meta=meta, seed=self.seed, batch_size=self.batch_size,
                         dropout_p=self.dropout_p, dtype=self.dtype,
                         max_iterations=self.iterations)

    def _run(self, train: Dataset):
        config = self._config()
        out_dir = self.out_dir or tempfile.mkdtemp(prefix="hresnas_fit_")
        engine = SearchEngine(config, out_dir, train=train, test=train)
        engine.run()
        self.net_ = engine.net
        self.history_ = engine.history_since(0)
        self.reports_ = engine.reports
        self.n_params_ = tree.count_params(engine.net)

    def _forward(self, X) -> np.ndarray:
        check_is_fitted(self, "net_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out, _ = tree.forward(self.net_, X.astype(self.net_.dtype))
        return out


class GrowingNetClassifier(_GrowingNetBase, ClassifierMixin):
    """Classifier that searches its own architecture while training."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        train = Dataset(X, encoded.astype(np.int64), "classification", seed=self.seed)
        self._run(train)
        return self

    def decision_function(self, X) -> np.ndarray:
        return self._forward(X)

    def predict_proba(self, X) -> np.ndarray:
        logits = self._forward(X)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        logits = self._forward(X)
        return self.classes_[logits.argmax(axis=1)]


class GrowingNetRegressor(_GrowingNetBase, RegressorMixin):
    """Regressor that searches its own architecture while training."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y[:, None]
            self._single_output = True
        else:
            self._single_output = False
        self.n_features_in_ = X.shape[1]
        train = Dataset(X, y, "regression", seed=self.seed)
        self._run(train)
        return self

    def predict(self, X) -> np.ndarray:
        out = self._forward(X)
        return out[:, 0] if self._single_output else out
