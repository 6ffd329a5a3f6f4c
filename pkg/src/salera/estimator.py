"""Scikit-learn style classifier facade over the training engine.

``SaleraClassifier`` trains a dense softmax network (optionally with ReLU
hidden layers) using any optimizer variant from this package, and exposes
the standard fit/predict/predict_proba/score surface so it composes with
pipelines, grid search, and cloning.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .data import Dataset
from .harness import training_steps
from .nets import DenseNet, softmax
from .optimizers import NetworkObjective, OptimizerConfig, build_optimizer
from .vectors import spawn_rngs


class SaleraClassifier(BaseEstimator, ClassifierMixin):
    """Dense network classifier with adaptive-rate, catastrophe-managed SGD.

    Parameters mirror the run configuration: ``hidden_layer_sizes=()`` gives
    softmax regression, ``(500, 300)`` the two-hidden-layer register.
    ``optimizer`` picks the update rule; the remaining knobs are forwarded
    to it. ``rho`` is both the mini-batch fraction of the training set and
    the loss-smoothing factor of the catastrophe detector.

    After fit: ``classes_``, ``net_``, ``theta_``, ``loss_curve_`` (one raw
    loss per batch), ``n_triggers_``, ``n_iter_``.
    """

    def __init__(
        self,
        hidden_layer_sizes=(),
        optimizer="salera",
        eta0=0.01,
        alpha=0.01,
        gain=3e-6,
        rho=0.01,
        epochs=20,
        gamma=0.9,
        beta1=0.9,
        beta2=0.999,
        eps_num=1e-8,
        ph_divisor=10.0,
        ph_threshold=None,
        ph_warmup_batches=0,
        layerwise=True,
        random_state=None,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.optimizer = optimizer
        self.eta0 = eta0
        self.alpha = alpha
        self.gain = gain
        self.rho = rho
        self.epochs = epochs
        self.gamma = gamma
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_num = eps_num
        self.ph_divisor = ph_divisor
        self.ph_threshold = ph_threshold
        self.ph_warmup_batches = ph_warmup_batches
        self.layerwise = layerwise
        self.random_state = random_state

    def _validate_inputs(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        if not np.isfinite(X).all():
            raise ValueError("X contains non-finite values")
        if y is None:
            return X
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError(f"y shape {y.shape} does not match {X.shape[0]} rows")
        return X, y

    def fit(self, X, y):
        X, y = self._validate_inputs(X, y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        if not isinstance(self.random_state, (numbers.Integral, type(None))):
            raise ValueError("random_state must be an integer seed or None")

        sizes = (X.shape[1], *tuple(int(h) for h in self.hidden_layer_sizes), self.classes_.size)
        net = DenseNet(sizes)
        seed = self.random_state
        init_rng, schedule_rng = spawn_rngs(seed, 2)
        theta0 = net.init_params(init_rng)
        config = OptimizerConfig(
            variant=self.optimizer,
            eta0=self.eta0,
            gamma=self.gamma,
            beta1=self.beta1,
            beta2=self.beta2,
            eps_num=self.eps_num,
            alpha=self.alpha,
            gain=self.gain,
            ph_divisor=self.ph_divisor,
            ph_threshold=self.ph_threshold,
            ph_warmup_batches=self.ph_warmup_batches,
            rho=self.rho,
            layerwise=self.layerwise,
        )
        opt = build_optimizer(config, theta0, net.partition)
        dataset = Dataset(inputs=X, labels=encoded, name="fit")

        losses = []
        triggers = 0
        for _, _, _, info in training_steps(
            opt, NetworkObjective(net), dataset, self.rho, self.epochs, schedule_rng
        ):
            losses.append(info.loss)
            triggers += int(info.triggered)

        self.net_ = net
        self.theta_ = opt.theta
        self.loss_curve_ = losses
        self.n_triggers_ = triggers
        self.n_iter_ = self.epochs
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "theta_"):
            raise AttributeError("this classifier is not fitted yet; call fit first")

    def decision_function(self, X):
        self._check_fitted()
        X = self._validate_inputs(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.net_.predict_logits(self.theta_, X)

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        logits = self.decision_function(X)
        return self.classes_[np.argmax(logits, axis=1)]
