"""Scikit-learn style wrapper around the joint estimator network."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .nn import PATCH_SIZE, Adadelta, JointNet, clamp_outputs, load_model, save_model, train
from .patches import PatchSet

PREDICT_CHUNK = 256


class JointHazeEstimator(BaseEstimator, RegressorMixin):
    """Predicts (transmittance, airlight) 4-vectors from 15x15 RGB patches.

    Follows the scikit-learn estimator protocol: constructor only stores
    hyperparameters, ``fit(X, y)`` trains from scratch, ``predict(X)``
    returns range-clamped estimates.  ``X`` is an (n, 15, 15, 3) array of
    patches with values in [0, 1] (a :class:`~hazenet.patches.PatchSet`
    is also accepted); ``y`` is (n, 4) with columns (t, a_r, a_g, a_b).

    Attributes after fitting: ``network_``, ``optimizer_``, and
    ``loss_history_`` (mean per-sample loss per epoch).
    """

    def __init__(self, epochs=90, batch_size=1000, rho=0.95, eps=1e-6, seed=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.rho = rho
        self.eps = eps
        self.seed = seed

    def fit(self, X, y=None):
        X, y = self._unpack(X, y, require_labels=True)
        self.network_ = JointNet(seed=self.seed)
        self.optimizer_ = Adadelta(self.network_, rho=self.rho, eps=self.eps)
        self.loss_history_ = train(
            self.network_,
            self.optimizer_,
            X,
            y,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )
        return self

    def predict(self, X):
        """Clamped estimates: t in [0, 1], airlight channels in (0, 1]."""
        return clamp_outputs(self.predict_raw(X))

    def predict_raw(self, X):
        """Raw network outputs, useful for loss evaluation."""
        self._check_fitted()
        X, _ = self._unpack(X, None, require_labels=False)
        outputs = [
            self.network_.forward(X[start : start + PREDICT_CHUNK]).copy()
            for start in range(0, X.shape[0], PREDICT_CHUNK)
        ]
        return np.concatenate(outputs)

    def save(self, path):
        self._check_fitted()
        save_model(path, self.network_, self.optimizer_)

    @classmethod
    def load(cls, path):
        """Rebuild a fitted estimator from a model file."""
        net, optimizer = load_model(path)
        estimator = cls(rho=optimizer.rho, eps=optimizer.eps)
        estimator.network_ = net
        estimator.optimizer_ = optimizer
        estimator.loss_history_ = []
        return estimator

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("this JointHazeEstimator has not been fitted or loaded")

    @staticmethod
    def _unpack(X, y, require_labels):
        if isinstance(X, PatchSet):
            if y is None:
                y = X.labels
            X = X.pixels
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 4 or X.shape[1:] != (PATCH_SIZE, PATCH_SIZE, 3):
            raise ValueError(
                f"X must have shape (n, {PATCH_SIZE}, {PATCH_SIZE}, 3), got {X.shape}"
            )
        if np.any(X < 0.0) or np.any(X > 1.0):
            raise ValueError("patch values must lie in [0, 1]")
        if require_labels:
            if y is None:
                raise ValueError("fit requires labels (append them to the PatchSet or pass y)")
            y = np.asarray(y, dtype=np.float64)
            if y.shape != (X.shape[0], 4):
                raise ValueError(f"y must have shape ({X.shape[0]}, 4), got {y.shape}")
        return X, y
