"""scikit-learn style front end for the patch-transformer regressor."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import model as mdl
from . import training as tr
from .validation import check_sample_array, check_target_vector


class ViTRegressor(BaseEstimator, RegressorMixin):
    """Transformer regression over (n_samples, channels, points) matrices.

    Parameters
    ----------
    s_patch, f_patch : int
        Patch extent along the point and channel axes; `points` must be a
        multiple of `s_patch`, channels are zero-padded up to a multiple
        of `f_patch`.
    d_embed, n_heads, mlp_hidden, depth, fc_hidden, dropout :
        Transformer shape; `d_embed` must be divisible by `n_heads`.
    learning_rate, batch_size, max_epochs, patience :
        Adam optimization with patience-based early stopping on the
        validation RMSPE; the best-validation snapshot is restored.
    validation_fraction : float
        Fraction of the training data held out (seeded, random) as the
        early-stopping validation set.
    random_state : int
        Seeds initialization, shuffling and dropout; fit is deterministic.
    """

    def __init__(self, s_patch=20, f_patch=2, d_embed=64, n_heads=4,
                 mlp_hidden=64, depth=2, fc_hidden=32, dropout=0.1,
                 learning_rate=1e-3, batch_size=16, max_epochs=200,
                 patience=50, validation_fraction=0.2, random_state=0):
        self.s_patch = s_patch
        self.f_patch = f_patch
        self.d_embed = d_embed
        self.n_heads = n_heads
        self.mlp_hidden = mlp_hidden
        self.depth = depth
        self.fc_hidden = fc_hidden
        self.dropout = dropout
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _build_config(self, x: np.ndarray) -> mdl.ViTConfig:
        return mdl.ViTConfig(
            points=x.shape[2], channels=x.shape[1], s_patch=self.s_patch,
            f_patch=self.f_patch, d_embed=self.d_embed, n_heads=self.n_heads,
            mlp_hidden=self.mlp_hidden, depth=self.depth,
            fc_hidden=self.fc_hidden, dropout=self.dropout)

    def fit(self, X, y):
        """Fit on sample matrices X of shape (n, channels, points)."""
        X = check_sample_array(X)
        y = check_target_vector(y, X.shape[0])
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([self.random_state, 3])))
        perm = rng.permutation(X.shape[0])
        n_val = max(1, int(np.floor(self.validation_fraction * X.shape[0])))
        if n_val >= X.shape[0]:
            raise ValueError("not enough samples for a validation split")
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        self.config_ = self._build_config(X)
        self.model_ = mdl.ModelParameters.initialize(
            self.config_, seed=self.random_state)
        train_cfg = tr.TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience,
            seed=self.random_state)
        self.history_ = tr.train_model(
            self.model_, X[train_idx], y[train_idx], X[val_idx], y[val_idx],
            train_cfg)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                "this ViTRegressor instance is not fitted yet")

    def predict(self, X):
        """Predict SOH fractions for (n, channels, points) matrices."""
        self._check_fitted()
        X = check_sample_array(X)
        mdl.check_dataset_compatible(self.config_, X.shape[1], X.shape[2])
        return mdl.predict(self.model_, X)

    def fine_tune(self, X, y, epochs=2000):
        """Freeze the feature extractor and refit the head on new cycles."""
        self._check_fitted()
        X = check_sample_array(X)
        y = check_target_vector(y, X.shape[0])
        mdl.check_dataset_compatible(self.config_, X.shape[1], X.shape[2])
        train_cfg = tr.TrainConfig(
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            seed=self.random_state)
        tr.fine_tune(self.model_, X, y, epochs, train_cfg)
        return self
