"""scikit-learn style wrappers around the network and the preprocessing."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .datasets import Scene
from .hdr_io import ExposureStack, make_inputs, mu_law
from .metrics import psnr
from .model import ModelConfig, PASTANet
from .training import TrainConfig, train_loop
from .validation import (
    check_consistent, check_hdr_array, check_ldr_frames, check_positive_int, check_stack_array,
)


class ExposureStackTransformer(TransformerMixin, BaseEstimator):
    """Turn LDR frames ``[n, 3, 3, H, W]`` into network inputs ``[n, 3, 6, H, W]``."""

    def __init__(self, times=(0.25, 1.0, 4.0), gamma=2.2):
        self.times = times
        self.gamma = gamma

    def fit(self, X, y=None):
        check_ldr_frames(X)
        ExposureStack(frames=[np.zeros((3, 1, 1))] * 3, times=self.times, gamma=self.gamma)
        self.n_frames_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "n_frames_in_")
        frames = check_ldr_frames(X)
        return np.stack([
            make_inputs(ExposureStack(frames=list(f), times=self.times, gamma=self.gamma)).as_array()
            for f in frames
        ])


class MuLawTonemapper(TransformerMixin, BaseEstimator):
    def __init__(self, mu=5000.0):
        self.mu = mu

    def fit(self, X, y=None):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        self.log_norm_ = float(np.log1p(self.mu))
        return self

    def transform(self, X):
        check_is_fitted(self, "log_norm_")
        return mu_law(X, self.mu)

    def inverse_transform(self, X):
        check_is_fitted(self, "log_norm_")
        t = np.asarray(X, dtype=np.float64)
        return (np.expm1(t * self.log_norm_) / self.mu).astype(np.float32)


class PastaHDR(RegressorMixin, BaseEstimator):
    """Deghosting HDR regressor.

    ``X`` is ``[n, 3, 6, H, W]`` (see :class:`ExposureStackTransformer`),
    ``y`` is ``[n, 3, H, W]`` in [0, 1]. ``score`` is the mean mu-law PSNR.
    """

    def __init__(self, variant="pasta-i", tiny=False, sampling="dwt", n_iter=2000, batch_size=2,
                 patch=64, stride=32, learning_rate=2e-4, halve_every=500, random_state=0,
                 warm_start=False):
        self.variant = variant
        self.tiny = tiny
        self.sampling = sampling
        self.n_iter = n_iter
        self.batch_size = batch_size
        self.patch = patch
        self.stride = stride
        self.learning_rate = learning_rate
        self.halve_every = halve_every
        self.random_state = random_state
        self.warm_start = warm_start

    def _model_config(self) -> ModelConfig:
        return ModelConfig.preset(self.variant, self.tiny, sampling=self.sampling)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            patch=self.patch, stride=self.stride, lr=self.learning_rate,
            batch=check_positive_int(self.batch_size, "batch_size"),
            total_iters=check_positive_int(self.n_iter, "n_iter"),
            halve_every=self.halve_every, seed=int(self.random_state),
        )

    def fit(self, X, y):
        X, y = check_stack_array(X), check_hdr_array(y)
        check_consistent(X, y)
        scenes = [Scene(f"sample_{i}", x, t) for i, (x, t) in enumerate(zip(X, y))]
        cfg = self._train_config()
        model = self.model_ if self.warm_start and hasattr(self, "model_") else None
        result = train_loop(scenes, model, cfg, model_config=self._model_config())
        self.model_ = result.model
        self.loss_curve_ = [row["total"] for row in result.history]
        self.n_iter_ = len(result.history)
        return self

    def init_model(self):
        """Untrained network with the configured architecture and seed, for inference-only use."""
        self.model_ = PASTANet(self._model_config(), seed=int(self.random_state))
        self.loss_curve_ = []
        self.n_iter_ = 0
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_stack_array(X)
        return np.concatenate([self.model_.predict(x[None]) for x in X])

    def score(self, X, y, sample_weight=None):
        pred = self.predict(X)
        y = check_hdr_array(y)
        vals = np.array([psnr(p, t, "mu") for p, t in zip(pred, y)])
        return float(np.average(np.minimum(vals, 1e9), weights=sample_weight))
