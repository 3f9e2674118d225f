"""scikit-learn style wrapper: ``fit`` trains, ``predict`` upsamples."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .depth import render_depth
from .lightfield import LightField4D, LightFieldSlice
from .metrics import psnr
from .pipeline import cascade_reconstruct, reconstruct_4d, reconstruct_slice
from .training import TrainConfig, build_dataset, fit, split_validation
from .validation import check_alpha, check_hypotheses

_CONFIG_KEYS = ("alpha", "hypotheses", "learning_rate", "batch_size", "epochs", "max_steps", "patch_width",
                "patch_height", "base_channels", "pack_count", "structure", "seed", "val_fraction")


class GeoNI(BaseEstimator):
    """Geometry-aware angular super-resolution of light fields.

    ``fit`` takes a list of :class:`LightField4D` (or directories) and trains
    the NI and DIBR networks jointly. ``predict`` accepts a slice or a 4D
    light field and returns the upsampled result of the same type.
    """

    def __init__(self, alpha=4, hypotheses=(-16.0, -12.0, -8.0, -4.0, 0.0, 4.0, 8.0, 12.0, 16.0), *,
                 learning_rate=1e-4, batch_size=8, epochs=200, max_steps=None, patch_width=128,
                 patch_height=18, base_channels=16, pack_count=2, structure="pack", seed=0,
                 val_fraction=0.05, cascade=1, order="st"):
        self.alpha = alpha
        self.hypotheses = hypotheses
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.max_steps = max_steps
        self.patch_width = patch_width
        self.patch_height = patch_height
        self.base_channels = base_channels
        self.pack_count = pack_count
        self.structure = structure
        self.seed = seed
        self.val_fraction = val_fraction
        self.cascade = cascade
        self.order = order

    def _config(self) -> TrainConfig:
        values = {k: getattr(self, k) for k in _CONFIG_KEYS}
        values["hypotheses"] = list(values["hypotheses"])
        return TrainConfig(**values)

    def _check_fitted(self):
        if not hasattr(self, "ni_"):
            raise NotFittedError("call fit() or set_networks() first")

    def fit(self, X, y=None):
        """Train on light fields ``X``; ``y`` is ignored (labels are the dense views)."""
        if isinstance(X, (LightField4D, str)):
            X = [X]
        X = list(X)
        if not X:
            raise ValueError("fit() needs at least one light field")
        config = self._config()
        samples = build_dataset(X, config)
        train_set, val_set = split_validation(samples, config.val_fraction, config.seed)
        result = fit(train_set, config, val_samples=val_set or None)
        self.ni_, self.dibr_ = result.ni, result.dibr
        self.history_ = result.history
        return self

    def set_networks(self, ni, dibr):
        """Use pretrained networks (e.g. from :func:`load_checkpoint`) without training."""
        if ni.spec.alpha != self.alpha:
            raise ValueError(f"NI network was built for alpha={ni.spec.alpha}, estimator has alpha={self.alpha}")
        self.ni_, self.dibr_ = ni, dibr
        return self

    def predict(self, X):
        self._check_fitted()
        alpha = check_alpha(self.alpha)
        hyps = check_hypotheses(self.hypotheses)
        if isinstance(X, LightField4D):
            return reconstruct_4d(X, hyps, self.ni_, self.dibr_, alpha, order=self.order, cascade=self.cascade)
        sl = X if isinstance(X, LightFieldSlice) else LightFieldSlice(np.asarray(X, dtype=np.float32))
        if self.cascade > 1:
            return cascade_reconstruct(sl, self.cascade, hyps, self.ni_, self.dibr_, alpha)
        return reconstruct_slice(sl, hyps, self.ni_, self.dibr_, alpha).slice

    transform = predict

    def render_depth(self, X) -> np.ndarray:
        """Per-view disparity of a slice ``(W, H, A', )`` from the learned cost volume."""
        self._check_fitted()
        hyps = check_hypotheses(self.hypotheses)
        sl = X if isinstance(X, LightFieldSlice) else LightFieldSlice(np.asarray(X, dtype=np.float32))
        r = reconstruct_slice(sl, hyps, self.ni_, self.dibr_, check_alpha(self.alpha))
        return render_depth(r.costs, hyps)

    def score(self, X, y) -> float:
        """PSNR of ``predict(X)`` against the dense ground truth ``y``."""
        pred = self.predict(X)
        truth = y.data if isinstance(y, (LightField4D, LightFieldSlice)) else np.asarray(y)
        return psnr(pred.data, truth)
