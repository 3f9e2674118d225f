"""Input checking shared by the pipeline, estimator and CLI."""

from __future__ import annotations

import numpy as np
import torch

from .lightfield import LightFieldSlice


def check_hypotheses(hypotheses) -> np.ndarray:
    """Return the shear hypotheses as a float array, checking the set's invariants.

    The set must be non-empty, strictly increasing and contain 0.
    """
    d = np.asarray(hypotheses, dtype=np.float64).reshape(-1)
    if d.size == 0:
        raise ValueError("hypothesis set is empty")
    if not np.all(np.isfinite(d)):
        raise ValueError("hypothesis set contains non-finite values")
    if np.any(np.diff(d) <= 0):
        raise ValueError(f"hypotheses must be strictly increasing, got {d.tolist()}")
    if not np.any(d == 0):
        raise ValueError(f"hypothesis set must contain 0, got {d.tolist()}")
    return d


def check_alpha(alpha) -> int:
    if int(alpha) != alpha or alpha < 1:
        raise ValueError(f"alpha must be a positive integer, got {alpha}")
    return int(alpha)


def as_slice_batch(x, dtype=None) -> torch.Tensor:
    """Coerce a slice, array or tensor into a ``(B, W, H, A, 1)`` tensor."""
    if isinstance(x, LightFieldSlice):
        x = x.data
    if not torch.is_tensor(x):
        x = torch.from_numpy(np.ascontiguousarray(x))
    if x.ndim == 3:
        x = x[..., None]
    if x.ndim == 4:
        x = x[None]
    if x.ndim != 5 or x.shape[-1] != 1:
        raise ValueError(f"expected a (B, W, H, A, 1) luminance batch, got {tuple(x.shape)}")
    if dtype is not None:
        x = x.to(dtype)
    elif not x.is_floating_point():
        x = x.to(torch.float32)
    if not torch.isfinite(x).all():
        raise ValueError("slice contains non-finite values")
    return x
