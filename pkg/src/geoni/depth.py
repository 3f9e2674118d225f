"""Depth rendering from reconstruction cost volumes."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from .lightfield import LightFieldSlice
from .validation import check_hypotheses


def _softmin(costs: np.ndarray, masks=None) -> np.ndarray:
    logits = -np.asarray(costs, dtype=np.float64)
    if masks is not None:
        logits = logits - 1e4 * (1 - np.asarray(masks, dtype=np.float64))
    logits = logits - logits.max(axis=0, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=0, keepdims=True)


def render_depth(costs, hypotheses, masks=None) -> np.ndarray:
    """Soft-argmin disparity ``sum_d d * softmin_d(C_d)``.

    ``costs`` is ``(D, W, H, A', 1)`` (a trailing channel axis is dropped).
    Optional ``masks`` apply the same invalid-pixel penalty as blending.
    Returns ``(W, H, A')`` disparities in pixels per view.
    """
    d = check_hypotheses(hypotheses)
    costs = np.asarray(costs)
    if costs.shape[0] != d.size:
        raise ValueError(f"cost volume has {costs.shape[0]} hypotheses, expected {d.size}")
    w = _softmin(costs, masks)
    contrib = d.reshape((-1,) + (1,) * (w.ndim - 1)) * w
    # pair the i-th and mirrored terms so symmetric sets with equal weights cancel exactly
    depth = 0.5 * (contrib + contrib[::-1]).sum(axis=0)
    if depth.shape[-1] == 1:
        depth = depth[..., 0]
    return depth


def guided_filter(guide: np.ndarray, src: np.ndarray, radius: int, eps: float) -> np.ndarray:
    """Edge-preserving smoothing of 2D ``src`` steered by 2D ``guide`` (He et al.)."""
    if radius <= 0:
        return np.array(src, dtype=np.float64, copy=True)
    size = 2 * radius + 1

    def box(a):
        return uniform_filter(a, size=size, mode="reflect")

    guide = np.asarray(guide, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    mean_i = box(guide)
    mean_p = box(src)
    cov_ip = box(guide * src) - mean_i * mean_p
    var_i = box(guide * guide) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return box(a) * guide + box(b)


def filter_cost_volume(costs, guide, radius: int = 8, eps: float = 1e-3) -> np.ndarray:
    """Guided-filter each hypothesis/view cost map with the matching view of ``guide``.

    ``costs`` is ``(D, W, H, A', 1)``; ``guide`` a slice with ``A'`` views.
    """
    costs = np.asarray(costs, dtype=np.float64)
    g = guide.data if isinstance(guide, LightFieldSlice) else np.asarray(guide)
    if g.ndim == 4:
        g = g[..., 0]
    if g.shape != costs.shape[1:4]:
        raise ValueError(f"guide shape {g.shape} does not match cost maps {costs.shape[1:4]}")
    if radius <= 0:
        return costs.copy()
    out = np.empty_like(costs)
    for k in range(costs.shape[0]):
        for v in range(costs.shape[3]):
            out[k, :, :, v, 0] = guided_filter(g[:, :, v], costs[k, :, :, v, 0], radius, eps)
    return out
