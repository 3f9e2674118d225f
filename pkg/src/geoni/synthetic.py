"""Synthetic Lambertian scenes with known, constant disparity."""

from __future__ import annotations

import numpy as np
import torch
from scipy.ndimage import gaussian_filter, map_coordinates

from .lightfield import LightField4D, LightFieldSlice


def random_texture(width: int, height: int, seed: int = 0, blur: float = 1.0,
                   low: float = 0.1, high: float = 0.9) -> np.ndarray:
    """Band-limited noise texture ``(width, height)`` rescaled to ``[low, high]``.

    ``blur`` is the Gaussian sigma in pixels; values around one keep enough
    high-frequency content to alias under sparse angular sampling.
    """
    rng = np.random.default_rng(seed)
    tex = rng.random((width, height))
    if blur > 0:
        tex = gaussian_filter(tex, blur, mode="wrap")
    tex = (tex - tex.min()) / max(tex.max() - tex.min(), 1e-12)
    return low + (high - low) * tex


def translating_texture(width: int, height: int, views: int, disparity: float,
                        seed: int = 0, blur: float = 1.0, texture: np.ndarray | None = None) -> np.ndarray:
    """``(width, height, views)`` slice whose view ``s`` is the texture shifted by ``disparity * s``.

    ``L(x, y, s) = T(x - disparity * s, y)``, so EPI lines have slope
    ``disparity`` and a shear by ``d = disparity`` makes every EPI column
    constant. The texture is sampled wide enough that no view has blank
    borders; fractional positions are linearly interpolated.
    """
    span = int(np.ceil(abs(disparity) * (views - 1))) + 2
    if texture is None:
        texture = random_texture(width + 2 * span, height, seed=seed, blur=blur)
    offset = span
    xs = np.arange(width, dtype=np.float64)
    out = np.empty((width, height, views))
    grid = np.arange(texture.shape[0], dtype=np.float64)
    for s in range(views):
        pos = xs - disparity * s + offset
        for y in range(height):
            out[:, y, s] = np.interp(pos, grid, texture[:, y])
    return out


def constant_disparity_scene(width: int, height: int, input_views: int, alpha: int, disparity: float,
                             seed: int = 0, blur: float = 1.0):
    """Dense ground truth and its sparse input for a constant-disparity slice.

    ``disparity`` is measured between adjacent *input* views; the dense
    ``alpha * (input_views - 1) + 1`` view ground truth therefore has
    disparity ``disparity / alpha``. Returns ``(sparse, dense)`` slices.
    """
    dense_views = alpha * (input_views - 1) + 1
    dense = translating_texture(width, height, dense_views, disparity / alpha, seed=seed, blur=blur)
    dense = dense[..., None].astype(np.float32)
    sparse = dense[:, :, ::alpha]
    return LightFieldSlice(sparse), LightFieldSlice(dense)


def constant_disparity_lightfield(width: int, height: int, views_s: int, views_t: int, disparity: float,
                                  seed: int = 0, blur: float = 1.0, rgb: bool = False) -> LightField4D:
    """4D fronto-parallel plane: view ``(s, t)`` shifts ``x`` by ``disparity*s`` and ``y`` by ``disparity*t``."""
    rng = np.random.default_rng(seed)
    channels = 3 if rgb else 1
    span = int(np.ceil(abs(disparity) * (max(views_s, views_t) - 1))) + 2
    tex = np.stack(
        [random_texture(width + 2 * span, height + 2 * span, seed=int(rng.integers(1 << 31)), blur=blur)
         for _ in range(channels)],
        axis=-1,
    )
    xs = np.arange(width) + span
    ys = np.arange(height) + span
    out = np.empty((width, height, views_s, views_t, channels))
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    for s in range(views_s):
        for t in range(views_t):
            cx = gx - disparity * s
            cy = gy - disparity * t
            for c in range(channels):
                out[:, :, s, t, c] = map_coordinates(tex[..., c], [cx, cy], order=1, mode="nearest")
    return LightField4D(out.astype(np.float32), color_space="rgb" if rgb else "y")


def oracle_cost_fn(disparity: float, gap: float = 10.0):
    """Cost function that knows the answer: 0 at ``disparity``, ``gap`` elsewhere.

    Drop-in for the DIBR network through the ``cost_fn`` hook of the
    pipeline. ``disparity`` must be one of the hypotheses.
    """
    def cost_fn(stack, hypotheses):
        hypotheses = torch.as_tensor(hypotheses)
        if not bool((hypotheses == disparity).any()):
            raise ValueError(f"oracle disparity {disparity} is not among the hypotheses")
        costs = torch.full_like(stack, float(gap))
        costs[hypotheses == disparity] = 0.0
        return costs

    return cost_fn
