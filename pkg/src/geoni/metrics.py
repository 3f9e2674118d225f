"""PSNR and SSIM on luminance slices, optionally restricted to a validity mask."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .lightfield import LightFieldSlice

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11x11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _data(x) -> np.ndarray:
    if isinstance(x, LightFieldSlice):
        x = x.data
    return np.asarray(x, dtype=np.float64)


def _mask_like(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(mask).astype(bool)
    return np.broadcast_to(m, shape)


def psnr(a, b, mask=None, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)`` over masked pixels; ``inf`` when MSE is zero."""
    a, b = _data(a), _data(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    m = _mask_like(mask, a.shape)
    if not m.any():
        raise ValueError("mask selects no pixels")
    mse = np.mean((a[m] - b[m]) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(peak**2 / mse))


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Gaussian-window SSIM map of two 2D images (population statistics)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    def filt(x):
        return gaussian_filter(x, SSIM_SIGMA, mode="reflect", truncate=SSIM_RADIUS / SSIM_SIGMA)

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, mask=None) -> float:
    """Mean SSIM: per view over masked pixels, then over views.

    Inputs are ``(W, H, A, 1)`` slices (or ``(W, H, A)`` / ``(W, H)``
    arrays). Views without any masked pixel are skipped.
    """
    a, b = _data(a), _data(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 4:
        a, b = a[..., 0], b[..., 0]
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if mask is None:
        m = np.ones(a.shape, dtype=bool)
    else:
        m = np.asarray(mask).astype(bool)
        if m.ndim == 4:
            m = m[..., 0]
        elif m.ndim == 2:
            m = m[..., None]
        m = np.broadcast_to(m, a.shape)
    if np.array_equal(a, b):
        return 1.0
    scores = []
    for v in range(a.shape[2]):
        mv = m[:, :, v]
        if not mv.any():
            continue
        scores.append(ssim_map(a[:, :, v], b[:, :, v])[mv].mean())
    if not scores:
        raise ValueError("mask selects no pixels")
    return float(np.mean(scores))


def psnr_y(a, b, mask=None) -> float:
    return psnr(a, b, mask)


def ssim_y(a, b, mask=None) -> float:
    return ssim(a, b, mask)
