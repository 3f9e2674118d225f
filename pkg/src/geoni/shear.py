"""Shearing of 3D light-field slices along the first spatial axis.

A shear by ``d`` resamples view ``s`` of an ``S``-view slice at
``x + (s - c) * d`` where the centre ``c`` defaults to ``S / 2``. Sub-pixel
positions are linearly interpolated along ``x``; samples whose taps leave
``[0, W - 1]`` are zero and flagged invalid.
"""

from __future__ import annotations

import numpy as np
import torch

from .lightfield import LightFieldSlice


def shear_tensor(x: torch.Tensor, d, center=None):
    """Shear a batch of slices.

    Parameters
    ----------
    x : tensor of shape (N, W, H, A, C)
    d : float or sequence/tensor of N shear amounts
    center : angular centre of the shear, defaults to ``A / 2``

    Returns
    -------
    out : tensor like ``x``
    mask : bool tensor of shape (N, W, 1, A, 1)
    """
    n, w, h, a, c = x.shape
    d = torch.as_tensor(d, dtype=torch.float64).reshape(-1)
    if d.numel() == 1 and n != 1:
        d = d.expand(n)
    if d.numel() != n:
        raise ValueError(f"got {d.numel()} shear amounts for a batch of {n}")
    if center is None:
        center = a / 2.0
    views = torch.arange(a, dtype=torch.float64)
    shifts = (views[None, :] - center) * d[:, None]  # (N, A)
    k = torch.floor(shifts)
    frac = shifts - k
    k = k.to(torch.long)

    cols = torch.arange(w)
    i0 = cols[None, :, None] + k[:, None, :]  # (N, W, A)
    i1 = i0 + 1
    exact = (frac == 0)[:, None, :]
    valid = (i0 >= 0) & (i0 < w) & (exact | ((i1 >= 0) & (i1 < w)))

    def take(idx):
        idx = idx.clamp(0, w - 1).to(x.device)
        idx = idx[:, :, None, :, None].expand(n, w, h, a, c)
        return torch.gather(x, 1, idx)

    f = frac.to(dtype=x.dtype, device=x.device)[:, None, None, :, None]
    out = (1 - f) * take(i0) + f * take(i1)
    mask = valid[:, :, None, :, None].to(x.device)
    out = torch.where(mask, out, torch.zeros((), dtype=x.dtype, device=x.device))
    return out, mask


def inverse_shear_tensor(x: torch.Tensor, d, alpha: int):
    """Undo a shear by ``d`` after ``alpha``-fold angular upsampling.

    The shear amount is ``-d / alpha``. The centre is the upsampled position
    of the forward centre, ``alpha * S / 2`` with ``S = (A' - 1) / alpha + 1``
    input views, so that view ``s' = alpha * s`` is shifted back by exactly
    the amount view ``s`` was shifted forward. For ``alpha = 1`` this is the
    plain ``A' / 2`` centre.
    """
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    a_out = x.shape[3]
    center = (a_out - 1 + alpha) / 2.0
    d = torch.as_tensor(d, dtype=torch.float64).reshape(-1)
    return shear_tensor(x, -d / alpha, center=center)


def _as_batch(sl: LightFieldSlice) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(sl.data))[None]


def shear(sl: LightFieldSlice, d: float) -> tuple[LightFieldSlice, np.ndarray]:
    """Shear a slice by ``d``; returns the sheared slice and its validity mask.

    The mask has the slice's shape and holds 1 where the output carries
    scene content and 0 in the zero-filled border.
    """
    out, mask = shear_tensor(_as_batch(sl), d)
    mask = mask.expand_as(out)[0].numpy().astype(np.uint8)
    return LightFieldSlice(out[0].numpy(), axis=sl.axis, index=sl.index), mask


def inverse_shear(sl: LightFieldSlice, d: float, alpha: int) -> tuple[LightFieldSlice, np.ndarray]:
    """Inverse shear of an ``alpha``-fold upsampled slice, amount ``-d / alpha``."""
    out, mask = inverse_shear_tensor(_as_batch(sl), d, alpha)
    mask = mask.expand_as(out)[0].numpy().astype(np.uint8)
    return LightFieldSlice(out[0].numpy(), axis=sl.axis, index=sl.index), mask
