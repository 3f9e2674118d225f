"""Pixel shuffling along the first spatial axis and packing/unpacking blocks.

Public functions take channel-last feature tensors ``(B, W, H, A, C)``. The
``nn.Module`` blocks work channel-first, ``(B, C, W, H, A)``, as ``Conv3d``
expects; :func:`to_channels_first` / :func:`to_channels_last` convert.

Channel layout of a fold-``r`` shuffle: output channel ``c * r + (x mod r)``,
i.e. the spatial phase is interleaved innermost.
"""

from __future__ import annotations

import torch
from torch import nn
import torch.nn.functional as F

#: Bumped whenever the shuffle channel layout changes; stored in checkpoints.
SHUFFLE_CONVENTION = 1

LEAKY_SLOPE = 0.2


def to_channels_first(f: torch.Tensor) -> torch.Tensor:
    return f.permute(0, 4, 1, 2, 3)


def to_channels_last(f: torch.Tensor) -> torch.Tensor:
    return f.permute(0, 2, 3, 4, 1)


def s2c_cf(f: torch.Tensor, fold: int) -> torch.Tensor:
    b, c, w, h, a = f.shape
    if w % fold:
        raise ValueError(f"width {w} is not divisible by fold {fold}")
    f = f.reshape(b, c, w // fold, fold, h, a)
    f = f.permute(0, 1, 3, 2, 4, 5)
    return f.reshape(b, c * fold, w // fold, h, a)


def c2s_cf(f: torch.Tensor, fold: int) -> torch.Tensor:
    b, c, w, h, a = f.shape
    if c % fold:
        raise ValueError(f"channel count {c} is not divisible by fold {fold}")
    f = f.reshape(b, c // fold, fold, w, h, a)
    f = f.permute(0, 1, 3, 2, 4, 5)
    return f.reshape(b, c // fold, w * fold, h, a)


def s2c_shuffle(f: torch.Tensor, fold: int) -> torch.Tensor:
    """Spatial-to-channel shuffle: ``(B, W, H, A, C) -> (B, W/fold, H, A, fold*C)``."""
    return to_channels_last(s2c_cf(to_channels_first(f), fold))


def c2s_shuffle(f: torch.Tensor, fold: int) -> torch.Tensor:
    """Channel-to-spatial shuffle: ``(B, W, H, A, C) -> (B, W*fold, H, A, C/fold)``."""
    return to_channels_last(c2s_cf(to_channels_first(f), fold))


class ResidualModule(nn.Module):
    """``x + conv2(leaky_relu(conv1(x)))`` with same padding."""

    def __init__(self, channels: int, kernel=(3, 3, 3)):
        super().__init__()
        pad = tuple(k // 2 for k in kernel)
        self.channels = channels
        self.conv1 = nn.Conv3d(channels, channels, kernel, padding=pad)
        self.conv2 = nn.Conv3d(channels, channels, kernel, padding=pad)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[1]}")
        return x + self.conv2(F.leaky_relu(self.conv1(x), LEAKY_SLOPE))


class PackingBlock(nn.Module):
    """S2C shuffle then a residual module; ``C -> fold * C`` channels."""

    def __init__(self, in_channels: int, fold: int = 2):
        super().__init__()
        self.fold = fold
        self.residual = ResidualModule(in_channels * fold)

    def forward(self, x):
        return self.residual(s2c_cf(x, self.fold))


class UnpackingBlock(nn.Module):
    """C2S shuffle then a residual module; ``C -> C / fold`` channels."""

    def __init__(self, in_channels: int, fold: int = 2):
        super().__init__()
        if in_channels % fold:
            raise ValueError(f"{in_channels} channels cannot be unpacked by {fold}")
        self.fold = fold
        self.residual = ResidualModule(in_channels // fold)

    def forward(self, x):
        return self.residual(c2s_cf(x, self.fold))


def residual_module(f: torch.Tensor, params: ResidualModule) -> torch.Tensor:
    """Apply ``params`` to a channel-last feature tensor."""
    return to_channels_last(params(to_channels_first(f)))


def packing_block(f: torch.Tensor, params: PackingBlock) -> torch.Tensor:
    return to_channels_last(params(to_channels_first(f)))


def unpacking_block(f: torch.Tensor, params: UnpackingBlock) -> torch.Tensor:
    return to_channels_last(params(to_channels_first(f)))
