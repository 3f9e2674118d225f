"""Neural interpolation (NI) and DIBR cost networks.

Both networks share a packing/unpacking encoder-decoder:

    Conv1 -> Pack x pack_count -> bottleneck x K -> [DeConv] -> Unpack x pack_count -> Conv5

The NI network (``K = 1``) inserts an angular transposed convolution that
takes ``A`` views to ``alpha * (A - 1) + 1``; the DIBR network (``K = 2``)
keeps the angular resolution and outputs one cost per pixel.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .packing import (
    LEAKY_SLOPE,
    SHUFFLE_CONVENTION,
    PackingBlock,
    ResidualModule,
    UnpackingBlock,
    to_channels_first,
    to_channels_last,
)

INIT_STD = 1e-2
STRUCTURES = ("pack", "unet")


@dataclass
class NiNetworkSpec:
    alpha: int = 4
    base_channels: int = 16
    pack_count: int = 2
    bottleneck_blocks: int = 1
    structure: str = "pack"

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 2:
            raise ValueError(f"alpha must be an integer >= 2, got {self.alpha}")
        _check_common(self)

    def output_views(self, views: int) -> int:
        return self.alpha * (views - 1) + 1


@dataclass
class DibrNetworkSpec:
    base_channels: int = 16
    pack_count: int = 2
    bottleneck_blocks: int = 2
    structure: str = "pack"

    def __post_init__(self):
        _check_common(self)


def _check_common(spec):
    if spec.base_channels < 1 or spec.pack_count < 0 or spec.bottleneck_blocks < 0:
        raise ValueError(f"invalid network spec {spec}")
    if spec.structure not in STRUCTURES:
        raise ValueError(f"structure must be one of {STRUCTURES}, got {spec.structure!r}")


class _PlainBlock(nn.Module):
    """Two convolutions without the residual path (U-net ablation)."""

    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv3d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv3d(channels, channels, 3, padding=1)

    def forward(self, x):
        return self.conv2(F.leaky_relu(self.conv1(x), LEAKY_SLOPE))


class _Down(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv3d(channels, 2 * channels, 3, stride=(2, 1, 1), padding=1)
        self.block = _PlainBlock(2 * channels)

    def forward(self, x):
        return self.block(F.leaky_relu(self.conv(x), LEAKY_SLOPE))


class _Up(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.deconv = nn.ConvTranspose3d(channels, channels // 2, (4, 3, 3), stride=(2, 1, 1), padding=1)
        self.block = _PlainBlock(channels // 2)

    def forward(self, x):
        return self.block(F.leaky_relu(self.deconv(x), LEAKY_SLOPE))


class _EncoderDecoder(nn.Module):
    def __init__(self, base_channels, pack_count, bottleneck_blocks, structure, alpha=None):
        super().__init__()
        c = base_channels
        cb = c * 2**pack_count
        self.pack_count = pack_count
        self.structure = structure
        self.alpha = alpha
        self.conv1 = nn.Conv3d(1, c, 3, padding=1)
        if structure == "pack":
            self.encoder = nn.ModuleList([PackingBlock(c * 2**i) for i in range(pack_count)])
            self.decoder = nn.ModuleList([UnpackingBlock(cb // 2**i) for i in range(pack_count)])
        else:
            self.encoder = nn.ModuleList([_Down(c * 2**i) for i in range(pack_count)])
            self.decoder = nn.ModuleList([_Up(cb // 2**i) for i in range(pack_count)])
        self.bottleneck = nn.ModuleList(
            [ResidualModule(cb, kernel=(3, 1, 3)) for _ in range(bottleneck_blocks)]
        )
        if alpha is not None:
            self.deconv = nn.ConvTranspose3d(
                cb, cb, (5, 1, 2 * alpha + 1), stride=(1, 1, alpha), padding=(2, 0, alpha)
            )
        else:
            self.deconv = None
        self.conv5 = nn.Conv3d(c, 1, 3, padding=1)

    @property
    def width_multiple(self) -> int:
        return 2**self.pack_count

    def forward(self, x):
        """Channel-last ``(B, W, H, A, 1)`` in, ``(B, W, H, A', 1)`` out."""
        if x.ndim != 5 or x.shape[-1] != 1:
            raise ValueError(f"expected (B, W, H, A, 1) input, got {tuple(x.shape)}")
        if x.shape[1] % self.width_multiple:
            raise ValueError(f"width {x.shape[1]} is not divisible by {self.width_multiple}")
        h = F.leaky_relu(self.conv1(to_channels_first(x)), LEAKY_SLOPE)
        skips = []
        for block in self.encoder:
            skips.append(h)
            h = block(h)
        for block in self.bottleneck:
            h = block(h)
        if self.deconv is not None:
            h = F.leaky_relu(self.deconv(h), LEAKY_SLOPE)
        for block in self.decoder:
            h = block(h)
            if self.structure == "unet":
                skip = skips.pop()
                if skip.shape[-1] != h.shape[-1]:
                    # angular resolution changed in the bottleneck; upsample the skip
                    skip = _angular_linear(skip, self.alpha)
                h = h + skip
        return to_channels_last(self.conv5(h))


def _angular_linear(h, alpha):
    a = h.shape[-1]
    weights = torch.as_tensor(angular_interp_matrix(a, alpha), dtype=h.dtype, device=h.device)
    return torch.einsum("bcwhi,io->bcwho", h, weights)


def angular_interp_matrix(views: int, alpha: int) -> np.ndarray:
    """``(A, alpha*(A-1)+1)`` matrix of linear angular interpolation weights."""
    out = alpha * (views - 1) + 1
    m = np.zeros((views, out))
    for j in range(out):
        i, r = divmod(j, alpha)
        f = r / alpha
        m[i, j] += 1.0 - f
        if f:
            m[i + 1, j] += f
    return m


class NiNetwork(_EncoderDecoder):
    def __init__(self, spec: NiNetworkSpec):
        super().__init__(spec.base_channels, spec.pack_count, spec.bottleneck_blocks, spec.structure, alpha=spec.alpha)
        self.spec = spec


class DibrNetwork(_EncoderDecoder):
    def __init__(self, spec: DibrNetworkSpec):
        super().__init__(spec.base_channels, spec.pack_count, spec.bottleneck_blocks, spec.structure)
        self.spec = spec


def init_parameters(net: nn.Module, seed: int) -> nn.Module:
    """Weights ~ N(0, 1e-2), biases zero, drawn from a private generator."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * INIT_STD)
    return net


def build_ni_network(spec: NiNetworkSpec, seed: int = 0) -> NiNetwork:
    return init_parameters(NiNetwork(spec), seed)


def build_dibr_network(spec: DibrNetworkSpec, seed: int = 0) -> DibrNetwork:
    return init_parameters(DibrNetwork(spec), seed)


def ni_forward(params: NiNetwork, batch: torch.Tensor) -> torch.Tensor:
    """``(B, W, H, A, 1) -> (B, W, H, alpha*(A-1)+1, 1)``."""
    return params(batch)


def dibr_forward(params: DibrNetwork, batch: torch.Tensor) -> torch.Tensor:
    """Per-pixel reconstruction cost, same shape as ``batch``."""
    return params(batch)


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def save_checkpoint(net: _EncoderDecoder, path) -> Path:
    """Write ``<path>.npz`` (layer name -> array) and ``<path>.json`` manifest."""
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    np.savez(path, **arrays)
    kind = "ni" if isinstance(net, NiNetwork) else "dibr"
    manifest = {"kind": kind, "spec": asdict(net.spec), "shuffle_convention": SHUFFLE_CONVENTION}
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2))
    return path


def load_checkpoint(path) -> _EncoderDecoder:
    path = Path(path)
    if path.suffix not in (".npz", ".json"):
        path = path.with_suffix(".npz")
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("shuffle_convention") != SHUFFLE_CONVENTION:
        raise ValueError(
            f"checkpoint uses shuffle convention {manifest.get('shuffle_convention')}, "
            f"this build uses {SHUFFLE_CONVENTION}"
        )
    if manifest["kind"] == "ni":
        net = NiNetwork(_spec_from(NiNetworkSpec, manifest["spec"]))
    elif manifest["kind"] == "dibr":
        net = DibrNetwork(_spec_from(DibrNetworkSpec, manifest["spec"]))
    else:
        raise ValueError(f"unknown checkpoint kind {manifest['kind']!r}")
    with np.load(path.with_suffix(".npz")) as data:
        state = {k: torch.from_numpy(data[k]) for k in data.files}
    net.load_state_dict(state)
    return net


def _spec_from(cls, values: dict):
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in values.items() if k in names})
