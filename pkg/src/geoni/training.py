"""Training data extraction, the two-term masked L1 objective and the Adam loop."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .lightfield import LightField4D, load_lightfield, to_luminance
from .networks import (
    DibrNetworkSpec,
    NiNetworkSpec,
    build_dibr_network,
    build_ni_network,
    save_checkpoint,
)
from .pipeline import geo_ni_forward
from .shear import shear_tensor
from .validation import check_hypotheses

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


@dataclass
class TrainConfig:
    alpha: int = 4
    hypotheses: list = field(default_factory=lambda: [-16.0, -12.0, -8.0, -4.0, 0.0, 4.0, 8.0, 12.0, 16.0])
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 8
    epochs: int = 200
    max_steps: int | None = None
    patch_width: int = 128
    patch_height: int = 18
    stride: int = 40
    augment_shears: list = field(default_factory=lambda: [-2.0, 2.0])
    seed: int = 0
    val_fraction: float = 0.05
    grad_clip: float = 10.0
    checkpoint_every: int = 10
    ni_pretrain_epochs: int = 0
    base_channels: int = 16
    pack_count: int = 2
    structure: str = "pack"
    use_t_slices: bool = True

    def __post_init__(self):
        self.hypotheses = [float(d) for d in check_hypotheses(self.hypotheses)]
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patch_width % 2**self.pack_count:
            raise ValueError(f"patch width {self.patch_width} must be divisible by {2 ** self.pack_count}")
        if int(self.alpha) != self.alpha or self.alpha < 2:
            raise ValueError(f"alpha must be an integer >= 2, got {self.alpha}")

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    def ni_spec(self) -> NiNetworkSpec:
        return NiNetworkSpec(alpha=self.alpha, base_channels=self.base_channels,
                             pack_count=self.pack_count, structure=self.structure)

    def dibr_spec(self) -> DibrNetworkSpec:
        return DibrNetworkSpec(base_channels=self.base_channels, pack_count=self.pack_count,
                               structure=self.structure)


@dataclass
class TrainSample:
    """One patch: sparse input, dense label and the label's validity mask."""

    input: np.ndarray  # (W, H, A_in, 1)
    label: np.ndarray  # (W, H, A_out, 1)
    mask: np.ndarray  # (W, H, A_out, 1) bool
    source: str = ""


def label_window(views: int, alpha: int) -> tuple[int, int]:
    """Largest ``alpha*(n-1)+1`` view window that fits, centred: ``(offset, length)``."""
    n_in = (views - 1) // alpha + 1
    length = alpha * (n_in - 1) + 1
    if n_in < 2:
        raise ValueError(f"too few views: {views} views cannot supply alpha={alpha} training labels")
    return (views - length) // 2, length


def _patch_starts(size: int, patch: int, stride: int) -> list[int]:
    if size <= patch:
        return [0]
    return list(range(0, size - patch + 1, stride))


def slices_for_training(lf: LightField4D, use_t_slices: bool = True) -> list[np.ndarray]:
    """Luminance slices ``(W, H, A, 1)`` along ``s`` and (optionally) ``t``."""
    y = to_luminance(lf).data
    out = [y[:, :, :, t] for t in range(y.shape[3])]
    if use_t_slices:
        out += [np.transpose(y[:, :, s], (1, 0, 2, 3)) for s in range(y.shape[2])]
    return [sl for sl in out if sl.shape[2] > 1]


def samples_from_slice(label_slice: np.ndarray, config: TrainConfig, source: str = "") -> list[TrainSample]:
    """Original plus shear-augmented copies of one slice, tiled into patches."""
    alpha = config.alpha
    offset, length = label_window(label_slice.shape[2], alpha)
    base = torch.from_numpy(np.ascontiguousarray(label_slice[:, :, offset:offset + length], dtype=np.float32))
    variants = [(base, torch.ones(base.shape, dtype=torch.bool))]
    for d in config.augment_shears:
        sheared, mask = shear_tensor(base[None], d)
        variants.append((sheared[0], mask[0].expand_as(sheared[0])))

    multiple = 2**config.pack_count
    w, h = base.shape[0], base.shape[1]
    pw = min(config.patch_width, w - w % multiple)
    ph = min(config.patch_height, h)
    if pw < multiple:
        raise ValueError(f"slice width {w} is too small for patches")
    samples = []
    for k, (label, mask) in enumerate(variants):
        label, mask = label.numpy(), mask.numpy()
        for x0 in _patch_starts(w, pw, config.stride):
            for y0 in _patch_starts(h, ph, config.stride):
                lab = label[x0:x0 + pw, y0:y0 + ph]
                m = mask[x0:x0 + pw, y0:y0 + ph]
                if not m.any():
                    continue
                samples.append(TrainSample(
                    input=np.ascontiguousarray(lab[:, :, ::alpha]),
                    label=np.ascontiguousarray(lab),
                    mask=np.ascontiguousarray(m),
                    source=f"{source}/v{k}/x{x0}/y{y0}",
                ))
    return samples


def build_dataset(lf_dirs, config: TrainConfig) -> list[TrainSample]:
    """All training patches of the given light fields, in deterministic order.

    ``lf_dirs`` may mix directory paths and in-memory :class:`LightField4D`.
    """
    sources = []
    for i, src in enumerate(lf_dirs):
        lf = src if isinstance(src, LightField4D) else load_lightfield(src)
        name = f"lf{i}" if isinstance(src, LightField4D) else Path(src).name
        sources.append((name, slices_for_training(lf, config.use_t_slices)))
    # slices smaller than the patch shrink it for everyone, so batches stay rectangular
    all_slices = [sl for _, sls in sources for sl in sls]
    if all_slices:
        multiple = 2**config.pack_count
        pw = min([config.patch_width] + [sl.shape[0] - sl.shape[0] % multiple for sl in all_slices])
        ph = min([config.patch_height] + [sl.shape[1] for sl in all_slices])
        if (pw, ph) != (config.patch_width, config.patch_height):
            log.info("patch size reduced to %dx%d to fit the smallest slice", pw, ph)
            config = replace(config, patch_width=max(pw, multiple), patch_height=ph)
    samples = []
    for name, sls in sources:
        for j, sl in enumerate(sls):
            samples.extend(samples_from_slice(sl, config, source=f"{name}/slice{j}"))
    if not samples:
        raise ValueError("dataset is empty")
    return samples


def split_validation(samples: list[TrainSample], fraction: float, seed: int):
    """Hold out roughly ``fraction`` of the patches by a seeded hash of their id."""
    train, val = [], []
    for s in samples:
        digest = hashlib.sha256(f"{seed}:{s.source}".encode()).digest()
        u = int.from_bytes(digest[:8], "little") / 2**64
        (val if u < fraction else train).append(s)
    if not train:
        train, val = val, []
    return train, val


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def collate(samples: list[TrainSample], dtype=torch.float32):
    x = torch.from_numpy(np.stack([s.input for s in samples])).to(dtype)
    y = torch.from_numpy(np.stack([s.label for s in samples])).to(dtype)
    m = torch.from_numpy(np.stack([s.mask for s in samples])).to(torch.bool)
    return x, y, m


def masked_l1(a: torch.Tensor, b: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    mask = mask.expand_as(a).to(a.dtype)
    support = mask.sum()
    if support == 0:
        return a.new_zeros(())
    return ((a - b).abs() * mask).sum() / support


def loss(outputs: dict, label: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Two-term objective.

    Term 1 compares the ``d = 0`` reconstruction with the label on
    label-valid pixels. Term 2 compares the blended output with the label on
    pixels valid for the label and for every shear round trip. Both terms
    are mean-reduced over their supports.
    """
    label_mask = mask.to(torch.bool)
    term1 = masked_l1(outputs["reference"], label, label_mask)
    joint = label_mask & outputs["masks"].all(dim=0)
    if not joint.any():
        log.warning("blend mask is empty; second loss term contributes 0")
        term2 = outputs["output"].new_zeros(())
    else:
        term2 = masked_l1(outputs["output"], label, joint)
    return term1 + term2


@dataclass
class TrainResult:
    ni: torch.nn.Module
    dibr: torch.nn.Module
    history: list
    best_checkpoint: Path | None = None


def evaluate_samples(samples, ni, dibr, config: TrainConfig, batch_size: int = 4) -> float:
    """PSNR of blended outputs on the joint mask, pooled over ``samples``."""
    sq, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            x, y, m = collate(samples[i:i + batch_size])
            r = geo_ni_forward(x, config.hypotheses, ni, dibr, config.alpha)
            joint = (m & r["masks"].all(dim=0)).expand_as(y)
            diff = (r["output"] - y)[joint]
            sq += float((diff.double() ** 2).sum())
            count += int(joint.sum())
    if count == 0:
        return float("nan")
    mse = sq / count
    return float("inf") if mse == 0 else 10 * math.log10(1.0 / mse)


def fit(train_samples: list[TrainSample], config: TrainConfig, *, val_samples=None, ni=None, dibr=None,
        checkpoint_dir=None, metrics_path=None, val_every: int = 1) -> TrainResult:
    """Jointly optimise the NI and DIBR networks with Adam.

    Runs ``config.epochs`` epochs, or stops after ``config.max_steps``
    updates if set. Every epoch appends ``{epoch, step, loss, val_psnr}`` to
    the history (and to ``metrics_path`` as JSON lines).
    """
    if not train_samples:
        raise ValueError("dataset is empty")
    ni = ni if ni is not None else build_ni_network(config.ni_spec(), seed=config.seed)
    dibr = dibr if dibr is not None else build_dibr_network(config.dibr_spec(), seed=config.seed + 1)
    params = list(ni.parameters()) + list(dibr.parameters())
    opt = torch.optim.Adam(params, lr=config.learning_rate, betas=(config.beta1, config.beta2))
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    metrics = open(metrics_path, "w") if metrics_path is not None else None
    history, step, best, best_path, last_good = [], 0, -math.inf, None, None
    n = len(train_samples)
    try:
        epoch = 0
        while epoch < config.epochs and (config.max_steps is None or step < config.max_steps):
            pretrain = epoch < config.ni_pretrain_epochs
            order = epoch_order(n, config.seed, epoch)
            total, batches = 0.0, 0
            for i in range(0, n, config.batch_size):
                if config.max_steps is not None and step >= config.max_steps:
                    break
                x, y, m = collate([train_samples[j] for j in order[i:i + config.batch_size]])
                if pretrain:
                    r = geo_ni_forward(x, [0.0], ni, None, config.alpha)
                    value = masked_l1(r["reference"], y, m)
                else:
                    r = geo_ni_forward(x, config.hypotheses, ni, dibr, config.alpha)
                    value = loss(r, y, m)
                if not torch.isfinite(value):
                    raise DivergenceError(f"divergence: non-finite loss at step {step}", last_good)
                opt.zero_grad()
                value.backward()
                if config.grad_clip:
                    torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
                opt.step()
                step += 1
                total += value.item()
                batches += 1
            val_psnr = None
            if val_samples and (epoch + 1) % val_every == 0:
                val_psnr = evaluate_samples(val_samples, ni, dibr, config)
            entry = {"epoch": epoch, "step": step, "loss": total / max(batches, 1), "val_psnr": val_psnr}
            history.append(entry)
            if metrics is not None:
                metrics.write(json.dumps(entry) + "\n")
                metrics.flush()
            if ckpt_dir is not None:
                if (epoch + 1) % config.checkpoint_every == 0:
                    last_good = _save_pair(ni, dibr, ckpt_dir / f"epoch{epoch + 1:04d}")
                if val_psnr is not None and val_psnr > best:
                    best = val_psnr
                    best_path = _save_pair(ni, dibr, ckpt_dir / "best")
                    last_good = best_path
            epoch += 1
        if ckpt_dir is not None:
            _save_pair(ni, dibr, ckpt_dir / "final")
    finally:
        if metrics is not None:
            metrics.close()
    return TrainResult(ni=ni, dibr=dibr, history=history, best_checkpoint=best_path)


def _save_pair(ni, dibr, prefix: Path) -> Path:
    prefix.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ni, prefix / "ni")
    save_checkpoint(dibr, prefix / "dibr")
    return prefix


def train(config: TrainConfig, lf_dirs, checkpoint_dir) -> TrainResult:
    """Build the dataset from ``lf_dirs``, train, and write checkpoints plus ``metrics.jsonl``."""
    ckpt_dir = Path(checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    samples = build_dataset(lf_dirs, config)
    train_set, val_set = split_validation(samples, config.val_fraction, config.seed)
    log.info("training on %d patches, validating on %d", len(train_set), len(val_set))
    return fit(train_set, config, val_samples=val_set, checkpoint_dir=ckpt_dir,
               metrics_path=ckpt_dir / "metrics.jsonl")
