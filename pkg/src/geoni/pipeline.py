"""Shear-sweep reconstruction of light-field slices.

For every shear hypothesis ``d``:

    shear by d -> angular upsampling (NI network or linear) -> inverse shear by -d/alpha

The reconstructions are scored by the DIBR network and blended with the
softmin of their costs. All hypotheses of a batch go through each network in
a single ``D*B`` batched forward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .lightfield import LightField4D, LightFieldSlice, rgb_to_ycbcr, ycbcr_to_rgb
from .networks import angular_interp_matrix
from .shear import inverse_shear_tensor, shear_tensor
from .validation import as_slice_batch, check_alpha, check_hypotheses

INVALID_PENALTY = 1e4


@dataclass
class ShearStack:
    """Inverse-sheared reconstructions, one per hypothesis.

    ``slices`` and ``masks`` have shape ``(D, W, H, A', 1)`` (a batch axis
    after ``D`` when produced from a batch).
    """

    hypotheses: np.ndarray
    slices: np.ndarray
    masks: np.ndarray


@dataclass
class ReconstructionResult:
    slice: LightFieldSlice
    costs: np.ndarray
    stack: ShearStack
    weights: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        """Pixels valid under every hypothesis, shape ``(W, H, A', 1)``."""
        return np.all(self.stack.masks, axis=0)


def bilinear_upsample(x: torch.Tensor, alpha: int) -> torch.Tensor:
    """Linear interpolation along the angular axis of ``(N, W, H, A, C)``."""
    m = torch.as_tensor(angular_interp_matrix(x.shape[3], alpha), dtype=x.dtype, device=x.device)
    return torch.einsum("nwhac,ab->nwhbc", x, m)


def _run_padded(net, x: torch.Tensor) -> torch.Tensor:
    """Edge-replicate the width up to the network's multiple, run, crop back."""
    multiple = getattr(net, "width_multiple", 1)
    w = x.shape[1]
    pad = (-w) % multiple
    if pad:
        x = torch.cat([x, x[:, -1:].expand(-1, pad, -1, -1, -1)], dim=1)
    y = net(x)
    return y[:, :w] if pad else y


def blend_weights(costs: torch.Tensor, masks: torch.Tensor | None = None) -> torch.Tensor:
    """Softmin over the hypothesis axis (dim 0) of ``costs``.

    Invalid pixels get ``+1e4`` added to their cost; where no hypothesis is
    valid the weights fall back to uniform.
    """
    logits = -costs
    if masks is not None:
        masks = masks.to(torch.bool)
        logits = logits - INVALID_PENALTY * (~masks).to(costs.dtype)
    weights = torch.softmax(logits, dim=0)
    if masks is not None:
        none_valid = ~masks.any(dim=0, keepdim=True)
        if none_valid.any():
            uniform = torch.full_like(weights, 1.0 / costs.shape[0])
            weights = torch.where(none_valid, uniform, weights)
    return weights


def geo_ni_forward(x: torch.Tensor, hypotheses, ni=None, dibr=None, alpha: int = 4, *,
                   interpolator: str = "ni", cost_fn=None, companions: torch.Tensor | None = None) -> dict:
    """Differentiable Geo-NI forward on a ``(B, W, H, A, 1)`` batch.

    Parameters
    ----------
    hypotheses : shear amounts, must contain 0
    ni, dibr : NI and DIBR networks. ``dibr=None`` gives zero costs.
    interpolator : ``"ni"`` or ``"bilinear"`` (angular linear interpolation)
    cost_fn : optional ``cost_fn(stack, hypotheses) -> costs`` used in place
        of the DIBR network; ``stack`` is ``(D, B, W, H, A', 1)``.
    companions : optional ``(B, W, H, A, K)`` channels carried along the
        linear path and blended with the same weights (used for chroma).

    Returns a dict with ``output`` ``(B, W, H, A', 1)``, ``stack`` and
    ``costs`` ``(D, B, W, H, A', 1)``, ``masks`` ``(D, B, W, 1, A', 1)``,
    ``weights`` and ``reference`` (the ``d = 0`` reconstruction).
    """
    alpha = check_alpha(alpha)
    d = torch.as_tensor(check_hypotheses(hypotheses))
    n_hyp = d.numel()
    b, w, h, a, _ = x.shape
    if interpolator not in ("ni", "bilinear"):
        raise ValueError(f"unknown interpolator {interpolator!r}")
    if interpolator == "ni" and ni is None:
        raise ValueError("NI interpolation needs an NI network")

    d_batch = d.repeat_interleave(b)
    xs = x.repeat(n_hyp, 1, 1, 1, 1)
    sheared, fwd_mask = shear_tensor(xs, d_batch)
    if interpolator == "ni":
        upsampled = _run_padded(ni, sheared)
    else:
        upsampled = bilinear_upsample(sheared, alpha)
    a_out = upsampled.shape[3]
    if a_out != alpha * (a - 1) + 1:
        raise ValueError(f"interpolator produced {a_out} views, expected {alpha * (a - 1) + 1}")
    recon, inv_mask = inverse_shear_tensor(upsampled, d_batch, alpha)

    # an upsampled column is trusted only if every input view was valid there
    col_valid = fwd_mask.all(dim=3, keepdim=True).expand(-1, -1, -1, a_out, -1)
    carried, _ = inverse_shear_tensor(col_valid.to(torch.float64), d_batch, alpha)
    masks = inv_mask & (carried >= 1.0 - 1e-9)

    stack = recon.reshape(n_hyp, b, w, h, a_out, 1)
    masks = masks.reshape(n_hyp, b, w, 1, a_out, 1)
    if cost_fn is not None:
        costs = cost_fn(stack, d)
    elif dibr is not None:
        costs = _run_padded(dibr, recon).reshape(stack.shape)
    else:
        costs = torch.zeros_like(stack)
    if costs.shape != stack.shape:
        raise ValueError(f"cost volume shape {tuple(costs.shape)} does not match stack {tuple(stack.shape)}")

    weights = blend_weights(costs, masks)
    output = (weights * stack).sum(dim=0)
    zero = int(torch.nonzero(d == 0)[0, 0])
    result = {
        "output": output,
        "stack": stack,
        "costs": costs,
        "masks": masks,
        "weights": weights,
        "reference": stack[zero],
        "reference_mask": masks[zero],
        "hypotheses": d,
    }
    if companions is not None:
        k = companions.shape[-1]
        cs, _ = shear_tensor(companions.repeat(n_hyp, 1, 1, 1, 1), d_batch)
        cs, _ = inverse_shear_tensor(bilinear_upsample(cs, alpha), d_batch, alpha)
        cs = cs.reshape(n_hyp, b, w, h, a_out, k)
        result["companions"] = (weights * cs).sum(dim=0)
    return result


def _net_dtype(*nets):
    for net in nets:
        if net is not None:
            for p in net.parameters():
                return p.dtype
    return torch.float32


def reconstruct_slice(sl, hypotheses, ni_params, dibr_params, alpha: int, *,
                      interpolator: str = "ni", cost_fn=None) -> ReconstructionResult:
    """Upsample one luminance slice by ``alpha`` along its angular axis.

    Returns the blended slice together with the cost volume and the shear
    stack it was blended from.
    """
    x = as_slice_batch(sl, dtype=_net_dtype(ni_params, dibr_params))
    if x.shape[0] != 1:
        raise ValueError("reconstruct_slice takes a single slice")
    with torch.no_grad():
        r = geo_ni_forward(x, hypotheses, ni_params, dibr_params, alpha,
                           interpolator=interpolator, cost_fn=cost_fn)
    axis = sl.axis if isinstance(sl, LightFieldSlice) else "s"
    index = sl.index if isinstance(sl, LightFieldSlice) else 0
    stack = ShearStack(
        hypotheses=r["hypotheses"].numpy(),
        slices=r["stack"][:, 0].numpy(),
        masks=r["masks"][:, 0].expand(-1, -1, x.shape[2], -1, -1).numpy().astype(np.uint8),
    )
    return ReconstructionResult(
        slice=LightFieldSlice(r["output"][0].numpy(), axis=axis, index=index),
        costs=r["costs"][:, 0].numpy(),
        stack=stack,
        weights=r["weights"][:, 0].numpy(),
    )


def blend(stack: ShearStack, costs) -> LightFieldSlice:
    """Softmin blend of a shear stack by its cost volume."""
    slices = torch.as_tensor(np.asarray(stack.slices))
    costs = torch.as_tensor(np.asarray(costs), dtype=slices.dtype)
    masks = torch.as_tensor(np.asarray(stack.masks)).to(torch.bool)
    if costs.shape != slices.shape:
        raise ValueError(f"cost volume shape {tuple(costs.shape)} does not match stack {tuple(slices.shape)}")
    if masks.ndim != slices.ndim:
        raise ValueError("stack masks must have the same rank as the slices")
    weights = blend_weights(costs, masks.expand_as(slices))
    return LightFieldSlice((weights * slices).sum(dim=0).numpy())


def ni_only(sl, ni_params, alpha: int) -> LightFieldSlice:
    """Ablation without the DIBR part: the ``D = {0}`` reconstruction."""
    return reconstruct_slice(sl, [0.0], ni_params, None, alpha).slice


def bilinear_geo_ni(sl, hypotheses, dibr_params, alpha: int, cost_fn=None) -> ReconstructionResult:
    """Ablation with angular linear interpolation in place of the NI network."""
    return reconstruct_slice(sl, hypotheses, None, dibr_params, alpha, interpolator="bilinear", cost_fn=cost_fn)


def stage_hypotheses(hypotheses, alpha: int, stages: int) -> list[np.ndarray]:
    """Default per-stage sets: the first-stage set divided by ``alpha`` per stage."""
    d = check_hypotheses(hypotheses)
    return [d / float(alpha) ** k for k in range(stages)]


def cascade_reconstruct(sl, stages: int, hypotheses, ni_params, dibr_params, alpha: int, *,
                        interpolator: str = "ni", cost_fn=None) -> LightFieldSlice:
    """Apply :func:`reconstruct_slice` ``stages`` times.

    ``hypotheses`` is either one set (scaled by ``1/alpha`` per stage) or a
    list of per-stage sets. ``A`` views become ``alpha*(A-1)+1`` per stage.
    """
    if stages < 1:
        raise ValueError(f"stages must be >= 1, got {stages}")
    per_stage = _per_stage(hypotheses, alpha, stages)
    current = sl if isinstance(sl, LightFieldSlice) else LightFieldSlice(np.asarray(sl))
    for d in per_stage:
        current = reconstruct_slice(current, d, ni_params, dibr_params, alpha,
                                    interpolator=interpolator, cost_fn=cost_fn).slice
    return current


def _per_stage(hypotheses, alpha, stages):
    first = np.asarray(hypotheses[0]) if len(hypotheses) and np.ndim(hypotheses[0]) > 0 else None
    if first is not None:
        if len(hypotheses) != stages:
            raise ValueError(f"got {len(hypotheses)} hypothesis sets for {stages} stages")
        return [check_hypotheses(h) for h in hypotheses]
    return stage_hypotheses(hypotheses, alpha, stages)


def _reconstruct_axis(data: np.ndarray, companions, hypotheses, ni, dibr, alpha, stages, interpolator, dtype):
    """Reconstruct every slice of ``(W, H, A, M, 1)`` along axis 2."""
    per_stage = _per_stage(hypotheses, alpha, stages)
    outs, comp_outs = [], []
    for m in range(data.shape[3]):
        x = torch.from_numpy(np.ascontiguousarray(data[:, :, :, m]))[None].to(dtype)
        c = None
        if companions is not None:
            c = torch.from_numpy(np.ascontiguousarray(companions[:, :, :, m]))[None].to(dtype)
        for d in per_stage:
            with torch.no_grad():
                r = geo_ni_forward(x, d, ni, dibr, alpha, interpolator=interpolator, companions=c)
            x = r["output"]
            c = r.get("companions")
        outs.append(x[0].numpy())
        if c is not None:
            comp_outs.append(c[0].numpy())
    out = np.stack(outs, axis=3)
    comp = np.stack(comp_outs, axis=3) if comp_outs else None
    return out, comp


def reconstruct_4d(lf: LightField4D, hypotheses, ni_params, dibr_params, alpha: int, *,
                   order: str = "st", cascade: int = 1, interpolator: str = "ni",
                   companions: np.ndarray | None = None):
    """Hierarchical 4D reconstruction: all ``s`` slices first, then ``t`` slices.

    The second pass runs over every angular position produced by the first
    (original and synthesized). ``order="ts"`` swaps the passes. With
    ``companions`` (``(W, H, A_s, A_t, K)``) returns ``(lf, companions)``.
    """
    if lf.data.shape[-1] != 1:
        raise ValueError("reconstruct_4d expects a luminance light field")
    if order not in ("st", "ts"):
        raise ValueError(f"order must be 'st' or 'ts', got {order!r}")
    dtype = _net_dtype(ni_params, dibr_params)
    data = lf.data
    comp = companions
    if order == "ts":
        data = np.swapaxes(np.swapaxes(data, 0, 1), 2, 3)
        comp = None if comp is None else np.swapaxes(np.swapaxes(comp, 0, 1), 2, 3)

    def run(arr, c):
        return _reconstruct_axis(arr, c, hypotheses, ni_params, dibr_params, alpha, cascade, interpolator, dtype)

    # pass 1 along axis 2, sheared axis x; axes with a single view are left alone
    if data.shape[2] > 1:
        data, comp = run(data, comp)
    # pass 2 along axis 3, sheared axis y: transpose to (H, W, A_t, A_s', C)
    data = np.transpose(data, (1, 0, 3, 2, 4))
    comp = None if comp is None else np.transpose(comp, (1, 0, 3, 2, 4))
    if data.shape[2] > 1:
        data, comp = run(data, comp)
    data = np.transpose(data, (1, 0, 3, 2, 4))
    comp = None if comp is None else np.transpose(comp, (1, 0, 3, 2, 4))
    if order == "ts":
        data = np.swapaxes(np.swapaxes(data, 0, 1), 2, 3)
        comp = None if comp is None else np.swapaxes(np.swapaxes(comp, 0, 1), 2, 3)
    out = LightField4D(np.ascontiguousarray(data), color_space="y")
    if companions is None:
        return out
    return out, np.ascontiguousarray(comp)


def upsample_chroma(lf_rgb: LightField4D, alpha: int, hypotheses, ni_params=None, dibr_params=None, *,
                    cascade: int = 1, interpolator: str = "ni"):
    """Cb/Cr planes at the output angular resolution.

    Chroma follows the linear Geo-NI path and is blended with the weights of
    the luminance reconstruction. Returns ``(y_lf, chroma)`` where chroma is
    ``(W, H, A_s', A_t', 2)`` in ``[0, 1]``-offset form.
    """
    if lf_rgb.color_space != "rgb":
        raise ValueError("upsample_chroma needs an rgb light field")
    ycc = rgb_to_ycbcr(lf_rgb.data)
    y = LightField4D(ycc[..., :1].astype(np.float32), color_space="y")
    chroma = (ycc[..., 1:] - 0.5).astype(np.float32)  # centred so blank shear borders are neutral
    y_out, c_out = reconstruct_4d(y, hypotheses, ni_params, dibr_params, alpha,
                                  cascade=cascade, interpolator=interpolator, companions=chroma)
    return y_out, c_out + 0.5


def reconstruct_rgb(lf_rgb: LightField4D, alpha: int, hypotheses, ni_params=None, dibr_params=None, *,
                    cascade: int = 1, interpolator: str = "ni") -> LightField4D:
    """Full-colour reconstruction, clamped to ``[0, 1]`` for export."""
    y_out, chroma = upsample_chroma(lf_rgb, alpha, hypotheses, ni_params, dibr_params,
                                    cascade=cascade, interpolator=interpolator)
    ycc = np.concatenate([y_out.data, chroma], axis=-1)
    rgb = np.clip(ycbcr_to_rgb(ycc), 0.0, 1.0)
    return LightField4D(rgb.astype(np.float32), color_space="rgb")
