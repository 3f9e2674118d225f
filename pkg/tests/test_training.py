import json

import numpy as np
import pytest
import torch

from geoni.lightfield import LightField4D, save_lightfield
from geoni.networks import load_checkpoint
from geoni.pipeline import geo_ni_forward
from geoni.shear import shear_tensor
from geoni.synthetic import constant_disparity_lightfield, constant_disparity_scene
from geoni.training import (
    DivergenceError,
    TrainConfig,
    TrainSample,
    build_dataset,
    collate,
    epoch_order,
    fit,
    label_window,
    loss,
    samples_from_slice,
    slices_for_training,
    split_validation,
    train,
)


def _micro_config(**kw):
    values = dict(alpha=4, hypotheses=[-8.0, -4.0, 0.0, 4.0, 8.0], base_channels=2, batch_size=2,
                  patch_width=32, patch_height=4, stride=16, epochs=2, seed=0)
    values.update(kw)
    return TrainConfig(**values)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(patch_width=126)
    with pytest.raises(ValueError):
        TrainConfig(hypotheses=[1.0, 2.0])
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"lr": 0.1})
    cfg = TrainConfig()
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert (cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.batch_size, cfg.epochs) == (1e-4, 0.9, 0.999, 8, 200)
    assert (cfg.patch_width, cfg.patch_height, cfg.stride, cfg.augment_shears) == (128, 18, 40, [-2.0, 2.0])


def test_seventeen_view_source_counts():
    lf = LightField4D(np.random.default_rng(0).random((40, 20, 17, 17, 1)).astype(np.float32))
    slices = slices_for_training(lf)
    assert len(slices) == 34
    cfg = TrainConfig(patch_width=128, patch_height=18)
    per_slice = samples_from_slice(slices[0], cfg)
    assert len(per_slice) == 3  # one patch per copy: original, d=-2, d=+2
    assert per_slice[0].input.shape[2] == 5 and per_slice[0].label.shape[2] == 17


def test_patch_tiling_arithmetic():
    sl = np.random.default_rng(1).random((512, 18, 17, 1)).astype(np.float32)
    cfg = TrainConfig(augment_shears=[])
    samples = samples_from_slice(sl, cfg)
    assert len(samples) == (512 - 128) // 40 + 1 == 10


def test_stride_alpha_alignment_and_masks():
    sl = np.random.default_rng(2).random((64, 6, 9, 1)).astype(np.float32)
    cfg = TrainConfig(alpha=4, patch_width=64, patch_height=6)
    samples = samples_from_slice(sl, cfg)
    for s in samples:
        assert np.array_equal(s.input, s.label[:, :, ::4])
    ones = torch.ones(1, 64, 6, 9, 1)
    for s, d in zip(samples[1:], cfg.augment_shears):
        _, m = shear_tensor(ones, d)
        assert np.array_equal(s.mask, m[0].expand(64, 6, 9, 1).numpy())


def test_label_window():
    assert label_window(17, 4) == (0, 17)
    assert label_window(9, 7) == (0, 8)
    assert label_window(19, 4) == (1, 17)
    with pytest.raises(ValueError, match="too few views"):
        label_window(4, 4)


def test_build_dataset_from_directory(tmp_path):
    lf = constant_disparity_lightfield(32, 8, 5, 5, 1.0, seed=1)
    save_lightfield(lf, tmp_path / "a", bits=16)
    samples = build_dataset([tmp_path / "a"], _micro_config())
    assert samples and all(s.source.startswith("a/") for s in samples)
    again = build_dataset([tmp_path / "a"], _micro_config())
    assert [s.source for s in samples] == [s.source for s in again]
    with pytest.raises(ValueError, match="too few views"):
        build_dataset([constant_disparity_lightfield(32, 8, 3, 3, 1.0)], _micro_config())


def test_split_and_order_are_seeded():
    samples = [TrainSample(np.zeros(1), np.zeros(1), np.zeros(1, bool), source=f"p{i}") for i in range(400)]
    tr, va = split_validation(samples, 0.05, seed=3)
    tr2, va2 = split_validation(samples, 0.05, seed=3)
    assert [s.source for s in va] == [s.source for s in va2]
    assert 5 <= len(va) <= 40 and len(tr) + len(va) == 400
    assert np.array_equal(epoch_order(50, 1, 2), epoch_order(50, 1, 2))
    assert not np.array_equal(epoch_order(50, 1, 2), epoch_order(50, 1, 3))


def _straight_line_loss(ref, out, masks, label, mask):
    ref, out, label = (np.asarray(a, dtype=np.float64) for a in (ref, out, label))
    mask = np.broadcast_to(np.asarray(mask, bool), label.shape)
    t1 = np.abs(ref - label)[mask].sum() / mask.sum()
    joint = mask & np.broadcast_to(np.all(masks, axis=0), label.shape)
    t2 = np.abs(out - label)[joint].sum() / joint.sum() if joint.any() else 0.0
    return t1 + t2


def test_loss_matches_straight_line_reimplementation():
    rng = np.random.default_rng(20)
    for _ in range(20):
        b, w, h, a, d = rng.integers(1, 3), rng.integers(2, 9), rng.integers(1, 4), rng.integers(2, 6), rng.integers(1, 4)
        label = rng.random((b, w, h, a, 1))
        ref, out = rng.random(label.shape), rng.random(label.shape)
        masks = rng.random((d, b, w, 1, a, 1)) > 0.2
        mask = rng.random(label.shape) > 0.3
        outputs = {"reference": torch.tensor(ref), "output": torch.tensor(out), "masks": torch.tensor(masks)}
        got = float(loss(outputs, torch.tensor(label), torch.tensor(mask)))
        assert got == pytest.approx(_straight_line_loss(ref, out, masks, label, mask), abs=1e-7)


def test_loss_examples():
    label = torch.rand(1, 8, 2, 5, 1, dtype=torch.float64)
    masks = torch.ones(3, 1, 8, 1, 5, 1, dtype=torch.bool)
    mask = torch.ones_like(label, dtype=torch.bool)
    assert float(loss({"reference": label, "output": label, "masks": masks}, label, mask)) == 0.0
    off = {"reference": label, "output": label + 0.1, "masks": masks}
    assert float(loss(off, label, mask)) == pytest.approx(0.1, abs=1e-12)


def test_masked_pixels_never_contribute():
    rng = np.random.default_rng(0)
    label = torch.tensor(rng.random((1, 6, 2, 5, 1)))
    mask = torch.tensor(rng.random(label.shape) > 0.5)
    masks = torch.ones(2, 1, 6, 1, 5, 1, dtype=torch.bool)
    out = label.clone().requires_grad_(True)
    ref = label.clone().requires_grad_(True)
    garbage = torch.where(mask, torch.zeros_like(label), torch.tensor(rng.normal(size=label.shape) * 100))
    value = loss({"reference": ref + garbage, "output": out + garbage, "masks": masks}, label, mask)
    assert value.item() == 0.0
    value.backward()
    assert torch.all(out.grad[~mask] == 0) and torch.all(ref.grad[~mask] == 0)


def test_empty_blend_mask_warns(caplog):
    label = torch.rand(1, 4, 1, 3, 1)
    masks = torch.zeros(2, 1, 4, 1, 3, 1, dtype=torch.bool)
    with caplog.at_level("WARNING"):
        value = loss({"reference": label, "output": label + 1, "masks": masks}, label, torch.ones_like(label, dtype=torch.bool))
    assert float(value) == 0.0 and "empty" in caplog.text


def test_gradients_reach_both_networks():
    cfg = _micro_config()
    sparse, dense = constant_disparity_scene(32, 4, 3, 4, 4.0, seed=0)
    from geoni.networks import build_dibr_network, build_ni_network

    ni, dibr = build_ni_network(cfg.ni_spec(), 0), build_dibr_network(cfg.dibr_spec(), 1)
    x = torch.from_numpy(sparse.data)[None]
    r = geo_ni_forward(x, cfg.hypotheses, ni, dibr, 4)
    loss(r, torch.from_numpy(dense.data)[None], torch.ones(1, 32, 4, 9, 1, dtype=torch.bool)).backward()
    assert all(p.grad is not None and p.grad.abs().sum() > 0 for p in ni.parameters() if p.ndim > 1)
    assert dibr.conv5.weight.grad.abs().sum() > 0


def _scene_samples(width=32, height=4, seed=0):
    sparse, dense = constant_disparity_scene(width, 2 * height, 5, 4, 8.0, seed=seed)
    full = np.ones(dense.data.shape, bool)
    return ([TrainSample(sparse.data[:, :height], dense.data[:, :height], full[:, :height], "train")],
            [TrainSample(sparse.data[:, height:], dense.data[:, height:], full[:, height:], "val")])


def test_loss_decreases_early():
    tr, _ = _scene_samples()
    cfg = _micro_config(epochs=60, batch_size=1)
    hist = [h["loss"] for h in fit(tr, cfg).history]
    smooth = np.convolve(hist, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smooth[:41]) < 0)


def test_training_is_deterministic(tmp_path):
    tr, va = _scene_samples()
    cfg = _micro_config(epochs=5, batch_size=1)
    a = fit(tr, cfg, val_samples=va, metrics_path=tmp_path / "a.jsonl")
    b = fit(tr, cfg, val_samples=va, metrics_path=tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    x = torch.from_numpy(va[0].input)[None]
    with torch.no_grad():
        oa = geo_ni_forward(x, cfg.hypotheses, a.ni, a.dibr, 4)["output"]
        ob = geo_ni_forward(x, cfg.hypotheses, b.ni, b.dibr, 4)["output"]
    assert torch.equal(oa, ob)


def test_one_step_changes_parameters():
    tr, _ = _scene_samples()
    cfg = _micro_config(epochs=1, batch_size=1)
    from geoni.networks import build_ni_network

    before = build_ni_network(cfg.ni_spec(), seed=cfg.seed).state_dict()
    after = fit(tr, cfg).ni.state_dict()
    assert any(not torch.equal(before[k], after[k]) for k in before)


def test_train_writes_log_and_checkpoints(tmp_path):
    lf = constant_disparity_lightfield(32, 8, 5, 1, 1.0, seed=1)
    cfg = _micro_config(epochs=2, checkpoint_every=1, val_fraction=0.5, use_t_slices=False)
    result = train(cfg, [lf], tmp_path)
    lines = [json.loads(l) for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert [l["epoch"] for l in lines] == [0, 1]
    assert set(lines[0]) == {"epoch", "step", "loss", "val_psnr"}
    for name in ("epoch0001", "epoch0002", "final"):
        assert load_checkpoint(tmp_path / name / "ni").spec.alpha == 4
    assert result.best_checkpoint is not None


def test_divergence_aborts_with_last_good(tmp_path):
    tr, _ = _scene_samples()
    tr[0].label[0, 0, 0, 0] = np.nan
    cfg = _micro_config(epochs=2, batch_size=1)
    with pytest.raises(DivergenceError, match="divergence") as info:
        fit(tr, cfg, checkpoint_dir=tmp_path)
    assert info.value.last_good is None


def test_collate_shapes():
    tr, _ = _scene_samples()
    x, y, m = collate(tr * 3)
    assert x.shape == (3, 32, 4, 5, 1) and y.shape == (3, 32, 4, 17, 1) and m.dtype == torch.bool
