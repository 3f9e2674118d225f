import numpy as np
import pytest
import torch

from geoni.lightfield import LightFieldSlice
from geoni.shear import inverse_shear, inverse_shear_tensor, shear, shear_tensor
from geoni.synthetic import translating_texture


def _slice(rng, w=32, h=3, a=5):
    return LightFieldSlice(rng.random((w, h, a, 1)).astype(np.float32))


def _composed(sl, d1, d2):
    """Two-stage shear and its mask: stage 2 valid and every tap it read valid after stage 1."""
    a, ma = shear(sl, d1)
    b, mb = shear(a, d2)
    carried, _ = shear(LightFieldSlice(ma.astype(np.float64)), d2)
    return b, mb.astype(bool) & (carried.data >= 1 - 1e-12)


def test_zero_shear_is_identity(rng):
    sl = _slice(rng)
    out, mask = shear(sl, 0.0)
    assert np.array_equal(out.data, sl.data)
    assert mask.all() and mask.shape == sl.data.shape


def test_impulse_moves_by_equation_shift():
    # out(x, s) = in(x + (s - S/2) d, s); at s=0, S=5, d=2 the source offset is -5,
    # so the input impulse at x=10 lands at output x=15.
    data = np.zeros((32, 1, 5, 1), np.float32)
    data[10, 0, 0, 0] = 1.0
    out, mask = shear(LightFieldSlice(data), 2.0)
    assert np.flatnonzero(out.data[:, 0, 0, 0]).tolist() == [15]
    assert out.data[15, 0, 0, 0] == 1.0
    # the first 5 output columns of view 0 read from x < 0
    assert mask[:5, 0, 0, 0].sum() == 0 and mask[5:, 0, 0, 0].all()


def test_fractional_shift_interpolates_linearly():
    ramp = np.tile(np.arange(16, dtype=np.float64)[:, None, None, None], (1, 1, 2, 1))
    out, mask = shear(LightFieldSlice(ramp), 0.5)  # view 0 offset -0.5, view 1 offset 0
    valid = mask[:, 0, 0, 0].astype(bool)
    np.testing.assert_allclose(out.data[valid, 0, 0, 0], np.arange(16)[valid] - 0.5, atol=1e-12)
    assert not valid[0] and valid[1:].all()


def test_shear_flattens_translating_texture():
    p = 2.0
    sl = LightFieldSlice(translating_texture(96, 4, 5, p, seed=7)[..., None])
    out, mask = shear(sl, p)
    cols = out.data[..., 0]
    m = mask[..., 0].astype(bool).all(axis=2)
    spread = cols.max(axis=2) - cols.min(axis=2)
    assert m.sum() > 0
    assert np.max(spread[m]) < 1e-12


def test_integer_shear_is_permutation_with_dropout(rng):
    sl = _slice(rng)
    out, mask = shear(sl, 2.0)  # (s - 2.5) * 2 are odd integers
    values = set(sl.data.ravel().tolist())
    assert all(v in values for v in out.data[mask.astype(bool)].tolist())
    assert np.all(out.data[~mask.astype(bool)] == 0)


@pytest.mark.parametrize("d1,d2", [(2.0, 4.0), (-2.0, 6.0), (4.0, -4.0)])
def test_integer_composition(rng, d1, d2):
    for _ in range(5):
        sl = _slice(rng)
        b, mb = _composed(sl, d1, d2)
        c, mc = shear(sl, d1 + d2)
        joint = mb & mc.astype(bool)
        assert joint.any()
        np.testing.assert_allclose(b.data[joint], c.data[joint], atol=1e-6)


def test_fractional_composition_on_affine_rows():
    # linear interpolation is exact on functions affine in x, so composition holds
    w, a = 40, 5
    x = np.arange(w, dtype=np.float64)
    data = np.stack([0.3 + 0.01 * x + 0.05 * s for s in range(a)], axis=-1)[:, None, :, None]
    sl = LightFieldSlice(data)
    a2, m2 = _composed(sl, 0.7, 1.1)
    c, mc = shear(sl, 1.8)
    joint = m2 & mc.astype(bool)
    assert joint.any()
    np.testing.assert_allclose(a2.data[joint], c.data[joint], atol=1e-4)


def test_masks_are_monotone_in_abs_d(rng):
    sl = _slice(rng, w=24)
    prev = None
    for d in [0.0, 0.5, 1.0, 2.5, 4.0, 7.0]:
        for sign in (1, -1):
            _, m = shear(sl, sign * d)
            if prev is not None:
                assert np.all(m <= prev[sign])
        prev = {1: shear(sl, d)[1], -1: shear(sl, -d)[1]}


def test_inverse_shear_amount():
    # d=4, alpha=4 => shear by -1 around the upsampled centre
    x = torch.rand(1, 16, 2, 17, 1, dtype=torch.float64)
    got, _ = inverse_shear_tensor(x, 4.0, 4)
    want, _ = shear_tensor(x, -1.0, center=(17 - 1 + 4) / 2)
    assert torch.equal(got, want)


def test_inverse_shear_alpha1_restores(rng):
    sl = _slice(rng, a=4)
    a, ma = shear(sl, 3.0)
    b, mb = inverse_shear(a, 3.0, 1)
    joint = (ma & mb).astype(bool)
    assert joint.any()
    np.testing.assert_array_equal(b.data[joint], sl.data[joint])


def test_inverse_shear_zero_is_identity(rng):
    sl = _slice(rng, a=9)
    out, mask = inverse_shear(sl, 0.0, 4)
    assert np.array_equal(out.data, sl.data) and mask.all()


def test_inverse_shear_realigns_input_views():
    # view alpha*s of an upsampled stack must be shifted back by exactly the forward shift of view s
    a, alpha, d = 3, 4, 8.0
    x = torch.rand(1, 64, 1, a, 1, dtype=torch.float64)
    fwd, _ = shear_tensor(x, d)
    up = torch.zeros(1, 64, 1, alpha * (a - 1) + 1, 1, dtype=torch.float64)
    up[:, :, :, ::alpha] = fwd
    back, mask = inverse_shear_tensor(up, d, alpha)
    m = mask[:, :, :, ::alpha].expand(-1, -1, 1, -1, -1)
    inner = slice(20, 44)
    torch.testing.assert_close(back[:, inner, :, ::alpha], x[:, inner], rtol=0, atol=1e-12)
    assert m[:, inner].all()


def test_batched_shear_amounts():
    x = torch.rand(3, 10, 2, 4, 1)
    out, _ = shear_tensor(x, torch.tensor([0.0, 1.0, 2.0]))
    for i, d in enumerate([0.0, 1.0, 2.0]):
        single, _ = shear_tensor(x[i:i + 1], d)
        assert torch.equal(out[i:i + 1], single)
    with pytest.raises(ValueError):
        shear_tensor(x, [1.0, 2.0])


def test_shear_is_differentiable():
    x = torch.rand(1, 12, 1, 3, 1, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda t: shear_tensor(t, 0.3)[0], (x,))
