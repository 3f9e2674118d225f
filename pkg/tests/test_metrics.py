import numpy as np
import pytest
from skimage.metrics import structural_similarity

from geoni.metrics import psnr, psnr_y, ssim, ssim_map, ssim_y


def test_identical_inputs(rng):
    a = rng.random((16, 12, 3, 1))
    assert psnr(a, a) == float("inf")
    assert ssim(a, a) == 1.0


def test_constant_offset_is_20db(rng):
    a = rng.random((16, 12, 3, 1)) * 0.8
    assert psnr(a + 0.1, a) == pytest.approx(20.0, abs=1e-9)


def test_differences_under_zero_mask_ignored(rng):
    a = rng.random((8, 8, 2, 1))
    b = a.copy()
    mask = np.ones_like(a, dtype=bool)
    mask[2, 3, 1] = False
    b[2, 3, 1] = 0.0 if a[2, 3, 1] else 1.0
    assert psnr(a, b, mask) == float("inf")
    with pytest.raises(ValueError):
        psnr(a, b, np.zeros_like(mask))
    with pytest.raises(ValueError):
        psnr(a, b[:4])


def test_ssim_matches_reference_implementation(rng):
    a = rng.random((40, 30))
    b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
    ref = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False, full=True)[1]
    np.testing.assert_allclose(ssim_map(a, b), ref, atol=1e-10)


def test_ssim_averages_views_then_mean(rng):
    a = rng.random((20, 20, 3, 1))
    b = np.clip(a + rng.normal(scale=0.05, size=a.shape), 0, 1)
    per_view = [ssim_map(a[:, :, v, 0], b[:, :, v, 0]).mean() for v in range(3)]
    assert ssim(a, b) == pytest.approx(np.mean(per_view), abs=1e-12)
    mask = np.zeros_like(a, dtype=bool)
    mask[:, :, 1] = True
    assert ssim(a, b, mask) == pytest.approx(per_view[1], abs=1e-12)


def test_aliases(rng):
    a, b = rng.random((8, 8, 2, 1)), rng.random((8, 8, 2, 1))
    assert psnr_y(a, b) == psnr(a, b) and ssim_y(a, b) == ssim(a, b)
