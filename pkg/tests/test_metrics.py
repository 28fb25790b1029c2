import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscmar.metrics import format_metric, psnr_masked, ssim_map, ssim_masked


def masked_image(rng, shape=(40, 40)):
    ref = rng.uniform(0, 1, shape)
    I = np.ones(shape)
    I[15:22, 10:18] = 0
    return ref, I


def test_identical_is_inf_and_one(rng):
    ref, I = masked_image(rng)
    assert psnr_masked(ref, ref, I) == math.inf
    assert ssim_masked(ref, ref, I) == pytest.approx(1.0, abs=1e-12)
    assert format_metric(psnr_masked(ref, ref, I)) == "inf"


def test_uniform_error_gives_20_db(rng):
    ref, I = masked_image(rng)
    est = np.where(I > 0, ref + 0.1, ref + 5.0)
    assert psnr_masked(est, ref, I) == pytest.approx(20.0, abs=1e-10)


def test_psnr_direct_formula(rng):
    ref, I = masked_image(rng)
    est = ref + 0.05 * rng.standard_normal(ref.shape)
    keep = I > 0
    expected = 10 * np.log10(1.0 / np.mean((est[keep] - ref[keep]) ** 2))
    assert abs(psnr_masked(est, ref, I) - expected) <= 1e-10


def test_empty_mask_and_shapes_rejected(rng):
    ref, _ = masked_image(rng)
    with pytest.raises(ValueError):
        psnr_masked(ref, ref, np.zeros_like(ref))
    with pytest.raises(ValueError):
        ssim_masked(ref, ref, np.zeros_like(ref))
    with pytest.raises(ValueError):
        psnr_masked(ref, ref[:-1], np.ones_like(ref))


def test_constant_images():
    a = np.full((20, 20), 0.4)
    assert ssim_masked(a, a.copy(), np.ones_like(a)) == pytest.approx(1.0)


def test_inverted_high_contrast_image():
    ref = np.zeros((40, 40))
    ref[:, ::4] = 1.0
    ref[:, 1::4] = 1.0
    assert ssim_masked(1 - ref, ref, np.ones_like(ref)) < 0.5


def test_unmasked_ssim_matches_reference_implementation(rng):
    from skimage.metrics import structural_similarity
    a = rng.uniform(0, 1, (48, 48))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    _, full = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, full=True)
    np.testing.assert_allclose(ssim_map(a, b)[8:-8, 8:-8], full[8:-8, 8:-8], atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_ssim_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, I = masked_image(rng, (24, 24))
    b = rng.uniform(0, 1, a.shape)
    assert abs(ssim_masked(a, b, I) - ssim_masked(b, a, I)) <= 1e-12


def test_psnr_decreases_with_noise(rng):
    ref, I = masked_image(rng)
    noise = np.random.default_rng(5).standard_normal(ref.shape)
    values = [psnr_masked(ref + amp * noise, ref, I) for amp in (0.01, 0.02, 0.05)]
    assert values[0] > values[1] > values[2]


def test_metal_region_is_ignored(rng):
    ref, I = masked_image(rng)
    est = np.clip(ref + 0.05 * rng.standard_normal(ref.shape), 0, 1)
    other = np.where(I > 0, est, rng.uniform(-3, 3, ref.shape))
    assert psnr_masked(est, ref, I) == psnr_masked(other, ref, I)
    assert ssim_masked(est, ref, I) == pytest.approx(ssim_masked(other, ref, I), abs=1e-12)


def test_format_metric():
    assert format_metric(math.inf) == "inf"
    assert float(format_metric(31.25)) == 31.25
