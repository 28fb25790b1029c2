"""Masked PSNR and SSIM over the non-metal region."""
import math

import numpy as np
from scipy import ndimage

__all__ = ["psnr_masked", "ssim_masked", "ssim_map", "format_metric"]

PEAK = 1.0
SSIM_SIGMA = 1.5
SSIM_RADIUS = 5
K1, K2 = 0.01, 0.03


def _check(est, ref, mask):
    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not est.shape == ref.shape == mask.shape:
        raise ValueError(f"shape mismatch: {est.shape}, {ref.shape}, {mask.shape}")
    keep = mask > 0
    if not keep.any():
        raise ValueError("mask selects no pixels")
    return est, ref, keep


def psnr_masked(est, ref, mask):
    """PSNR in dB with peak 1.0 and MSE over mask pixels; ``inf`` for identical images."""
    est, ref, keep = _check(est, ref, mask)
    mse = float(np.mean((est[keep] - ref[keep]) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


def _gaussian_window():
    x = np.arange(-SSIM_RADIUS, SSIM_RADIUS + 1)
    g = np.exp(-x * x / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def ssim_map(a, b, mask=None):
    """Per-pixel SSIM with an 11x11 Gaussian window (sigma 1.5), reflective borders.

    With a ``mask`` the local statistics are mask-normalized averages, so pixels
    outside the mask never enter any window.
    """
    g = _gaussian_window()

    def blur(img):
        return ndimage.correlate1d(ndimage.correlate1d(img, g, axis=0, mode="reflect"),
                                   g, axis=1, mode="reflect")

    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if mask is None:
        mean = blur
    else:
        weight = (np.asarray(mask) > 0).astype(np.float64)
        norm = np.maximum(blur(weight), 1e-12)
        a, b = a * weight, b * weight

        def mean(img):
            return blur(img * weight) / norm

    c1, c2 = (K1 * PEAK) ** 2, (K2 * PEAK) ** 2
    mu_a, mu_b = mean(a), mean(b)
    var_a = mean(a * a) - mu_a * mu_a
    var_b = mean(b * b) - mu_b * mu_b
    cov = mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim_masked(est, ref, mask):
    """Mean SSIM over windows centred on mask pixels, with statistics taken over mask pixels only."""
    est, ref, keep = _check(est, ref, mask)
    return float(np.mean(ssim_map(est, ref, keep)[keep]))


def format_metric(value):
    """CSV text for a metric; infinite PSNR is written as ``inf``."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))
