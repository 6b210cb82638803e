"""PSNR and SSIM fidelity metrics with batch aggregation."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ._validation import DEFAULT_RANGE_MAX, check_image, check_images, check_same_shape

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class FidelityReport:
    """Aggregate fidelity of processed images against their originals.

    ``psnr_mean``/``psnr_std`` cover only the pairs with finite PSNR;
    ``n_identical`` counts the pairs excluded for being identical. When every
    pair is identical ``psnr_mean`` is ``inf``.
    """

    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float
    n: int
    n_identical: int


def psnr(a, b, range_max=DEFAULT_RANGE_MAX):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a, b = check_image(a), check_image(b)
    check_same_shape(a, b, "images")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(range_max**2 / mse))


def _gaussian_taps():
    r = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    g = np.exp(-(r**2) / (2.0 * SSIM_SIGMA**2))
    return g / g.sum()


def _local_mean(x, taps, axes):
    for ax in axes:
        x = ndimage.correlate1d(x, taps, axis=ax, mode="reflect")
    return x


def ssim_map(a, b, range_max=DEFAULT_RANGE_MAX):
    """Per-window SSIM for ``(..., H, W, C)`` inputs.

    Only windows lying fully inside the image are returned, so the spatial
    size shrinks by ``SSIM_WINDOW - 1``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    h, w = a.shape[-3], a.shape[-2]
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")
    taps = _gaussian_taps()
    axes = (a.ndim - 3, a.ndim - 2)
    mu_a = _local_mean(a, taps, axes)
    mu_b = _local_mean(b, taps, axes)
    var_a = _local_mean(a * a, taps, axes) - mu_a**2
    var_b = _local_mean(b * b, taps, axes) - mu_b**2
    cov = _local_mean(a * b, taps, axes) - mu_a * mu_b
    c1 = (SSIM_K1 * range_max) ** 2
    c2 = (SSIM_K2 * range_max) ** 2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    pad = SSIM_WINDOW // 2
    return s[..., pad : h - pad, pad : w - pad, :]


def ssim(a, b, range_max=DEFAULT_RANGE_MAX):
    """Mean SSIM over channels and window positions.

    Uses an 11x11 Gaussian window (std 1.5) with K1 = 0.01, K2 = 0.03, each
    channel treated separately.
    """
    a, b = check_image(a), check_image(b)
    check_same_shape(a, b, "images")
    if np.array_equal(a, b):
        return 1.0
    return float(np.mean(ssim_map(a, b, range_max)))


def batch_fidelity(originals, processed, range_max=DEFAULT_RANGE_MAX):
    """Per-pair PSNR and SSIM, aggregated as mean and std."""
    A, B = check_images(originals), check_images(processed)
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"cardinality mismatch: {A.shape[0]} vs {B.shape[0]}")
    if A.shape[0] == 0:
        raise ValueError("no image pairs")
    check_same_shape(A, B, "datasets")
    mse = np.mean((A - B) ** 2, axis=(1, 2, 3))
    finite = mse > 0
    with np.errstate(divide="ignore"):
        psnrs = 10.0 * np.log10(range_max**2 / mse[finite])
    ssims = np.mean(ssim_map(A, B, range_max), axis=(1, 2, 3))
    ssims[~finite] = 1.0
    return FidelityReport(
        psnr_mean=float(psnrs.mean()) if psnrs.size else float("inf"),
        psnr_std=float(psnrs.std()) if psnrs.size else 0.0,
        ssim_mean=float(ssims.mean()),
        ssim_std=float(ssims.std()),
        n=int(A.shape[0]),
        n_identical=int(np.count_nonzero(~finite)),
    )
