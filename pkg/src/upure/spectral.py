"""Orthonormal 2D DCT-II transforms and coefficient bookkeeping.

All functions operate on the two spatial axes of ``(..., H, W, C)`` arrays, so
single images and batches go through the same code path. Channels are
transformed independently.
"""

import numpy as np
from scipy import fft

from ._validation import DEFAULT_RANGE_MAX, check_image, check_tau

_SPATIAL_AXES = (-3, -2)


def dct2(image):
    """Orthonormal 2D DCT-II of every channel.

    The DC coefficient equals ``mean * sqrt(H * W)`` and total squared energy
    is preserved.

    Parameters
    ----------
    image : array-like of shape (H, W), (H, W, C) or (n, H, W, C)

    Returns
    -------
    spectrum : ndarray of float64, same shape as the (promoted) input
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, np.newaxis]
    return fft.dctn(x, type=2, norm="ortho", axes=_SPATIAL_AXES)


def idct2(spectrum):
    """Inverse of :func:`dct2`. The result is not clipped."""
    s = np.asarray(spectrum, dtype=np.float64)
    if s.ndim == 2:
        s = s[:, :, np.newaxis]
    return fft.idctn(s, type=2, norm="ortho", axes=_SPATIAL_AXES)


def clip_to_pixels(image, range_max=DEFAULT_RANGE_MAX):
    """Clamp every value into ``[0, range_max]``."""
    return np.clip(np.asarray(image, dtype=np.float64), 0.0, range_max)


def zigzag(height, width):
    """JPEG-style zig-zag traversal of a ``height x width`` grid.

    Returns an ``(height * width, 2)`` integer array whose k-th row is the
    ``(row, col)`` of linear index k. Anti-diagonals are walked alternately,
    starting at the DC corner and ending at ``(height - 1, width - 1)``.
    """
    if height < 1 or width < 1:
        raise ValueError(f"dimensions must be positive, got {height}x{width}")
    order = []
    for s in range(height + width - 1):
        r_lo = max(0, s - width + 1)
        r_hi = min(s, height - 1)
        rows = range(r_lo, r_hi + 1) if s % 2 else range(r_hi, r_lo - 1, -1)
        order.extend((r, s - r) for r in rows)
    return np.array(order, dtype=np.intp)


def zigzag_rank(height, width):
    """``(height, width)`` grid holding each cell's zig-zag index."""
    order = zigzag(height, width)
    rank = np.empty((height, width), dtype=np.intp)
    rank[order[:, 0], order[:, 1]] = np.arange(len(order))
    return rank


def region_energy(spectrum, tau):
    """Fraction of squared-coefficient energy in the bottom-right ``tau x tau`` block.

    Energy is summed over all channels. A spectrum with zero energy yields 0.
    """
    s = check_image(spectrum)
    h, w, _ = s.shape
    tau = check_tau(tau, h, w)
    total = np.sum(s**2)
    if total == 0:
        return 0.0
    return float(np.sum(s[h - tau :, w - tau :, :] ** 2) / total)
