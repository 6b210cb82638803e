"""Rate-distortion-perception trade-off for a scalar Gaussian source.

Rates are in bits. Distortion is expected squared error; perception is the
squared Wasserstein-2 distance between source and reconstruction
distributions. Empirical perception here uses per-position scalar Gaussian
fits of raw pixels, not Inception features.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_images, check_same_shape
from .bounds import RepetTriggerParams, p_repet_lower
from .exceptions import NumericDomainError

# slack for floating round-off when comparing a tail probability to its target
_TARGET_SLACK = 1e-12


@dataclass(frozen=True)
class GaussianSource:
    sigma_x: float

    def __post_init__(self):
        if not self.sigma_x > 0:
            raise ValueError(f"sigma_x must be positive, got {self.sigma_x}")


@dataclass(frozen=True)
class RdpPoint:
    rate: float
    distortion: float
    perception: float


def _sigma(src):
    if isinstance(src, GaussianSource):
        return src.sigma_x
    return GaussianSource(float(src)).sigma_x


def rd_shannon(src, distortion):
    """Shannon rate-distortion function ``max(0.5 * log2(sigma^2 / D), 0)``."""
    s = _sigma(src)
    if not 0 < distortion < math.inf:
        raise NumericDomainError(f"distortion must be positive and finite, got {distortion}")
    return max(0.5 * math.log2(s * s / distortion), 0.0)


def perception_threshold(src, distortion):
    """``sigma - sqrt(|sigma^2 - D|)``: the value of sqrt(P) where the two branches meet."""
    s = _sigma(src)
    return s - math.sqrt(abs(s * s - distortion))


def rdp_gaussian(src, distortion, perception):
    """Minimum rate (bits) at squared-error ``distortion`` and squared-W2 ``perception``.

    When ``sqrt(P)`` reaches :func:`perception_threshold` the perception
    constraint is inactive and the rate equals :func:`rd_shannon`; the two
    expressions agree on the threshold itself.

    Raises
    ------
    NumericDomainError
        For ``D <= 0``, non-finite ``D``, ``P < 0``, or inputs that make the active-constraint
        expression non-finite.
    """
    s = _sigma(src)
    D, P = float(distortion), float(perception)
    if not 0 < D < math.inf:
        raise NumericDomainError(f"distortion must be positive and finite, got {D}")
    if not P >= 0:
        raise NumericDomainError(f"perception must be non-negative, got {P}")
    if math.sqrt(P) >= perception_threshold(s, D):
        return rd_shannon(s, D)
    a2 = (s - math.sqrt(P)) ** 2
    num = s * s * a2
    den = num - ((s * s + a2 - D) / 2.0) ** 2
    if not (num > 0 and den > 0):
        raise NumericDomainError(f"degenerate inputs sigma_x={s}, D={D}, P={P}")
    rate = 0.5 * math.log2(num / den)
    if not math.isfinite(rate):
        raise NumericDomainError(f"non-finite rate for sigma_x={s}, D={D}, P={P}")
    return max(rate, 0.0)


def rdp_curve(src, perception, distortions):
    """Evaluate :func:`rdp_gaussian` along a distortion grid, in grid order."""
    return [
        RdpPoint(rdp_gaussian(src, d, perception), float(d), float(perception)) for d in distortions
    ]


def measure_distortion(a, b):
    """Mean over images of the per-pixel squared error."""
    A, B = check_images(a), check_images(b)
    check_same_shape(A, B, "datasets")
    if A.shape[0] == 0:
        raise ValueError("datasets are empty")
    return float(np.mean((A - B) ** 2))


def measure_perception(a, b):
    """Squared W2 between per-position scalar Gaussian fits, averaged over positions.

    For each pixel position and channel the two datasets are summarized by
    their sample mean and standard deviation (ddof=1); the squared W2 between
    the fitted Gaussians is ``(mu_a - mu_b)**2 + (s_a - s_b)**2``.
    """
    A, B = check_images(a), check_images(b)
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise ValueError("each dataset needs at least two images")
    if A.shape[1:] != B.shape[1:]:
        raise ValueError(f"image shapes differ: {A.shape[1:]} vs {B.shape[1:]}")
    dmu = A.mean(axis=0) - B.mean(axis=0)
    dsd = A.std(axis=0, ddof=1) - B.std(axis=0, ddof=1)
    return float(np.mean(dmu**2 + dsd**2))


def min_beta_for_target(target_pf, n_coeffs, n_preserved, q):
    """Largest ``beta`` whose repetitive-trigger bound still reaches ``target_pf``.

    Raises
    ------
    NumericDomainError
        If even ``beta = 1`` falls short of the target.
    """
    if not 0 < target_pf <= 1:
        raise ValueError(f"target_pf must lie in (0, 1], got {target_pf}")
    n_free = n_coeffs - n_preserved - 1
    best = None
    for beta in range(1, n_free + 1):
        p = p_repet_lower(RepetTriggerParams(n_coeffs, n_preserved, beta, q))
        if p + _TARGET_SLACK >= target_pf:
            best = beta
        else:
            break
    if best is None:
        raise NumericDomainError(f"target {target_pf} is unattainable even at beta = 1")
    return best


def min_tau(beta, channels=3):
    """Smallest square side ``tau`` with ``tau**2 >= ceil(beta / channels)``."""
    if beta < 1 or channels < 1:
        raise ValueError("beta and channels must be positive")
    per_channel = -(-beta // channels)
    tau = math.isqrt(per_channel)
    return tau if tau * tau >= per_channel else tau + 1
