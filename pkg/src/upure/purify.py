"""High-frequency purification of images in the DCT domain.

Each image is moved to the DCT domain, the bottom-right ``tau x tau`` block of
every channel is rewritten by one of three strategies, and the result is
transformed back and clipped to the pixel range:

* ``turn_to_zero`` discards the block.
* ``replace_from_other`` copies the block from a benign donor image.
* ``add_perturbation`` adds Gaussian noise whose norm exceeds ``epsilon``.

:class:`UPure` wraps the pipeline as a scikit-learn transformer. :class:`Cutout`
and :class:`SmoothingFilter` provide the augmentation and spatial-filter
baselines used alongside it.
"""

import enum
import os
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    DEFAULT_RANGE_MAX,
    check_image,
    check_images,
    check_same_shape,
    check_tau,
    image_rng,
)
from .exceptions import NumericDomainError, PerturbationBudgetError, PurificationError
from .metrics import batch_fidelity
from .spectral import clip_to_pixels, dct2, idct2


class Strategy(str, enum.Enum):
    TURN_TO_ZERO = "turn_to_zero"
    REPLACE_FROM_OTHER = "replace_from_other"
    ADD_PERTURBATION = "add_perturbation"


@dataclass(frozen=True)
class PurifyConfig:
    """Parameters of one purification run.

    ``sigma`` is the per-coefficient noise std in DCT units on the 0-255
    scale; ``epsilon`` is the minimum Euclidean norm of the noise block.
    """

    strategy: Strategy = Strategy.ADD_PERTURBATION
    tau: int = 16
    sigma: float = 3.0
    epsilon: float = 0.0
    seed: int = 0
    max_draws: int = 1000
    range_max: float = DEFAULT_RANGE_MAX

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.tau < 1:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.sigma < 0 or self.epsilon < 0:
            raise ValueError("sigma and epsilon must be non-negative")
        if self.epsilon > 0 and self.sigma == 0:
            raise ValueError("epsilon > 0 is unreachable with sigma = 0")
        if self.max_draws < 1:
            raise ValueError("max_draws must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def _block(spectrum, tau):
    h, w = spectrum.shape[-3], spectrum.shape[-2]
    tau = check_tau(tau, h, w)
    return (..., slice(h - tau, h), slice(w - tau, w), slice(None))


def turn_to_zero(spectrum, tau):
    """Zero the bottom-right ``tau x tau`` coefficients of every channel."""
    out = np.array(spectrum, dtype=np.float64)
    out[_block(out, tau)] = 0.0
    return out


def replace_from_other(spectrum, donor, tau):
    """Overwrite the bottom-right block with the donor's corresponding block."""
    out = np.array(spectrum, dtype=np.float64)
    donor = np.asarray(donor, dtype=np.float64)
    check_same_shape(out, donor, "spectrum and donor")
    idx = _block(out, tau)
    out[idx] = donor[idx]
    return out


def add_perturbation(spectrum, tau, sigma, epsilon, rng, max_draws=1000):
    """Add i.i.d. Gaussian noise to the bottom-right block.

    The whole noise block (all channels together) is redrawn until its
    Euclidean norm exceeds ``epsilon``. ``epsilon = 0`` accepts the first
    draw.

    Raises
    ------
    PerturbationBudgetError
        If ``max_draws`` draws never exceed ``epsilon``.
    """
    out = np.array(spectrum, dtype=np.float64)
    if epsilon > 0 and sigma <= 0:
        raise ValueError("epsilon > 0 is unreachable with sigma = 0")
    idx = _block(out, tau)
    shape = out[idx].shape
    for _ in range(max_draws):
        # scaling one standard-normal draw keeps noise linear in sigma for a fixed stream
        eta = sigma * rng.standard_normal(shape)
        if epsilon == 0 or np.linalg.norm(eta) > epsilon:
            out[idx] += eta
            return out
    raise PerturbationBudgetError(
        f"noise norm never exceeded epsilon={epsilon} in {max_draws} draws (sigma={sigma})"
    )


def purify_spectrum(spectrum, cfg, rng, donor_spectra=None):
    """Apply the configured strategy to one spectrum."""
    if cfg.strategy is Strategy.TURN_TO_ZERO:
        return turn_to_zero(spectrum, cfg.tau)
    if cfg.strategy is Strategy.REPLACE_FROM_OTHER:
        if donor_spectra is None or len(donor_spectra) == 0:
            raise ValueError("replace_from_other needs a non-empty donor pool")
        donor = donor_spectra[rng.integers(len(donor_spectra))]
        return replace_from_other(spectrum, donor, cfg.tau)
    return add_perturbation(spectrum, cfg.tau, cfg.sigma, cfg.epsilon, rng, cfg.max_draws)


def purify_image(image, cfg, donor_pool=None, rng=None):
    """Purify a single image: DCT, strategy, inverse DCT, clip.

    Parameters
    ----------
    image : array-like of shape (H, W) or (H, W, C)
    cfg : PurifyConfig
    donor_pool : sequence of images, optional
        Required by ``replace_from_other``; a donor is drawn uniformly from it.
    rng : numpy.random.Generator, optional
        Defaults to the stream for ordinal 0 under ``cfg.seed``.
    """
    x = check_image(image)
    if rng is None:
        rng = image_rng(cfg.seed, 0)
    donors = None
    if cfg.strategy is Strategy.REPLACE_FROM_OTHER:
        if donor_pool is None or len(donor_pool) == 0:
            raise ValueError("replace_from_other needs a non-empty donor pool")
        donors = dct2(check_images(donor_pool))
        check_same_shape(donors[0], x, "image and donor")
    spectrum = purify_spectrum(dct2(x), cfg, rng, donors)
    return clip_to_pixels(idct2(spectrum), cfg.range_max)


def _purify_chunk(images, start, cfg, donor_spectra):
    out = np.empty_like(images)
    for i, x in enumerate(images):
        ordinal = start + i
        try:
            rng = image_rng(cfg.seed, ordinal)
            spectrum = purify_spectrum(dct2(x), cfg, rng, donor_spectra)
            out[i] = clip_to_pixels(idct2(spectrum), cfg.range_max)
        except Exception as exc:
            raise PurificationError(ordinal, exc) from exc
    return out


def _chunks(n, n_jobs):
    if n == 0:
        return []
    n_chunks = max(1, min(n, 4 * max(1, n_jobs)))
    bounds = np.linspace(0, n, n_chunks + 1).astype(int)
    return [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _effective_jobs(n_jobs):
    if n_jobs is None:
        return 1
    if n_jobs < 0:
        return max(1, (os.cpu_count() or 1) + 1 + n_jobs)
    return max(1, int(n_jobs))


def purify_dataset(images, cfg, donor_pool=None, n_jobs=None):
    """Purify every image of a batch.

    Image ``i`` uses the random stream derived from ``(cfg.seed, i)``, so the
    output is bit-identical for any ``n_jobs``. Output order matches input.

    Raises
    ------
    PurificationError
        Wrapping the first per-image failure, with its ordinal.
    """
    X = check_images(images)
    if X.shape[0] == 0:
        return X.copy()
    check_tau(cfg.tau, X.shape[1], X.shape[2])
    donor_spectra = None
    if cfg.strategy is Strategy.REPLACE_FROM_OTHER:
        if donor_pool is None or len(donor_pool) == 0:
            raise ValueError("replace_from_other needs a non-empty donor pool")
        donor_spectra = dct2(check_images(donor_pool))
        check_same_shape(donor_spectra[0], X[0], "images and donors")
    return _run_chunks(X, cfg, donor_spectra, n_jobs)


def _run_chunks(X, cfg, donor_spectra, n_jobs):
    if X.shape[0] == 0:
        return X.copy()
    jobs = _effective_jobs(n_jobs)
    chunks = _chunks(X.shape[0], jobs)
    if jobs == 1:
        parts = [_purify_chunk(X[lo:hi], lo, cfg, donor_spectra) for lo, hi in chunks]
    else:
        parts = Parallel(n_jobs=jobs, prefer="threads")(
            delayed(_purify_chunk)(X[lo:hi], lo, cfg, donor_spectra) for lo, hi in chunks
        )
    return np.concatenate(parts)


def cutout(image, cut_height, cut_width, rng, fill_value=127.0):
    """Fill a uniformly placed ``cut_height x cut_width`` block with ``fill_value``.

    The top-left corner is uniform over the ``(H - cut_height + 1) *
    (W - cut_width + 1)`` positions that keep the block inside the image.
    """
    x = check_image(image, copy=True)
    h, w, _ = x.shape
    if not (1 <= cut_height < h and 1 <= cut_width < w):
        raise ValueError(f"cutout {cut_height}x{cut_width} must be smaller than image {h}x{w}")
    top = rng.integers(h - cut_height + 1)
    left = rng.integers(w - cut_width + 1)
    x[top : top + cut_height, left : left + cut_width, :] = fill_value
    return x


def gaussian_kernel(size, sigma):
    """Normalized ``size x size`` Gaussian kernel."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def smooth_baseline(image, kind="gaussian", kernel=3, sigma_s=1.0):
    """Per-channel spatial smoothing with reflected edges.

    Parameters
    ----------
    kind : {'gaussian', 'median'}
    kernel : odd int >= 3
    sigma_s : float
        Gaussian std in pixels; ignored by the median filter.
    """
    x = check_image(image)
    if kernel < 3 or kernel % 2 == 0:
        raise ValueError(f"kernel must be an odd integer >= 3, got {kernel}")
    if kind == "gaussian":
        weights = gaussian_kernel(kernel, sigma_s)[:, :, np.newaxis]
        return ndimage.correlate(x, weights, mode="reflect")
    if kind == "median":
        return ndimage.median_filter(x, size=(kernel, kernel, 1), mode="reflect")
    raise ValueError(f"unknown smoothing kind {kind!r}")


class UPure(TransformerMixin, BaseEstimator):
    """Frequency-domain purification transformer.

    Parameters
    ----------
    strategy : {'add_perturbation', 'turn_to_zero', 'replace_from_other'}, default='add_perturbation'
    tau : int, default=16
        Side of the bottom-right DCT block that is rewritten.
    sigma : float, default=3.0
        Std of the added noise, DCT units on the 0-255 scale.
    epsilon : float, default=0.0
        The noise block is redrawn until its norm exceeds this value.
    seed : int, default=0
    max_draws : int, default=1000
        Resampling budget for ``epsilon``.
    range_max : float, default=255.0
    n_jobs : int, optional
        Threads used by :meth:`transform`; results do not depend on it.

    Attributes
    ----------
    image_shape_ : tuple of int
        ``(H, W, C)`` seen during :meth:`fit`.
    donor_spectra_ : ndarray or None
        DCT spectra of the donor pool (``replace_from_other`` only).

    Notes
    -----
    ``fit(X)`` uses ``X`` as the donor pool unless ``donors`` is passed. With
    ``fit_transform`` an image may therefore draw itself as donor, which
    leaves it unchanged.
    """

    def __init__(
        self,
        strategy="add_perturbation",
        tau=16,
        sigma=3.0,
        epsilon=0.0,
        seed=0,
        max_draws=1000,
        range_max=DEFAULT_RANGE_MAX,
        n_jobs=None,
    ):
        self.strategy = strategy
        self.tau = tau
        self.sigma = sigma
        self.epsilon = epsilon
        self.seed = seed
        self.max_draws = max_draws
        self.range_max = range_max
        self.n_jobs = n_jobs

    def _config(self):
        return PurifyConfig(
            strategy=self.strategy,
            tau=self.tau,
            sigma=self.sigma,
            epsilon=self.epsilon,
            seed=self.seed,
            max_draws=self.max_draws,
            range_max=self.range_max,
        )

    def fit(self, X, y=None, donors=None):
        cfg = self._config()
        X = check_images(X, range_max=self.range_max)
        if X.shape[0] == 0:
            raise ValueError("fit needs at least one image")
        check_tau(cfg.tau, X.shape[1], X.shape[2])
        self.image_shape_ = X.shape[1:]
        self.donor_spectra_ = None
        if cfg.strategy is Strategy.REPLACE_FROM_OTHER:
            pool = X if donors is None else check_images(donors, range_max=self.range_max)
            if pool.shape[1:] != self.image_shape_:
                raise ValueError("donor images must match the fitted image shape")
            self.donor_spectra_ = dct2(pool)
        return self

    def transform(self, X):
        check_is_fitted(self, "image_shape_")
        cfg = self._config()
        X = check_images(X)
        if X.shape[0] and X.shape[1:] != self.image_shape_:
            raise ValueError(f"expected images of shape {self.image_shape_}, got {X.shape[1:]}")
        return _run_chunks(X, cfg, self.donor_spectra_, self.n_jobs)


class Cutout(TransformerMixin, BaseEstimator):
    """Cutout augmentation as a stateless transformer.

    Image ``i`` of a :meth:`transform` call uses the random stream for
    ``(seed, i)``.
    """

    def __init__(self, cut_height=16, cut_width=16, fill_value=127.0, seed=0):
        self.cut_height = cut_height
        self.cut_width = cut_width
        self.fill_value = fill_value
        self.seed = seed

    def fit(self, X, y=None):
        X = check_images(X)
        if X.shape[0]:
            h, w = X.shape[1:3]
            if not (self.cut_height < h and self.cut_width < w):
                raise ValueError("cutout must be smaller than the images")
        return self

    def transform(self, X):
        X = check_images(X)
        out = X.copy()
        for i in range(X.shape[0]):
            out[i] = cutout(
                X[i], self.cut_height, self.cut_width, image_rng(self.seed, i), self.fill_value
            )
        return out


class SmoothingFilter(TransformerMixin, BaseEstimator):
    """Gaussian or median spatial filter, the comparison baseline for UPure."""

    def __init__(self, kind="gaussian", kernel=3, sigma_s=1.0):
        self.kind = kind
        self.kernel = kernel
        self.sigma_s = sigma_s

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = check_images(X)
        out = X.copy()
        for i, x in enumerate(X):
            out[i] = smooth_baseline(x, self.kind, self.kernel, self.sigma_s)
        return out


def parseval_sigma(target_psnr, height, width, tau, range_max=DEFAULT_RANGE_MAX):
    """Noise std whose expected pixel MSE ``sigma**2 * tau**2 / (H * W)`` meets ``target_psnr``.

    Ignores clipping, so it is exact only for images that stay in range.
    """
    mse = range_max**2 / 10.0 ** (target_psnr / 10.0)
    return float(np.sqrt(mse * height * width / tau**2))


def calibrate_sigma(
    images, target_psnr, tau=16, seed=0, lo=0.1, hi=50.0, tol=0.1, range_max=DEFAULT_RANGE_MAX, n_jobs=None
):
    """Find the ``add_perturbation`` sigma whose mean PSNR hits ``target_psnr``.

    Bisection on ``[lo, hi]``. Every evaluation reuses the same random streams,
    so the noise scales linearly with sigma and mean PSNR is monotone in it.

    Returns
    -------
    sigma : float
    achieved_psnr : float
        Mean PSNR at ``sigma``, within ``tol`` dB of the target.
    """
    X = check_images(images, range_max=range_max)
    if X.shape[0] == 0:
        raise ValueError("calibration needs at least one image")

    def mean_psnr(sigma):
        cfg = PurifyConfig(Strategy.ADD_PERTURBATION, tau, sigma, 0.0, seed, range_max=range_max)
        return batch_fidelity(X, purify_dataset(X, cfg, n_jobs=n_jobs), range_max).psnr_mean

    p_lo, p_hi = mean_psnr(lo), mean_psnr(hi)
    if not p_hi - tol <= target_psnr <= p_lo + tol:
        raise NumericDomainError(
            f"target {target_psnr} dB outside the reachable range [{p_hi:.3f}, {p_lo:.3f}] dB"
        )
    for sigma, achieved in ((lo, p_lo), (hi, p_hi)):
        if abs(achieved - target_psnr) <= tol / 10:
            return sigma, achieved
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        achieved = mean_psnr(mid)
        if abs(achieved - target_psnr) <= tol / 10 or hi - lo < 1e-9:
            return mid, achieved
        if achieved > target_psnr:
            lo = mid
        else:
            hi = mid
    return mid, achieved
