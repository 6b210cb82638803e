"""Input validation helpers shared by the estimators and functional API.

Images are numpy arrays laid out ``(height, width, channels)``; batches add a
leading sample axis. Grayscale ``(height, width)`` input is promoted to a
single channel.
"""

import numbers

import numpy as np

DEFAULT_RANGE_MAX = 255.0


def check_image(image, range_max=None, copy=False):
    """Return ``image`` as a float64 ``(H, W, C)`` array.

    Parameters
    ----------
    image : array-like
        2D or 3D pixel grid.
    range_max : float, optional
        When given, every value must lie in ``[0, range_max]``.
    copy : bool, default=False
        Force a copy even if the input is already float64.
    """
    arr = np.asarray(image, dtype=np.float64)
    if copy:
        arr = arr.copy()
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2D or 3D image, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1:
        raise ValueError(f"image dimensions must be positive, got {h}x{w}")
    if c not in (1, 3):
        raise ValueError(f"images must have 1 or 3 channels, got {c}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if range_max is not None and (arr.min() < 0 or arr.max() > range_max):
        raise ValueError(f"pixel values must lie in [0, {range_max}]")
    return arr


def check_images(images, range_max=None):
    """Return a batch of images as a float64 ``(n, H, W, C)`` array.

    Accepts a 4D array, a 3D array of grayscale images, or any sequence of
    equally shaped images. An empty sequence yields shape ``(0, 0, 0, 0)``
    unless it is already an empty 4D array.
    """
    if isinstance(images, np.ndarray) and images.ndim == 4:
        arr = images.astype(np.float64, copy=False)
        if arr.shape[0] and arr.shape[-1] not in (1, 3):
            raise ValueError(f"images must have 1 or 3 channels, got {arr.shape[-1]}")
    elif isinstance(images, np.ndarray) and images.ndim == 3 and images.shape[-1] not in (1, 3):
        arr = images.astype(np.float64, copy=False)[..., np.newaxis]
    else:
        items = [check_image(im) for im in images]
        if not items:
            return np.zeros((0, 0, 0, 0))
        shapes = {im.shape for im in items}
        if len(shapes) != 1:
            raise ValueError(f"all images must share one shape, got {sorted(shapes)}")
        arr = np.stack(items)
    if arr.shape[0] and not np.all(np.isfinite(arr)):
        raise ValueError("images contain non-finite values")
    if range_max is not None and arr.size and (arr.min() < 0 or arr.max() > range_max):
        raise ValueError(f"pixel values must lie in [0, {range_max}]")
    return arr


def check_tau(tau, height, width):
    if not isinstance(tau, numbers.Integral) or isinstance(tau, bool):
        raise TypeError(f"tau must be an integer, got {tau!r}")
    if not 1 <= tau <= min(height, width):
        raise ValueError(f"tau must lie in [1, {min(height, width)}], got {tau}")
    return int(tau)


def check_same_shape(a, b, what="inputs"):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")


def image_rng(seed, ordinal):
    """Independent generator for image ``ordinal`` under global ``seed``.

    Streams depend only on ``(seed, ordinal)``, so results do not change with
    the order or degree of parallelism in which images are processed.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(ordinal),)))
