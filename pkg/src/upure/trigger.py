"""Backdoor trigger injection for building poisoned evaluation corpora."""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from ._validation import DEFAULT_RANGE_MAX, check_image, check_images, image_rng


@dataclass(frozen=True)
class RepetitiveTrigger:
    """Additive grid pattern that tiles the whole image.

    A row ``r`` lies on a grid line when ``r % (line_width + gap) <
    line_width``; columns likewise. With ``polarity='bipolar'`` (default) line
    cells receive ``+intensity`` and gap cells ``-intensity`` along each
    active axis, and ``axes='both'`` multiplies the two signs. For width 1 and
    gap 1 this is a +/-intensity checkerboard whose energy sits almost
    entirely in the highest DCT frequencies.

    ``polarity='unipolar'`` instead adds ``intensity`` to every cell on a row
    or column line and leaves gap cells untouched.
    """

    intensity: float = 30.0
    line_width: int = 1
    gap: int = 1
    axes: str = "both"
    polarity: str = "bipolar"

    def __post_init__(self):
        if self.intensity == 0:
            raise ValueError("intensity must be non-zero")
        if self.line_width < 1 or self.gap < 1:
            raise ValueError("line_width and gap must be positive")
        if self.axes not in ("rows", "cols", "both"):
            raise ValueError(f"axes must be 'rows', 'cols' or 'both', got {self.axes!r}")
        if self.polarity not in ("bipolar", "unipolar"):
            raise ValueError(f"polarity must be 'bipolar' or 'unipolar', got {self.polarity!r}")

    def pattern(self, height, width):
        """The ``(height, width)`` additive delta, before clipping."""
        period = self.line_width + self.gap
        if period > min(height, width):
            raise ValueError(f"grid period {period} exceeds image size {height}x{width}")
        on_row = (np.arange(height) % period < self.line_width)[:, np.newaxis]
        on_col = (np.arange(width) % period < self.line_width)[np.newaxis, :]
        if self.polarity == "unipolar":
            mask = {
                "rows": on_row & np.ones_like(on_col),
                "cols": np.ones_like(on_row) & on_col,
                "both": on_row | on_col,
            }[self.axes]
            return self.intensity * mask.astype(np.float64)
        sign_row = np.where(on_row, 1.0, -1.0)
        sign_col = np.where(on_col, 1.0, -1.0)
        sign = {
            "rows": sign_row * np.ones_like(sign_col),
            "cols": np.ones_like(sign_row) * sign_col,
            "both": sign_row * sign_col,
        }[self.axes]
        return self.intensity * sign

    def apply(self, image, rng=None, range_max=DEFAULT_RANGE_MAX):
        x = check_image(image)
        delta = self.pattern(x.shape[0], x.shape[1])
        return np.clip(x + delta[:, :, np.newaxis], 0.0, range_max)


@dataclass(frozen=True, eq=False)
class PatchTrigger:
    """Solid or custom rectangular patch pasted over the image.

    ``position`` is ``'corner'`` (top-left), ``'random'`` (uniform over all
    placements that fit) or a ``(row, col)`` tuple.
    """

    height: int = 4
    width: int = 4
    pattern: np.ndarray = None
    position: object = "corner"

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("patch dimensions must be positive")
        if self.pattern is not None:
            p = np.asarray(self.pattern, dtype=np.float64)
            if p.shape[:2] != (self.height, self.width):
                raise ValueError(f"pattern shape {p.shape} does not match {self.height}x{self.width}")

    def resolve_position(self, height, width, rng=None):
        if self.height > height or self.width > width:
            raise ValueError(f"patch {self.height}x{self.width} exceeds image {height}x{width}")
        if isinstance(self.position, str):
            if self.position == "corner":
                return 0, 0
            if self.position == "random":
                if rng is None:
                    raise ValueError("a random patch position needs an rng")
                return (
                    int(rng.integers(height - self.height + 1)),
                    int(rng.integers(width - self.width + 1)),
                )
            raise ValueError(f"unknown position {self.position!r}")
        r, c = self.position
        if not (0 <= r <= height - self.height and 0 <= c <= width - self.width):
            raise ValueError(f"patch at ({r}, {c}) exceeds image bounds {height}x{width}")
        return int(r), int(c)

    def apply(self, image, rng=None, range_max=DEFAULT_RANGE_MAX):
        x = check_image(image, copy=True)
        r, c = self.resolve_position(x.shape[0], x.shape[1], rng)
        if self.pattern is None:
            block = range_max
        else:
            block = np.asarray(self.pattern, dtype=np.float64)
            if block.ndim == 2:
                block = block[:, :, np.newaxis]
        x[r : r + self.height, c : c + self.width, :] = block
        return np.clip(x, 0.0, range_max)


@dataclass(frozen=True)
class PoisonConfig:
    rate: float = 0.002
    target_class: int = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.rate <= 1:
            raise ValueError(f"poisoning rate must lie in (0, 1], got {self.rate}")


def poison_count(rate, n):
    """``round(rate * n)`` with halves rounded up."""
    return int(math.floor(rate * n + 0.5))


def poison_dataset(images, labels, cfg, trigger, range_max=DEFAULT_RANGE_MAX, n_jobs=None):
    """Apply ``trigger`` to ``round(rate * n)`` uniformly chosen images.

    Candidates are the images of ``cfg.target_class`` when it is set, all
    images otherwise. Unselected images are returned unchanged. Image ``i``
    draws any randomness from the stream for ``(cfg.seed, i)``, so ``n_jobs``
    does not affect the result.

    Returns
    -------
    poisoned : ndarray of shape (n, H, W, C)
    mask : ndarray of bool, shape (n,)
        True at the ordinals that received the trigger.
    """
    X = check_images(images)
    n = X.shape[0]
    if cfg.target_class is not None:
        if labels is None:
            raise ValueError("target_class requires labels")
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ValueError("labels must have one entry per image")
        candidates = np.flatnonzero(labels == cfg.target_class)
        if candidates.size == 0:
            raise ValueError(f"target class {cfg.target_class} does not occur in labels")
    else:
        candidates = np.arange(n)

    k = poison_count(cfg.rate, n)
    mask = np.zeros(n, dtype=bool)
    out = X.copy()
    if k == 0:
        warnings.warn(f"poisoning rate {cfg.rate} selects no images out of {n}", stacklevel=2)
        return out, mask
    if k > candidates.size:
        raise ValueError(f"need {k} images to poison but only {candidates.size} candidates exist")

    selection_rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed)))
    chosen = np.sort(selection_rng.choice(candidates, size=k, replace=False))
    mask[chosen] = True
    triggered = Parallel(n_jobs=n_jobs or 1, prefer="threads")(
        delayed(trigger.apply)(X[i], image_rng(cfg.seed, i), range_max) for i in chosen
    )
    out[chosen] = triggered
    return out, mask
