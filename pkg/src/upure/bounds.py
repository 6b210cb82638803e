"""Lower bounds on the probability that a backdoor trigger is destroyed.

Two mechanisms are modelled:

* a single rectangular trigger is invalidated when a random cutout covers at
  least ``alpha`` of its pixels (:func:`p_single_lower`);
* a repetitive trigger is invalidated when at least ``beta`` of the
  ``N - M - 1`` high-frequency DCT coefficients change, coefficient ``k``
  changing independently with probability ``q_k`` (:func:`p_repet_lower`).

The combined bound is their product (:func:`p_defense`). Each closed form has a
brute-force or Monte-Carlo counterpart for verification.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class SingleTriggerParams:
    """Geometry of an image, a cutout window and a single trigger (pixels).

    ``alpha`` is the minimal overlap area that invalidates the trigger.
    Values above ``trig_h * trig_w`` are allowed and make every bound 0.
    """

    image_h: int
    image_w: int
    cut_h: int
    cut_w: int
    trig_h: int
    trig_w: int
    alpha: int

    def __post_init__(self):
        if not self.image_h > self.cut_h >= self.trig_h >= 1:
            raise ValueError("need image_h > cut_h >= trig_h >= 1")
        if not self.image_w > self.cut_w >= self.trig_w >= 1:
            raise ValueError("need image_w > cut_w >= trig_w >= 1")
        if self.alpha < 1:
            raise ValueError("alpha must be at least 1")

    @property
    def n_placements(self):
        return (self.image_h - self.cut_h + 1) * (self.image_w - self.cut_w + 1)


@dataclass(frozen=True)
class RepetTriggerParams:
    """Coefficient-destruction model for a repetitive trigger.

    ``n_coeffs`` is N, ``n_preserved`` is M; the changeable coefficients are
    the zig-zag indices ``M + 1 .. N - 1``. ``q`` is a scalar or a sequence
    of ``N - M - 1`` per-coefficient change probabilities.
    """

    n_coeffs: int
    n_preserved: int
    beta: int
    q: object

    def __post_init__(self):
        if self.n_preserved < 0 or self.n_preserved + 1 > self.n_coeffs - 1:
            raise ValueError("need 0 <= n_preserved and n_preserved + 1 <= n_coeffs - 1")
        if not 1 <= self.beta <= self.n_free:
            raise ValueError(f"beta must lie in [1, {self.n_free}], got {self.beta}")
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim == 0:
            object.__setattr__(self, "q", float(q))
        elif q.shape != (self.n_free,):
            raise ValueError(f"q must be a scalar or have length {self.n_free}, got {q.shape}")
        else:
            object.__setattr__(self, "q", tuple(float(v) for v in q))
        if np.any(q < 0) or np.any(q > 1):
            raise ValueError("probabilities must lie in [0, 1]")

    @property
    def n_free(self):
        return self.n_coeffs - self.n_preserved - 1


class MonteCarloEstimate(NamedTuple):
    estimate: float
    stderr: float
    hits: int
    trials: int


def _mc_result(hits, trials):
    p = hits / trials
    return MonteCarloEstimate(p, math.sqrt(p * (1 - p) / trials), int(hits), int(trials))


def _ceil_div(a, b):
    return -(-a // b)


def phi(w, p):
    """Largest real vertical offset ``h`` that keeps overlap at least ``alpha``.

    ``phi(w) = trig_h - alpha / (trig_w - w)`` for ``0 <= w < trig_w``; it may
    be negative.
    """
    if not 0 <= w < p.trig_w:
        raise ValueError(f"w must lie in [0, {p.trig_w}), got {w}")
    return p.trig_h - p.alpha / (p.trig_w - w)


def lattice_count(p):
    """Number of integer cutout offsets ``(w, h)`` covering ``alpha`` of a corner trigger.

    Evaluates ``sum_{w=0}^{floor(W_t - alpha/H_t)} (floor(phi(w)) + 1)`` in
    exact integer arithmetic; terms below zero count as zero.
    """
    th, tw, alpha = p.trig_h, p.trig_w, p.alpha
    if alpha > th * tw:
        return 0
    w_max = tw - _ceil_div(alpha, th)
    total = 0
    for w in range(0, w_max + 1):
        # floor(th - alpha / (tw - w)) == th - ceil(alpha / (tw - w))
        total += max(th - _ceil_div(alpha, tw - w) + 1, 0)
    return total


def p_single_lower(p):
    """Lower bound on the single-trigger failure probability, from the corner lattice count."""
    return lattice_count(p) / p.n_placements


def _overlap(trig_r, trig_c, p, cut_r, cut_c):
    rows = np.minimum(trig_r + p.trig_h, cut_r + p.cut_h) - np.maximum(trig_r, cut_r)
    cols = np.minimum(trig_c + p.trig_w, cut_c + p.cut_w) - np.maximum(trig_c, cut_c)
    return np.clip(rows, 0, None) * np.clip(cols, 0, None)


def covering_count(p, trigger_position=(0, 0)):
    """Exact count of cutout placements whose overlap with the trigger is at least ``alpha``.

    Enumerates every top-left cutout corner inside the image.
    """
    r, c = trigger_position
    if not (0 <= r <= p.image_h - p.trig_h and 0 <= c <= p.image_w - p.trig_w):
        raise ValueError(f"trigger at {trigger_position} does not fit in the image")
    cut_r = np.arange(p.image_h - p.cut_h + 1)[:, np.newaxis]
    cut_c = np.arange(p.image_w - p.cut_w + 1)[np.newaxis, :]
    return int(np.count_nonzero(_overlap(r, c, p, cut_r, cut_c) >= p.alpha))


def p_single_exact_corner(p):
    """Failure probability for a trigger in the image corner, by enumeration."""
    return covering_count(p, (0, 0)) / p.n_placements


def p_single_monte_carlo(p, trigger_position=(0, 0), trials=10**6, seed=0, chunk=1 << 20):
    """Fraction of uniformly random cutout placements covering ``alpha`` of the trigger."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    r, c = trigger_position
    if not (0 <= r <= p.image_h - p.trig_h and 0 <= c <= p.image_w - p.trig_w):
        raise ValueError(f"trigger at {trigger_position} does not fit in the image")
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = trials
    while remaining:
        m = min(chunk, remaining)
        cut_r = rng.integers(p.image_h - p.cut_h + 1, size=m)
        cut_c = rng.integers(p.image_w - p.cut_w + 1, size=m)
        hits += int(np.count_nonzero(_overlap(r, c, p, cut_r, cut_c) >= p.alpha))
        remaining -= m
    return _mc_result(hits, trials)


def binomial_tail(n, q, beta):
    """``P[Bin(n, q) >= beta]`` as the direct sum of binomial terms."""
    if beta <= 0:
        return 1.0
    if beta > n:
        return 0.0
    terms = [math.comb(n, k) * q**k * (1.0 - q) ** (n - k) for k in range(beta, n + 1)]
    return min(math.fsum(terms), 1.0)


def poisson_binomial_pmf(probs):
    """Distribution of the number of successes among independent Bernoulli trials.

    Built by convolving one trial at a time; entry ``k`` is ``P[K = k]``.
    """
    pmf = np.array([1.0])
    for q in probs:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - q)
        nxt[1:] += pmf * q
        pmf = nxt
    return pmf


def poisson_binomial_tail(probs, beta):
    """``P[K >= beta]`` for a Poisson-binomial count ``K``."""
    pmf = poisson_binomial_pmf(probs)
    if beta <= 0:
        return 1.0
    if beta >= pmf.size:
        return 0.0
    return min(math.fsum(pmf[beta:]), 1.0)


def p_repet_lower(p):
    """Probability that at least ``beta`` changeable coefficients change.

    A scalar ``q`` gives the binomial tail; a vector gives the
    Poisson-binomial tail, which coincides with it when all entries agree.
    """
    if isinstance(p.q, float):
        return binomial_tail(p.n_free, p.q, p.beta)
    return poisson_binomial_tail(p.q, p.beta)


def p_repet_monte_carlo(p, trials=10**6, seed=0, chunk=1 << 16):
    """Simulate independent coefficient flips and count trials with ``>= beta`` changes."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    q = np.broadcast_to(np.asarray(p.q, dtype=np.float64), (p.n_free,))
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = trials
    while remaining:
        m = min(chunk, remaining)
        changed = rng.random((m, p.n_free)) < q
        hits += int(np.count_nonzero(changed.sum(axis=1) >= p.beta))
        remaining -= m
    return _mc_result(hits, trials)


def p_defense(sp, rp):
    """Combined bound: product of the single-trigger and repetitive-trigger bounds."""
    return p_single_lower(sp) * p_repet_lower(rp)


def sweep_single(
    image_size=32,
    cut_sizes=(8, 12, 16),
    trigger_sizes=(2, 4, 6, 8),
    alphas=(1, 4, 8, 16),
):
    """Single-trigger bound over square cutouts and triggers.

    Combinations violating ``cut >= trigger`` are skipped.
    """
    rows = []
    for cut in cut_sizes:
        for trig in trigger_sizes:
            if trig > cut:
                continue
            for alpha in alphas:
                p = SingleTriggerParams(image_size, image_size, cut, cut, trig, trig, alpha)
                rows.append(
                    {
                        "image_h": p.image_h,
                        "image_w": p.image_w,
                        "cut_h": p.cut_h,
                        "cut_w": p.cut_w,
                        "trig_h": p.trig_h,
                        "trig_w": p.trig_w,
                        "alpha": p.alpha,
                        "p_single_lower": p_single_lower(p),
                    }
                )
    return rows


def sweep_repet(n_coeffs=16, preserved=(2, 4), qs=(0.2, 0.5, 0.8)):
    """Repetitive-trigger bound for every ``beta`` in ``1 .. N - M - 1``."""
    rows = []
    for m in preserved:
        for q in qs:
            for beta in range(1, n_coeffs - m):
                p = RepetTriggerParams(n_coeffs, m, beta, q)
                rows.append(
                    {"N": n_coeffs, "M": m, "q": q, "beta": beta, "p_repet_lower": p_repet_lower(p)}
                )
    return rows
