"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` for the summary lines.
Set ``UPURE_CIFAR10_BIN`` to a CIFAR-10 binary batch to run the real-data
fidelity check; without it the synthetic fallback is used.
"""

import itertools
import math
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import natural_images
from upure.bounds import (
    RepetTriggerParams,
    SingleTriggerParams,
    covering_count,
    lattice_count,
    p_defense,
    p_repet_lower,
    p_repet_monte_carlo,
    p_single_lower,
    p_single_monte_carlo,
    poisson_binomial_tail,
)
from upure.cli import main
from upure.io import Dataset, load_dataset, save_dataset
from upure.metrics import batch_fidelity
from upure.purify import PurifyConfig, Strategy, calibrate_sigma, parseval_sigma, purify_dataset
from upure.rdp import perception_threshold, rd_shannon, rdp_gaussian
from upure.trigger import PatchTrigger, RepetitiveTrigger


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, detail

    return emit


def dct_matrix(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    m[0] /= np.sqrt(2.0)
    return m


def fraction_tail(n, q, beta):
    q = Fraction(q)
    return float(sum(math.comb(n, k) * q**k * (1 - q) ** (n - k) for k in range(beta, n + 1)))


SINGLE_GRID = [
    SingleTriggerParams(32, 32, 16, 16, th, tw, alpha)
    for th, tw in itertools.product(range(1, 9), repeat=2)
    for alpha in range(1, th * tw + 1)
]
REPET_GRID = [
    RepetTriggerParams(16, m, beta, q)
    for m in (2, 4)
    for q in (0.2, 0.5, 0.8)
    for beta in range(1, 16 - m)
]


def test_c1_transform_fidelity(report):
    from upure.spectral import dct2, idct2

    rng = np.random.default_rng(0)
    x = rng.uniform(0, 255, (1000, 32, 32, 3))
    t0 = time.perf_counter()
    s = dct2(x)
    back = idct2(s)
    elapsed = time.perf_counter() - t0
    err = np.max(np.abs(back - x))
    energy_x = np.sum(x**2, axis=(1, 2, 3))
    parseval = np.max(np.abs(np.sum(s**2, axis=(1, 2, 3)) - energy_x) / energy_x)
    ok = err < 1e-6 and parseval < 1e-9 and elapsed < 10
    report(
        "C1 transform fidelity",
        ok,
        f"max roundtrip error {err:.2e}, Parseval rel. error {parseval:.2e}, {elapsed:.2f}s",
    )


def test_c2_lattice_exactness(report):
    t0 = time.perf_counter()
    mismatches = [p for p in SINGLE_GRID if lattice_count(p) != covering_count(p)]
    worked = SingleTriggerParams(32, 32, 16, 16, 8, 8, 16)
    worked_ok = lattice_count(worked) == 33 and p_single_lower(worked) == 33 / 289
    elapsed = time.perf_counter() - t0
    ok = not mismatches and worked_ok and elapsed < 5
    report(
        "C2 lattice count exactness",
        ok,
        f"{len(SINGLE_GRID)} cases, {len(mismatches)} mismatches, 8x8/alpha=16 -> "
        f"{lattice_count(worked)}/289, {elapsed:.2f}s",
    )


def test_c3_single_bound_property(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    failures = []
    worst = math.inf
    for i in range(20):
        th, tw = (int(v) for v in rng.integers(2, 9, size=2))
        alpha = int(rng.integers(1, th * tw + 1))
        p = SingleTriggerParams(32, 32, 16, 16, th, tw, alpha)
        pos = (int(rng.integers(0, 33 - th)), int(rng.integers(0, 33 - tw)))
        mc = p_single_monte_carlo(p, pos, trials=10**6, seed=i)
        bound = p_single_lower(p)
        margin = mc.estimate - (bound - 3 * mc.stderr)
        worst = min(worst, margin)
        if margin < 0:
            failures.append((th, tw, alpha, pos))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60
    report(
        "C3 single-trigger bound property",
        ok,
        f"20 positions x 1e6 draws, {len(failures)} violations, min margin {worst:.4f}, {elapsed:.1f}s",
    )


def test_c4_repet_exactness(report):
    t0 = time.perf_counter()
    oracle_err = max(
        abs(p_repet_lower(p) - fraction_tail(p.n_free, p.q, p.beta)) for p in REPET_GRID
    )
    pb_err = max(
        abs(poisson_binomial_tail([p.q] * p.n_free, p.beta) - p_repet_lower(p)) for p in REPET_GRID
    )
    worst_z = 0.0
    for i, p in enumerate(REPET_GRID):
        exact = p_repet_lower(p)
        mc = p_repet_monte_carlo(p, trials=10**6, seed=100 + i)
        se = math.sqrt(exact * (1 - exact) / mc.trials)
        worst_z = max(worst_z, abs(mc.estimate - exact) / se if se > 0 else 0.0)
    table = {(p.n_preserved, p.q, p.beta): p_repet_lower(p) for p in REPET_GRID}
    in_beta = all(
        table[m, q, b] >= table[m, q, b + 1]
        for m in (2, 4)
        for q in (0.2, 0.5, 0.8)
        for b in range(1, 15 - m)
    )
    in_q = all(
        table[m, 0.2, b] <= table[m, 0.5, b] <= table[m, 0.8, b]
        for m in (2, 4)
        for b in range(1, 16 - m)
    )
    in_m = all(table[4, q, b] <= table[2, q, b] for q in (0.2, 0.5, 0.8) for b in range(1, 12))
    elapsed = time.perf_counter() - t0
    ok = oracle_err <= 1e-12 and pb_err <= 1e-12 and worst_z <= 3 and in_beta and in_q and in_m
    ok = ok and elapsed < 30
    report(
        "C4 repetitive-trigger exactness",
        ok,
        f"oracle err {oracle_err:.1e}, PB-vs-binomial {pb_err:.1e}, max |z| {worst_z:.2f} "
        f"over {len(REPET_GRID)} MC runs, monotone beta/q/M {in_beta}/{in_q}/{in_m}, {elapsed:.1f}s",
    )


def test_c5_defense_product(report):
    singles = [p_single_lower(p) for p in SINGLE_GRID]
    repets = [p_repet_lower(p) for p in REPET_GRID]
    bad = 0
    for sp, a in zip(SINGLE_GRID, singles):
        for rp, b in zip(REPET_GRID, repets):
            d = p_defense(sp, rp)
            if not (d == a * b and 0 <= d <= min(a, b)):
                bad += 1
    report(
        "C5 combined bound",
        bad == 0,
        f"{len(singles) * len(repets)} pairs, {bad} violations",
    )


def test_c6_rdp_function(report):
    t0 = time.perf_counter()
    worst_gap = 0.0
    for s in np.linspace(0.5, 5.0, 100):
        for frac in np.linspace(0.01, 1.99, 100):
            D = s * s * frac
            t = perception_threshold(s, D)
            h = 1e-12 * s
            worst_gap = max(
                worst_gap, abs(rdp_gaussian(s, D, (t - h) ** 2) - rdp_gaussian(s, D, (t + h) ** 2))
            )
    mono = True
    for s in (0.5, 1.0, 3.0):
        Ds = np.linspace(0.02, 2.5, 50) * s * s
        Ps = np.linspace(0.0, 1.5, 50) * s * s
        grid = np.array([[rdp_gaussian(s, D, P) for P in Ps] for D in Ds])
        mono &= bool(np.all(np.diff(grid, axis=0) <= 1e-9) and np.all(np.diff(grid, axis=1) <= 1e-9))
    shannon = all(
        rdp_gaussian(s, D, 4 * s * s) == rd_shannon(s, D)
        for s in (0.5, 1.0, 2.0)
        for D in np.linspace(0.05, 3.0, 20) * s * s
    )
    exact = rdp_gaussian(1.0, 0.5, 1.0)
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-9 and mono and shannon and exact == 0.5 and elapsed < 5
    report(
        "C6 RDP function",
        ok,
        f"max branch gap {worst_gap:.1e} on 100x100 scan, monotone {mono}, Shannon reduction "
        f"{shannon}, R(1, 0.5, 1) = {exact}, {elapsed:.2f}s",
    )


def _fidelity_cifar(path):
    images = load_dataset(path).images[:1000]
    sigma, _ = calibrate_sigma(images, 45.43, tau=16)
    reports = {}
    for strategy in Strategy:
        cfg = PurifyConfig(strategy, tau=16, sigma=sigma)
        out = purify_dataset(images, cfg, donor_pool=images)
        reports[strategy] = batch_fidelity(images, out)
    add = reports[Strategy.ADD_PERTURBATION]
    ttz = reports[Strategy.TURN_TO_ZERO]
    rfo = reports[Strategy.REPLACE_FROM_OTHER]
    ok = 43 <= add.psnr_mean <= 48 and add.ssim_mean >= 0.99
    ok = ok and 30 <= ttz.psnr_mean <= 36 and rfo.psnr_mean < ttz.psnr_mean
    detail = (
        f"CIFAR-10 n={len(images)}, sigma={sigma:.3f}: add {add.psnr_mean:.2f} dB/"
        f"{add.ssim_mean:.4f}, zero {ttz.psnr_mean:.2f} dB, replace {rfo.psnr_mean:.2f} dB"
    )
    return ok, detail


def _fidelity_synthetic():
    images = natural_images(1000, seed=2)
    sigma, achieved = calibrate_sigma(images, 45.43, tau=16)
    predicted = 10 * math.log10(255.0**2 / (sigma**2 * 16**2 / (32 * 32)))
    add = batch_fidelity(images, purify_dataset(images, PurifyConfig(tau=16, sigma=sigma)))
    ok = abs(add.psnr_mean - predicted) <= 0.5
    detail = (
        f"CIFAR-10 unavailable, synthetic n=1000: calibrated sigma {sigma:.3f} "
        f"(closed form {parseval_sigma(45.43, 32, 32, 16):.3f}), PSNR {add.psnr_mean:.3f} dB vs "
        f"closed form {predicted:.3f} dB, SSIM {add.ssim_mean:.4f}"
    )
    return ok, detail


def test_c7_purification_fidelity(report):
    t0 = time.perf_counter()
    path = os.environ.get("UPURE_CIFAR10_BIN")
    ok, detail = _fidelity_cifar(path) if path else _fidelity_synthetic()
    elapsed = time.perf_counter() - t0
    report("C7 purification fidelity", ok and elapsed < 120, f"{detail}, {elapsed:.1f}s")


def test_c8_trigger_spectrum(report):
    m = dct_matrix(32)

    def share(delta):
        spec = m @ delta @ m.T
        return np.sum(spec[16:, 16:] ** 2) / np.sum(spec**2)

    repet = RepetitiveTrigger().pattern(32, 32)
    patch = PatchTrigger().apply(np.zeros((32, 32, 1)))[:, :, 0]
    a, b = share(repet), share(patch)
    report(
        "C8 trigger spectral concentration",
        a >= 0.5 and b < 0.5,
        f"default repetitive trigger {a:.3f} of energy in the 16x16 block, 4x4 patch {b:.4f}",
    )


def test_c9_cli_determinism(tmp_path, report, capsys):
    images = np.rint(natural_images(200, seed=9))
    src = tmp_path / "clean.bin"
    save_dataset(Dataset(images, np.arange(200) % 10), src)
    digests = set()
    for rep in range(3):
        for workers in (1, 2, 4):
            run = tmp_path / f"r{rep}w{workers}"
            poisoned, purified = run / "poisoned.bin", run / "purified.bin"
            argv = ["poison", "--input", src, "--output", poisoned, "--gamma", 0.1, "--seed", 7]
            assert main([str(a) for a in argv + ["--workers", workers]]) == 0
            argv = ["purify", "--input", poisoned, "--output", purified, "--seed", 7]
            assert main([str(a) for a in argv + ["--workers", workers]]) == 0
            mask = (run / "poisoned.bin.mask.txt").read_bytes()
            digests.add((poisoned.read_bytes(), mask, purified.read_bytes()))
    capsys.readouterr()
    report(
        "C9 determinism",
        len(digests) == 1,
        f"poison+purify over workers 1/2/4 x 3 repetitions, {len(digests)} distinct output set(s)",
    )


def test_c10_excluded(capsys):
    with capsys.disabled():
        print(
            "\n[SKIP] C10 excluded by design: trained-model accuracy/attack success, "
            "Inception FID and the unnormalised rate table are not reproduced"
        )
