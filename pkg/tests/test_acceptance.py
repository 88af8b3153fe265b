"""Acceptance criteria 1 to 11, each printed as one PASS/FAIL line.

The tests share a module-level list of every computed IBD field so that the
probability-range check (criterion 10) covers all earlier runs.
"""

import math
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_asymmetric_params, random_symmetric_params
from seedbank_ibd import cli
from seedbank_ibd.asymptotics import (abg_field_green, abg_field_spectral, line_regime_ladder,
                                      psi_small_delta_field)
from seedbank_ibd.core import ModelParams, TorusSpec
from seedbank_ibd.green import (convolution_identity_check, fit_expansion_coeffs,
                                green_1d_infinite, green_1d_torus, green_constant_3d,
                                green_series_1d, green_torus_fourier, green_torus_field,
                                torus_constant_2d)
from seedbank_ibd.mc import estimate_ibd_field
from seedbank_ibd.second_moment import (u_matrix, u_slow_seedbank, zeta_closed_form,
                                        zeta_empirical, zeta_quadratic_fit)
from seedbank_ibd.spectral import build_Bhat, compute_ibd_field, psi00

GRID = [(1, 4), (1, 8), (1, 16), (2, 4), (2, 8)]
DRAWS = 20
FIELDS = []


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _grid_params(seed):
    rng = np.random.default_rng(seed)
    return [random_symmetric_params(rng) for _ in range(DRAWS)]


# ---------------------------------------------------------------- 1

def test_criterion_01_three_way_ibd_agreement(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for i, (d, L) in enumerate(GRID):
        torus = TorusSpec(d, L)
        for p in _grid_params(1000 + i):
            a = compute_ibd_field(p, torus).values
            b = compute_ibd_field(p, torus, method="matrix").values
            c = compute_ibd_field(p, torus, method="fixed-point").values
            FIELDS.extend([a, b, c])
            worst = max(worst, np.abs(a - b).max(), np.abs(a - c).max(), np.abs(b - c).max())
    elapsed = time.perf_counter() - t0
    report(capsys, 1, worst <= 1e-10 and elapsed < 30,
           f"worst pairwise sup-norm {worst:.2e} (<= 1e-10), {elapsed:.1f} s (< 30 s)")


# ---------------------------------------------------------------- 2

def test_criterion_02_monte_carlo_concordance(capsys):
    t0 = time.perf_counter()
    p = ModelParams(20, 20, "0.1", "0.1", 0.02, 0.3)
    torus = TorusSpec(1, 8)
    n = 10 ** 6
    est, se, diag = estimate_ibd_field(p, torus, n_reps=n, seed=12345)
    ref = compute_ibd_field(p, torus).values
    FIELDS.append(ref)
    z = np.abs(est - ref) / se
    elapsed = time.perf_counter() - t0
    ok = bool(np.all(se > 0) and z.max() < 4 and elapsed < 120)
    report(capsys, 2, ok, f"max |z| {z.max():.2f} (< 4), truncated {diag['truncated']}, "
                          f"{elapsed:.1f} s (< 120 s)")


# ---------------------------------------------------------------- 3

def test_criterion_03_small_delta_order(capsys):
    base = ModelParams(10, 10, 0, 0, 0.05, 0.5)
    torus = TorusSpec(1, 8)
    res = []
    for dl in ("1/100", "1/1000"):
        exact = compute_ibd_field(base.replace(epsilon=Fraction(dl), delta=Fraction(dl)), torus).values
        FIELDS.append(exact)
        pred = psi_small_delta_field(float(Fraction(dl)), base, torus)
        res.append(np.abs(exact - pred).max())
    factor = res[0] / res[1]
    report(capsys, 3, 50 <= factor <= 200,
           f"residuals {res[0]:.3e} -> {res[1]:.3e}, contraction {factor:.1f} (in [50, 200])")


# ---------------------------------------------------------------- 4

def test_criterion_04_abg_dual_route(capsys):
    worst = 0.0
    for i, (d, L) in enumerate(GRID):
        torus = TorusSpec(d, L)
        for p in _grid_params(1000 + i):
            base = p.replace(epsilon=0, delta=0)
            a = abg_field_spectral(base, torus)
            b = abg_field_green(base, torus)
            for name in ("alpha", "beta", "gamma"):
                fa, fb = getattr(a, name), getattr(b, name)
                scale = max(1.0, float(np.abs(fa).max()))
                worst = max(worst, float(np.abs(fa - fb).max()) / scale)
    report(capsys, 4, worst <= 1e-10,
           f"worst scaled difference {worst:.2e} (<= 1e-10 relative to max(1, sup))")


# ---------------------------------------------------------------- 5

def test_criterion_05_green_identities(capsys):
    rng = np.random.default_rng(555)
    worst_sum = worst_conv = worst_1d = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 4))
        L = int(rng.integers(3, 9 if d < 3 else 5))
        z, zp = (float(v) for v in rng.uniform(-0.95, 0.995, size=2))
        x = tuple(int(v) for v in rng.integers(0, L, size=d))
        torus = TorusSpec(d, L)
        G = green_torus_field(z, torus)
        worst_sum = max(worst_sum, abs(G.sum() - 1 / (1 - z)) / max(1, 1 / (1 - z)))
        lhs, rhs = convolution_identity_check(x, z, zp, torus)
        worst_conv = max(worst_conv, abs(lhs - rhs) / max(1, abs(rhs)))
        xi = int(rng.integers(0, L))
        zz = float(rng.uniform(0.05, 0.9))
        ring = green_1d_torus(xi, zz, L)
        worst_1d = max(worst_1d, abs(ring - green_torus_fourier((xi,), zz, TorusSpec(1, L))))
        worst_1d = max(worst_1d, abs(green_1d_infinite(xi, zz) - green_series_1d(xi, zz, lmax=800)))
    worst = max(worst_sum, worst_conv, worst_1d)
    report(capsys, 5, worst <= 1e-11,
           f"sum {worst_sum:.1e}, convolution {worst_conv:.1e}, d=1 routes {worst_1d:.1e} (<= 1e-11)")


# ---------------------------------------------------------------- 6

def test_criterion_06_expansion_coefficients(capsys):
    t0 = time.perf_counter()
    ring = max(abs(fit_expansion_coeffs((0,), TorusSpec(1, L)).C - (L * L - 1) / (6 * L))
               for L in (5, 10, 20))
    c3 = green_constant_3d()
    c2 = torus_constant_2d()
    elapsed = time.perf_counter() - t0
    ok = ring <= 1e-6 and abs(c3 - 1.51638) <= 1e-3 and abs(c2 - 0.06187) <= 2e-3 and elapsed < 60
    report(capsys, 6, ok, f"ring fit {ring:.1e} (<= 1e-6), C(0) d=3 {c3:.6f}, "
                          f"torus constant d=2 {c2:.6f}, {elapsed:.1f} s (< 60 s)")


# ---------------------------------------------------------------- 7

def test_criterion_07_regime_convergence(capsys):
    rows = line_regime_ladder(r=0.5, rhos=(1e-2, 1e-3, 1e-4), ys=(0.0, 0.5, 1.0))
    ok = True
    worst = []
    for y in (0.0, 0.5, 1.0):
        sub = sorted((r for r in rows if r["y"] == y), key=lambda r: -r["rho"])
        assert all(r["L"] >= 10 / math.sqrt(r["rho"]) for r in sub)
        for key in ("psi4_err", "phi4_err"):
            errs = [r[key] for r in sub]
            ok &= errs[0] > errs[1] > errs[2]
            worst.append(errs[2])
    report(capsys, 7, ok, f"errors decrease at every y; largest final error {max(worst):.2e}")


# ---------------------------------------------------------------- 8

def test_criterion_08_u_transcription(capsys):
    rng = np.random.default_rng(888)
    worst = 0.0
    for k in range(100):
        p = random_asymmetric_params(rng) if k % 2 else random_symmetric_params(rng)
        ref = np.linalg.inv(np.eye(4) - build_Bhat(p, 1.0, 1.0))
        worst = max(worst, np.abs(u_matrix(p) - ref).max() / max(1.0, np.abs(ref).max()))
    base = ModelParams(10, 10, 0, 0, 0.05, 0.5)
    res = []
    for dl in ("1/1000", "1/10000"):
        q = base.replace(epsilon=Fraction(dl), delta=Fraction(dl))
        res.append(np.abs(u_matrix(q) - u_slow_seedbank(q)).max())
    ratio = res[0] / res[1]
    ok = worst <= 1e-12 and 70 <= ratio <= 130
    report(capsys, 8, ok, f"closed form vs inverse {worst:.1e} (<= 1e-12); "
                          f"expansion residual ratio {ratio:.1f} (second order: about 100)")


# ---------------------------------------------------------------- 9

def test_criterion_09_second_moment(capsys):
    p = ModelParams(10, 10, "0.1", "0.1", 0.05, 0.5)
    errs, fit_errs = {}, {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for L in (50, 100, 200, 400):
            torus = TorusSpec(1, L)
            zc = zeta_closed_form(p, torus)[3]
            errs[L] = abs(zeta_empirical(p, torus)[0][3] - zc) / abs(zc)
            fit_errs[L] = abs(zeta_quadratic_fit(p, torus)[3] - zc) / abs(zc)
    floor = 1e-10
    tightening = all(errs[2 * L] < errs[L] or errs[2 * L] < floor for L in (50, 100, 200))
    ok = errs[200] <= 0.01 and fit_errs[200] <= 0.01 and tightening
    report(capsys, 9, ok, f"L=200 empirical {errs[200]:.1e}, fit {fit_errs[200]:.1e} (<= 1%); "
                          f"empirical by L {', '.join(f'{v:.1e}' for v in errs.values())}")


# ---------------------------------------------------------------- 10

def test_criterion_10_probability_sanity(capsys):
    lo = min(float(f.min()) for f in FIELDS) if FIELDS else 0.0
    hi = max(float(f.max()) for f in FIELDS) if FIELDS else 1.0
    torus = TorusSpec(1, 4)
    with_bank = psi00(ModelParams(10, 10, "0.2", "0.2", 1e-6, 0.5), torus)
    without = psi00(ModelParams(10, 10, 0, 0, 1e-6, 0.5), torus)[3]
    ratio = (1 - without) / (2 * 10 * 4 * 1e-6)
    ok = (bool(FIELDS) and lo >= 0 and hi <= 1 and np.all(np.abs(with_bank - 1) < 1e-3)
          and abs(1 - without) < 1e-3 and abs(ratio - 1) <= 0.05)
    report(capsys, 10, ok, f"{len(FIELDS)} fields in [{lo:.2e}, {hi:.6f}]; "
                           f"(1 - Psi00)/(2NLmu) = {ratio:.5f}")


# ---------------------------------------------------------------- 11

def test_criterion_11_determinism(capsys, tmp_path):
    blobs = []
    for threads in ("1", "1", "4"):
        path = tmp_path / f"verify_{len(blobs)}.json"
        code = cli.main(["verify", "--seed", "2026", "--threads", threads, "-o", str(path)])
        blobs.append(path.read_bytes())
    capsys.readouterr()
    ok = code == 0 and blobs[0] == blobs[1] == blobs[2]
    report(capsys, 11, ok, f"three verify runs (threads 1, 1, 4) byte-identical: "
                           f"{blobs[0] == blobs[1] == blobs[2]}, exit {code}")
