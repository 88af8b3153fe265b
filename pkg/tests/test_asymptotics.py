import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_symmetric_params
from seedbank_ibd.asymptotics import (RegimeQuery, abg_field_green, abg_field_spectral,
                                      abg_green, abg_spectral, c_N, expansion_table,
                                      line_regime_ladder, line_regime_parameters,
                                      phi_correction, predict_finite_torus_panmictic,
                                      predict_phi_slow_seedbank, predict_psi4_no_seedbank,
                                      psi_small_delta, regime_parameters, ring_profile,
                                      rho_expansion_uv, uv_exact)
from seedbank_ibd.core import ModelParams, ParameterError, TorusSpec
from seedbank_ibd.green import green_1d_torus
from seedbank_ibd.spectral import compute_ibd_field, psi00


def _with_swap(params, delta):
    return params.replace(epsilon=Fraction(delta), delta=Fraction(delta))


# ---------------------------------------------------------------- alpha, beta, gamma

def test_alpha_sums_to_dc_value():
    p = ModelParams(10, 10, 0, 0, 0.05, 0.3)
    f = abg_field_spectral(p, TorusSpec(2, 6))
    assert f.alpha.sum() == pytest.approx(p.m / (1 - p.m), rel=1e-13)


def test_alpha_invariants():
    p = ModelParams(10, 10, 0, 0, 0.05, 0.3)
    f = abg_field_spectral(p, TorusSpec(1, 16))
    assert np.all(f.alpha >= 0)
    assert f.alpha.max() == f.alpha[0]


def test_gamma_is_m_derivative_of_alpha():
    t = TorusSpec(1, 8)
    p = ModelParams(10, 10, 0, 0, 0.05, 0.3)
    h = 1e-6
    lo = abg_field_spectral(p.replace(mu=p.mu - h), t).alpha
    hi = abg_field_spectral(p.replace(mu=p.mu + h), t).alpha
    dm_dmu = -2 * (1 - p.mu)
    fd = p.m * (hi - lo) / (2 * h) / dm_dmu
    g = abg_field_spectral(p, t).gamma
    assert np.abs(fd / g - 1).max() < 1e-6


def test_beta_is_convolution_of_alpha_with_lag_kernel():
    p = ModelParams(10, 10, 0, 0, 0.05, 0.3)
    t = TorusSpec(1, 9)
    f = abg_field_spectral(p, t)
    conv = np.array([sum(f.alpha[(x - y) % 9] * f.lag[y] for y in range(9)) for x in range(9)])
    assert np.abs(conv - f.beta).max() < 1e-10


@pytest.mark.parametrize("L", [4, 8, 16])
def test_spectral_and_green_routes_agree(L, rng):
    t = TorusSpec(1, L)
    for _ in range(5):
        p = random_symmetric_params(rng)
        a = abg_field_spectral(p, t)
        b = abg_field_green(p, t)
        scale = max(1.0, np.abs(a.alpha).max(), np.abs(a.gamma).max())
        for name in ("alpha", "beta", "gamma"):
            assert np.abs(getattr(a, name) - getattr(b, name)).max() < 1e-10 * scale


def test_pointwise_routes_agree():
    p = ModelParams(5, 5, 0, 0, 0.02, 0.6)
    t = TorusSpec(1, 8)
    a = abg_spectral((3,), p, t).as_tuple()
    b = abg_green((3,), p, t).as_tuple()
    assert np.allclose(a, b, rtol=1e-10, atol=0)


def test_origin_bookkeeping_alpha_plus_one():
    # alpha(0) + 1 is the full return generating function of the pair difference walk
    p = ModelParams(5, 5, 0, 0, 0.02, 0.6)
    L = 8
    f = abg_field_spectral(p, TorusSpec(1, L))
    pair_q = np.zeros((L, L))
    nu = p.nu
    for x in range(L):
        for s1, w1 in ((-1, nu / 2), (0, 1 - nu), (1, nu / 2)):
            for s2, w2 in ((-1, nu / 2), (0, 1 - nu), (1, nu / 2)):
                pair_q[x, (x + s1 - s2) % L] += w1 * w2
    G = np.linalg.solve(np.eye(L) - p.m * pair_q, np.eye(L)[0])
    assert f.alpha[0] + 1 == pytest.approx(G[0], rel=1e-12)


def test_cN_bounds(rng):
    for _ in range(5):
        p = random_symmetric_params(rng).replace(epsilon=0, delta=0)
        a0 = abg_field_spectral(p, TorusSpec(1, 8)).alpha[0]
        assert 0 < c_N(p, a0) <= 1 / p.N


# ---------------------------------------------------------------- small delta

def test_delta_zero_prediction():
    p = ModelParams(10, 10, 0, 0, 0.05, 0.5)
    t = TorusSpec(1, 8)
    a = abg_field_spectral(p, t).alpha
    for x in range(8):
        v = psi_small_delta((x,), 0, p, t)
        assert np.array_equal(v[:3], np.zeros(3))
        assert v[3] == pytest.approx(a[x] / (p.N + a[0]), rel=1e-15)


def test_prediction_middle_components_equal():
    v = psi_small_delta((2,), 0.01, ModelParams(10, 10, 0, 0, 0.05, 0.5), TorusSpec(1, 8))
    assert v[1] == v[2]


def test_small_delta_residual_is_second_order():
    p = ModelParams(10, 10, 0, 0, 0.05, 0.5)
    t = TorusSpec(1, 8)
    res = []
    for dl in (1e-2, 1e-3):
        exact = compute_ibd_field(_with_swap(p, dl), t).values
        pred = np.stack([psi_small_delta((x,), dl, p, t) for x in range(8)])
        res.append(np.abs(exact - pred).max())
    # second order: a tenfold smaller delta gives about a hundredfold smaller residual
    assert 50 <= res[0] / res[1] <= 200


def test_small_delta_needs_equal_sizes():
    with pytest.raises(ParameterError):
        psi_small_delta((0,), 0.01, ModelParams(10, 5, 0, 0, 0.05, 0.5), TorusSpec(1, 8))


def test_phi_matches_finite_difference():
    p = ModelParams(10, 10, 0, 0, 0.05, 0.5)
    t = TorusSpec(1, 8)
    base = compute_ibd_field(p, t).values
    phi = np.stack([phi_correction((x,), p, t) for x in range(8)])
    errs = []
    for dl in (1e-4, 1e-5):
        fd = (compute_ibd_field(_with_swap(p, dl), t).values - base) / dl
        errs.append(np.abs(fd - phi).max())
    assert errs[0] < 1e-2 * np.abs(phi).max()
    assert 5 < errs[0] / errs[1] < 20


def test_phi_structure():
    p = ModelParams(10, 10, 0, 0, 0.05, 0.5)
    t = TorusSpec(1, 8)
    f = abg_field_spectral(p, t)
    v0 = phi_correction((0,), p, t)
    assert v0[0] == 0
    assert v0[1] == v0[2]
    expected = -2 * p.N * f.gamma[0] / (p.N + f.alpha[0]) ** 2
    assert v0[3] == pytest.approx(expected, rel=1e-13)
    assert v0[3] < 0


# ---------------------------------------------------------------- rho expansions

def test_uv_tend_to_one():
    u, v = uv_exact(Fraction(1, 10**9), Fraction(1, 3))
    assert abs(float(u) - 1) < 1e-8 and abs(float(v) - 1) < 1e-8


def test_u_cubic_expansion():
    rho = 1e-3
    e = rho_expansion_uv(rho, 0.1)
    assert abs(e.u - e.u_series) < 10 * rho ** 4


def test_uv_expansion_error_is_fourth_order():
    nu = Fraction(3, 10)
    errs = []
    for rho in (Fraction(1, 100), Fraction(1, 200)):
        e = rho_expansion_uv(rho, nu)
        errs.append((abs(e.u - e.u_series), abs(e.v - e.v_series)))
    for k in range(2):
        ratio = errs[0][k] / errs[1][k]
        assert 16 * 0.7 < ratio < 16 * 1.3


def test_v_second_order_coefficient():
    nu = Fraction(1, 4)
    rho = Fraction(1, 10**6)
    _, v = uv_exact(rho, nu)
    coeff = (v - 1 + 2 * rho) / rho ** 2
    assert abs(float(coeff) - float(4 - 3 * nu)) < 1e-4


def test_rho_expansion_domain():
    with pytest.raises(ParameterError):
        rho_expansion_uv(20, 0.1)


# ---------------------------------------------------------------- limit laws

def test_line_psi4_limits():
    assert predict_psi4_no_seedbank(RegimeQuery(d=1, y=0, r=0)) == 1.0
    assert predict_psi4_no_seedbank(RegimeQuery(d=1, y=1, r=0.5)) == pytest.approx(0.18394, abs=1e-5)


def test_line_phi4_limit_sign():
    corrected = predict_phi_slow_seedbank(RegimeQuery(d=1, y=0, r=0.5))[1]
    printed = predict_phi_slow_seedbank(RegimeQuery(d=1, y=0, r=0.5, variant="as-printed"))[1]
    assert printed == pytest.approx(0.25, abs=1e-15)
    assert corrected == pytest.approx(-0.25, abs=1e-15)
    # the exact scaled correction at the smallest rho of the ladder settles the sign
    row = [r for r in line_regime_ladder(rhos=(1e-4,), ys=(0.0,))][0]
    assert abs(row["phi4"] - corrected) < 0.05 < abs(row["phi4"] - printed)


def test_line_phi4_limit_large_r_vanishes():
    vals = [abs(predict_phi_slow_seedbank(RegimeQuery(d=1, y=0, r=r))[1]) for r in (10, 100, 1000)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] == pytest.approx(2000 / 2001 ** 2, rel=1e-12)


def test_three_dimensional_limit_at_origin():
    assert predict_psi4_no_seedbank(RegimeQuery(d=3, y=0, r=0)) == 1.0


def test_line_ladder_errors_decrease():
    rows = line_regime_ladder()
    for y in (0.0, 0.5, 1.0):
        sub = sorted((r for r in rows if r["y"] == y), key=lambda r: -r["rho"])
        for key in ("psi4_err", "phi2_err", "phi4_err"):
            errs = [r[key] for r in sub]
            assert errs[0] > errs[1] > errs[2]


def test_line_regime_parameters_respect_path():
    cfg = line_regime_parameters(0.5, 1e-3)
    assert cfg["N"] * cfg["nu"] * math.sqrt(2e-3) == pytest.approx(0.5, rel=1e-12)
    assert cfg["L"] >= 10 / math.sqrt(1e-3) and cfg["L"] % 2 == 0
    assert cfg["mu"] == pytest.approx(1e-3 * cfg["nu"], rel=1e-15)


def test_regime_parameters():
    assert regime_parameters(1, "infinite", 10, 0.5, 0.02)["r"] == pytest.approx(1.0)
    assert regime_parameters(3, "infinite", 10, 0.5, 0.02)["r"] == 5.0
    assert regime_parameters(1, "finite", 10, 0.5, 0.02, L=5) == {"r": 1.0, "s": pytest.approx(0.5)}
    with pytest.raises(ParameterError):
        regime_parameters(4, "infinite", 10, 0.5, 0.02)


def test_query_validation():
    with pytest.raises(ParameterError):
        RegimeQuery(d=2, chi=0.7)
    with pytest.raises(ParameterError):
        RegimeQuery(d=1, rho=-1.0)
    with pytest.raises(ParameterError):
        predict_psi4_no_seedbank(RegimeQuery(d=1))


# ---------------------------------------------------------------- finite ring

def test_ring_profile_matches_green_function():
    s = 3.0
    A, dA = ring_profile(s)
    L = 2000
    assert green_1d_torus(0, 1 - s / L ** 2, L) / L == pytest.approx(A, rel=1e-5)
    h = 1e-5
    fd = (ring_profile(s + h)[0] - ring_profile(s - h)[0]) / (2 * h)
    assert dA == pytest.approx(fd, rel=1e-7)


def test_panmictic_limit_small_s():
    for variant in ("corrected", "small-s", "as-printed"):
        q = RegimeQuery(d=1, geometry="finite", r=1.0, s=1e-9, variant=variant)
        assert predict_finite_torus_panmictic(q) == pytest.approx(1, abs=1e-8)


def test_panmictic_printed_example():
    q = RegimeQuery(d=1, geometry="finite", r=1.0, s=6.0, variant="small-s")
    assert predict_finite_torus_panmictic(q) == pytest.approx(1 / 7, abs=1e-15)


def _ring_errors(variant):
    r, s, nu = 1.0, 6.0, 0.5
    q = RegimeQuery(d=1, geometry="finite", r=r, s=s, variant=variant)
    lim = predict_finite_torus_panmictic(q)
    errs = []
    for L in (50, 100, 200):
        p = ModelParams(int(r * L / nu), int(r * L / nu), 0, 0, s * nu / L ** 2, nu)
        errs.append(abs(psi00(p, TorusSpec(1, L))[3] - lim))
    return errs


def test_panmictic_corrected_limit_converges():
    errs = _ring_errors("corrected")
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2e-3


def test_panmictic_small_s_form_does_not_converge_at_finite_s():
    errs = _ring_errors("small-s")
    assert min(errs) > 5e-3


def test_panmictic_needs_one_dimension():
    with pytest.raises(ParameterError):
        predict_finite_torus_panmictic(RegimeQuery(d=2, geometry="finite", r=1.0, s=1.0))


# ---------------------------------------------------------------- expansion tables

def test_line_expansion_errors_shrink_with_rho():
    errs = []
    for rho in (1e-2, 1e-3, 1e-4):
        L = int(math.ceil(10 / math.sqrt(rho)))
        L += L % 2
        row = expansion_table(ModelParams(10, 10, 0, 0, rho * 0.5, 0.5), TorusSpec(1, L), xs=[(0,)])[0]
        assert row["geometry"] == "infinite"
        errs.append((row["psi4_relerr"], row["phi2_relerr"], row["phi4_relerr"]))
    for k in range(3):
        assert errs[0][k] > errs[1][k] > errs[2][k]


def test_ring_expansion_errors_shrink_with_rho():
    errs = []
    for rho in (1e-2, 1e-3, 1e-4):
        row = expansion_table(ModelParams(10, 10, 0, 0, rho * 0.5, 0.5), TorusSpec(1, 8), xs=[(0,)])[0]
        assert row["geometry"] == "finite"
        errs.append(row["psi4_relerr"])
    assert errs[0] > errs[1] > errs[2]


def test_variant_dataclass_replace_keeps_validation():
    q = RegimeQuery(d=1, y=0, r=0.5)
    with pytest.raises(ParameterError):
        dataclasses.replace(q, variant="bogus")
