import math
from fractions import Fraction

import numpy as np
import pytest

from seedbank_ibd.core import (INFINITE, NEAREST_NEIGHBOUR, MigrationKernel, ModelParams,
                               ParameterError, TorusSpec, centered_grid, enumerate_freqs,
                               enumerate_sites, inverse_dft, migration_matrix,
                               one_minus_qhat_grid, p_row, phat, phat_grid, qhat)


# ---------------------------------------------------------------- ModelParams

def test_params_accept_decimal_strings_exactly():
    p = ModelParams(10, 20, "0.2", "0.1", 0.01, 0.5)
    assert p.epsilon == Fraction(1, 5)
    assert p.delta == Fraction(1, 10)
    assert p.c == 2


def test_params_float_swap_fractions_use_shortest_repr():
    p = ModelParams(10, 10, 0.1, 0.1, 0.01, 0.5)
    assert p.epsilon == Fraction(1, 10)


def test_coupling_violation_is_rejected():
    with pytest.raises(ParameterError, match="εN ≠ δM"):
        ModelParams(10, 10, 0.1, 0.3, 0.01, 0.5)


@pytest.mark.parametrize("kw", [
    dict(N=0), dict(M=0), dict(epsilon=1, delta=1), dict(nu=0.0), dict(nu=1.5),
    dict(mu=1.0), dict(mu=-0.1), dict(mu=0.0), dict(N=2.5),
])
def test_invalid_params(kw):
    base = dict(N=10, M=10, epsilon=0, delta=0, mu=0.01, nu=0.5)
    base.update(kw)
    with pytest.raises(ParameterError):
        ModelParams(**base)


def test_zero_mu_only_with_flag():
    p = ModelParams(3, 3, 0, 0, 0.0, 0.5, allow_zero_mu=True)
    assert p.m == 1.0


def test_m_is_pair_survival():
    p = ModelParams(5, 5, 0, 0, 0.1, 0.5)
    assert p.m == pytest.approx(0.81, abs=1e-15)


def test_params_are_immutable_and_replace_revalidates():
    p = ModelParams(10, 10, 0, 0, 0.01, 0.5)
    with pytest.raises(Exception):
        p.N = 3
    q = p.replace(mu=0.2)
    assert q.mu == 0.2 and p.mu == 0.01
    with pytest.raises(ParameterError):
        p.replace(epsilon="0.1")


# ---------------------------------------------------------------- torus

def test_enumerate_sites_and_freqs():
    assert enumerate_sites(TorusSpec(1, 3)) == [(0,), (1,), (2,)]
    assert enumerate_sites(TorusSpec(2, 2)) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert enumerate_freqs(TorusSpec(1, 3)) == [(Fraction(0),), (Fraction(1, 3),), (Fraction(2, 3),)]


def test_site_and_freq_counts():
    t = TorusSpec(3, 4)
    assert len(enumerate_sites(t)) == len(enumerate_freqs(t)) == t.n_sites == 64


def test_infinite_torus_rejects_enumeration():
    t = TorusSpec(1, INFINITE)
    with pytest.raises(ParameterError, match="finite torus required"):
        enumerate_sites(t)
    with pytest.raises(ParameterError, match="finite torus required"):
        enumerate_freqs(t)


def test_torus_arithmetic():
    t = TorusSpec(2, 5)
    assert t.reduce((-1, 7)) == (4, 2)
    assert t.centered((4, 2)) == (-1, 2)
    assert t.distance((0, 0), (4, 4)) == pytest.approx(math.sqrt(2))
    with pytest.raises(ParameterError):
        TorusSpec(1, 1)


def test_centered_grid_range():
    g = centered_grid(TorusSpec(1, 6))
    assert list(g[0]) == [0, 1, 2, -3, -2, -1]


# ---------------------------------------------------------------- kernels

def test_qhat_examples():
    assert qhat(NEAREST_NEIGHBOUR, TorusSpec(3, 8), (0, 0, 0)) == 1.0
    assert qhat(NEAREST_NEIGHBOUR, TorusSpec(1, 8), (Fraction(1, 2),)) == pytest.approx(-1.0, abs=1e-15)
    assert qhat(NEAREST_NEIGHBOUR, TorusSpec(2, 8), (Fraction(1, 4), Fraction(1, 4))) == pytest.approx(0.0, abs=1e-15)


def test_phat_examples():
    p = ModelParams(5, 5, 0, 0, 0.1, 0.5)
    assert phat(NEAREST_NEIGHBOUR, p, TorusSpec(1, 8), (0,)) == 1.0
    assert phat(NEAREST_NEIGHBOUR, p, TorusSpec(1, 8), (Fraction(1, 2),)) == pytest.approx(0.0, abs=1e-15)


def test_phat_small_theta_expansion():
    p = ModelParams(5, 5, 0, 0, 0.1, 0.5)
    val = phat(NEAREST_NEIGHBOUR, p, TorusSpec(1, 64), (Fraction(1, 64),))
    # first neglected term of 1 - nu (1 - cos t) is nu t^4 / 24 with t = 2 pi / 64
    t = 2 * math.pi / 64
    assert abs(val - (1 - 0.5 * t * t / 2)) <= 0.5 * t ** 4 / 24 * 1.01


def _direct_phat(params, torus, kernel, k):
    row = p_row(kernel, params, torus)
    total = 0j
    for z in np.ndindex(*row.shape):
        total += row[z] * np.exp(2j * np.pi * np.dot(k, z) / torus.L)
    return total


@pytest.mark.parametrize("d,L", [(1, 7), (2, 4), (3, 3)])
def test_phat_grid_matches_direct_sum(d, L):
    p = ModelParams(5, 5, 0, 0, 0.1, 0.37)
    t = TorusSpec(d, L)
    grid = phat_grid(NEAREST_NEIGHBOUR, p, t)
    for k in np.ndindex(*grid.shape):
        direct = _direct_phat(p, t, NEAREST_NEIGHBOUR, k)
        assert abs(direct.imag) < 1e-12
        assert abs(direct.real - grid[k]) < 1e-12


@pytest.mark.parametrize("d,L", [(1, 9), (2, 6)])
def test_parseval(d, L):
    p = ModelParams(5, 5, 0, 0, 0.1, 0.6)
    t = TorusSpec(d, L)
    lhs = np.mean(phat_grid(NEAREST_NEIGHBOUR, p, t) ** 2)
    rhs = np.sum(p_row(NEAREST_NEIGHBOUR, p, t) ** 2)
    assert abs(lhs - rhs) < 1e-12


def test_phat_even_in_theta():
    p = ModelParams(5, 5, 0, 0, 0.1, 0.6)
    t = TorusSpec(2, 7)
    g = phat_grid(NEAREST_NEIGHBOUR, p, t)
    neg = g[np.ix_((-np.arange(7)) % 7, (-np.arange(7)) % 7)]
    assert np.array_equal(g, neg)


def test_custom_kernel_validation():
    with pytest.raises(ParameterError, match="symmetric"):
        MigrationKernel({(1,): 0.7, (-1,): 0.3})
    with pytest.raises(ParameterError, match="sum to 1"):
        MigrationKernel({(1,): 0.3, (-1,): 0.3})
    with pytest.raises(ParameterError):
        MigrationKernel({(1,): -0.5, (-1,): -0.5, (2,): 2.0})


def test_custom_kernel_characteristic_function():
    k = MigrationKernel({(1,): 0.25, (-1,): 0.25, (2,): 0.25, (-2,): 0.25})
    t = TorusSpec(1, 10)
    for j in range(10):
        th = Fraction(j, 10)
        expected = 0.5 * math.cos(2 * math.pi * j / 10) + 0.5 * math.cos(4 * math.pi * j / 10)
        assert qhat(k, t, (th,)) == pytest.approx(expected, abs=1e-14)
    assert np.allclose(1 - one_minus_qhat_grid(k, t),
                       [qhat(k, t, (Fraction(j, 10),)) for j in range(10)], atol=1e-14)


def test_migration_matrix_is_stochastic_and_symmetric():
    p = ModelParams(5, 5, 0, 0, 0.1, 0.4)
    P = migration_matrix(NEAREST_NEIGHBOUR, p, TorusSpec(2, 4))
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-15)
    assert np.array_equal(P, P.T)


def test_inverse_dft_paths_agree(rng):
    hat = rng.normal(size=(8, 8, 4))
    a, _ = inverse_dft(hat, 2, "direct")
    b, _ = inverse_dft(hat, 2, "fft")
    assert np.abs(a - b).max() < 1e-13
