import math

import numpy as np
import pytest
from scipy import special

from seedbank_ibd.core import INFINITE, ParameterError, TorusSpec
from seedbank_ibd.green import (bessel_k0, bessel_k0_large, bessel_k0_small, bessel_k1,
                                convolution_identity_check, diagonal_potential_reference,
                                expansion_coeffs_1d, expansion_coeffs_torus,
                                fit_expansion_coeffs, green_1d_infinite, green_1d_torus,
                                green_1d_torus_derivative, green_derivative, green_infinite,
                                green_series_1d, green_torus_chunked, green_torus_field,
                                green_torus_fourier, lattice_constants, potential_kernel_2d,
                                y_of_z)


def _walk_green_by_matrix_powers(L, z, d=1, lmax=4000):
    """sum_l z^l Q^l row 0, with Q the nearest-neighbour transition matrix."""
    n = L ** d
    Q = np.zeros((n, n))
    idx = np.arange(n).reshape((L,) * d)
    for site in np.ndindex(*((L,) * d)):
        for axis in range(d):
            for step in (1, -1):
                nb = list(site)
                nb[axis] = (nb[axis] + step) % L
                Q[idx[site], idx[tuple(nb)]] += 1 / (2 * d)
    return np.linalg.solve(np.eye(n) - z * Q, np.eye(n)[0])


def test_y_of_z_solves_quadratic():
    for z in (1e-8, 0.3, 0.9, 0.999999, -0.7):
        y = y_of_z(z)
        assert z * y * y - 2 * y + z == pytest.approx(0, abs=1e-15)
        assert abs(y) < 1


@pytest.mark.parametrize("x", [0, 1, 5, -3])
@pytest.mark.parametrize("z", [0.1, 0.5, 0.8])
def test_line_closed_form_matches_series(x, z):
    assert abs(green_1d_infinite(x, z) - green_series_1d(x, z, lmax=600)) < 1e-11


@pytest.mark.parametrize("L", [3, 4, 7, 12])
@pytest.mark.parametrize("z", [0.2, 0.9, 0.999])
def test_ring_closed_form_matches_fourier_and_linear_solve(L, z):
    ref = _walk_green_by_matrix_powers(L, z)
    t = TorusSpec(1, L)
    for x in range(L):
        a = green_1d_torus(x, z, L)
        b = green_torus_fourier((x,), z, t)
        assert abs(a - b) < 1e-11 * max(1, abs(b))
        assert abs(b - ref[x]) < 1e-11 * max(1, abs(b))


def test_ring_values_at_zero():
    assert green_1d_torus(0, 0.0, 5) == 1.0
    assert green_1d_torus(2, 0.0, 5) == 0.0


def test_ring_approaches_line_for_large_L():
    assert abs(green_1d_torus(3, 0.5, 400) - green_1d_infinite(3, 0.5)) < 1e-15


@pytest.mark.parametrize("d,L", [(2, 4), (3, 3)])
def test_torus_field_matches_linear_solve(d, L):
    z = 0.7
    ref = _walk_green_by_matrix_powers(L, z, d)
    got = green_torus_field(z, TorusSpec(d, L)).ravel()
    assert np.abs(got - ref).max() < 1e-12


def test_sum_identity():
    for d, L in [(1, 9), (2, 6), (3, 4)]:
        for z in (0.1, 0.9, 0.99999):
            G = green_torus_field(z, TorusSpec(d, L))
            assert G.sum() * (1 - z) == pytest.approx(1, abs=1e-11)


def test_convolution_identity_random(rng):
    for _ in range(10):
        d = int(rng.integers(1, 3))
        L = int(rng.integers(3, 8))
        z, zp = rng.uniform(-0.9, 0.99, size=2)
        x = tuple(int(v) for v in rng.integers(0, L, size=d))
        lhs, rhs = convolution_identity_check(x, z, zp, TorusSpec(d, L))
        assert abs(lhs - rhs) < 1e-11 * max(1, abs(rhs))


def test_convolution_identity_needs_distinct_arguments():
    with pytest.raises(ParameterError):
        convolution_identity_check((0,), 0.5, 0.5, TorusSpec(1, 4))


def test_z_guard():
    with pytest.raises(ParameterError):
        green_1d_infinite(0, 1.0)
    with pytest.raises(ParameterError):
        green_1d_torus(0, 1 - 1e-13, 4)


@pytest.mark.parametrize("x,L", [(0, 6), (2, 6), (3, 11)])
def test_ring_derivative_matches_finite_difference(x, L):
    z, h = 0.6, 1e-6
    fd = (green_1d_torus(x, z + h, L) - green_1d_torus(x, z - h, L)) / (2 * h)
    assert green_1d_torus_derivative(x, z, L) == pytest.approx(fd, rel=1e-8)
    assert green_derivative((x,), z, TorusSpec(1, L)) == pytest.approx(fd, rel=1e-8)


def test_line_derivative_matches_finite_difference():
    z, h = 0.6, 1e-6
    for x in (0, 4):
        fd = (green_1d_infinite(x, z + h) - green_1d_infinite(x, z - h)) / (2 * h)
        assert green_derivative((x,), z, TorusSpec(1, INFINITE)) == pytest.approx(fd, rel=1e-8)


def test_ring_expansion_coefficients():
    for L in (5, 10, 20):
        c = expansion_coeffs_1d(0, L)
        assert c.C == pytest.approx((L * L - 1) / (6 * L), abs=1e-14)
        for x in range(L):
            ex = expansion_coeffs_torus((x,), TorusSpec(1, L))
            cf = expansion_coeffs_1d(x, L)
            assert abs(ex.C - cf.C) < 1e-11
            assert abs(ex.Cbar - cf.Cbar) < 1e-10


@pytest.mark.parametrize("L", [5, 10, 20])
def test_fitted_coefficient_recovers_ring_constant(L):
    fit = fit_expansion_coeffs((0,), TorusSpec(1, L))
    assert abs(fit.C - (L * L - 1) / (6 * L)) < 1e-6


def test_fitted_coefficients_in_two_dimensions():
    t = TorusSpec(2, 6)
    fit = fit_expansion_coeffs((1, 2), t)
    ex = expansion_coeffs_torus((1, 2), t)
    assert abs(fit.C - ex.C) < 1e-6
    assert abs(fit.Cbar - ex.Cbar) < 1e-3


def test_chunked_sum_matches_field():
    t = TorusSpec(3, 6)
    G = green_torus_field(0.9, t)
    assert green_torus_chunked((1, 2, 0), 0.9, t) == pytest.approx(G[1, 2, 0], abs=1e-14)


def test_infinite_lattice_converges_in_2d():
    a = green_infinite((1, 0), 0.9, 2)
    b = green_torus_chunked((1, 0), 0.9, TorusSpec(2, 512))
    assert abs(a - b) < 1e-11


def test_potential_kernel_diagonal():
    for k in (1, 2):
        assert potential_kernel_2d((k, k), L=128) == pytest.approx(
            diagonal_potential_reference(k), abs=2e-3)


def test_lattice_constant_table():
    c = lattice_constants(3)
    assert c["C0"] == 1.51638
    with pytest.raises(ParameterError):
        lattice_constants(1)


@pytest.mark.parametrize("u", [1e-3, 0.1, 1.0, 2.0, 2.5, 10.0, 50.0])
def test_bessel_against_scipy(u):
    assert bessel_k0(u) == pytest.approx(special.k0(u), rel=1e-12)
    assert bessel_k1(u) == pytest.approx(special.k1(u), rel=1e-12)


def test_bessel_asymptotic_forms():
    assert bessel_k0_small(1e-3) == pytest.approx(special.k0(1e-3), rel=1e-6)
    assert bessel_k0_large(40.0, terms=3) == pytest.approx(special.k0(40.0), rel=1e-5)
