"""Green functions of simple random walk on Z^d and on finite tori.

``G_x(z) = sum_l q_l(x) z^l`` where ``q_l`` is the l-step law of the walk.
On a finite torus the Fourier representation

    G_x(z) = L^{-d} sum_theta cos(2 pi theta.x) / (1 - z qhat(theta))

is exact. In d=1 closed forms are available for both the line and the
ring. Near ``z = 1`` the torus Green function behaves like
``L^{-d}/(1-z) + C_L(x) - Cbar_L(x)(1-z) + O((1-z)^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    INFINITE,
    NEAREST_NEIGHBOUR,
    MigrationKernel,
    ParameterError,
    TorusSpec,
    inverse_dft,
    one_minus_qhat_grid,
)

EULER_GAMMA = 0.5772156649015329
Z_NEAR_ONE = 1e-12


@dataclass(frozen=True)
class ExpansionCoeffs:
    """Coefficients ``C`` and ``Cbar`` of the expansion of ``G_x`` near z=1."""

    C: float
    Cbar: float
    geometry: str


def _check_z(z: float, allow_zero: bool = True):
    if not abs(z) < 1:
        raise ParameterError("|z| must be < 1")
    if z > 1 - Z_NEAR_ONE:
        raise ParameterError("z too close to 1; use the expansion coefficients")
    if not allow_zero and z == 0:
        raise ParameterError("closed form needs z != 0")


def _sqrt_one_minus_z2(z: float) -> float:
    return math.sqrt((1 - z) * (1 + z))


def y_of_z(z: float) -> float:
    """``y(z) = (1 - sqrt(1 - z^2)) / z``, written to avoid cancellation."""
    s = _sqrt_one_minus_z2(z)
    return z / (1 + s)


def green_1d_infinite(x: int, z: float) -> float:
    """Closed form ``y(z)^|x| (1 - z^2)^{-1/2}`` on Z."""
    _check_z(z)
    if z == 0:
        return 1.0 if x == 0 else 0.0
    return y_of_z(z) ** abs(int(x)) / _sqrt_one_minus_z2(z)


def green_series_1d(x: int, z: float, lmax: int = 200) -> float:
    """Truncated series ``sum_{l <= lmax} q_l(x) z^l`` on Z (oracle)."""
    x = abs(int(x))
    total = []
    for l in range(x, lmax + 1, 2):
        k = (l + x) // 2
        logq = math.lgamma(l + 1) - math.lgamma(k + 1) - math.lgamma(l - k + 1) - l * math.log(2)
        total.append(math.exp(logq) * z ** l)
    return math.fsum(total)


def green_1d_torus(x: int, z: float, L: int) -> float:
    """Closed form on the ring ``Z mod L``."""
    _check_z(z)
    x = int(x) % L
    if z == 0:
        return 1.0 if x == 0 else 0.0
    y = y_of_z(z)
    s = _sqrt_one_minus_z2(z)
    # 1 - y^L through expm1 keeps accuracy when y is close to 1
    one_minus_yL = -math.expm1(L * math.log(abs(y))) if y > 0 else 1 - y ** L
    return (y ** x + y ** (L - x)) / one_minus_yL / s


def green_1d_torus_derivative(x: int, z: float, L: int) -> float:
    """``d/dz`` of :func:`green_1d_torus`, by the chain rule through ``y(z)``."""
    _check_z(z, allow_zero=False)
    x = int(x) % L
    y = y_of_z(z)
    s = _sqrt_one_minus_z2(z)
    A = y ** x + y ** (L - x)
    dA = x * y ** (x - 1) + (L - x) * y ** (L - x - 1) if x > 0 else L * y ** (L - 1)
    B = 1 - y ** L
    dB = -L * y ** (L - 1)
    dy = y / (z * s)
    return ((dA * B - A * dB) / (B * B)) * dy / s + (A / B) * z / s ** 3


def _phase_cos(torus: TorusSpec, x) -> np.ndarray:
    L, d = torus.L, torus.d
    xs = np.array(torus.reduce(x), dtype=np.int64)
    ks = np.indices((L,) * d).reshape(d, -1).T
    return np.cos(2 * np.pi * ((ks @ xs) % L) / L).reshape((L,) * d)


def _denominator(z: float, omq: np.ndarray) -> np.ndarray:
    """``1 - z qhat = (1 - z) + z (1 - qhat)`` without cancellation."""
    return (1 - z) + z * omq


def green_torus_fourier(x, z: float, torus: TorusSpec,
                        kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> float:
    """``G_x(z)`` on a finite torus by direct Fourier summation."""
    torus.require_finite()
    _check_z(z)
    omq = one_minus_qhat_grid(kernel, torus)
    return float(np.sum(_phase_cos(torus, x) / _denominator(z, omq)) / torus.n_sites)


def green_torus_field(z: float, torus: TorusSpec,
                      kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> np.ndarray:
    """``G_x(z)`` for every site at once, shape ``(L,)*d``."""
    torus.require_finite()
    _check_z(z)
    omq = one_minus_qhat_grid(kernel, torus)
    vals, _ = inverse_dft((1.0 / _denominator(z, omq))[..., None], torus.d)
    return vals[..., 0]


def green_torus_derivative_field(z: float, torus: TorusSpec,
                                 kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> np.ndarray:
    """``G'_x(z)`` for every site, from ``qhat / (1 - z qhat)^2``."""
    torus.require_finite()
    _check_z(z)
    omq = one_minus_qhat_grid(kernel, torus)
    hat = (1 - omq) / _denominator(z, omq) ** 2
    vals, _ = inverse_dft(hat[..., None], torus.d)
    return vals[..., 0]


def green_derivative(x, z: float, geometry: TorusSpec,
                     kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> float:
    """``dG_x/dz``.

    For the infinite line this uses
    ``G'_x = [z/(1-z^2) + |x| G_0(z)/z] G_x`` (from ``y'/y = G_0/z``).
    For a finite torus it sums ``cos(2 pi theta.x) qhat / (1 - z qhat)^2``.
    """
    if not geometry.finite:
        if geometry.d != 1 or not kernel.nearest_neighbour:
            raise ParameterError("closed-form derivative only for the infinite line")
        _check_z(z, allow_zero=False)
        x = abs(int(np.atleast_1d(x)[0]))
        g0 = 1.0 / _sqrt_one_minus_z2(z)
        return (z / ((1 - z) * (1 + z)) + x * g0 / z) * green_1d_infinite(x, z)
    _check_z(z)
    omq = one_minus_qhat_grid(kernel, geometry)
    hat = (1 - omq) / _denominator(z, omq) ** 2
    return float(np.sum(_phase_cos(geometry, x) * hat) / geometry.n_sites)


def convolution_identity_check(x, z: float, zp: float, torus: TorusSpec,
                               kernel: MigrationKernel = NEAREST_NEIGHBOUR):
    """Both sides of ``sum_y G_{x-y}(z) G_y(z') = [z G_x(z) - z' G_x(z')]/(z - z')``.

    The left side is a direct site-space convolution.
    """
    if z == zp:
        raise ParameterError("z and z' must differ")
    Gz = green_torus_field(z, torus, kernel)
    Gzp = green_torus_field(zp, torus, kernel)
    L, d = torus.L, torus.d
    xs = np.array(torus.reduce(x))
    lhs_terms = []
    for yv in np.ndindex(*((L,) * d)):
        diff = tuple((xs - np.array(yv)) % L)
        lhs_terms.append(Gz[diff] * Gzp[yv])
    lhs = math.fsum(lhs_terms)
    xt = tuple(xs)
    rhs = (z * Gz[xt] - zp * Gzp[xt]) / (z - zp)
    return lhs, rhs


def expansion_coeffs_1d(x: int, L: int) -> ExpansionCoeffs:
    """Closed-form ``C_L(x)`` and ``Cbar_L(x)`` on the ring.

    With ``w = x (L - x)``: ``C_L(x) = (L^2 - 1)/(6L) - w/L`` and
    ``Cbar_L(x) = (L^2 - 1)(L^2 - 19)/(180 L) - w (w - 4)/(6L)``.
    """
    x = int(x) % L
    c0 = (L * L - 1) / (6 * L)
    cb0 = (L * L - 1) * (L * L - 19) / (180 * L)
    w = x * (L - x)
    C = c0 - w / L
    Cbar = cb0 - w * (w - 4) / (6 * L)
    return ExpansionCoeffs(C, Cbar, f"ring L={L}")


def expansion_coeffs_torus(x, torus: TorusSpec,
                           kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> ExpansionCoeffs:
    """``C_L(x)``, ``Cbar_L(x)`` as exact sums over nonzero frequencies.

    ``C_L = L^{-d} sum' cos / (1 - qhat)`` and
    ``Cbar_L = L^{-d} sum' cos qhat / (1 - qhat)^2``.
    """
    torus.require_finite()
    omq = one_minus_qhat_grid(kernel, torus).ravel()
    cos = _phase_cos(torus, x).ravel()
    cos, omq = cos[1:], omq[1:]
    n = torus.n_sites
    return ExpansionCoeffs(float(np.sum(cos / omq) / n),
                           float(np.sum(cos * (1 - omq) / omq ** 2) / n),
                           f"torus d={torus.d} L={torus.L}")


def richardson_polynomial(hs, values) -> np.ndarray:
    """Coefficients of the polynomial through ``(h_i, values_i)``, lowest order first."""
    hs = np.asarray(hs, dtype=float)
    V = np.vander(hs, len(hs), increasing=True)
    return np.linalg.solve(V, np.asarray(values, dtype=float))


def fit_expansion_coeffs(x, torus: TorusSpec, zs=(0.999, 0.9999, 0.99999),
                         green=None) -> ExpansionCoeffs:
    """Extract ``C_L(x)``, ``Cbar_L(x)`` by fitting ``G_x(z)`` near ``z = 1``.

    ``F(h) = G_x(1-h) - L^{-d}/h`` is interpolated by a polynomial in
    ``h`` through the given points and read off at ``h = 0``. The default
    green function is the d=1 closed form on the ring, or the Fourier sum
    for ``d > 1``.
    """
    torus.require_finite()
    if green is None:
        if torus.d == 1:
            xi = int(np.atleast_1d(x)[0])
            green = lambda z: green_1d_torus(xi, z, torus.L)  # noqa: E731
        else:
            green = lambda z: green_torus_fourier(x, z, torus)  # noqa: E731
    hs = [1.0 - z for z in zs]
    F = [green(z) - 1.0 / (torus.n_sites * h) for z, h in zip(zs, hs)]
    coef = richardson_polynomial(hs, F)
    return ExpansionCoeffs(float(coef[0]), float(-coef[1]), f"fit d={torus.d} L={torus.L}")


def green_infinite(x, z: float, d: int, tol: float = 1e-12, L0: int | None = None,
                   max_L: int = 4096) -> float:
    """``G_x(z)`` on Z^d for ``|z| < 1``.

    d=1 uses the closed form. For d >= 2 the torus value is computed on
    tori of doubling side until successive values agree within ``tol``;
    torus images of the walk decay exponentially in ``L sqrt(1-z)``.
    """
    if d == 1:
        return green_1d_infinite(int(np.atleast_1d(x)[0]), z)
    _check_z(z)
    xs = np.atleast_1d(x)
    span = 2 * int(np.max(np.abs(xs))) + 2
    if L0 is None:
        L0 = max(16, span, int(8 / math.sqrt(1 - abs(z))))
    L = 1 << int(math.ceil(math.log2(L0)))
    prev = green_torus_chunked(xs, z, TorusSpec(d, L))
    while L < max_L:
        L *= 2
        cur = green_torus_chunked(xs, z, TorusSpec(d, L))
        if abs(cur - prev) <= tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    return prev


def green_torus_chunked(x, z: float, torus: TorusSpec) -> float:
    """Memory-light Fourier sum for large nearest-neighbour tori.

    Loops over the first frequency coordinate so only ``L^{d-1}`` values
    are held at a time.
    """
    L, d = torus.L, torus.d
    xs = np.array(torus.reduce(x), dtype=np.int64)
    k = np.arange(L)
    omc = 2 * np.sin(np.pi * k / L) ** 2               # 1 - cos(2 pi k / L)
    rest = np.zeros((L,) * (d - 1))
    rest_phase = np.zeros((L,) * (d - 1), dtype=np.int64)
    grids = np.meshgrid(*([k] * (d - 1)), indexing="ij")
    for j, g in enumerate(grids):
        rest = rest + omc[g]
        rest_phase = rest_phase + g * xs[j + 1]
    total = 0.0
    for k0 in range(L):
        omq = (omc[k0] + rest) / d
        ph = (k0 * xs[0] + rest_phase) % L
        total += float(np.sum(np.cos(2 * np.pi * ph / L) / _denominator(z, omq)))
    return total / L ** d


def potential_kernel_2d(x, L: int = 256) -> float:
    """``C(x)`` for d=2 from ``pi [C_L(0) - C_L(x)]`` with Richardson in 1/L^2."""
    vals = []
    for LL in (L // 2, L):
        t = TorusSpec(2, LL)
        vals.append(math.pi * (expansion_coeffs_torus((0, 0), t).C
                               - expansion_coeffs_torus(x, t).C))
    return (4 * vals[1] - vals[0]) / 3


def diagonal_potential_reference(k: int) -> float:
    """Tabulated ``C(k,k) = 4 sum_{l=1}^{|k|} 1/(2l-1)`` for d=2."""
    return 4 * math.fsum(1.0 / (2 * l - 1) for l in range(1, abs(k) + 1))


def green_constant_3d(x=(0, 0, 0), Ls=(32, 64, 128)) -> float:
    """``C(x) = G_x(1)`` on Z^3 by Richardson in 1/L of ``C_L(x) + L^{-3}``-free sums.

    ``C_L(x)`` omits the zero mode; it converges to ``C(x)`` with an
    error expansion in powers of ``1/L``.
    """
    vals = [expansion_coeffs_torus(x, TorusSpec(3, L)).C for L in Ls]
    hs = [1.0 / L for L in Ls]
    return float(richardson_polynomial(hs, vals)[0])


def torus_constant_2d(Ls=(32, 64, 128)) -> float:
    """Fit ``Cbar_L(0) / L^2 = c - log(L) / (pi L^2) + b / L^2`` for c."""
    rows, rhs = [], []
    for L in Ls:
        cb = expansion_coeffs_torus((0, 0), TorusSpec(2, L)).Cbar
        rows.append([1.0, 1.0 / L ** 2])
        rhs.append(cb / L ** 2 + math.log(L) / (math.pi * L ** 2))
    sol, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    return float(sol[0])


LATTICE_CONSTANTS = {
    3: {"C0": 1.51638, "Cbar0": 3 * math.sqrt(3) / (math.pi * math.sqrt(2))},
    2: {"C0": 0.0, "Cbar0": -0.5, "torus_c": 0.06187},
}


def lattice_constants(d: int, recompute: bool = False) -> dict:
    """Reference constants of the Green-function expansions.

    With ``recompute=True`` numerically recomputed values are added under
    ``*_numeric`` keys (d=3: ``C0``; d=2: the torus constant ``c``).
    """
    if d not in LATTICE_CONSTANTS:
        raise ParameterError("lattice constants available for d in {2, 3}")
    out = dict(LATTICE_CONSTANTS[d])
    out["euler_gamma"] = EULER_GAMMA
    if recompute:
        if d == 3:
            out["C0_numeric"] = green_constant_3d()
        else:
            out["torus_c_numeric"] = torus_constant_2d()
    return out


def _bessel_integral(u: float, order: int) -> float:
    """``int_0^inf exp(-u cosh t) cosh(order t) dt`` by the trapezoid rule.

    The integrand is analytic and decays doubly exponentially, so the
    trapezoid rule converges geometrically in the step size.
    """
    tmax = math.acosh(max(760.0 / u, 1.0)) + 1.0
    h = 0.05
    t = np.arange(0.0, tmax + h, h)
    f = np.exp(-u * np.cosh(t)) * np.cosh(order * t)
    return h * (np.sum(f) - 0.5 * f[0])


def bessel_k0(u: float) -> float:
    """Modified Bessel function of the second kind, order 0.

    Power series for ``u <= 2``; integral representation beyond.
    """
    if not u > 0:
        raise ParameterError("K0 needs u > 0")
    if u <= 2.0:
        q = u * u / 4
        term = 1.0
        harmonic = 0.0
        i0 = 1.0
        tail = 0.0
        k = 0
        while True:
            k += 1
            term *= q / (k * k)
            harmonic += 1.0 / k
            i0 += term
            tail += term * harmonic
            if term < 1e-18:
                break
        return -(math.log(u / 2) + EULER_GAMMA) * i0 + tail
    return float(_bessel_integral(u, 0))


def bessel_k1(u: float) -> float:
    """Order-1 companion, ``K0'(u) = -K1(u)``."""
    if not u > 0:
        raise ParameterError("K1 needs u > 0")
    return float(_bessel_integral(u, 1))


def bessel_k0_small(u: float) -> float:
    """Small-argument form ``[log(2/u) - gamma](1 + u^2/4) + u^2/4``."""
    return (math.log(2 / u) - EULER_GAMMA) * (1 + u * u / 4) + u * u / 4


def bessel_k0_large(u: float, terms: int = 1) -> float:
    """Large-argument form ``e^{-u} sqrt(pi/2u) [1 - 1/(8u) + ...]``."""
    s, a = 1.0, 1.0
    for k in range(1, terms):
        a *= -((2 * k - 1) ** 2) / (k * 8 * u)
        s += a
    return math.exp(-u) * math.sqrt(math.pi / (2 * u)) * s
