"""Exact equilibrium IBD probabilities on a finite torus.

The equilibrium pair recursion is linear and translation invariant, so it
diagonalises under the discrete Fourier transform. At frequency ``theta``
the four IBD components solve a 4x4 system ``(1 - Bhat(theta)) v = e_4``.
This module provides three independent ways to get the IBD field:

``"spectral"``
    closed-form polynomial solution of the 4x4 system
``"matrix"``
    numerical 4x4 solve at every frequency
``"fixed-point"``
    direct iteration of the pair recursion over all ``(x, y)`` pairs,
    without assuming translation invariance

Component order throughout is (dormant-dormant, dormant-active,
active-dormant, active-active). The first label refers to the lineage
sampled at the origin and the second to the lineage sampled at ``x``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .core import (
    NEAREST_NEIGHBOUR,
    MigrationKernel,
    ModelParams,
    ParameterError,
    TorusSpec,
    inverse_dft,
    migration_matrix,
    one_minus_phat_grid,
)

COMPONENT_LABELS = ("psi_00", "psi_01", "psi_10", "psi_11")

# Corrections applied relative to the published closed form. Names only;
# the rationale lives in the project notes.
TYPO_LEDGER = (
    "prefactor_single_inverse_N",
    "psi00_denominator_sign_plus",
    "r_polynomials_rederived_from_adjugate",
)

FIXED_POINT_MAX_PAIRS = 10**6


@dataclass(frozen=True)
class SpectralBlock:
    """Per-frequency data of the closed-form solution."""

    theta: tuple
    phat: float
    r0: float
    r14: float
    r24: float
    r34: float
    r44: float
    Bhat: np.ndarray
    s: np.ndarray


@dataclass
class IbdField:
    """Equilibrium IBD probabilities ``Psi_{0,x}`` over a finite torus.

    ``values`` has shape ``(L,)*d + (4,)``; ``values[x]`` is the 4-vector
    for the pair (origin, x).
    """

    torus: TorusSpec
    params: ModelParams
    values: np.ndarray
    method: str
    flags: list = field(default_factory=list)
    imag_residue: float = 0.0

    def at(self, x) -> np.ndarray:
        return self.values[self.torus.reduce(x)]

    @property
    def psi00(self) -> np.ndarray:
        return self.values[(0,) * self.torus.d]

    def rows(self):
        """Yield ``(site, 4-vector)`` in lexicographic site order."""
        L, d = self.torus.L, self.torus.d
        flat = self.values.reshape(-1, 4)
        for i, x in enumerate(np.ndindex(*((L,) * d))):
            yield x, flat[i]


@dataclass
class PairField:
    """Full pair field ``Psi_{x,y}`` from the fixed-point iteration.

    ``values`` has shape ``(n, n, 4)`` with sites in lexicographic order.
    """

    torus: TorusSpec
    params: ModelParams
    values: np.ndarray
    iterations: int
    last_change: float
    converged: bool
    contraction: float

    def translation_defect(self) -> float:
        """Largest ``|Psi_{x+z,y+z} - Psi_{x,y}|`` over all x, y, z."""
        L, d = self.torus.L, self.torus.d
        shape = (L,) * d
        V = self.values.reshape(shape + shape + (4,))
        worst = 0.0
        for ax in range(d):
            rolled = np.roll(np.roll(V, 1, axis=ax), 1, axis=d + ax)
            worst = max(worst, float(np.abs(rolled - V).max()))
        return worst

    def to_ibd_field(self) -> IbdField:
        L, d = self.torus.L, self.torus.d
        vals = self.values[0].reshape((L,) * d + (4,)).copy()
        return IbdField(self.torus, self.params, vals, "fixed-point", _flags(self.params))


def _flags(params: ModelParams) -> list:
    if not params.symmetric_swap:
        return ["as-printed, unverified by simulation (epsilon != delta)"]
    return []


def build_C(params: ModelParams) -> np.ndarray:
    """Frequency-independent part of the one-generation transition matrix."""
    m, e, d = params.m, params.eps, params.dlt
    return m * np.array([
        [(1 - d) ** 2, (1 - d) * e, (1 - d) * e, e * e],
        [d * (1 - d), 0.0, d * e, 0.0],
        [d * (1 - d), d * e, 0.0, 0.0],
        [d * d, 0.0, 0.0, 0.0],
    ])


def build_Dhat(params: ModelParams, phat_theta: float, phat_eta: float) -> np.ndarray:
    m, e, d = params.m, params.eps, params.dlt
    P, Q = phat_theta, phat_eta
    return m * (1 - e) * np.array([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, (1 - d) * Q, 0.0, e * Q],
        [0.0, 0.0, (1 - d) * P, e * P],
        [0.0, d * Q, d * P, (1 - e) * P * Q],
    ])


def build_Bhat(params: ModelParams, phat_theta: float, phat_eta: float) -> np.ndarray:
    """Fourier transform ``Bhat(theta, eta) = C + Dhat(theta, eta)``."""
    return build_C(params) + build_Dhat(params, phat_theta, phat_eta)


def _bhat_stack(params: ModelParams, P: np.ndarray) -> np.ndarray:
    """``Bhat(theta, -theta)`` for an array of ``phat`` values, shape (..., 4, 4)."""
    m, e, d = params.m, params.eps, params.dlt
    B = np.broadcast_to(build_C(params), P.shape + (4, 4)).copy()
    k = m * (1 - e)
    B[..., 1, 1] += k * (1 - d) * P
    B[..., 1, 3] += k * e * P
    B[..., 2, 2] += k * (1 - d) * P
    B[..., 2, 3] += k * e * P
    B[..., 3, 1] += k * d * P
    B[..., 3, 2] += k * d * P
    B[..., 3, 3] += k * (1 - e) * P * P
    return B


def _r_poly(m, d, e, P, Q):
    """Polynomial bodies shared by the float and exact evaluators."""
    de = d * e
    g = 1 - m * (1 - d) ** 2
    h = 1 + m * de
    f = g - m * m * de * (1 - d) ** 2
    r0 = (
        h * h * (g - 2 * m * de + m * m * de * de)
        - m * (1 - d) * (1 - e) * h * (g - m * de + 2 * m * m * de * de) * (P + Q)
        - m * m * de * (1 - e) ** 2 * f * (P * P + Q * Q)
        + m * (1 - e) ** 2 * (
            -g * g + 2 * m * m * de * (1 - d) ** 2 - m * m * de * de
            + 4 * m ** 3 * de * de * (1 - d) ** 2
        ) * P * Q
        - m * m * (1 - d) * (1 - e) ** 3 * (-g + 2 * m * m * de * (1 - d) ** 2 - m * de)
        * (P * P * Q + P * Q * Q)
        - m ** 3 * (1 - d) ** 2 * (1 - e) ** 4 * g * P * P * Q * Q
    )
    r14 = m * e * e * (
        (1 - m * m * de * de)
        + m * m * de * (1 - d) * (1 - e) * (P + Q)
        - m * m * (1 - d) ** 2 * (1 - e) ** 2 * P * Q
    )
    base = m * de * (1 - d) * h
    cross = m * (1 - d) * (1 - e) ** 2 * g * P * Q
    r24 = m * e * (base + (1 - e) * f * Q + m * de * (1 - e) * g * P - cross)
    r34 = m * e * (base + (1 - e) * f * P + m * de * (1 - e) * g * Q - cross)
    r44 = (
        h * (f - m * de)
        - m * (1 - d) * (1 - e) * f * (P + Q)
        + m * m * (1 - d) ** 2 * (1 - e) ** 2 * g * P * Q
    )
    return r0, r14, r24, r34, r44


def r_values(params: ModelParams, phat_theta, phat_eta):
    """Determinant and fourth adjugate column of ``1 - Bhat``.

    Returns ``(r0, r14, r24, r34, r44)`` such that column 4 of
    ``(1 - Bhat)^{-1}`` is ``(r14, r24, r34, r44) / r0``. Works elementwise
    on arrays in double precision.

    Notes
    -----
    With ``g = 1 - m(1-delta)^2``, ``h = 1 + m delta epsilon`` and
    ``f = g - m^2 delta epsilon (1-delta)^2`` every polynomial is at most
    quadratic in each of ``P = phat_theta`` and ``Q = phat_eta``.

    Near ``P = Q = 1`` with small ``mu`` the determinant is a small number
    obtained from cancelling O(1) terms, so double-precision evaluation
    loses accuracy there. :func:`r_values_exact` avoids this.
    """
    P = np.asarray(phat_theta, dtype=float)
    Q = np.asarray(phat_eta, dtype=float)
    return _r_poly(params.m, params.dlt, params.eps, P, Q)


def exact_m(params: ModelParams) -> Fraction:
    return (1 - Fraction(params.mu)) ** 2


def r_values_exact(params: ModelParams, phat_theta, phat_eta):
    """Same polynomials in exact rational arithmetic.

    Inputs are converted exactly (a double is a dyadic rational), so the
    only rounding is in the arguments themselves.
    """
    return _r_poly(exact_m(params), params.delta, params.epsilon,
                   Fraction(phat_theta), Fraction(phat_eta))


def r_values_as_printed(params: ModelParams, phat_theta, phat_eta):
    """The polynomials exactly as published, kept for comparison only.

    They reproduce the true adjugate when ``epsilon = delta = 0`` but not in
    general; see :func:`r_values` for the version used everywhere else.
    """
    m, e, d = params.m, params.eps, params.dlt
    pt = np.asarray(phat_theta, dtype=float)
    pe = np.asarray(phat_eta, dtype=float)
    k1 = 1 - m * (1 - d * (2 - d - e))
    k2 = 1 - m * (1 - d) ** 2
    r0 = (
        (1 - m * m * d * d * e * e) * (1 - m * (1 - d * (2 - 2 * e - d * (1 - m * e * e))))
        - m * m * (1 - e) ** 2 * pe ** 2 * (d * e - (1 - d) * (1 - e) * pt)
        * (k1 - m * k2 * (1 - d) * (1 - e) * pt)
        - m * (1 - e) * (1 - d) * (1 - m * (1 - d * (2 - e + d * (1 - m * e * e * (1 - m * d * e)))))
        * (pe + pt)
        + m * m * d * e * (1 - e) ** 2 * k1 * pt ** 2
        - m * (1 - e) ** 2 * pe * pt * (
            k2 ** 2 - 2 * m * d * e + m * m * d * d * e * e
            - m * (1 - d) * (1 - e) * (1 - m * (1 - d) ** 2 * (1 + m * d * e)) * pt
        )
    )
    r14 = m * e * e * ((1 - m * d * e) ** 2 - m * m * (1 - d) ** 2 * (1 - e) ** 2 * pt * pe)
    r24 = m * e * (m * d * e * (1 - d) * (1 - m * d * e)
                   + (1 - e) * pe * (k1 - m * k2 * (1 - d) * (1 - e) * pt))
    r34 = m * e * (m * d * e * (1 - d) * (1 - m * d * e)
                   + (1 - e) * pt * (k1 - m * k2 * (1 - d) * (1 - e) * pe))
    r44 = (-m * m * d * e * (1 - d) ** 2 * (1 - m * d * e - (1 - d) * (1 - e) * pe)
           + (k1 - m * k2 * (1 - d) * (1 - e) * pe) * (1 - m * d * e - m * (1 - d) * (1 - e) * pt))
    return r0, r14, r24, r34, r44


def source_factor(params: ModelParams) -> float:
    """``K = m (1-epsilon)^2 / N``: weight of a fresh coalescence."""
    return params.m * (1 - params.eps) ** 2 / params.N


def s_closed_form(params: ModelParams, X: np.ndarray, r_func=None) -> np.ndarray:
    """``s_{i,4}(theta)`` from the polynomial solution.

    Parameters
    ----------
    X : array
        ``1 - phat`` on the frequency grid. Passing the complement keeps full
        relative accuracy at low frequencies.
    r_func : callable, optional
        Replacement polynomial provider evaluated in double precision.
        Only used to inject faults in tests.

    Returns
    -------
    array of shape ``X.shape + (4,)``
    """
    X = np.asarray(X, dtype=float)
    if r_func is not None:
        P = 1.0 - X
        r0, r14, r24, r34, r44 = r_func(params, P, P)
        scale = source_factor(params) * P * P / r0
        return np.stack([r14 * scale, r24 * scale, r34 * scale, r44 * scale], axis=-1)
    uniq, inv = np.unique(X.ravel(), return_inverse=True)
    m = exact_m(params)
    K = m * (1 - params.epsilon) ** 2 / params.N
    vals = np.empty((len(uniq), 4))
    for j, xv in enumerate(uniq):
        P = 1 - Fraction(float(xv))
        r0, r14, r24, r34, r44 = _r_poly(m, params.delta, params.epsilon, P, P)
        scale = K * P * P / r0
        vals[j] = [float(r14 * scale), float(r24 * scale),
                   float(r34 * scale), float(r44 * scale)]
    return vals[inv.ravel()].reshape(X.shape + (4,))


def s_matrix(params: ModelParams, P: np.ndarray) -> np.ndarray:
    """``s_{i,4}(theta)`` by solving ``(1 - Bhat) v = e_4`` numerically."""
    A = np.eye(4) - _bhat_stack(params, P)
    rhs = np.zeros(P.shape + (4, 1))
    rhs[..., 3, 0] = 1.0
    v = np.linalg.solve(A, rhs)[..., 0]
    return source_factor(params) * (P * P)[..., None] * v


def spectral_block(params: ModelParams, theta, kernel: MigrationKernel = NEAREST_NEIGHBOUR,
                   torus: TorusSpec | None = None) -> SpectralBlock:
    """Assemble the closed-form data at a single frequency ``theta``."""
    from .core import phat as _phat
    if torus is None:
        torus = TorusSpec(len(np.atleast_1d(theta)), math.inf)
    P = _phat(kernel, params, torus, theta)
    r0, r14, r24, r34, r44 = (float(v) for v in r_values_exact(params, P, P))
    s = s_closed_form(params, np.array(1.0 - P))
    return SpectralBlock(tuple(np.atleast_1d(theta)), P, r0, r14, r24, r34, r44,
                         build_Bhat(params, P, P), np.asarray(s, dtype=float))


def psi00_from_s(s: np.ndarray, d: int) -> np.ndarray:
    """Origin values from the frequency average of ``s``."""
    sbar = s.reshape(-1, 4).mean(axis=0)
    p4 = sbar[3] / (1.0 + sbar[3])
    out = (1.0 - p4) * sbar
    out[3] = p4
    return out


def compute_ibd_field(params: ModelParams, torus: TorusSpec,
                      kernel: MigrationKernel = NEAREST_NEIGHBOUR,
                      method: str = "spectral", dft: str = "auto",
                      r_func=None) -> IbdField:
    """Equilibrium IBD field ``x -> Psi_{0,x}``.

    Parameters
    ----------
    method : {"spectral", "matrix", "fixed-point"}
        How the per-frequency system is solved; ``"fixed-point"`` delegates
        to :func:`ibd_fixed_point`.
    dft : {"auto", "direct", "fft"}
        Inverse transform used to return to site space.
    r_func : callable
        Polynomial provider for the ``"spectral"`` route. Only tests swap it.
    """
    torus.require_finite()
    if params.mu <= 0:
        raise ParameterError("equilibrium undefined without mutation")
    if method == "fixed-point":
        return ibd_fixed_point(params, torus, kernel).to_ibd_field()
    X = one_minus_phat_grid(kernel, params, torus)
    if method == "spectral":
        s = s_closed_form(params, X, r_func)
    elif method == "matrix":
        s = s_matrix(params, 1.0 - X)
    else:
        raise ParameterError(f"unknown method {method!r}")
    p00 = psi00_from_s(s, torus.d)
    hat = (1.0 - p00[3]) * s
    vals, imag = inverse_dft(hat, torus.d, dft)
    if imag > 1e-10:
        raise ArithmeticError(f"inverse DFT left imaginary residue {imag:.3e}")
    return IbdField(torus, params, vals, method, _flags(params), imag)


def psi_hat(params: ModelParams, torus: TorusSpec,
            kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> np.ndarray:
    """Fourier coefficients ``Psi_hat(theta)`` on the grid, shape ``(L,)*d + (4,)``."""
    s = s_closed_form(params, one_minus_phat_grid(kernel, params, torus))
    p00 = psi00_from_s(s, torus.d)
    return (1.0 - p00[3]) * s


def psi00(params: ModelParams, torus: TorusSpec,
          kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> np.ndarray:
    """IBD probabilities for two distinct individuals of the same colony."""
    torus.require_finite()
    if params.mu <= 0:
        raise ParameterError("equilibrium undefined without mutation")
    X = one_minus_phat_grid(kernel, params, torus)
    return psi00_from_s(s_closed_form(params, X), torus.d)


def _step_planar(F: np.ndarray, P: np.ndarray, PT: np.ndarray, coef: tuple) -> np.ndarray:
    """Pair recursion on a component-first ``(4, n, n)`` array."""
    m, e, d, N = coef
    F00, F01, F10, F11 = F
    F10m = P @ F10          # first (active) lineage moves
    F01m = F01 @ PT         # second (active) lineage moves
    F11a = P @ F11
    F11b = F11 @ PT
    F11ab = P @ F11b
    src = P @ (((1.0 - np.diag(F11)) / N)[:, None] * PT)
    out = np.empty_like(F)
    out[0] = (1 - d) ** 2 * F00 + e * e * F11 + e * (1 - d) * (F01 + F10)
    out[1] = d * (1 - d) * F00 + d * e * F10 + (1 - e) * ((1 - d) * F01m + e * F11b)
    out[2] = d * (1 - d) * F00 + d * e * F01 + (1 - e) * ((1 - d) * F10m + e * F11a)
    out[3] = (d * d * F00 + d * (1 - e) * (F01m + F10m)
              + (1 - e) ** 2 * (F11ab + src))
    out *= m
    return out


def _coef(params: ModelParams) -> tuple:
    return params.m, params.eps, params.dlt, params.N


def fixed_point_step(F: np.ndarray, P: np.ndarray, params: ModelParams) -> np.ndarray:
    """One generation of the pair recursion on the full ``(n, n, 4)`` field."""
    Fp = np.ascontiguousarray(np.moveaxis(np.asarray(F, dtype=float), -1, 0))
    out = _step_planar(Fp, P, np.ascontiguousarray(P.T), _coef(params))
    return np.moveaxis(out, 0, -1).copy()


def ibd_fixed_point(params: ModelParams, torus: TorusSpec,
                    kernel: MigrationKernel = NEAREST_NEIGHBOUR,
                    tol: float = 1e-13, max_iter: int | None = None,
                    start: np.ndarray | None = None) -> PairField:
    """Iterate the pair recursion from zero until the sup-norm change < tol.

    The map is a contraction with factor at most ``m = (1-mu)^2``. The
    returned ``contraction`` is the observed ratio of the last two changes.
    """
    torus.require_finite()
    n = torus.n_sites
    if n * n > FIXED_POINT_MAX_PAIRS:
        raise ParameterError(f"fixed point needs L^(2d) <= {FIXED_POINT_MAX_PAIRS}")
    m = params.m
    if max_iter is None:
        max_iter = 10 * int(math.ceil(math.log(tol) / math.log(m))) if m < 1 else 10**6
    P = migration_matrix(kernel, params, torus)
    PT = np.ascontiguousarray(P.T)
    coef = _coef(params)
    F = (np.zeros((4, n, n)) if start is None
         else np.ascontiguousarray(np.moveaxis(np.array(start, dtype=float), -1, 0)))
    prev = None
    ratio = 0.0
    change = math.inf
    it = 0
    while it < max_iter:
        G = _step_planar(F, P, PT, coef)
        change = float(np.abs(G - F).max())
        F = G
        it += 1
        if prev is not None and prev > 0 and change > 1e-300:
            ratio = change / prev
        prev = change
        if change < tol:
            break
    return PairField(torus, params, np.moveaxis(F, 0, -1).copy(), it, change, change < tol, ratio)
