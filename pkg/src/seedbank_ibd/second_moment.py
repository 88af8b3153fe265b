"""Spatial second moment of the IBD field and the mean coalescence time.

For small frequencies the transform of the IBD field behaves like
``Psi_hat(theta) - Psi_hat(0) ~ -zeta * (1 - phat(theta)) / nu``, with

    zeta = [(1 - Psi00^(4)) / N] nu U (2 + Delta0 U) Gamma0,

where ``U = (1 - Bhat(0))^{-1}``. On a large torus ``zeta`` equals
``sum_x |x|^2 Psi_{0,x}``, and ``zeta^(4) / (2 nu)`` estimates the mean time
until two active lineages coalesce.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (NEAREST_NEIGHBOUR, MigrationKernel, ModelParams, ParameterError,
                   TorusSpec, centered_grid)
from .spectral import build_Bhat, compute_ibd_field, psi00, psi_hat

TAIL_TOLERANCE = 1e-12


def _common(params: ModelParams):
    m, e, d = params.m, params.eps, params.dlt
    w = 1 - m * (1 - d - e) - 2 * m * d * e
    return m, e, d, w


def u_entries(params: ModelParams, printed: bool = False) -> dict:
    """The scalars ``u0, s1, s2, s3, t1, t2, t3, t4`` defining ``U``.

    Each factor is written as a polynomial in ``o = 1 - m = mu (2 - mu)``
    whose coefficients are free of cancellation for small swap fractions,
    which keeps full relative accuracy as ``mu -> 0``.

    ``printed=True`` returns the alternative ``t1, t2, t3`` expressions kept
    for comparison; they do not reproduce the matrix inverse.
    """
    m, e, d = params.m, params.eps, params.dlt
    o = params.mu * (2 - params.mu)
    g = 1 - d - e
    w = (d + e - 2 * d * e) + o * (1 - d) * (1 - e)
    one_m_g = o + m * (d + e)
    one_m_g2 = o + m * (d + e) * (2 - d - e)
    t1 = (e * e * (2 - d - e)
          + o * (d * (1 - 2 * e + 2 * e * e) + e * (1 - e) * (3 - 2 * e))
          + o * o * (1 - e) ** 2 * g)
    t4 = (d * d * (2 - d - e)
          + o * (e * (1 - 2 * d + 2 * d * d) + d * (1 - d) * (3 - 2 * d))
          + o * o * (1 - d) ** 2 * g)
    t2 = (d * e * (2 - d - e)
          + o * (d * (2 - d) + e * (2 - e) - d * e * (5 - 2 * d - 2 * e))
          + o * o * (1 - d) * (1 - e) * g)
    out = {
        "u0": o * w * one_m_g * one_m_g2,
        "s1": m * w * (e * (2 - d - e) + o * (1 - e) * g),
        "s2": m * w * (1 + m * g),
        "s3": m * w * (d * (2 - d - e) + o * (1 - d) * g),
        "t1": w * t1,
        "t2": w * t2,
        "t3": m * d * e * w * (1 + m * g),
        "t4": w * t4,
    }
    if printed:
        w = _common(params)[3]
        out["t1"] = w * (1 - m * (1 - e) ** 2) * (1 - m * g)
        inner = (1 - 6 * d + 4 * d ** 2 - d ** 3 + 1 - 6 * e + 4 * e ** 2 - e ** 3
                 + 1 - d ** 3 * e + 5 * d ** 2 * e + 10 * d * e - 5 * d * e ** 2 + d * e ** 3)
        out["t2"] = 1 - m * (3 * g + (d + e) ** 2 - m * inner
                             - m * m * g * (d * e + g) ** 2)
        out["t3"] = m * m * d * e * ((1 - e) ** 2 + (1 - d) ** 2
                                     - 2 * m * (1 - d) * (1 - e) * g)
    return out


def u_matrix(params: ModelParams, printed: bool = False) -> np.ndarray:
    """Closed-form ``U = (1 - Bhat(0))^{-1}``."""
    if params.mu <= 0:
        raise ParameterError("U is singular without mutation (u0 has a factor 1 - m)")
    k = u_entries(params, printed)
    e, d = params.eps, params.dlt
    s1, s2, s3 = k["s1"], k["s2"], k["s3"]
    t1, t2, t3, t4 = k["t1"], k["t2"], k["t3"], k["t4"]
    U = np.array([
        [t1, e * s1, e * s1, e * e * s2],
        [d * s1, t2, t3, e * s3],
        [d * s1, t3, t2, e * s3],
        [d * d * s2, d * s3, d * s3, t4],
    ])
    return U / k["u0"]


def u_matrix_numeric(params: ModelParams) -> np.ndarray:
    """``U`` by numerically inverting ``1 - Bhat(0)``."""
    return np.linalg.inv(np.eye(4) - build_Bhat(params, 1.0, 1.0))


def u_matrix_exact(params: ModelParams) -> np.ndarray:
    """``U`` by Gauss-Jordan elimination in rational arithmetic.

    Every input is taken as the exact rational it denotes, so the only
    rounding is the final conversion to float.
    """
    mu = Fraction(params.mu)
    if mu <= 0:
        raise ParameterError("U is singular without mutation")
    m = (1 - mu) ** 2
    e, d = params.epsilon, params.delta
    B = [
        [(1 - d) ** 2, (1 - d) * e, (1 - d) * e, e * e],
        [d * (1 - d), (1 - e) * (1 - d), d * e, (1 - e) * e],
        [d * (1 - d), d * e, (1 - e) * (1 - d), (1 - e) * e],
        [d * d, (1 - e) * d, (1 - e) * d, (1 - e) ** 2],
    ]
    A = [[Fraction(int(i == j)) - m * B[i][j] for j in range(4)]
         + [Fraction(int(i == j)) for j in range(4)] for i in range(4)]
    for c in range(4):
        piv = next(r for r in range(c, 4) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        inv = 1 / A[c][c]
        A[c] = [v * inv for v in A[c]]
        for r in range(4):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return np.array([[float(v) for v in row[4:]] for row in A])


def u_slow_seedbank(params: ModelParams, delta=None) -> np.ndarray:
    """First-order expansion of ``U`` for ``epsilon = delta`` small."""
    d = params.dlt if delta is None else float(delta)
    m = params.m
    c = 1.0 / (1.0 - m)
    stencil = np.array([[-2, 1, 1, 0], [1, -2, 0, 1], [1, 0, -2, 1], [0, 1, 1, -2]], float)
    return c * np.eye(4) + d * m * c * c * stencil


def delta0_matrix(params: ModelParams) -> np.ndarray:
    """``Delta0`` with ``Bhat(theta) - Bhat(0) = -Delta0 (1 - phat(theta)) + ...``."""
    m, e, d = params.m, params.eps, params.dlt
    return m * (1 - e) * np.array([
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 1 - d, 0.0, e],
        [0.0, 0.0, 1 - d, e],
        [0.0, d, d, 2 * (1 - e)],
    ])


def gamma0_vector(params: ModelParams) -> np.ndarray:
    return np.array([0.0, 0.0, 0.0, params.m * (1 - params.eps) ** 2])


def delta0_slow_seedbank(params: ModelParams, delta=None) -> np.ndarray:
    d = params.dlt if delta is None else float(delta)
    base = np.diag([0.0, 1.0, 1.0, 2.0])
    first = np.array([[0, 0, 0, 0], [0, -2, 0, 1], [0, 0, -2, 1], [0, 1, 1, -4]], float)
    return params.m * (base + d * first)


def gamma0_slow_seedbank(params: ModelParams, delta=None) -> np.ndarray:
    d = params.dlt if delta is None else float(delta)
    return params.m * np.array([0.0, 0.0, 0.0, 1.0 - 2 * d])


def zeta_from_prefactor(params: ModelParams, prefactor: float) -> np.ndarray:
    """``prefactor * nu * U (2 + Delta0 U) Gamma0``."""
    U = u_matrix(params)
    D0 = delta0_matrix(params)
    G0 = gamma0_vector(params)
    return prefactor * params.nu * (U @ ((2 * np.eye(4) + D0 @ U) @ G0))


def zeta_closed_form(params: ModelParams, torus: TorusSpec,
                     kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> np.ndarray:
    """Closed-form ``zeta`` using ``Psi00^(4)`` computed on ``torus``."""
    if params.mu <= 0:
        raise ParameterError("equilibrium undefined without mutation")
    p4 = psi00(params, torus, kernel)[3]
    return zeta_from_prefactor(params, (1.0 - p4) / params.N)


def zeta_slow_seedbank(params: ModelParams, alpha0: float, gamma0: float,
                       delta=None, printed_prefactor: bool = False) -> np.ndarray:
    """First-order small-``delta`` form of ``zeta`` given ``alpha(0)``, ``gamma(0)``.

    The prefactor ``(1 - Psi00^(4)) / N`` expands as
    ``c_N [1 + 2 delta c_N gamma(0)]``. ``printed_prefactor=True`` uses
    ``c_N [1 + 2 delta alpha(0) gamma(0) / N]`` instead.
    """
    d = params.dlt if delta is None else float(delta)
    m = params.m
    c = 1.0 / (1.0 - m)
    cN = 1.0 / (params.N + alpha0)
    slope = 2 * alpha0 * gamma0 / params.N if printed_prefactor else 2 * cN * gamma0
    pref = cN * params.nu * (1 + d * slope) * m * c * c
    return pref * (np.array([0.0, 0.0, 0.0, 2.0])
                   + d * np.array([0.0, 3 * m * c, 3 * m * c, -4 * (2 * c - 1)]))


def tail_mass(params: ModelParams, torus: TorusSpec) -> float:
    """Bound ``(1 - mu)^{2L}`` on the IBD probability at the far corner."""
    return (1.0 - params.mu) ** (2 * torus.L)


def zeta_empirical(params: ModelParams, torus: TorusSpec,
                   kernel: MigrationKernel = NEAREST_NEIGHBOUR, field_=None):
    """``sum_x |x|^2 Psi_{0,x}`` with ``x`` the representative in ``[-L/2, L/2)^d``.

    Returns
    -------
    zeta : ndarray, shape (4,)
    diagnostics : dict
        ``tail_mass`` and a ``tail_ok`` flag; a warning is raised when the
        torus is too small for the tail bound.
    """
    if field_ is None:
        field_ = compute_ibd_field(params, torus, kernel)
    vals = field_.values if hasattr(field_, "values") else field_
    r2 = np.sum(centered_grid(torus).astype(float) ** 2, axis=0)
    zeta = (r2[..., None] * vals).reshape(-1, 4).sum(axis=0)
    tm = tail_mass(params, torus)
    diag = {"L": torus.L, "tail_mass": tm, "tail_ok": tm < TAIL_TOLERANCE}
    if not diag["tail_ok"]:
        warnings.warn(f"torus side {torus.L} is short: tail bound {tm:.3e}", RuntimeWarning)
    return zeta, diag


def zeta_quadratic_fit(params: ModelParams, torus: TorusSpec,
                       kernel: MigrationKernel = NEAREST_NEIGHBOUR, hat=None) -> np.ndarray:
    """``zeta`` from the curvature of ``Psi_hat`` at the two smallest frequencies.

    Along the first axis ``f(k) = -d [Psi_hat(k/L) - Psi_hat(0)] / (2 pi^2 (k/L)^2)``
    equals ``zeta + O((k/L)^2)``; Richardson elimination with ``k = 1, 2``
    removes the quartic term.
    """
    if torus.L < 4:
        raise ParameterError("quadratic fit needs L >= 4")
    if hat is None:
        hat = psi_hat(params, torus, kernel)
    d, L = torus.d, torus.L
    origin = (0,) * d

    def f(k):
        idx = (k,) + (0,) * (d - 1)
        th = k / L
        return -d * (hat[idx] - hat[origin]) / (2 * math.pi ** 2 * th * th)

    return np.real((4 * f(1) - f(2)) / 3)


def expected_coalescence_time(params: ModelParams, torus: TorusSpec,
                              kernel: MigrationKernel = NEAREST_NEIGHBOUR,
                              zeta=None) -> float:
    """``zeta^(4) / (2 nu)``: the active-pair entry as the headline figure."""
    if zeta is None:
        zeta = zeta_closed_form(params, torus, kernel)
    return float(zeta[3] / (2 * params.nu))


@dataclass
class SecondMomentReport:
    zeta: np.ndarray
    zeta_empirical: np.ndarray
    zeta_fit: np.ndarray
    expected_tau: float
    expected_tau_all: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def rel_diff(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.zeta_empirical - self.zeta) / np.abs(self.zeta)

    def as_dict(self) -> dict:
        return {
            "zeta_closed": [float(v) for v in self.zeta],
            "zeta_empirical": [float(v) for v in self.zeta_empirical],
            "zeta_fit": [float(v) for v in self.zeta_fit],
            "rel_diff": [float(v) for v in self.rel_diff],
            "expected_tau": self.expected_tau,
            "expected_tau_components": [float(v) for v in self.expected_tau_all],
            "tail_mass": self.diagnostics.get("tail_mass"),
            "L": self.diagnostics.get("L"),
        }


def second_moment_report(params: ModelParams, torus: TorusSpec,
                         kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> SecondMomentReport:
    zeta = zeta_closed_form(params, torus, kernel)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        emp, diag = zeta_empirical(params, torus, kernel)
    fit = zeta_quadratic_fit(params, torus, kernel)
    return SecondMomentReport(zeta, emp, fit, expected_coalescence_time(params, torus, zeta=zeta),
                              zeta / (2 * params.nu), diag)
