"""Symmetric slow seed-bank: alpha, beta, gamma and the regime predictors.

For ``M = N`` and ``epsilon = delta`` the IBD field admits a first-order
expansion in the swap fraction ``delta``,

    Psi_{0,x} = c_N [(0, 0, 0, alpha(x))
                     + delta (0, beta(x), beta(x), 2 c_N alpha(x) gamma(0) - 2 gamma(x))],

with ``c_N = 1 / (N + alpha(0))``. The three lattice functions are inverse
Fourier transforms of

    alpha_hat = m p^2 / (1 - m p^2),
    beta_hat  = m^2 p^3 / ((1 - m p)(1 - m p^2)),
    gamma_hat = m p^2 / (1 - m p^2)^2,

where ``p = phat(theta)``. For the nearest-neighbour walk they can also be
written through the lattice Green function ``G_x(z)``; both routes live
here so that they can be checked against each other.

The auxiliary kernel with transform ``m p / (1 - m p)`` is called
``lag_kernel`` to avoid a clash with the swap fraction.

The regime predictors take the limit parameters ``(r, s, chi, y)``
explicitly. Where a printed limit law was found to disagree with the exact
field, the corrected law is the default and the printed one is available
with ``variant="as-printed"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (INFINITE, NEAREST_NEIGHBOUR, MigrationKernel, ModelParams,
                   ParameterError, TorusSpec, inverse_dft, one_minus_phat_grid)
from .green import (EULER_GAMMA, LATTICE_CONSTANTS, bessel_k0, bessel_k1,
                    expansion_coeffs_1d, expansion_coeffs_torus, green_1d_infinite,
                    green_constant_3d, green_derivative, green_torus_derivative_field,
                    green_torus_field, potential_kernel_2d)

SQRT2 = math.sqrt(2.0)
VARIANTS = ("corrected", "as-printed", "small-s")


@dataclass(frozen=True)
class AbgTriple:
    """Values of ``alpha``, ``beta`` and ``gamma`` at one site."""

    alpha: float
    beta: float
    gamma: float

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma)


@dataclass
class AbgField:
    """``alpha``, ``beta``, ``gamma`` (and the lag kernel) on a whole torus."""

    torus: TorusSpec
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    lag: np.ndarray | None = None
    imag_residue: float = 0.0

    def at(self, x) -> AbgTriple:
        idx = tuple(self.torus.reduce(x))
        return AbgTriple(float(self.alpha[idx]), float(self.beta[idx]),
                         float(self.gamma[idx]))

    @property
    def origin(self) -> AbgTriple:
        return self.at((0,) * self.torus.d)


def _check_slow_seedbank(params: ModelParams):
    if params.M != params.N:
        raise ParameterError("small-delta expansion requires M == N")
    if params.mu <= 0:
        raise ParameterError("equilibrium undefined without mutation")


# ---------------------------------------------------------------------------
# Fourier route
# ---------------------------------------------------------------------------

def abg_hats(params: ModelParams, X) -> tuple:
    """``alpha_hat``, ``beta_hat``, ``gamma_hat`` and ``lag_hat`` at ``1 - p = X``.

    The denominators are evaluated as ``(1 - m) + m X (2 - X)`` and
    ``(1 - m) + m X`` so that they keep full relative accuracy for small
    ``mu`` near ``theta = 0``.
    """
    X = np.asarray(X, dtype=float)
    mu = params.mu
    m = params.m
    one_m = mu * (2.0 - mu)
    p = 1.0 - X
    d2 = one_m + m * X * (2.0 - X)
    d1 = one_m + m * X
    a_hat = m * p * p / d2
    b_hat = m * m * p ** 3 / (d1 * d2)
    g_hat = m * p * p / (d2 * d2)
    lag_hat = m * p / d1
    return a_hat, b_hat, g_hat, lag_hat


def abg_field_spectral(params: ModelParams, torus: TorusSpec,
                       kernel: MigrationKernel = NEAREST_NEIGHBOUR,
                       dft: str = "auto") -> AbgField:
    """All four lattice functions on a finite torus by Fourier inversion."""
    torus.require_finite()
    if params.mu <= 0:
        raise ParameterError("equilibrium undefined without mutation")
    X = one_minus_phat_grid(kernel, params, torus)
    hats = np.stack(abg_hats(params, X), axis=-1)
    vals, imag = inverse_dft(hats, torus.d, dft)
    if imag > 1e-10 * max(1.0, float(np.max(np.abs(vals)))):
        raise ArithmeticError(f"inverse DFT left imaginary residue {imag:.3e}")
    return AbgField(torus, vals[..., 0], vals[..., 1], vals[..., 2], vals[..., 3], imag)


def abg_spectral(x, params: ModelParams, torus: TorusSpec,
                 kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> AbgTriple:
    """``(alpha, beta, gamma)`` at site ``x`` by Fourier inversion."""
    return abg_field_spectral(params, torus, kernel).at(x)


# ---------------------------------------------------------------------------
# Green-function route
# ---------------------------------------------------------------------------

def green_arguments(params: ModelParams) -> dict:
    """The walk parameters ``a, b, a', b'`` and the three Green arguments."""
    k = 1.0 - params.mu
    a = k * params.nu
    b = k * (1.0 - params.nu)
    ap, bp = k * a, k * b
    return {"a": a, "b": b, "a_prime": ap, "b_prime": bp,
            "u1": a / (1.0 - b), "u2": -a / (1.0 + b), "v": ap / (1.0 - bp)}


class _GreenSource:
    """Uniform access to ``G_x(z)`` and ``G'_x(z)`` over a geometry.

    Finite tori return whole fields; the infinite line returns values at a
    single site.
    """

    def __init__(self, geometry: TorusSpec, kernel: MigrationKernel, x=None):
        self.geometry = geometry
        self.kernel = kernel
        self.x = x
        if not geometry.finite:
            if geometry.d != 1 or not kernel.nearest_neighbour:
                raise ParameterError("Green route on an infinite lattice only for d=1")
            if x is None:
                raise ParameterError("infinite line needs an explicit site")

    def G(self, z):
        if self.geometry.finite:
            return green_torus_field(z, self.geometry, self.kernel)
        return green_1d_infinite(abs(int(np.atleast_1d(self.x)[0])), z)

    def dG(self, z):
        if self.geometry.finite:
            return green_torus_derivative_field(z, self.geometry, self.kernel)
        return green_derivative(self.x, z, self.geometry, self.kernel)

    def delta0(self):
        if self.geometry.finite:
            e = np.zeros((self.geometry.L,) * self.geometry.d)
            e[(0,) * self.geometry.d] = 1.0
            return e
        return 1.0 if int(np.atleast_1d(self.x)[0]) == 0 else 0.0


def _abg_green_generic(params: ModelParams, src: _GreenSource, beta_form: str):
    g = green_arguments(params)
    a, b, ap, bp = g["a"], g["b"], g["a_prime"], g["b_prime"]
    u1, u2, v = g["u1"], g["u2"], g["v"]
    mu = params.mu
    G1, G2, Gv = src.G(u1), src.G(u2), src.G(v)
    dlt = src.delta0()
    alpha = G1 / (2 * (1 - b)) + G2 / (2 * (1 + b)) - dlt
    lag = Gv / (1 - bp) - dlt
    if beta_form == "printed":
        beta = ((1 - mu) / (2 * mu) * G1 / (1 - b)
                - (1 - mu) / (2 * (2 - mu)) * G2 / (1 + b)
                - 1.0 / (1 - (1 - mu) ** 2) * Gv / (1 - bp) + dlt)
    elif beta_form == "convolution":
        # (alpha + 1_0) * (lag + 1_0) expanded with the product rule for Green functions
        conv = (((u1 * G1 - v * Gv) / (u1 - v)) / (2 * (1 - b) * (1 - bp))
                + ((u2 * G2 - v * Gv) / (u2 - v)) / (2 * (1 + b) * (1 - bp)))
        beta = conv - (alpha + dlt) - (lag + dlt) + dlt
    else:
        raise ParameterError(f"unknown beta form {beta_form!r}")
    dG1, dG2 = src.dG(u1), src.dG(u2)
    gamma = (b / (4 * (1 - b) ** 2) * G1 + a / (4 * (1 - b) ** 3) * dG1
             - b / (4 * (1 + b) ** 2) * G2 - a / (4 * (1 + b) ** 3) * dG2)
    return alpha, beta, gamma, lag


def abg_field_green(params: ModelParams, torus: TorusSpec,
                    kernel: MigrationKernel = NEAREST_NEIGHBOUR,
                    beta_form: str = "printed") -> AbgField:
    """Green-function closed forms on a whole finite torus.

    Parameters
    ----------
    beta_form : {"printed", "convolution"}
        ``"printed"`` uses the simplified three-term formula for ``beta``;
        ``"convolution"`` assembles it from ``alpha`` and ``lag_kernel`` with
        ``G(z) * G(z') = [z G(z) - z' G(z')] / (z - z')``.
    """
    torus.require_finite()
    if params.mu <= 0:
        raise ParameterError("equilibrium undefined without mutation")
    al, be, ga, lag = _abg_green_generic(params, _GreenSource(torus, kernel), beta_form)
    return AbgField(torus, al, be, ga, lag)


def abg_green(x, params: ModelParams, torus: TorusSpec,
              kernel: MigrationKernel = NEAREST_NEIGHBOUR,
              beta_form: str = "printed") -> AbgTriple:
    """``(alpha, beta, gamma)`` at ``x`` from the Green-function closed forms.

    ``torus`` may be the infinite line (``TorusSpec(1, INFINITE)``), in which
    case the closed-form ``G_x`` of Z is used.
    """
    if params.mu <= 0:
        raise ParameterError("equilibrium undefined without mutation")
    if torus.finite:
        return abg_field_green(params, torus, kernel, beta_form).at(x)
    al, be, ga, _ = _abg_green_generic(params, _GreenSource(torus, kernel, x), beta_form)
    return AbgTriple(float(al), float(be), float(ga))


def lag_kernel(params: ModelParams, torus: TorusSpec,
               kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> np.ndarray:
    """Site-space kernel with transform ``m p / (1 - m p)``.

    ``beta`` is the convolution of ``alpha`` with this kernel.
    """
    return abg_field_spectral(params, torus, kernel).lag


def convolve_torus(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Cyclic convolution ``sum_y f(x - y) g(y)`` by direct summation."""
    shape = f.shape
    out = np.zeros(shape)
    for yv in np.ndindex(*shape):
        out += g[yv] * np.roll(f, shift=yv, axis=tuple(range(f.ndim)))
    return out


def c_N(params: ModelParams, alpha0: float) -> float:
    return 1.0 / (params.N + alpha0)


# ---------------------------------------------------------------------------
# First order in delta
# ---------------------------------------------------------------------------

def _base_params(params: ModelParams) -> ModelParams:
    return params.replace(epsilon=0, delta=0)


def psi_small_delta_field(delta, params: ModelParams, torus: TorusSpec,
                          kernel: MigrationKernel = NEAREST_NEIGHBOUR,
                          abg: AbgField | None = None) -> np.ndarray:
    """First-order prediction of ``Psi_{0,x}`` for every site, shape ``(L,)*d + (4,)``."""
    _check_slow_seedbank(params)
    if abg is None:
        abg = abg_field_spectral(_base_params(params), torus, kernel)
    o = (0,) * torus.d
    a0, g0 = abg.alpha[o], abg.gamma[o]
    cn = 1.0 / (params.N + a0)
    delta = float(delta)
    out = np.zeros(abg.alpha.shape + (4,))
    out[..., 1] = cn * delta * abg.beta
    out[..., 2] = cn * delta * abg.beta
    out[..., 3] = cn * (abg.alpha + delta * (2 * cn * abg.alpha * g0 - 2 * abg.gamma))
    return out


def psi_small_delta(x, delta, params: ModelParams, torus: TorusSpec,
                    kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> np.ndarray:
    """First-order small-``delta`` prediction of ``Psi_{0,x}`` (4-vector).

    Only ``N``, ``M``, ``mu`` and ``nu`` are read from ``params``; the swap
    fraction is the explicit ``delta`` argument.
    """
    field_ = psi_small_delta_field(delta, params, torus, kernel)
    return field_[tuple(torus.reduce(x))].copy()


def phi_field(params: ModelParams, torus: TorusSpec,
              kernel: MigrationKernel = NEAREST_NEIGHBOUR,
              abg: AbgField | None = None) -> np.ndarray:
    """``Phi = d Psi / d delta`` at ``delta = 0`` on the whole torus."""
    _check_slow_seedbank(params)
    if abg is None:
        abg = abg_field_spectral(_base_params(params), torus, kernel)
    o = (0,) * torus.d
    a0, g0 = abg.alpha[o], abg.gamma[o]
    N = params.N
    den = N + a0
    out = np.zeros(abg.alpha.shape + (4,))
    out[..., 1] = abg.beta / den
    out[..., 2] = abg.beta / den
    out[..., 3] = 2 * ((abg.alpha * g0 - a0 * abg.gamma) - N * abg.gamma) / den ** 2
    return out


def phi_correction(x, params: ModelParams, torus: TorusSpec,
                   kernel: MigrationKernel = NEAREST_NEIGHBOUR) -> np.ndarray:
    """First-order coefficient ``Phi_{0,x}`` of the IBD vector in ``delta``."""
    return phi_field(params, torus, kernel)[tuple(torus.reduce(x))].copy()


def prefactor_expansion(params: ModelParams, delta, abg: AbgField,
                        printed: bool = False) -> float:
    """First-order expansion of ``(1 - Psi00^(4)) / N`` in ``delta``.

    Reading ``Psi00^(4)`` off :func:`psi_small_delta_field` gives
    ``c_N [1 + 2 delta c_N gamma(0)]``. ``printed=True`` returns
    ``c_N [1 + 2 delta alpha(0) gamma(0) / N]``.
    """
    o = abg.origin
    cn = 1.0 / (params.N + o.alpha)
    slope = 2 * o.alpha * o.gamma / params.N if printed else 2 * cn * o.gamma
    return cn * (1.0 + float(delta) * slope)


# ---------------------------------------------------------------------------
# Expansions in rho = mu / nu
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UvExpansion:
    u: float
    v: float
    u_series: float
    v_series: float


def uv_exact(rho, nu):
    """Exact ``u = a/(1-b)`` and ``v = (1-mu) a / (1 - (1-mu) b)`` as Fractions."""
    rho, nu = Fraction(rho), Fraction(nu)
    mu = rho * nu
    a = nu * (1 - mu)
    b = (1 - nu) * (1 - mu)
    return a / (1 - b), (1 - mu) * a / (1 - (1 - mu) * b)


def uv_series(rho, nu):
    """Cubic expansions of ``u`` and ``v`` in ``rho``."""
    return (1 - rho + (1 - nu) * rho ** 2 - (1 - nu) ** 2 * rho ** 3,
            1 - 2 * rho + (4 - 3 * nu) * rho ** 2 - 4 * (1 - nu) * (2 - nu) * rho ** 3)


def rho_expansion_uv(rho, nu) -> UvExpansion:
    """Exact ``(u, v)`` next to their cubic ``rho`` expansions."""
    if not (0 < float(rho) * float(nu) < 1):
        raise ParameterError("need 0 < rho * nu < 1")
    u, v = uv_exact(rho, nu)
    us, vs = uv_series(Fraction(rho), Fraction(nu))
    return UvExpansion(float(u), float(v), float(us), float(vs))


# ---------------------------------------------------------------------------
# Regime predictors
# ---------------------------------------------------------------------------

@dataclass
class RegimeQuery:
    """A point at which to evaluate a regime formula.

    ``kind="limit"`` evaluates a scaling limit in terms of ``(r, s, chi, y)``.
    ``kind="expansion"`` evaluates the finite-``rho`` expansion at lattice
    site ``x`` from ``(rho, nu, N)`` (and ``L`` for a finite torus).

    ``profile`` selects among the d=2 limit laws: ``"chi"`` for sites at
    distance ``y / rho**chi`` and ``"k0"`` for the diffusive scale
    ``y / sqrt(rho)``.
    """

    d: int
    geometry: str = "infinite"
    kind: str = "limit"
    y: float | tuple = 0.0
    x: int | tuple = 0
    r: float | None = None
    s: float | None = None
    chi: float | None = None
    rho: float | None = None
    nu: float | None = None
    N: int | None = None
    L: int | None = None
    profile: str = "chi"
    variant: str = "corrected"
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.geometry not in ("infinite", "finite"):
            raise ParameterError("geometry must be 'infinite' or 'finite'")
        if self.kind not in ("limit", "expansion"):
            raise ParameterError("kind must be 'limit' or 'expansion'")
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}")
        if self.rho is not None and not self.rho > 0:
            raise ParameterError("rho must be positive")
        if self.chi is not None and self.d == 2 and self.geometry == "infinite":
            if not 0 < self.chi < 0.5:
                raise ParameterError("chi must lie in (0, 1/2) for d=2")
        if self.chi is not None and self.geometry == "finite" and not 0 < self.chi < 1:
            raise ParameterError("chi must lie in (0, 1) on the finite torus")

    def need(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ParameterError(f"regime query is missing {', '.join(missing)}")

    @property
    def ynorm(self) -> float:
        return float(np.linalg.norm(np.atleast_1d(np.asarray(self.y, dtype=float))))

    @property
    def xnorm1(self) -> float:
        return float(np.abs(np.atleast_1d(self.x)).sum())

    @property
    def at_origin(self) -> bool:
        return not np.any(np.atleast_1d(self.x))


def regime_parameters(d: int, geometry: str, N: int, nu: float, rho: float,
                      L: int | None = None) -> dict:
    """Limit parameters ``r`` (and ``s``) along each regime's parameter path.

    * infinite d=1: ``r = N nu sqrt(2 rho)``
    * infinite d=2: ``r = N nu / log(1/rho)``
    * infinite d=3: ``r = N nu``
    * finite d=1: ``r = N nu / L`` and ``s = L^2 rho``
    """
    if geometry == "infinite":
        if d == 1:
            return {"r": N * nu * math.sqrt(2 * rho)}
        if d == 2:
            return {"r": N * nu / math.log(1 / rho)}
        if d == 3:
            return {"r": N * nu}
    elif geometry == "finite" and d == 1:
        if L is None:
            raise ParameterError("finite torus needs L")
        return {"r": N * nu / L, "s": L * L * rho}
    raise ParameterError(f"no regime for d={d}, geometry={geometry}")


def _constants_3d(q: RegimeQuery, x) -> tuple:
    """``C(x), C(0), Cbar(x), Cbar(0)`` for Z^3, using ``C(x)/C(0) = Cbar(x)/Cbar(0)``."""
    C0 = q.constants.get("C0", LATTICE_CONSTANTS[3]["C0"])
    Cb0 = q.constants.get("Cbar0", LATTICE_CONSTANTS[3]["Cbar0"])
    xt = tuple(int(v) for v in np.atleast_1d(x))
    if not any(xt):
        Cx = C0
    elif "C" in q.constants:
        Cx = q.constants["C"]
    else:
        Cx = green_constant_3d(xt)
    return Cx, C0, Cx * Cb0 / C0, Cb0


def _constants_2d(q: RegimeQuery, x) -> tuple:
    """``C(x), Cbar(x), Cbar(0)`` for Z^2. ``Cbar(x)`` must be supplied off the origin."""
    xt = tuple(int(v) for v in np.atleast_1d(x))
    Cb0 = LATTICE_CONSTANTS[2]["Cbar0"]
    if not any(xt):
        return 0.0, Cb0, Cb0
    Cx = q.constants["C"] if "C" in q.constants else potential_kernel_2d(xt)
    Cbx = q.constants.get("Cbar", 0.0)
    return Cx, Cbx, Cb0


def _finite_coeffs(q: RegimeQuery):
    torus = TorusSpec(q.d, q.L)
    x = q.x
    if q.d == 1:
        cx = expansion_coeffs_1d(int(np.atleast_1d(x)[0]), q.L)
        c0 = expansion_coeffs_1d(0, q.L)
    else:
        cx = expansion_coeffs_torus(x, torus)
        c0 = expansion_coeffs_torus((0,) * q.d, torus)
    return cx, c0


def predict_psi4_no_seedbank(query: RegimeQuery) -> float:
    """Active-pair IBD probability without a seed-bank in a given regime.

    Limit laws (``kind="limit"``):

    * infinite d=1, ``Psi4`` at ``x = y / sqrt(2 rho)``: ``e^{-|y|} / (1 + 2r)``
    * infinite d=2, ``profile="k0"``: ``log(1/rho) Psi4`` at ``y / sqrt(rho)``
      tends to ``2 K0(2|y|) / (1 + 2 pi r)``
    * infinite d=2, ``profile="chi"``: returns the limit of
      ``log(1/rho) [Psi4 - (1 - 2 chi)/(1 + 2 pi r)]`` at ``y / rho**chi``,
      which is ``-(log|y|^2 + 2 gamma_E + log 8)/(1 + 2 pi r)``. The printed
      variant is ``log(1/|y|^2)`` for the left side multiplied by ``1 - 2 chi``.
    * infinite d=3: ``C(x) / (C(0) + 2r)``
    * finite d=1: see :func:`predict_finite_torus_panmictic`

    Finite-``rho`` expansions (``kind="expansion"``) drop the ``O(nu^2)`` and
    higher ``rho`` corrections.
    """
    q = query
    if q.kind == "limit":
        if q.geometry == "finite":
            return predict_finite_torus_panmictic(q)
        q.need("r")
        if q.d == 1:
            return math.exp(-q.ynorm) / (1 + 2 * q.r)
        if q.d == 2:
            den = 1 + 2 * math.pi * q.r
            if q.profile == "k0":
                return 2 * bessel_k0(2 * q.ynorm) / den
            if q.variant == "as-printed":
                return math.log(1 / q.ynorm ** 2)
            return -(math.log(q.ynorm ** 2) + 2 * EULER_GAMMA + math.log(8)) / den
        if q.d == 3:
            Cx, C0, _, _ = _constants_3d(q, q.x)
            return Cx / (C0 + 2 * q.r)
        raise ParameterError(f"no limit law for d={q.d}")

    q.need("rho", "nu", "N")
    rho, nu, N = q.rho, q.nu, q.N
    d0 = 1.0 if q.at_origin else 0.0
    if q.geometry == "finite":
        q.need("L")
        cx, c0 = _finite_coeffs(q)
        Ld = q.L ** q.d
        num = 1 + (cx.C - 1.5 * d0 * nu - (1 - nu) / Ld) * Ld * rho
        den = 1 + (c0.C + (2 * N - 1.5) * nu - (1 - nu) / Ld) * Ld * rho
        return num / den
    if q.d == 1:
        sr = math.sqrt(2 * rho)
        return (math.exp(-sr * q.xnorm1) - 1.5 * d0 * nu * sr) / (1 + (2 * N - 1.5) * nu * sr)
    if q.d == 2:
        ell = math.log(1 / rho)
        Cx, Cbx, Cb0 = _constants_2d(q, q.x)
        num = ell - (Cx + 1.5 * math.pi * d0 * nu) + (-(1 - nu) + Cbx) * rho * ell
        den = ell + math.pi * (2 * N - 1.5) * nu + (-(1 - nu) + Cb0) * rho * ell
        return num / den
    if q.d == 3:
        Cx, C0, _, _ = _constants_3d(q, q.x)
        return (Cx - 1.5 * d0 * nu) / (C0 + (2 * N - 1.5) * nu)
    raise ParameterError(f"no expansion for d={q.d}")


def predict_phi_slow_seedbank(query: RegimeQuery) -> tuple:
    """First-order seed-bank correction ``(Phi2, Phi4)`` in a given regime.

    For ``kind="limit"`` the returned numbers are the limits of the scaled
    quantities below (``ell = log(1/rho)``):

    ============  =========================  ==============================
    geometry      Phi2 scaled by             Phi4 scaled by
    ============  =========================  ==============================
    infinite d=1  ``nu rho``                 ``2 nu rho``
    infinite d=2  ``nu rho ell``             ``nu rho ell``
    infinite d=3  ``nu sqrt(rho)``           ``2 nu sqrt(rho)``
    finite d=1    ``2 nu rho``               ``nu rho``
    ============  =========================  ==============================

    With ``variant="as-printed"`` the printed laws are returned instead, each
    with its printed scaling. Those are ``4 nu sqrt(rho)`` for d=3 Phi4,
    ``rho ell`` for the d=2 ``k0`` Phi4 and ``nu sqrt(rho)`` for the finite
    torus Phi4.

    For ``kind="expansion"`` the unscaled ``Phi2`` and ``Phi4`` are returned.
    """
    q = query
    printed = q.variant == "as-printed"
    if q.kind == "limit":
        q.need("r")
        r = q.r
        if q.geometry == "finite":
            return _phi_limit_finite(q, printed)
        y = q.ynorm
        if q.d == 1:
            den = 1 + 2 * r
            lead = math.exp(y) if printed else math.exp(-y)
            phi2 = (lead - math.exp(-SQRT2 * y) / SQRT2) / den
            phi4 = math.exp(-y) * (den * y + 2 * r) / den ** 2
            return phi2, (phi4 if printed else -phi4)
        if q.d == 2:
            den = 1 + 2 * math.pi * r
            if q.profile == "k0":
                phi2 = 2 * (bessel_k0(2 * y) - bessel_k0(2 * SQRT2 * y)) / den
                k0p = -bessel_k1(2 * y)
                phi4 = -2 * y * k0p / den ** 2 if printed else 2 * y * k0p / den
                return phi2, phi4
            q.need("chi")
            phi2 = math.log(2) / den
            if printed:
                return phi2, -(2 * q.chi + 2 * math.pi * r) / (1 - 2 * q.chi + 2 * math.pi * r) ** 2
            return phi2, -(2 * q.chi + 2 * math.pi * r) / den ** 2
        if q.d == 3:
            Cx, C0, Cbx, Cb0 = _constants_3d(q, q.x)
            den = C0 + 2 * r
            phi2 = (SQRT2 - 1) * Cbx / den
            if printed:
                return phi2, (Cx * Cb0 - C0 * Cbx - 2 * r * Cx) / den ** 2
            return phi2, (Cx * Cb0 - C0 * Cbx - 2 * r * Cbx) / den ** 2
        raise ParameterError(f"no limit law for d={q.d}")
    return _phi_expansion(q)


def ring_profile(s: float) -> tuple:
    """``A(s) = coth(sqrt(s/2)) / sqrt(2s)`` and its derivative ``A'(s)``.

    On a ring of side ``L`` with ``1 - z = s / L^2`` the Green function at the
    origin is ``L A(s) (1 + o(1))``; ``A(s) = 1/s + 1/6 + O(s)``.
    """
    if not s > 0:
        raise ParameterError("s must be positive")
    t = math.sqrt(s / 2)
    coth = 1.0 / math.tanh(t)
    csch2 = 1.0 / math.sinh(t) ** 2
    A = coth / (2 * t)
    dA = -(t * csch2 + coth) / (8 * t ** 3)
    return A, dA


def _phi_limit_finite(q: RegimeQuery, printed: bool) -> tuple:
    if q.d != 1:
        raise ParameterError("finite-torus limit laws exist for d=1 only")
    q.need("s")
    r, s = q.r, q.s
    D = 1 + (1.0 / 6 + 2 * r) * s
    if printed:
        return 1 / D, r * math.sqrt(s) / (1.0 / 6 + 2 * r)
    if q.variant == "small-s":
        return 1 / D, -2 * r * s / D ** 2
    A1, dA1 = ring_profile(s)
    A2 = 1.0 / (2 * math.sqrt(s) * math.tanh(math.sqrt(s)))
    return 2 * (A1 - A2) / (2 * r + A1), 2 * r * s * dA1 / (2 * r + A1) ** 2


def _phi_expansion(q: RegimeQuery) -> tuple:
    q.need("rho", "nu", "N")
    rho, nu, N = q.rho, q.nu, q.N
    d0 = 1.0 if q.at_origin else 0.0
    k = 2 * N - 1.5
    if q.geometry == "finite":
        q.need("L")
        cx, c0 = _finite_coeffs(q)
        Ld = q.L ** q.d
        a1 = c0.C - (1 - nu) / Ld + k * nu
        den2 = 1 + a1 * Ld * rho - (c0.C + c0.Cbar) * Ld * rho ** 2
        phi2 = (1 - 2.5 * nu * rho + (2 * cx.C + 2 * cx.Cbar) * Ld * rho ** 2) / den2 / (2 * nu * rho)
        kk = 2 * N - 1.5 * (1 - d0)
        lead = cx.C - c0.C - kk * nu
        nxt = -2 * (cx.Cbar - c0.Cbar) + (cx.C - c0.C - kk) * nu
        phi4 = Ld / nu * (lead + nxt * rho) / (1 + a1 * Ld * rho) ** 2
        return phi2, phi4
    if q.d == 1:
        sr = math.sqrt(2 * rho)
        ax = q.xnorm1
        den = 1 + k * nu * sr
        phi2 = (math.exp(-sr * ax) - math.exp(-2 * math.sqrt(rho) * ax) / SQRT2) / den / (nu * rho)
        kx = k if q.variant == "as-printed" else 2 * N - 1.5 * (1 - d0)
        phi4 = (math.exp(-sr * ax) / (nu * sr)
                * ((ax + kx * nu) + k * nu * ax * sr) / den ** 2)
        return phi2, (phi4 if q.variant == "as-printed" else -phi4)
    if q.d == 2:
        ell = math.log(1 / rho)
        Cx, Cbx, Cb0 = _constants_2d(q, q.x)
        phi2 = ((math.log(2) + (-(1 - 2.5 * nu) + Cbx) * rho * ell)
                / (ell + math.pi * k * nu - ((1 - nu) - Cb0) * rho * ell) / (nu * rho))
        kx = k if q.variant == "as-printed" else 2 * N - 1.5 * (1 - d0)
        num = (-Cx - math.pi * kx * nu) / rho - (Cb0 - Cbx) * ell ** 2
        cden = Cx if q.variant == "as-printed" else 0.0
        phi4 = num / (ell - cden + math.pi * k * nu) ** 2 / nu
        return phi2, phi4
    if q.d == 3:
        Cx, C0, Cbx, Cb0 = _constants_3d(q, q.x)
        sq = math.sqrt(rho)
        phi2 = (((SQRT2 - 1) * Cbx + ((1 - 2.5 * nu) * Cx - nu * nu * d0 / 8) * sq)
                / (C0 + k * nu - Cb0 * sq) / (nu * sq))
        den = k * nu if q.variant == "as-printed" else C0 + k * nu
        kx = k if q.variant == "as-printed" else 2 * N - 1.5 * (1 - d0)
        phi4 = (Cx * Cb0 - C0 * Cbx - kx * nu * Cbx) / den ** 2 / (2 * nu * sq)
        return phi2, phi4
    raise ParameterError(f"no expansion for d={q.d}")


def predict_finite_torus_panmictic(query: RegimeQuery) -> float:
    """Finite-ring limit with ``N nu / L -> r`` and ``L^2 rho -> s``.

    With ``A(s)`` from :func:`ring_profile` the centred value of ``Psi4``
    tends to ``A / (2r + A) = 1 / (1 + 2r sqrt(2s) tanh(sqrt(s/2)))``. If
    ``query.chi`` is set, the returned value is the limit of
    ``L^{1-chi} [Psi4(y L^chi) - centred]``, namely ``-y centred / A``.

    ``variant="small-s"`` gives the first-order-in-``s`` forms
    ``(1 + s/6) / D`` and ``-s y / D`` with ``D = 1 + (1/6 + 2r) s``;
    ``variant="as-printed"`` flips the sign of the slope.
    """
    q = query
    if q.d != 1:
        raise ParameterError("the finite-torus limit law is stated for d=1 only")
    q.need("r", "s")
    if q.variant == "corrected":
        A, _ = ring_profile(q.s)
        centred = A / (2 * q.r + A)
        if q.chi is None:
            return centred
        return -q.ynorm * centred / A
    D = 1 + (1.0 / 6 + 2 * q.r) * q.s
    if q.chi is None:
        return (1 + q.s / 6) / D
    slope = q.s * q.ynorm / D
    return slope if q.variant == "as-printed" else -slope


def infinite_line() -> TorusSpec:
    return TorusSpec(1, INFINITE)


def line_regime_parameters(r: float, rho: float, grain: float = 0.1) -> dict:
    """Concrete ``(N, nu, mu, L)`` on the line path ``N nu sqrt(2 rho) = r``.

    ``N`` is the smallest integer keeping ``nu sqrt(2 rho)`` below ``grain``
    (so that the lattice resolves the profile); ``nu`` then absorbs the
    rounding. ``L`` is the even integer nearest above ``10 / sqrt(rho)``,
    wide enough that the ring behaves like the line.
    """
    sr = math.sqrt(2 * rho)
    N = max(1, round(r / (grain * sr)))
    nu = r / (N * sr)
    if not 0 < nu <= 1:
        raise ParameterError("no admissible nu for this (r, rho)")
    L = int(math.ceil(10 / math.sqrt(rho)))
    L += L % 2
    return {"N": N, "nu": nu, "mu": rho * nu, "L": L, "rho": rho}


def line_regime_ladder(r: float = 0.5, rhos=(1e-2, 1e-3, 1e-4), ys=(0.0, 0.5, 1.0),
                       variant: str = "corrected") -> list:
    """Exact scaled profiles against the d=1 line limit laws along a ``rho`` ladder.

    For each ``rho`` the exact field is computed on a ring of side
    ``L >= 10 / sqrt(rho)`` and compared at the lattice site nearest to
    ``y / sqrt(2 rho)``; the limit is evaluated at that site's exact scaled
    position so the comparison carries no rounding error in ``y``.

    Returns one dict per ``(rho, y)`` with the exact and limiting values of
    ``Psi4``, ``nu rho Phi2`` and ``2 nu rho Phi4`` and their absolute errors.
    """
    rows = []
    for rho in rhos:
        cfg = line_regime_parameters(r, rho)
        params = ModelParams(cfg["N"], cfg["N"], 0, 0, cfg["mu"], cfg["nu"])
        torus = TorusSpec(1, cfg["L"])
        abg = abg_field_spectral(params, torus)
        psi = psi_small_delta_field(0, params, torus, abg=abg)[..., 3]
        phi = phi_field(params, torus, abg=abg)
        sr = math.sqrt(2 * rho)
        for y in ys:
            x = int(round(y / sr))
            q = RegimeQuery(d=1, y=x * sr, r=r, variant=variant)
            lim4 = predict_psi4_no_seedbank(q)
            lim2, lim44 = predict_phi_slow_seedbank(q)
            ex = (float(psi[x]), float(cfg["nu"] * rho * phi[x, 1]),
                  float(2 * cfg["nu"] * rho * phi[x, 3]))
            rows.append({
                "rho": rho, "y": y, "x": x, "N": cfg["N"], "nu": cfg["nu"], "L": cfg["L"],
                "psi4": ex[0], "psi4_limit": lim4, "psi4_err": abs(ex[0] - lim4),
                "phi2": ex[1], "phi2_limit": lim2, "phi2_err": abs(ex[1] - lim2),
                "phi4": ex[2], "phi4_limit": lim44, "phi4_err": abs(ex[2] - lim44),
            })
    return rows


def expansion_table(params: ModelParams, torus: TorusSpec, xs=None) -> list:
    """Exact ``Psi4``, ``Phi2``, ``Phi4`` against the finite-``rho`` expansions.

    ``params`` must have ``M = N``; the swap fractions are ignored. On a
    finite ``torus`` of dimension 1 the torus expansion is used, otherwise
    the whole-space one for ``torus.d``.
    """
    base = _base_params(params)
    if xs is None:
        xs = [tuple([k] + [0] * (torus.d - 1)) for k in range(min(torus.L // 2, 6) + 1)]
    abg = abg_field_spectral(base, torus)
    psi = psi_small_delta_field(0, base, torus, abg=abg)[..., 3]
    phi = phi_field(base, torus, abg=abg)
    rho = params.mu / params.nu
    geometry = "finite" if torus.d == 1 and torus.L < 10 / math.sqrt(rho) else "infinite"
    rows = []
    for x in xs:
        x = tuple(int(v) for v in np.atleast_1d(x))
        q = RegimeQuery(d=torus.d, geometry=geometry, kind="expansion",
                        x=x if torus.d > 1 else x[0], rho=rho, nu=params.nu,
                        N=params.N, L=torus.L if geometry == "finite" else None)
        e4 = predict_psi4_no_seedbank(q)
        e2, e44 = predict_phi_slow_seedbank(q)
        ex4, ex2, ex44 = float(psi[x]), float(phi[x + (1,)]), float(phi[x + (3,)])
        rows.append({
            "x": list(x), "geometry": geometry,
            "psi4": ex4, "psi4_pred": e4, "psi4_relerr": abs(ex4 / e4 - 1),
            "phi2": ex2, "phi2_pred": e2, "phi2_relerr": abs(ex2 / e2 - 1),
            "phi4": ex44, "phi4_pred": e44, "phi4_relerr": abs(ex44 / e44 - 1),
        })
    return rows
