"""Model parameters, torus geometry and migration kernels.

Everything downstream works with three small immutable value types:

* :class:`ModelParams` holds ``(N, M, epsilon, delta, mu, nu)``. The swap
  fractions are stored as exact rationals so the coupling
  ``epsilon * N == delta * M`` can be checked without rounding.
* :class:`TorusSpec` describes the lattice ``Z^d mod L``. Frequencies are
  integer vectors ``k`` with ``theta = k / L``.
* :class:`MigrationKernel` is the one-step displacement law ``q(0, z)``.
  The default is the uniform nearest-neighbour walk.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

INFINITE = math.inf
DIRECT_DFT_MAX_SITES = 4096


class ParameterError(ValueError):
    """Raised when a parameter set violates a model invariant."""


def as_fraction(value) -> Fraction:
    """Convert an int, float, decimal string or Fraction to a Fraction.

    Floats go through their shortest ``repr`` so that ``0.1`` becomes
    ``1/10`` rather than the binary expansion of the double.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ParameterError(f"non-finite value {value!r}")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError as exc:
            raise ParameterError(f"cannot parse {value!r} as a number") from exc
    raise ParameterError(f"unsupported numeric type {type(value).__name__}")


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the multi-colony seed-bank model.

    Parameters
    ----------
    N, M : int
        Active and dormant population sizes per colony.
    epsilon, delta : Fraction, float or str
        Active-to-dormant and dormant-to-active swap fractions.
        Must satisfy ``epsilon * N == delta * M`` exactly.
    mu : float
        Mutation probability per individual per generation.
    nu : float
        Migration probability.
    allow_zero_mu : bool
        Permit ``mu == 0``. Only sanity checks need this.
    """

    N: int
    M: int
    epsilon: Fraction
    delta: Fraction
    mu: float
    nu: float
    allow_zero_mu: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        eps = as_fraction(self.epsilon)
        dlt = as_fraction(self.delta)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", dlt)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "nu", float(self.nu))
        if int(self.N) != self.N or int(self.M) != self.M:
            raise ParameterError("N and M must be integers")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "M", int(self.M))
        if self.N < 1 or self.M < 1:
            raise ParameterError("N and M must be at least 1")
        if not (0 <= eps < 1):
            raise ParameterError("epsilon must lie in [0, 1)")
        if not (0 <= dlt < 1):
            raise ParameterError("delta must lie in [0, 1)")
        if not (0.0 < self.nu <= 1.0):
            raise ParameterError("nu must lie in (0, 1]")
        if not (0.0 <= self.mu < 1.0):
            raise ParameterError("mu must lie in [0, 1)")
        if self.mu == 0.0 and not self.allow_zero_mu:
            raise ParameterError("mu must be positive (equilibrium undefined without mutation)")
        if eps * self.N != dlt * self.M:
            raise ParameterError(
                f"εN ≠ δM: epsilon*N = {eps * self.N}, delta*M = {dlt * self.M}"
            )

    @property
    def m(self) -> float:
        """Survival factor ``(1 - mu)**2`` for a pair of lineages."""
        return (1.0 - self.mu) ** 2

    @property
    def eps(self) -> float:
        return float(self.epsilon)

    @property
    def dlt(self) -> float:
        return float(self.delta)

    @property
    def c(self) -> Fraction:
        """Number of individuals swapped per generation, ``epsilon * N``."""
        return self.epsilon * self.N

    @property
    def symmetric_swap(self) -> bool:
        return self.epsilon == self.delta

    def replace(self, **changes) -> "ModelParams":
        kw = dict(
            N=self.N, M=self.M, epsilon=self.epsilon, delta=self.delta,
            mu=self.mu, nu=self.nu, allow_zero_mu=self.allow_zero_mu,
        )
        kw.update(changes)
        return ModelParams(**kw)

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "M": self.M,
            "epsilon": float(self.epsilon),
            "delta": float(self.delta),
            "mu": self.mu,
            "nu": self.nu,
        }


@dataclass(frozen=True)
class TorusSpec:
    """The discrete torus ``Z^d mod L``; ``L = INFINITE`` means ``Z^d``."""

    d: int
    L: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError("dimension d must be a positive integer")
        object.__setattr__(self, "d", int(self.d))
        if self.L != INFINITE:
            if int(self.L) != self.L or self.L < 2:
                raise ParameterError("L must be an integer >= 2 (or infinite)")
            object.__setattr__(self, "L", int(self.L))

    @property
    def finite(self) -> bool:
        return self.L != INFINITE

    @property
    def n_sites(self) -> int:
        self.require_finite()
        return self.L ** self.d

    @property
    def shape(self) -> tuple:
        self.require_finite()
        return (self.L,) * self.d

    def require_finite(self):
        if not self.finite:
            raise ParameterError("finite torus required")

    def reduce(self, x) -> tuple:
        """Reduce a site to its representative in ``{0, ..., L-1}^d``."""
        x = tuple(int(v) for v in np.atleast_1d(x))
        if len(x) != self.d:
            raise ParameterError(f"site {x} has wrong dimension for d={self.d}")
        if not self.finite:
            return x
        return tuple(v % self.L for v in x)

    def centered(self, x) -> tuple:
        """Representative of ``x`` in ``[-L/2, L/2)^d``."""
        self.require_finite()
        h = self.L // 2
        return tuple(((v + h) % self.L) - h for v in self.reduce(x))

    def distance(self, x, y) -> float:
        """Euclidean torus distance between two sites."""
        self.require_finite()
        diff = [a - b for a, b in zip(self.reduce(x), self.reduce(y))]
        return math.sqrt(sum(v * v for v in self.centered(diff)))


def enumerate_sites(torus: TorusSpec) -> list:
    """All sites of a finite torus in lexicographic (row-major) order."""
    torus.require_finite()
    return list(itertools.product(range(torus.L), repeat=torus.d))


def enumerate_freqs(torus: TorusSpec) -> list:
    """All dual frequencies ``k/L`` as Fractions, lexicographic in ``k``."""
    torus.require_finite()
    L = torus.L
    return [tuple(Fraction(k, L) for k in ks)
            for ks in itertools.product(range(L), repeat=torus.d)]


def centered_grid(torus: TorusSpec) -> np.ndarray:
    """Integer coordinates in ``[-L/2, L/2)`` for every site.

    Returns an array of shape ``(d,) + (L,)*d``.
    """
    torus.require_finite()
    L = torus.L
    axis = (np.arange(L) + L // 2) % L - L // 2
    return np.stack(np.meshgrid(*([axis] * torus.d), indexing="ij"))


@dataclass(frozen=True)
class MigrationKernel:
    """Symmetric one-step displacement law ``q(0, z)``.

    ``table`` maps integer offset tuples to probabilities. ``None`` means
    the uniform nearest-neighbour kernel, which puts ``1/(2d)`` on each
    of the ``2d`` unit offsets.
    """

    table: tuple | None = None

    def __post_init__(self):
        if self.table is None:
            return
        items = self.table.items() if isinstance(self.table, Mapping) else self.table
        clean = {}
        for z, w in items:
            z = tuple(int(v) for v in np.atleast_1d(z))
            w = float(w)
            if w < 0:
                raise ParameterError("kernel weights must be non-negative")
            if w > 0:
                clean[z] = clean.get(z, 0.0) + w
        if not clean:
            raise ParameterError("empty kernel")
        dims = {len(z) for z in clean}
        if len(dims) != 1:
            raise ParameterError("kernel offsets have inconsistent dimension")
        if abs(math.fsum(clean.values()) - 1.0) > 1e-12:
            raise ParameterError("kernel weights must sum to 1")
        for z, w in clean.items():
            mz = tuple(-v for v in z)
            if abs(clean.get(mz, 0.0) - w) > 1e-15:
                raise ParameterError("kernel must be symmetric: q(0,z) = q(0,-z)")
        object.__setattr__(self, "table", tuple(sorted(clean.items())))

    @property
    def nearest_neighbour(self) -> bool:
        return self.table is None

    def offsets(self, d: int):
        """Return ``(offsets, weights)`` arrays for dimension ``d``."""
        if self.table is None:
            offs = []
            for j in range(d):
                for s in (1, -1):
                    z = [0] * d
                    z[j] = s
                    offs.append(z)
            offs = np.array(offs, dtype=np.int64)
            return offs, np.full(len(offs), 1.0 / (2 * d))
        offs = np.array([z for z, _ in self.table], dtype=np.int64)
        if offs.shape[1] != d:
            raise ParameterError("kernel dimension does not match torus")
        return offs, np.array([w for _, w in self.table])


NEAREST_NEIGHBOUR = MigrationKernel()


def _freq_int(torus: TorusSpec, theta) -> np.ndarray:
    """Accept either integer wave vectors or Fractions/floats k/L."""
    arr = np.atleast_1d(np.asarray(theta, dtype=object))
    if len(arr) != torus.d:
        raise ParameterError("frequency has wrong dimension")
    return arr


def qhat(kernel: MigrationKernel, torus: TorusSpec, theta) -> float:
    """Characteristic function ``sum_z q(0,z) cos(2 pi theta.z)``.

    ``theta`` is a length-``d`` vector of frequencies (Fractions or floats).
    """
    th = np.array([float(t) for t in _freq_int(torus, theta)])
    offs, w = kernel.offsets(torus.d)
    return math.fsum(w * np.cos(2 * np.pi * offs @ th))


def phat(kernel: MigrationKernel, params: ModelParams, torus: TorusSpec, theta) -> float:
    """Migration characteristic function ``1 - nu (1 - qhat)``."""
    return 1.0 - params.nu * (1.0 - qhat(kernel, torus, theta))


def one_minus_qhat_grid(kernel: MigrationKernel, torus: TorusSpec) -> np.ndarray:
    """``1 - qhat`` on the whole frequency grid, shape ``(L,)*d``.

    Uses ``1 - cos(t) = 2 sin(t/2)^2`` with the phase ``k.z mod L`` formed in
    integers, so values are exactly even in ``k`` and keep full relative
    accuracy near ``k = 0``.
    """
    torus.require_finite()
    L, d = torus.L, torus.d
    offs, w = kernel.offsets(d)
    ks = np.indices((L,) * d).reshape(d, -1).T
    out = np.zeros(ks.shape[0])
    for z, wz in zip(offs, w):
        ph = (ks @ z) % L
        ph = np.minimum(ph, L - ph)      # exact evenness in k
        out += wz * 2.0 * np.sin(np.pi * ph / L) ** 2
    return out.reshape((L,) * d)


def qhat_grid(kernel: MigrationKernel, torus: TorusSpec) -> np.ndarray:
    return 1.0 - one_minus_qhat_grid(kernel, torus)


def one_minus_phat_grid(kernel: MigrationKernel, params: ModelParams,
                        torus: TorusSpec) -> np.ndarray:
    return params.nu * one_minus_qhat_grid(kernel, torus)


def phat_grid(kernel: MigrationKernel, params: ModelParams, torus: TorusSpec) -> np.ndarray:
    return 1.0 - one_minus_phat_grid(kernel, params, torus)


def migration_matrix(kernel: MigrationKernel, params: ModelParams, torus: TorusSpec) -> np.ndarray:
    """Dense ``p(x, y)`` over lexicographically ordered sites."""
    torus.require_finite()
    L, d = torus.L, torus.d
    n = L ** d
    sites = np.indices((L,) * d).reshape(d, -1).T
    P = np.zeros((n, n))
    P[np.arange(n), np.arange(n)] += 1.0 - params.nu
    offs, w = kernel.offsets(d)
    strides = L ** np.arange(d - 1, -1, -1)
    for z, wz in zip(offs, w):
        tgt = ((sites + z) % L) @ strides
        np.add.at(P, (np.arange(n), tgt), params.nu * wz)
    return P


def p_row(kernel: MigrationKernel, params: ModelParams, torus: TorusSpec) -> np.ndarray:
    """``p(0, z)`` as an array of shape ``(L,)*d``."""
    torus.require_finite()
    L, d = torus.L, torus.d
    row = np.zeros((L,) * d)
    row[(0,) * d] += 1.0 - params.nu
    offs, w = kernel.offsets(d)
    for z, wz in zip(offs, w):
        row[tuple(np.asarray(z) % L)] += params.nu * wz
    return row


def inverse_dft(hat: np.ndarray, d: int, method: str = "auto"):
    """``L^{-d} sum_theta hat(theta) exp(-2 pi i theta.x)`` over the grid.

    ``hat`` has shape ``(L,)*d + (c,)``. Returns ``(real values, max |imag|)``.
    ``method`` is ``"direct"`` (dense DFT matrices along each axis),
    ``"fft"`` or ``"auto"``.
    """
    L = hat.shape[0]
    n = L ** d
    if method == "auto":
        method = "direct" if n <= DIRECT_DFT_MAX_SITES else "fft"
    if method == "direct":
        k = np.arange(L)
        phase = (np.outer(k, k) % L) * (2 * np.pi / L)
        W = np.cos(phase) - 1j * np.sin(phase)
        out = hat.astype(complex)
        for ax in range(d):
            out = np.moveaxis(np.tensordot(W, out, axes=([1], [ax])), 0, ax)
    elif method == "fft":
        out = np.fft.fftn(hat, axes=tuple(range(d)))
    else:
        raise ValueError(f"unknown DFT method {method!r}")
    out = out / n
    return out.real.copy(), float(np.abs(out.imag).max())
