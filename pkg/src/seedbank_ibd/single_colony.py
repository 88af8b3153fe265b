"""Forward-in-time models for a single colony.

Two chains on type frequencies are provided:

* the classical Wright-Fisher chain on ``{0, 1/N, ..., 1}``;
* the seed-bank chain on pairs ``(x, y)``. Here ``x`` is the type-a
  fraction among the ``N`` active individuals and ``y`` is the fraction
  among the ``M`` dormant ones.

In the seed-bank chain, ``c = epsilon N = delta M`` individuals swap state
every generation. ``N - c`` new actives are drawn from the active parents.
``c`` seeds produced by active parents enter the bank. ``c`` uniformly
chosen seeds leave the bank and become active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import ModelParams, ParameterError


@dataclass(frozen=True)
class FrequencyState:
    """Type-a counts ``i = xN`` (active) and ``j = yM`` (dormant)."""

    i: int
    j: int
    N: int
    M: int

    def __post_init__(self):
        if not (0 <= self.i <= self.N and 0 <= self.j <= self.M):
            raise ParameterError("state counts out of range")

    @property
    def x(self) -> Fraction:
        return Fraction(self.i, self.N)

    @property
    def y(self) -> Fraction:
        return Fraction(self.j, self.M)

    @classmethod
    def from_fractions(cls, x, y, N: int, M: int) -> "FrequencyState":
        i, j = Fraction(x) * N, Fraction(y) * M
        if i.denominator != 1 or j.denominator != 1:
            raise ParameterError("frequencies must lie on the grids {k/N} and {k/M}")
        return cls(int(i), int(j), N, M)


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def binom_pmf(k: int, n: int, p: float) -> float:
    """Binomial pmf via log-gamma, exact at the endpoints ``p in {0, 1}``."""
    if k < 0 or k > n:
        return 0.0
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    return math.exp(_log_binom(n, k) + k * math.log(p) + (n - k) * math.log1p(-p))


def hypergeom_pmf(k: int, total: int, draws: int, good: int) -> float:
    """P(k successes) when drawing ``draws`` from ``total`` items, ``good`` marked."""
    if k < max(0, draws - (total - good)) or k > min(draws, good):
        return 0.0
    return math.exp(_log_binom(good, k) + _log_binom(total - good, draws - k)
                    - _log_binom(total, draws))


def wf_transition_prob(i: int, j: int, N: int) -> float:
    """Wright-Fisher probability of moving from ``i`` to ``j`` type-a copies."""
    if not (0 <= i <= N and 0 <= j <= N):
        raise ParameterError("counts must lie in [0, N]")
    return binom_pmf(j, N, i / N)


def swap_count(params: ModelParams) -> int:
    c = params.c
    if c.denominator != 1:
        raise ParameterError(f"epsilon*N = {c} is not an integer")
    return int(c)


def seedbank_transition_prob(state: FrequencyState, nxt: FrequencyState,
                             params: ModelParams) -> float:
    """One-generation transition probability of the seed-bank chain.

    Let ``Z`` be the number of type-a seeds among the ``c`` that wake up,
    ``U`` the type-a count among the ``N - c`` new actives, and ``V`` the
    type-a count among the ``c`` new seeds. Then ``i' = U + Z`` and
    ``j' = j + V - Z``, so

        P = sum_z P(Z = z) P(U = i' - z) P(V = j' - j + z).
    """
    N, M = params.N, params.M
    if (state.N, state.M) != (N, M) or (nxt.N, nxt.M) != (N, M):
        raise ParameterError("state sizes do not match params")
    c = swap_count(params)
    x = state.i / N
    terms = []
    for z in range(0, c + 1):
        pz = hypergeom_pmf(z, M, c, state.j)
        if pz == 0.0:
            continue
        pu = binom_pmf(nxt.i - z, N - c, x)
        pv = binom_pmf(nxt.j - state.j + z, c, x)
        terms.append(pz * pu * pv)
    return math.fsum(terms)


def transition_row(state: FrequencyState, params: ModelParams) -> np.ndarray:
    """Full row ``P[(i', j')]`` as an ``(N+1, M+1)`` array."""
    row = np.zeros((params.N + 1, params.M + 1))
    for a in range(params.N + 1):
        for b in range(params.M + 1):
            row[a, b] = seedbank_transition_prob(
                state, FrequencyState(a, b, params.N, params.M), params)
    return row


def forward_step(state: FrequencyState, params: ModelParams, rng: np.random.Generator,
                 size: int | None = None):
    """Sample the next state (or ``size`` independent next states).

    Returns a :class:`FrequencyState` when ``size`` is None, otherwise a
    pair of integer arrays ``(i', j')``.
    """
    N, M = params.N, params.M
    c = swap_count(params)
    x = state.i / N
    n = 1 if size is None else size
    if c > 0:
        Z = rng.hypergeometric(state.j, M - state.j, c, size=n)
    else:
        Z = np.zeros(n, dtype=np.int64)
    U = rng.binomial(N - c, x, size=n)
    V = rng.binomial(c, x, size=n)
    i_new = U + Z
    j_new = state.j + V - Z
    if size is None:
        return FrequencyState(int(i_new[0]), int(j_new[0]), N, M)
    return i_new, j_new
