"""Backward-in-time Monte Carlo for a pair of lineages.

Each generation, in this order:

1. the pair survives mutation with probability ``m = (1 - mu)^2``;
2. a dormant lineage wakes up (same colony) with probability ``delta``;
   an active lineage falls dormant (same colony) with probability ``delta``
   and otherwise picks its parent colony from ``p(x, .)``;
3. if both lineages were active and stay active and now share a colony,
   they coalesce with probability ``1/N``.

The dormant-to-active probability equals ``epsilon`` in the recursion and
the active-to-dormant one equals ``delta``; both rules are probability
distributions only when ``epsilon == delta``, which is therefore required.

Randomness is organised in fixed-size chunks. Chunk ``k`` of start
configuration ``c`` at site ``s`` draws from a generator seeded by
``SeedSequence(seed, spawn_key=(c, s, k))``, so the result does not depend on
how chunks are spread over threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numba
import numpy as np

from .core import (NEAREST_NEIGHBOUR, MigrationKernel, ModelParams, ParameterError,
                   TorusSpec, centered_grid, enumerate_sites)

CHUNK_SIZE = 1 << 16
TAIL_BOUND = 1e-12
START_CONFIGS = ((False, False), (False, True), (True, False), (True, True))


class Outcome(Enum):
    COALESCED = "coalesced"
    MUTATED = "mutated"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class LineagePairState:
    """Two lineages: positions on the torus and activity (True = active)."""

    pos_a: tuple
    pos_b: tuple
    active_a: bool
    active_b: bool
    generation: int = 0


@dataclass(frozen=True)
class ReplicaOutcome:
    kind: Outcome
    generation: int


def require_symmetric_swap(params: ModelParams):
    if not params.symmetric_swap:
        raise ParameterError("MC requires symmetric swap (epsilon == delta)")


def generation_cap(params: ModelParams) -> int:
    """Smallest ``T`` with ``m^T < 1e-12``."""
    if params.m <= 0:
        return 1
    return int(math.ceil(math.log(TAIL_BOUND) / math.log(params.m)))


def step_probabilities(params: ModelParams, kernel: MigrationKernel, d: int) -> dict:
    """Exact per-lineage transition probabilities, checked to sum to one."""
    require_symmetric_swap(params)
    dl = params.delta
    nu = Fraction(params.nu)
    _, w = kernel.offsets(d)
    move = [nu * Fraction(float(x)) for x in w]
    dormant = {"stay": 1 - dl, "wake": dl}
    active = {"sleep": dl, "stay_colony": (1 - dl) * (1 - nu),
              "migrate": (1 - dl) * sum(move, Fraction(0))}
    for name, row in (("dormant", dormant), ("active", active)):
        total = sum(row.values(), Fraction(0))
        if abs(float(total) - 1.0) > 1e-15:
            raise ArithmeticError(f"{name} transition probabilities sum to {float(total)!r}")
    return {"dormant": dormant, "active": active}


def _move(pos, L, offsets, cumw, nu, rng):
    if rng.random() >= nu:
        return pos
    j = int(np.searchsorted(cumw, rng.random(), side="right"))
    j = min(j, len(offsets) - 1)
    return tuple(int((p + z) % L) for p, z in zip(pos, offsets[j]))


def step_backward(state: LineagePairState, params: ModelParams, torus: TorusSpec,
                  kernel: MigrationKernel, rng: np.random.Generator):
    """Advance the pair by one generation or return its outcome.

    A reference implementation in plain Python; the estimators use a
    compiled equivalent.
    """
    require_symmetric_swap(params)
    g = state.generation + 1
    if rng.random() >= params.m:
        return ReplicaOutcome(Outcome.MUTATED, g)
    offsets, w = kernel.offsets(torus.d)
    cumw = np.cumsum(w)
    dl, nu, L = params.dlt, params.nu, torus.L
    both_active = state.active_a and state.active_b
    new = []
    stayed = []
    for pos, act in ((state.pos_a, state.active_a), (state.pos_b, state.active_b)):
        u = rng.random()
        if act:
            if u < dl:
                new.append((pos, False))
                stayed.append(False)
            else:
                new.append((_move(pos, L, offsets, cumw, nu, rng), True))
                stayed.append(True)
        else:
            new.append((pos, u < dl))
            stayed.append(False)
    (pa, aa), (pb, ab) = new
    if both_active and all(stayed) and pa == pb and rng.random() < 1.0 / params.N:
        return ReplicaOutcome(Outcome.COALESCED, g)
    return LineagePairState(pa, pb, aa, ab, g)


def run_replica(state: LineagePairState, params: ModelParams, torus: TorusSpec,
                kernel: MigrationKernel, rng: np.random.Generator,
                max_generations: int | None = None) -> ReplicaOutcome:
    T = generation_cap(params) if max_generations is None else max_generations
    while True:
        if state.generation >= T:
            return ReplicaOutcome(Outcome.TRUNCATED, state.generation)
        nxt = step_backward(state, params, torus, kernel, rng)
        if isinstance(nxt, ReplicaOutcome):
            return nxt
        state = nxt


# ---------------------------------------------------------------------------
# compiled kernel
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _lineage_step(r, active, dl, stay_cut, cumw_scaled):
    """One lineage from a single uniform ``r``.

    Returns ``(active, stayed_active, offset_index)`` with offset index -1
    for no displacement. Sub-intervals of ``[0, 1)`` encode the events; the
    migration target reuses the position of ``r`` inside its interval.
    """
    if not active:
        return r < dl, False, -1
    if r < dl:
        return False, False, -1
    if r < stay_cut:
        return True, True, -1
    k = cumw_scaled.shape[0]
    i = 0
    while i < k - 1 and r >= cumw_scaled[i]:
        i += 1
    return True, True, i


@numba.njit(cache=True, nogil=True)
def _simulate_chunk(seed, n, L, diff0, act_a0, act_b0, m, dl, nu, inv_n,
                    offsets, cumw, T):
    """Simulate ``n`` replicas tracking the displacement ``pos_b - pos_a``.

    Returns ``(n_coalesced, n_truncated, sum_tau, sum_tau_sq)`` where
    ``tau`` is the coalescence generation of coalesced replicas.
    """
    np.random.seed(seed)
    d = diff0.shape[0]
    stay_cut = dl + (1.0 - dl) * (1.0 - nu)
    cumw_scaled = stay_cut + (1.0 - stay_cut) * cumw
    cumw_scaled[-1] = 2.0
    log_m = np.log(m) if m > 0.0 else -np.inf
    diff = np.empty(d, dtype=np.int64)
    n_coal = 0
    n_trunc = 0
    s_tau = 0.0
    s_tau2 = 0.0
    for _ in range(n):
        # number of generations survived before the first mutation
        u = 1.0 - np.random.random()
        if log_m == -np.inf:
            K = 0
        else:
            Kf = np.log(u) / log_m
            K = T + 1 if Kf > T + 1 else int(Kf)
        for j in range(d):
            diff[j] = diff0[j]
        aa = act_a0
        ab = act_b0
        g = 0
        while True:
            if g >= T:
                n_trunc += 1
                break
            g += 1
            if g > K:
                break
            both = aa and ab
            aa, stay_a, ia = _lineage_step(np.random.random(), aa, dl, stay_cut, cumw_scaled)
            ab, stay_b, ib = _lineage_step(np.random.random(), ab, dl, stay_cut, cumw_scaled)
            if ia >= 0:
                for j in range(d):
                    diff[j] = (diff[j] - offsets[ia, j]) % L
            if ib >= 0:
                for j in range(d):
                    diff[j] = (diff[j] + offsets[ib, j]) % L
            if both and stay_a and stay_b:
                same = True
                for j in range(d):
                    if diff[j] != 0:
                        same = False
                        break
                if same and np.random.random() < inv_n:
                    n_coal += 1
                    s_tau += g
                    s_tau2 += g * g
                    break
    return n_coal, n_trunc, s_tau, s_tau2


def _chunk_seed(seed: int, key: tuple) -> int:
    state = np.random.SeedSequence(seed, spawn_key=key).generate_state(1, dtype=np.uint32)
    return int(state[0])


def _default_threads() -> int:
    env = os.environ.get("SEEDBANK_IBD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class _Job:
    key: tuple
    n: int
    diff0: np.ndarray
    act: tuple


def _run_jobs(jobs, params, torus, kernel, seed, threads, max_generations):
    offsets, w = kernel.offsets(torus.d)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    cumw = np.cumsum(w)
    cumw[-1] = 1.0
    T = generation_cap(params) if max_generations is None else int(max_generations)

    def work(job):
        return _simulate_chunk(_chunk_seed(seed, job.key), job.n, torus.L, job.diff0,
                               job.act[0], job.act[1], params.m, params.dlt, params.nu,
                               1.0 / params.N, offsets, cumw, T)

    threads = _default_threads() if threads is None else max(1, int(threads))
    if threads == 1:
        return [work(j) for j in jobs], T
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(work, jobs)), T


def _chunks(n_reps: int):
    k = 0
    while n_reps > 0:
        n = min(CHUNK_SIZE, n_reps)
        yield k, n
        n_reps -= n
        k += 1


def _site_jobs(site_index: int, x, n_reps: int, configs):
    jobs = []
    for c, act in enumerate(START_CONFIGS):
        if c not in configs:
            continue
        for k, n in _chunks(n_reps):
            jobs.append(_Job((c, site_index, k), n, np.array(x, dtype=np.int64), act))
    return jobs


@dataclass
class McEstimate:
    """Estimates and binomial standard errors for the four start configurations."""

    estimate: np.ndarray
    stderr: np.ndarray
    n_reps: int
    truncated: np.ndarray
    generation_cap: int
    tail_bound: float
    tau_sum: np.ndarray = field(repr=False, default=None)
    tau_sq_sum: np.ndarray = field(repr=False, default=None)
    counts: np.ndarray = field(repr=False, default=None)


def estimate_ibd_field(params: ModelParams, torus: TorusSpec,
                       kernel: MigrationKernel = NEAREST_NEIGHBOUR, n_reps: int = 10**5,
                       seed: int = 0, threads: int | None = None,
                       max_generations: int | None = None):
    """MC estimates of ``Psi_{0,x}`` for every site.

    Returns ``(estimates, stderrs)`` of shape ``(L,)*d + (4,)`` plus a dict of
    diagnostics.
    """
    require_symmetric_swap(params)
    torus.require_finite()
    sites = enumerate_sites(torus)
    jobs = []
    for i, x in enumerate(sites):
        jobs.extend(_site_jobs(i, x, n_reps, range(4)))
    results, T = _run_jobs(jobs, params, torus, kernel, seed, threads, max_generations)
    shape = (torus.L,) * torus.d + (4,)
    counts = np.zeros(shape, dtype=np.int64)
    trunc = 0
    for job, res in zip(jobs, results):
        c, i, _ = job.key
        counts[tuple(sites[i]) + (c,)] += res[0]
        trunc += res[1]
    est = counts / n_reps
    se = np.sqrt(est * (1 - est) / n_reps)
    return est, se, {"generation_cap": T, "tail_bound": float(params.m ** T),
                     "truncated": int(trunc), "n_reps": n_reps, "seed": seed}


def estimate_ibd(x, params: ModelParams, torus: TorusSpec,
                 kernel: MigrationKernel = NEAREST_NEIGHBOUR, n_reps: int = 10**5,
                 seed: int = 0, threads: int | None = None,
                 max_generations: int | None = None) -> McEstimate:
    """MC estimate of the IBD 4-vector at site ``x``.

    Each start configuration uses ``n_reps`` replicas. Truncated replicas
    count as non-IBD; the untruncated mass bound ``m^T`` is reported.
    """
    require_symmetric_swap(params)
    torus.require_finite()
    if n_reps < 1:
        raise ParameterError("n_reps must be positive")
    xs = torus.reduce(x)
    site_index = enumerate_sites(torus).index(tuple(xs))
    counts = np.zeros(4, dtype=np.int64)
    trunc = np.zeros(4, dtype=np.int64)
    tau = np.zeros(4)
    tau2 = np.zeros(4)
    jobs = _site_jobs(site_index, xs, n_reps, range(4))
    results, T = _run_jobs(jobs, params, torus, kernel, seed, threads, max_generations)
    for job, r in zip(jobs, results):
        c = job.key[0]
        counts[c] += r[0]
        trunc[c] += r[1]
        tau[c] += r[2]
        tau2[c] += r[3]
    est = counts / n_reps
    se = np.sqrt(est * (1 - est) / n_reps)
    return McEstimate(est, se, n_reps, trunc, T, float(params.m ** T), tau, tau2, counts)


@dataclass
class TimeMomentReport:
    conditional_tau: float
    conditional_tau_se: float
    weighted_tau: float
    weighted_tau_se: float
    second_moment: np.ndarray
    second_moment_se: np.ndarray
    n_reps: int
    generation_cap: int
    tail_bound: float

    def as_dict(self) -> dict:
        return {
            "conditional_tau": self.conditional_tau,
            "conditional_tau_se": self.conditional_tau_se,
            "weighted_tau": self.weighted_tau,
            "weighted_tau_se": self.weighted_tau_se,
            "second_moment": [float(v) for v in self.second_moment],
            "second_moment_se": [float(v) for v in self.second_moment_se],
            "n_reps": self.n_reps,
            "generation_cap": self.generation_cap,
            "tail_bound": self.tail_bound,
        }


def estimate_time_and_moment(params: ModelParams, torus: TorusSpec,
                             kernel: MigrationKernel = NEAREST_NEIGHBOUR,
                             n_reps: int = 10**5, seed: int = 0,
                             threads: int | None = None) -> TimeMomentReport:
    """Coalescence-time summaries and the spatial second moment.

    * ``conditional_tau``: mean coalescence generation of two active
      lineages in one colony, given that they coalesce before a mutation;
    * ``weighted_tau``: ``E[tau 1{coalesce before mutation}]``;
    * ``second_moment``: ``sum_x |x|^2 Psi_hat_{0,x}`` from ``n_reps``
      replicas per site (stratified over sites).
    """
    require_symmetric_swap(params)
    origin = estimate_ibd((0,) * torus.d, params, torus, kernel, n_reps, seed, threads)
    c = origin.counts[3]
    if c > 0:
        mean = origin.tau_sum[3] / c
        var = max(origin.tau_sq_sum[3] / c - mean * mean, 0.0)
        cond_se = math.sqrt(var / c)
    else:
        mean, cond_se = float("nan"), float("nan")
    w_mean = origin.tau_sum[3] / n_reps
    w_var = max(origin.tau_sq_sum[3] / n_reps - w_mean * w_mean, 0.0)
    est, se, diag = estimate_ibd_field(params, torus, kernel, n_reps, seed + 1, threads)
    r2 = np.sum(centered_grid(torus).astype(float) ** 2, axis=0)
    mom = (r2[..., None] * est).reshape(-1, 4).sum(axis=0)
    mom_se = np.sqrt((r2[..., None] ** 2 * se ** 2).reshape(-1, 4).sum(axis=0))
    return TimeMomentReport(float(mean), float(cond_se), float(w_mean),
                            float(math.sqrt(w_var / n_reps)), mom, mom_se, n_reps,
                            origin.generation_cap, origin.tail_bound)
