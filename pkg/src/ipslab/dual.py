"""Dual-set process and the branching processes that dominate it.

The dual set is evolved forward in dual time with fresh randomness: every
site of ``D`` is removed at rate ``lambda_bar_0``, and for each target and
level ``j >= 1`` a mark at rate ``lambda_bar_j`` adds the sites that level's
indicator depends on.  Cut-and-paste marks relocate ``D`` through the
inverse permutation and never change its size.

The dominating branching process only tracks the population size: each
branch dies at rate ``lambda_bar_0`` and splits into ``s`` at rate
``lambda_bar`` (or, in the decomposed form, into ``s_i`` at rate
``lambda_bar_i``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from ._kernels import draw_displacement, rotate_arc
from .rates import CutPasteKernel, GenericRateModel, RnYprParams, as_generic
from .sim import map_replicas, replica_rng

__all__ = [
    "BranchingSpec",
    "DecomposedBranchingSpec",
    "DualSetSpec",
    "BranchingResult",
    "DualResult",
    "mean_offspring",
    "extinction_fixed_point",
    "simulate_branching",
    "simulate_dual_set",
]

CHUNK = 1000
EXTINCT, CAPPED, ALIVE = 0, 1, 2


@dataclass(frozen=True)
class BranchingSpec:
    s: int
    lambda_bar: float
    lambda_bar_0: float
    initial: int = 1
    runs: int = 10_000
    horizon: float = 100.0
    cap: int = 1_000_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.s < 1:
            raise ValueError("s must be at least 1")
        if self.lambda_bar < 0 or self.lambda_bar_0 < 0:
            raise ValueError("rates must be non-negative")
        if self.lambda_bar + self.lambda_bar_0 <= 0:
            raise ValueError("split and death rates are both zero")
        _check_common(self.initial, self.runs, self.horizon, self.cap)

    @property
    def parts(self) -> tuple[tuple[int, float], ...]:
        return ((self.s, self.lambda_bar),)

    @property
    def death_rate(self) -> float:
        return self.lambda_bar_0


@dataclass(frozen=True)
class DecomposedBranchingSpec:
    parts: tuple[tuple[int, float], ...]
    lambda_bar_0d: float
    initial: int = 1
    runs: int = 10_000
    horizon: float = 100.0
    cap: int = 1_000_000
    seed: int = 0

    def __post_init__(self) -> None:
        parts = tuple((int(s), float(lam)) for s, lam in self.parts)
        if not parts:
            raise ValueError("need at least one part")
        if any(s < 1 or lam < 0 for s, lam in parts) or self.lambda_bar_0d < 0:
            raise ValueError("require s_i >= 1 and non-negative rates")
        object.__setattr__(self, "parts", parts)
        if self.theta <= 0:
            raise ValueError("total branch rate must be positive")
        _check_common(self.initial, self.runs, self.horizon, self.cap)

    @property
    def theta(self) -> float:
        return self.lambda_bar_0d + sum(lam for _, lam in self.parts)

    @property
    def death_rate(self) -> float:
        return self.lambda_bar_0d


def _check_common(initial: int, runs: int, horizon: float, cap: int) -> None:
    if initial < 1 or runs < 1 or cap < initial:
        raise ValueError("need initial >= 1, runs >= 1 and cap >= initial")
    if not horizon > 0:
        raise ValueError("horizon must be positive")


AnyBranching = BranchingSpec | DecomposedBranchingSpec


def mean_offspring(spec: AnyBranching) -> float:
    """Mean number of branches replacing one branch at its first event."""
    total = spec.death_rate + sum(lam for _, lam in spec.parts)
    if total <= 0:
        raise ValueError("split and death rates are both zero")
    return sum(s * lam for s, lam in spec.parts) / total


def extinction_fixed_point(spec: AnyBranching, tol: float = 1e-12, max_iter: int = 10_000_000) -> float:
    """Smallest root in [0, 1] of the offspring generating function equation."""
    if mean_offspring(spec) <= 1.0:
        return 1.0
    total = spec.death_rate + sum(lam for _, lam in spec.parts)
    q = 0.0
    for _ in range(max_iter):
        nxt = (spec.death_rate + sum(lam * q**s for s, lam in spec.parts)) / total
        if abs(nxt - q) < tol:
            return nxt
        q = nxt
    return q


@njit(cache=True, nogil=True)
def _branching_chunk(
    initial, death, rates, sizes, t_end, cap, rng, count, query_times, outcome, ext_time, pop,
):
    per = death
    for i in range(rates.shape[0]):
        per += rates[i]
    cum = np.empty(rates.shape[0])
    acc = death
    for i in range(rates.shape[0]):
        acc += rates[i]
        cum[i] = acc
    nq = query_times.shape[0]
    for r in range(count):
        z = initial
        t = 0.0
        qi = 0
        res = ALIVE
        while True:
            t_next = t + rng.exponential(1.0 / (per * z))
            while qi < nq and query_times[qi] < t_next:
                pop[r, qi] = z
                qi += 1
            if t_next > t_end:
                break
            t = t_next
            u = rng.random() * per
            if u < death:
                z -= 1
            else:
                k = rates.shape[0] - 1
                for i in range(rates.shape[0]):
                    if u < cum[i]:
                        k = i
                        break
                z += sizes[k] - 1
            if z == 0:
                res = EXTINCT
                while qi < nq:
                    pop[r, qi] = 0
                    qi += 1
                break
            if z >= cap:
                res = CAPPED
                break
        outcome[r] = res
        ext_time[r] = t if res == EXTINCT else np.nan


@dataclass(frozen=True)
class BranchingResult:
    runs: int
    extinct_fraction: float
    capped_fraction: float
    alive_fraction: float
    mean_time_to_extinction: float
    query_times: np.ndarray = field(repr=False, compare=False)
    # mean population at query times over runs not capped before that time
    mean_population: np.ndarray = field(repr=False, compare=False)
    population_se: np.ndarray = field(repr=False, compare=False)
    # NaN for runs that did not go extinct
    extinction_times: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False, compare=False)

    def survival_curve(self, times: Sequence[float]) -> list[tuple[float, float, float]]:
        """``(t, fraction not extinct by t, binomial SE)``; capped runs count as alive."""
        out = []
        ext = np.nan_to_num(self.extinction_times, nan=np.inf)
        for t in times:
            alive = float(np.mean(ext > t))
            out.append((float(t), alive, float(np.sqrt(alive * (1 - alive) / self.runs))))
        return out

    @property
    def extinct_se(self) -> float:
        p = self.extinct_fraction
        return float(np.sqrt(p * (1 - p) / self.runs))

    def summary(self) -> dict:
        return {
            "runs": self.runs,
            "extinct_fraction": self.extinct_fraction,
            "extinct_se": self.extinct_se,
            "capped_fraction": self.capped_fraction,
            "alive_fraction": self.alive_fraction,
            "mean_time_to_extinction": self.mean_time_to_extinction,
        }


def simulate_branching(spec: AnyBranching, query_times: Sequence[float] = ()) -> BranchingResult:
    """Monte Carlo over ``spec.runs`` independent populations.

    Runs reaching the cap are counted apart from extinct ones and from those
    still alive at the horizon.  Runs are processed in fixed chunks, one
    random stream per chunk, so results do not depend on the worker count.
    """
    rates = np.array([lam for _, lam in spec.parts], dtype=np.float64)
    sizes = np.array([s for s, _ in spec.parts], dtype=np.int64)
    qt = np.asarray(sorted(query_times), dtype=np.float64)
    chunks = [(c, min(CHUNK, spec.runs - c * CHUNK)) for c in range((spec.runs + CHUNK - 1) // CHUNK)]

    def work(idx: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c, count = chunks[idx]
        outcome = np.empty(count, dtype=np.int64)
        ext_time = np.empty(count)
        pop = np.full((count, qt.shape[0]), -1, dtype=np.int64)
        _branching_chunk(
            spec.initial, spec.death_rate, rates, sizes, float(spec.horizon), spec.cap,
            replica_rng(spec.seed, c), count, qt, outcome, ext_time, pop,
        )
        return outcome, ext_time, pop

    parts = map_replicas(work, len(chunks))
    outcome = np.concatenate([p[0] for p in parts])
    ext_time = np.concatenate([p[1] for p in parts])
    pop = np.concatenate([p[2] for p in parts])
    ext = outcome == EXTINCT
    mean_pop = np.empty(qt.shape[0])
    pop_se = np.empty(qt.shape[0])
    for i in range(qt.shape[0]):
        col = pop[:, i]
        col = col[col >= 0].astype(np.float64)
        mean_pop[i] = col.mean() if col.size else np.nan
        pop_se[i] = col.std(ddof=1) / np.sqrt(col.size) if col.size > 1 else np.nan
    return BranchingResult(
        runs=spec.runs,
        extinct_fraction=float(ext.mean()),
        capped_fraction=float(np.mean(outcome == CAPPED)),
        alive_fraction=float(np.mean(outcome == ALIVE)),
        mean_time_to_extinction=float(ext_time[ext].mean()) if ext.any() else float("nan"),
        query_times=qt,
        mean_population=mean_pop,
        population_se=pop_se,
        extinction_times=ext_time,
    )


# -- dual set ------------------------------------------------------------------


@dataclass(frozen=True)
class DualSetSpec:
    model: RnYprParams | GenericRateModel
    kernel: CutPasteKernel
    n: int
    initial_set: tuple[int, ...]
    horizon: float
    runs: int = 1000
    seed: int = 0
    query_times: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        sites = tuple(sorted({int(x) for x in self.initial_set}))
        if not sites:
            raise ValueError("initial set must be nonempty")
        if sites[0] < 0 or sites[-1] >= self.n:
            raise ValueError("initial set must lie within the ring")
        if self.n < 3 or not self.horizon > 0 or self.runs < 1:
            raise ValueError("need n >= 3, positive horizon and runs >= 1")
        if self.kernel.rho > 0:
            self.kernel.validate(self.n)
        qt = tuple(sorted(float(t) for t in self.query_times)) or tuple(
            float(x) for x in np.linspace(self.horizon / 10, self.horizon, 10)
        )
        if qt[0] < 0 or qt[-1] > self.horizon:
            raise ValueError("query times must lie in [0, horizon]")
        object.__setattr__(self, "initial_set", sites)
        object.__setattr__(self, "query_times", qt)

    @property
    def generic(self) -> GenericRateModel:
        return as_generic(self.model) if isinstance(self.model, RnYprParams) else self.model


@njit(cache=True, nogil=True)
def _add(site, member, lst, pos, size):
    if member[site] == 0:
        member[site] = 1
        lst[size] = site
        pos[site] = size
        size += 1
    return size


@njit(cache=True, nogil=True)
def _remove(site, member, lst, pos, size):
    if member[site] == 1:
        member[site] = 0
        i = pos[site]
        last = lst[size - 1]
        lst[i] = last
        pos[last] = i
        size -= 1
    return size


@njit(cache=True, nogil=True)
def _dual_chunk(
    n, init, death, brates, boffs, ks, kcum, cp_rate, t_end, rng, count, query_times, sizes_out,
):
    nb = brates.shape[0]
    bsum = 0.0
    bcum = np.empty(nb)
    for i in range(nb):
        bsum += brates[i]
        bcum[i] = bsum
    per = death + bsum
    nq = query_times.shape[0]
    member = np.zeros(n, dtype=np.int8)
    old = np.zeros(n, dtype=np.int8)
    lst = np.zeros(n, dtype=np.int64)
    pos = np.zeros(n, dtype=np.int64)
    for r in range(count):
        member[:] = 0
        size = 0
        for i in range(init.shape[0]):
            size = _add(init[i], member, lst, pos, size)
        t = 0.0
        qi = 0
        while True:
            total = per * size + cp_rate
            t_next = t + rng.exponential(1.0 / total) if total > 0 else np.inf
            while qi < nq and query_times[qi] < t_next:
                sizes_out[r, qi] = size
                qi += 1
            if t_next > t_end or size == 0:
                break
            t = t_next
            u = rng.random() * total
            if u < per * size:
                j = int(rng.random() * size)
                if j >= size:
                    j = size - 1
                x = lst[j]
                u2 = rng.random() * per
                if u2 < death:
                    size = _remove(x, member, lst, pos, size)
                else:
                    u2 -= death
                    k = nb - 1
                    for i in range(nb):
                        if u2 < bcum[i]:
                            k = i
                            break
                    for c in range(boffs.shape[1]):
                        o = boffs[k, c]
                        if o != -9999:
                            size = _add((x + o) % n, member, lst, pos, size)
            else:
                x = int(rng.random() * n)
                if x >= n:
                    x = n - 1
                d = draw_displacement(ks, kcum, rng)
                src = (x + d) % n
                old[:] = member
                # inverse permutation: run the map from x+d back by -d
                rotate_arc(member, n, src, -d)
                step = 1 if -d > 0 else -1
                for i in range(abs(d) + 1):
                    z = (src + step * i) % n
                    if member[z] != old[z]:
                        if member[z] == 1:
                            member[z] = 0
                            size = _add(z, member, lst, pos, size)
                        else:
                            member[z] = 1
                            size = _remove(z, member, lst, pos, size)
        while qi < nq:
            sizes_out[r, qi] = size
            qi += 1


@dataclass(frozen=True)
class DualResult:
    query_times: np.ndarray
    empty_fraction: np.ndarray
    empty_se: np.ndarray
    mean_size: np.ndarray
    size_se: np.ndarray
    runs: int

    @property
    def survival(self) -> np.ndarray:
        return 1.0 - self.empty_fraction

    def rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(t), float(s), float(e))
            for t, s, e in zip(self.query_times, self.survival, self.empty_se)
        ]

    def summary(self) -> dict:
        return {
            "runs": self.runs,
            "query_times": self.query_times.tolist(),
            "empty_fraction": self.empty_fraction.tolist(),
            "empty_se": self.empty_se.tolist(),
            "mean_size": self.mean_size.tolist(),
        }


def simulate_dual_set(spec: DualSetSpec) -> DualResult:
    gen = spec.generic
    marks = gen.birth_marks()
    brates = np.array([r for r, _ in marks], dtype=np.float64)
    width = max((len(o) for _, o in marks), default=1)
    boffs = np.full((max(len(marks), 1), width), -9999, dtype=np.int64)
    for i, (_, offs) in enumerate(marks):
        boffs[i, : len(offs)] = offs
    if not marks:
        brates = np.zeros(1)
    death = gen.lambda_bar_0()
    if spec.kernel.rho > 0 and spec.kernel.weights:
        ks, kcum = spec.kernel.arrays()
        cp_rate = spec.kernel.total_rate(spec.n)
    else:
        ks, kcum, cp_rate = np.ones(1, dtype=np.int64), np.ones(1), 0.0
    init = np.array(spec.initial_set, dtype=np.int64)
    qt = np.array(spec.query_times, dtype=np.float64)
    chunks = [(c, min(CHUNK, spec.runs - c * CHUNK)) for c in range((spec.runs + CHUNK - 1) // CHUNK)]

    def work(idx: int) -> np.ndarray:
        c, count = chunks[idx]
        out = np.zeros((count, qt.shape[0]), dtype=np.int64)
        _dual_chunk(
            spec.n, init, death, brates, boffs, ks, kcum, cp_rate, float(spec.horizon),
            replica_rng(spec.seed, c), count, qt, out,
        )
        return out

    sizes = np.concatenate(map_replicas(work, len(chunks))).astype(np.float64)
    empty = (sizes == 0).mean(axis=0)
    runs = spec.runs
    return DualResult(
        query_times=qt,
        empty_fraction=empty,
        empty_se=np.sqrt(empty * (1 - empty) / runs),
        mean_size=sizes.mean(axis=0),
        size_se=sizes.std(axis=0, ddof=1) / np.sqrt(runs) if runs > 1 else np.full(qt.shape, np.nan),
        runs=runs,
    )
