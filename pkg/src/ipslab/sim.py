"""Event-driven simulation on the ring: single copy, basic coupling, replicas.

The compiled loops live in ``_kernels``; this module validates specs, seeds
generators, lays out sample buffers and turns raw arrays into statistics.
"""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, TypeVar

import numpy as np

from . import _kernels as K
from .checker import NotAttractiveError, check_attractiveness
from .core import LETTERS, Order, RingConfig, config_leq, get_order
from .rates import CutPasteKernel, GenericRateModel, RnYprParams, rate_table
from .stats import DEFAULT_BATCHES, Estimate, batch_means

log = logging.getLogger(__name__)

__all__ = [
    "SimSpec",
    "TrajectoryStats",
    "CoupledStats",
    "EventBudgetExceeded",
    "CacheMismatchError",
    "simulate",
    "simulate_coupled",
    "estimate_stationary",
    "stationary_coupled_pairs",
    "simulate_replicas",
    "coupling_is_monotone",
    "replica_rng",
    "worker_count",
    "PAIR_NAMES",
    "TRAJECTORY_COLUMNS",
]

PAIR_NAMES = tuple(a + b for a, b in itertools.product(LETTERS, LETTERS))
TRAJECTORY_COLUMNS = (
    ("t",) + tuple("freq_" + a for a in LETTERS) + tuple("pair_" + p for p in PAIR_NAMES)
)
PRESETS = ("all-a", "all-t", "all-c", "all-g", "uniform-random")


class EventBudgetExceeded(RuntimeError):
    """The event budget ran out before the time horizon was reached."""


class CacheMismatchError(RuntimeError):
    """Incremental rate caches disagree with a from-scratch recomputation."""


Model = RnYprParams | GenericRateModel


@dataclass(frozen=True)
class SimSpec:
    """Everything needed to reproduce one trajectory.

    ``horizon`` is a process time and ``max_events`` an event budget; at
    least one must be set.  With both, running out of events first is an
    error.  ``debug_every > 0`` compares the rate caches against a full
    recomputation every that many events.
    """

    model: Model
    kernel: CutPasteKernel
    n: int
    init: RingConfig | str = "uniform-random"
    horizon: float | None = None
    max_events: int | None = None
    seed: int = 0
    observers: tuple[str, ...] = ("marginals", "dinucleotides")
    sample_interval: float | None = None
    debug_every: int = 0

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ValueError("ring size must be at least 3")
        if self.horizon is None and self.max_events is None:
            raise ValueError("set a time horizon or an event budget")
        if self.horizon is not None and not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError("horizon must be positive and finite")
        if self.max_events is not None and self.max_events <= 0:
            raise ValueError("event budget must be positive")
        if self.sample_interval is not None and not self.sample_interval > 0:
            raise ValueError("sample interval must be positive")
        if isinstance(self.init, RingConfig):
            if self.init.n != self.n:
                raise ValueError(f"initial configuration has length {self.init.n}, expected {self.n}")
        elif self.init not in PRESETS:
            raise ValueError(f"unknown initial preset {self.init!r}")
        if self.kernel.rho > 0:
            self.kernel.validate(self.n)
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def table(self) -> np.ndarray:
        if isinstance(self.model, RnYprParams):
            return rate_table(self.model)
        return np.ascontiguousarray(self.model.table, dtype=np.float64)


def replica_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """Independent stream for replica ``replica`` of base seed ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, replica]))


def worker_count() -> int:
    try:
        cap = int(os.environ.get("IPSLAB_THREADS", "0"))
    except ValueError:
        cap = 0
    avail = os.cpu_count() or 1
    return max(1, min(cap, avail) if cap > 0 else avail)


T = TypeVar("T")


def map_replicas(fn: Callable[[int], T], replicas: int) -> list[T]:
    """Run ``fn(r)`` for each replica; results come back in index order."""
    workers = min(worker_count(), replicas)
    if workers <= 1:
        return [fn(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(replicas)))


def _initial(init: RingConfig | str, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(init, RingConfig):
        return init.to_array().astype(np.int8)
    if init == "uniform-random":
        return rng.integers(0, 4, size=n).astype(np.int8)
    return np.full(n, LETTERS.index(init[-1]), dtype=np.int8)


def _kernel_arrays(kernel: CutPasteKernel) -> tuple[np.ndarray, np.ndarray, float]:
    if kernel.rho == 0 or not kernel.weights:
        return np.ones(1, dtype=np.int64), np.ones(1), 0.0
    ks, cum = kernel.arrays()
    return ks, cum, kernel.rho * kernel.mass


def _sample_times(start: float, interval: float | None, count: int | None, end: float) -> np.ndarray:
    if interval is None:
        return np.empty(0)
    if count is None:
        if not np.isfinite(end):
            return np.empty(0)
        count = int(np.floor((end - start) / interval + 1e-9)) + 1
    return start + interval * np.arange(count, dtype=np.float64)


def _check_status(status: int, spec: SimSpec) -> None:
    if status == K.BUDGET:
        raise EventBudgetExceeded(
            f"{spec.max_events} events used before reaching time {spec.horizon}"
        )
    if status == K.MISMATCH:
        raise CacheMismatchError("rate cache differs from full recomputation")


@dataclass(frozen=True)
class TrajectoryStats:
    """Site-averaged estimates from one trajectory.

    ``series`` holds one row per sample in the CSV column order (without
    ``t``); ``times`` the matching sample times.
    """

    final: RingConfig
    time: float
    events: dict[str, int]
    marginals: dict[str, Estimate]
    dinucleotides: dict[str, Estimate]
    samples: int
    times: np.ndarray = field(repr=False, compare=False)
    series: np.ndarray = field(repr=False, compare=False)

    def marginal_vector(self) -> np.ndarray:
        return np.array([self.marginals[a].mean for a in LETTERS])

    def pair_matrix(self) -> np.ndarray:
        return np.array([self.dinucleotides[p].mean for p in PAIR_NAMES]).reshape(4, 4)

    def rows(self) -> np.ndarray:
        return np.column_stack([self.times, self.series])

    def summary(self) -> dict:
        return {
            "final": str(self.final),
            "time": self.time,
            "events": dict(self.events),
            "samples": self.samples,
            "marginals": {k: v.to_list() for k, v in self.marginals.items()},
            "dinucleotides": {k: v.to_list() for k, v in self.dinucleotides.items()},
        }


def _trajectory_stats(
    cells: np.ndarray, t: float, counts: np.ndarray, times: np.ndarray, series: np.ndarray,
    batches: int = DEFAULT_BATCHES,
) -> TrajectoryStats:
    if series.shape[0]:
        mean, se = batch_means(series, batches)
    else:
        mean, se = np.full(20, np.nan), np.full(20, np.nan)
    events = {"sub_" + a: int(counts[i]) for i, a in enumerate(LETTERS)}
    events["cut_paste"] = int(counts[4])
    return TrajectoryStats(
        final=RingConfig.from_array(cells),
        time=float(t),
        events=events,
        marginals={a: Estimate(float(mean[i]), float(se[i])) for i, a in enumerate(LETTERS)},
        dinucleotides={
            p: Estimate(float(mean[4 + i]), float(se[4 + i])) for i, p in enumerate(PAIR_NAMES)
        },
        samples=int(series.shape[0]),
        times=times,
        series=series,
    )


def _run_single(
    spec: SimSpec, sample_times: np.ndarray, replica: int = 0
) -> tuple[np.ndarray, float, np.ndarray, np.ndarray, np.ndarray]:
    rng = replica_rng(spec.seed, replica)
    cells = _initial(spec.init, spec.n, rng)
    table = spec.table
    tot = np.ascontiguousarray(table.sum(axis=0))
    ks, kcum, cp_site = _kernel_arrays(spec.kernel)
    cp_rate = cp_site * spec.n
    t_end = float(spec.horizon) if spec.horizon is not None else np.inf
    budget = int(spec.max_events) if spec.max_events is not None else np.iinfo(np.int64).max
    samples = np.zeros((sample_times.shape[0], 20))
    counts = np.zeros(5, dtype=np.int64)
    status, t, _, taken = K.run_single(
        cells, table, tot, ks, kcum, cp_rate, rng, t_end, budget,
        sample_times, samples, counts, int(spec.debug_every),
    )
    _check_status(status, spec)
    return cells, t, counts, sample_times[:taken], samples[:taken]


def simulate(spec: SimSpec, replica: int = 0) -> TrajectoryStats:
    """Run one trajectory; samples every ``spec.sample_interval`` from time 0."""
    end = spec.horizon if spec.horizon is not None else np.inf
    times = _sample_times(0.0, spec.sample_interval, None, end)
    cells, t, counts, times, series = _run_single(spec, times, replica)
    return _trajectory_stats(cells, t, counts, times, series)


def estimate_stationary(
    spec: SimSpec,
    burn_in: float,
    sample_interval: float,
    samples: int,
    replica: int = 0,
    batches: int = DEFAULT_BATCHES,
) -> TrajectoryStats:
    """Time-average estimator: ``samples`` snapshots spaced ``sample_interval`` after ``burn_in``."""
    if burn_in < 0 or sample_interval <= 0 or samples <= 0:
        raise ValueError("need burn_in >= 0, sample_interval > 0 and samples > 0")
    horizon = burn_in + sample_interval * samples
    run = replace(spec, horizon=horizon, sample_interval=sample_interval)
    times = _sample_times(burn_in + sample_interval, sample_interval, samples, horizon)
    cells, t, counts, times, series = _run_single(run, times, replica)
    return _trajectory_stats(cells, t, counts, times, series, batches)


def simulate_replicas(spec: SimSpec, replicas: int) -> list[TrajectoryStats]:
    return map_replicas(lambda r: simulate(spec, r), replicas)


# -- coupled -----------------------------------------------------------------


@dataclass(frozen=True)
class CoupledStats:
    """Outcome of a coupled run.

    ``pair_freqs`` maps the ten order-compatible ``(lower, upper)`` letter
    pairs to their time- and site-averaged frequency; ``all_pair_freqs``
    keeps the full 4x4 matrix so that off-order mass stays visible.
    """

    order: Order
    coalescence_time: float | None
    order_violations: int
    discrepancy_freq: float
    pair_freqs: dict[str, float]
    all_pair_freqs: np.ndarray = field(repr=False, compare=False)
    time: float = 0.0
    averaged_from: float = 0.0
    events: dict[str, int] = field(default_factory=dict)
    final_lower: RingConfig | None = None
    final_upper: RingConfig | None = None
    violated_sites: int = 0
    times: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False, compare=False)
    lower_series: np.ndarray = field(default_factory=lambda: np.empty((0, 20)), repr=False, compare=False)
    upper_series: np.ndarray = field(default_factory=lambda: np.empty((0, 20)), repr=False, compare=False)
    cross_series: np.ndarray = field(default_factory=lambda: np.empty((0, 16)), repr=False, compare=False)
    misc_series: np.ndarray = field(default_factory=lambda: np.empty((0, 2)), repr=False, compare=False)

    @property
    def flagged(self) -> bool:
        return self.order_violations > 0

    def _rank_group(self, pairs: Sequence[tuple[int, int]]) -> float:
        total = 0.0
        for i, j in pairs:
            a, b = int(self.order.letter(i)), int(self.order.letter(j))
            total += float(self.all_pair_freqs[a, b])
        return total

    @property
    def cross_class_freq(self) -> float:
        """Lower in the two bottom ranks, upper in the two top ranks."""
        return self._rank_group([(1, 3), (1, 4), (2, 3), (2, 4)])

    @property
    def within_class_freq(self) -> float:
        """Pairs of ranks (1, 2) and (3, 4)."""
        return self._rank_group([(1, 2), (3, 4)])

    def ordered_pair_names(self) -> list[str]:
        ls = [a.letter for a in self.order.letters]
        return [ls[i] + ls[j] for i in range(4) for j in range(i, 4)]

    def summary(self) -> dict:
        return {
            "order": self.order.id,
            "coalescence_time": self.coalescence_time,
            "order_violations": self.order_violations,
            "violated_sites": self.violated_sites,
            "flagged": self.flagged,
            "discrepancy_freq": self.discrepancy_freq,
            "cross_class_freq": self.cross_class_freq,
            "within_class_freq": self.within_class_freq,
            "pair_freqs": dict(self.pair_freqs),
            "time": self.time,
            "averaged_from": self.averaged_from,
            "events": dict(self.events),
            "final_lower": str(self.final_lower),
            "final_upper": str(self.final_upper),
        }


def coupling_is_monotone(table: np.ndarray, order: Order | str) -> bool:
    """True iff no basic-coupling move from an ordered window pair breaks the order.

    Independent of the closed-form attractiveness conditions; it inspects
    every pair of ordered radius-1 windows directly.
    """
    o = get_order(order)
    rk = o.rank_array()
    windows = list(itertools.product(range(4), repeat=3))
    for wl in windows:
        for wu in windows:
            if any(rk[a] > rk[b] for a, b in zip(wl, wu)):
                continue
            for b in range(4):
                p = table[(b,) + wl]
                q = table[(b,) + wu]
                m = min(p, q)
                # lower alone moves to b above the upper letter
                if p - m > 0 and rk[b] > rk[wu[1]]:
                    return False
                # upper alone moves to b below the lower letter
                if q - m > 0 and rk[b] < rk[wl[1]]:
                    return False
    return True


def _coupled_init(init: RingConfig | str, order: Order, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(init, str) and init in ("all-min", "all-max"):
        letter = order.minimal if init == "all-min" else order.maximal
        return np.full(n, int(letter), dtype=np.int8)
    return _initial(init, n, rng)


def simulate_coupled(
    spec: SimSpec,
    order: Order | str,
    lower_init: RingConfig | str = "all-min",
    upper_init: RingConfig | str = "all-max",
    replica: int = 0,
    average_from: float = 0.0,
) -> CoupledStats:
    """Basic coupling of two copies started from ordered configurations.

    Pair frequencies are time averages over ``[average_from, end]``.
    """
    o = get_order(order)
    rng = replica_rng(spec.seed, replica)
    lo = _coupled_init(lower_init, o, spec.n, rng)
    up = _coupled_init(upper_init, o, spec.n, rng)
    if lo.shape != up.shape or lo.shape[0] != spec.n:
        raise ValueError("initial configurations must both have length n")
    if not config_leq(RingConfig.from_array(lo), RingConfig.from_array(up), o):
        raise ValueError(f"initial configurations are not ordered under {o.id}")
    table = spec.table
    rk = o.rank_array()
    ks, kcum, cp_site = _kernel_arrays(spec.kernel)
    t_end = float(spec.horizon) if spec.horizon is not None else np.inf
    budget = int(spec.max_events) if spec.max_events is not None else np.iinfo(np.int64).max
    times = _sample_times(0.0, spec.sample_interval, None, t_end)
    ns = times.shape[0]
    s_lo, s_up = np.zeros((ns, 20)), np.zeros((ns, 20))
    s_cross, s_misc = np.zeros((ns, 16)), np.zeros((ns, 2))
    counts = np.zeros(9, dtype=np.int64)
    integral = np.zeros((4, 4))
    status, t, _, taken, viol, coal = K.run_coupled(
        lo, up, table, rk, ks, kcum, cp_site * spec.n, rng, t_end, budget,
        float(average_from), times, s_lo, s_up, s_cross, s_misc, counts, integral,
        int(spec.debug_every),
    )
    _check_status(status, spec)
    span = t - average_from
    freqs = integral / (spec.n * span) if span > 0 else np.full((4, 4), np.nan)
    ordered = {
        o.letter(i).letter + o.letter(j).letter: float(freqs[int(o.letter(i)), int(o.letter(j))])
        for i in range(1, 5)
        for j in range(i, 5)
    }
    off = ~np.eye(4, dtype=bool)
    events = {"lower_sub_" + a: int(counts[i]) for i, a in enumerate(LETTERS)}
    events.update({"upper_sub_" + a: int(counts[5 + i]) for i, a in enumerate(LETTERS)})
    events["cut_paste"] = int(counts[4])
    return CoupledStats(
        order=o,
        coalescence_time=None if coal < 0 else float(coal),
        order_violations=int(viol),
        discrepancy_freq=float(freqs[off].sum()),
        pair_freqs=ordered,
        all_pair_freqs=freqs,
        time=float(t),
        averaged_from=float(average_from),
        events=events,
        final_lower=RingConfig.from_array(lo),
        final_upper=RingConfig.from_array(up),
        violated_sites=int(np.sum(rk[lo] > rk[up])),
        times=times[:taken],
        lower_series=s_lo[:taken],
        upper_series=s_up[:taken],
        cross_series=s_cross[:taken],
        misc_series=s_misc[:taken],
    )


def stationary_coupled_pairs(
    spec: SimSpec,
    order: Order | str,
    burn_in: float,
    samples: int,
    sample_interval: float | None = None,
    replica: int = 0,
) -> CoupledStats:
    """Coupled run from (all-min, all-max), averaged after ``burn_in``.

    The run lasts ``burn_in + samples * sample_interval``; the interval
    defaults to ``spec.sample_interval``, or 1.
    """
    o = get_order(order)
    if isinstance(spec.model, RnYprParams):
        attractive = check_attractiveness(spec.model, o)
    else:
        attractive = coupling_is_monotone(spec.table, o)
    if not attractive:
        raise NotAttractiveError(f"model is not attractive under {o.id}")
    if burn_in < 0 or samples <= 0:
        raise ValueError("need burn_in >= 0 and samples > 0")
    dt = sample_interval or spec.sample_interval or 1.0
    run = replace(spec, horizon=burn_in + samples * dt, sample_interval=dt)
    return simulate_coupled(run, o, "all-min", "all-max", replica, average_from=burn_in)
