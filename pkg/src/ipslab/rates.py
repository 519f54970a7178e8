"""Substitution-rate models and the constants derived from them.

The RN+YpR family is parameterized by sixteen non-negative rates: a base rate
``v_x`` and an enhanced rate ``w_x`` for every letter, plus eight YpR
interaction rates.  The interaction rate ``r_b_a`` (target ``b``, neighbor
``a``) is added when a ``YpR`` dinucleotide is broken:

* targets ``a`` and ``g`` read the left neighbor (offsets -1, 0),
* targets ``t`` and ``c`` read the right neighbor (offsets 0, 1).

Rate tables are indexed ``[target, left, center, right]`` with letter codes
in the order ``a, t, c, g``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields
from typing import Callable, Mapping

import numpy as np

from .core import LETTERS, Nucleotide, complement

A, T, C, G = Nucleotide.A, Nucleotide.T, Nucleotide.C, Nucleotide.G
Window = tuple[int, int, int]

__all__ = [
    "RnYprParams",
    "DecompositionPart",
    "DerivedConstants",
    "Level",
    "GenericRateModel",
    "CutPasteKernel",
    "substitution_rate",
    "rate_table",
    "derived_constants",
    "specialize_t92",
    "specialize_jc",
    "specialize_rnc",
    "as_generic",
    "mirror",
    "R_KEYS",
]

# (target, neighbor) for the eight interaction slots
R_KEYS: tuple[tuple[str, str], ...] = (
    ("a", "c"), ("a", "t"),
    ("t", "a"), ("t", "g"),
    ("c", "a"), ("c", "g"),
    ("g", "c"), ("g", "t"),
)


@dataclass(frozen=True)
class RnYprParams:
    v_a: float
    v_t: float
    v_c: float
    v_g: float
    w_a: float
    w_t: float
    w_c: float
    w_g: float
    r_a_c: float = 0.0
    r_a_t: float = 0.0
    r_t_a: float = 0.0
    r_t_g: float = 0.0
    r_c_a: float = 0.0
    r_c_g: float = 0.0
    r_g_c: float = 0.0
    r_g_t: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            val = float(getattr(self, f.name))
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"{f.name} must be finite and non-negative, got {val}")
            object.__setattr__(self, f.name, val)
        for x in LETTERS:
            if self.v(x) > self.w(x):
                raise ValueError(f"v_{x} = {self.v(x)} exceeds w_{x} = {self.w(x)}")

    def v(self, x: Nucleotide | str) -> float:
        return getattr(self, "v_" + Nucleotide.parse(x).letter)

    def w(self, x: Nucleotide | str) -> float:
        return getattr(self, "w_" + Nucleotide.parse(x).letter)

    def r(self, target: Nucleotide | str, neighbor: Nucleotide | str) -> float:
        """Interaction rate ``r_target^neighbor``; 0 for slots outside the model."""
        name = f"r_{Nucleotide.parse(target).letter}_{Nucleotide.parse(neighbor).letter}"
        return getattr(self, name, 0.0)

    def has_r(self, target: Nucleotide | str, neighbor: Nucleotide | str) -> bool:
        key = (Nucleotide.parse(target).letter, Nucleotide.parse(neighbor).letter)
        return key in R_KEYS

    def to_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "RnYprParams":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown rate keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def table(self) -> np.ndarray:
        return rate_table(self)


def substitution_rate(
    params: RnYprParams,
    target: Nucleotide | str,
    left: Nucleotide | str,
    center: Nucleotide | str,
    right: Nucleotide | str,
) -> float:
    """Rate at which the center letter of ``(left, center, right)`` becomes ``target``."""
    b = Nucleotide.parse(target)
    lt, ct, rt = Nucleotide.parse(left), Nucleotide.parse(center), Nucleotide.parse(right)
    if ct == b:
        return 0.0
    p = params
    if b in (A, G):
        # purine target: transition from the other purine is enhanced
        other = G if b == A else A
        if ct != other:
            return p.v(b)
        if lt in (C, T):
            return p.w(b) + p.r(b, lt)
        return p.w(b)
    other = C if b == T else T
    if ct != other:
        return p.v(b)
    if rt in (A, G):
        return p.w(b) + p.r(b, rt)
    return p.w(b)


def rate_table(params: RnYprParams) -> np.ndarray:
    """Dense ``[target, left, center, right]`` table of substitution rates."""
    out = np.zeros((4, 4, 4, 4), dtype=np.float64)
    for b, lt, ct, rt in itertools.product(range(4), repeat=4):
        out[b, lt, ct, rt] = substitution_rate(params, b, lt, ct, rt)
    return out


@dataclass(frozen=True)
class DecompositionPart:
    K: float
    m: float
    s: int
    lambda_bar: float


@dataclass(frozen=True)
class DerivedConstants:
    m: float
    K: float
    s: int
    lambda_bar_0: float
    lambda_bar: float
    calY: frozenset[float]
    calR: frozenset[float]
    decomposition: tuple[DecompositionPart, ...]
    lambda_bar_0d: float
    # second part as tabulated with a sum over letters (never used: s = 1)
    lambda_bar_2_table_sum: float

    @property
    def max_YR(self) -> float:
        return max(self.calY | self.calR)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "K": self.K,
            "s": self.s,
            "lambda_bar_0": self.lambda_bar_0,
            "lambda_bar": self.lambda_bar,
            "calY": sorted(self.calY),
            "calR": sorted(self.calR),
            "decomposition": [
                {"K": p.K, "m": p.m, "s": p.s, "lambda_bar": p.lambda_bar}
                for p in self.decomposition
            ],
            "lambda_bar_0d": self.lambda_bar_0d,
            "lambda_bar_2_table_sum": self.lambda_bar_2_table_sum,
        }


def _spread(x: float, y: float) -> tuple[float, float]:
    return max(x, y) - min(x, y), min(x, y)


def derived_constants(params: RnYprParams) -> DerivedConstants:
    p = params
    vs = [p.v(x) for x in LETTERS]
    ws = [p.w(x) for x in LETTERS]
    m = min(vs)
    K = max(
        p.w(a) + p.r(a, b)
        for a, b in itertools.product(LETTERS, LETTERS)
        if p.has_r(a, b)
    )
    calY = frozenset(
        val for y in (T, C) for val in _spread(p.r(y, A), p.r(y, G))
    )
    calR = frozenset(
        val for b in (A, G) for val in _spread(p.r(b, C), p.r(b, T))
    )
    max_YR = max(calY | calR)
    lambda_bar = max([w - v for v, w in zip(vs, ws)] + [max_YR])
    lam0 = sum(vs)
    all_r = [p.r(a, b) for a, b in R_KEYS]
    part1 = DecompositionPart(K=max(all_r), m=0.0, s=2, lambda_bar=max_YR)
    part2 = DecompositionPart(
        K=max(ws), m=m, s=1, lambda_bar=max(w - v for v, w in zip(vs, ws))
    )
    return DerivedConstants(
        m=m,
        K=K,
        s=2,
        lambda_bar_0=lam0,
        lambda_bar=lambda_bar,
        calY=calY,
        calR=calR,
        decomposition=(part1, part2),
        lambda_bar_0d=lam0,
        lambda_bar_2_table_sum=sum(w - v for v, w in zip(vs, ws)),
    )


def specialize_t92(theta: float, v: float, w: float, r: float) -> RnYprParams:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if v > w:
        raise ValueError(f"v = {v} exceeds w = {w}")
    weak, strong = 1.0 - theta, theta
    return RnYprParams(
        v_a=weak * v, v_t=weak * v, v_c=strong * v, v_g=strong * v,
        w_a=weak * w, w_t=weak * w, w_c=strong * w, w_g=strong * w,
        r_a_c=r, r_t_g=r,
    )


def specialize_jc(v: float, r: float) -> RnYprParams:
    return RnYprParams(
        v_a=v, v_t=v, v_c=v, v_g=v, w_a=v, w_t=v, w_c=v, w_g=v, r_a_c=r, r_t_g=r
    )


def specialize_rnc(
    v_W: float,
    v_S: float,
    w_W: float,
    w_S: float,
    r_U: float,
    r_W: float,
    r_S: float,
    r_V: float,
) -> RnYprParams:
    """Strand-symmetric RN+YpR model (W = {a,t}, S = {c,g})."""
    if v_W > w_W or v_S > w_S:
        raise ValueError("require v_W <= w_W and v_S <= w_S")
    return RnYprParams(
        v_a=v_W, v_t=v_W, v_c=v_S, v_g=v_S,
        w_a=w_W, w_t=w_W, w_c=w_S, w_g=w_S,
        r_a_t=r_U, r_t_a=r_U, r_a_c=r_W, r_t_g=r_W,
        r_c_a=r_S, r_g_t=r_S, r_c_g=r_V, r_g_c=r_V,
    )


def mirror(params: RnYprParams) -> RnYprParams:
    """Relabel every letter by its strand complement."""
    data: dict[str, float] = {}
    for x in LETTERS:
        cx = complement(Nucleotide.parse(x)).letter
        data["v_" + cx] = params.v(x)
        data["w_" + cx] = params.w(x)
    for b, a in R_KEYS:
        cb, ca = complement(Nucleotide.parse(b)).letter, complement(Nucleotide.parse(a)).letter
        data[f"r_{cb}_{ca}"] = params.r(b, a)
    return RnYprParams(**data)


@dataclass(frozen=True)
class Level:
    """One row of a partition: level rate, its increment and the indicator set.

    ``members`` holds the windows of ``A_j`` and ``offsets`` the sites the
    indicator of ``A_j`` depends on.
    """

    lam: float
    lam_bar: float
    offsets: frozenset[int]
    members: frozenset[Window]


@dataclass(frozen=True)
class GenericRateModel:
    """Radius-1 rate model with an explicit level partition per target."""

    radius: int
    table: np.ndarray = field(repr=False, compare=False)
    partition: tuple[tuple[Level, ...], ...]

    def rate(self, target: Nucleotide | str, window: Window) -> float:
        b = int(Nucleotide.parse(target))
        return float(self.table[(b,) + tuple(window)])

    @property
    def rate_fn(self) -> Callable[[Nucleotide | str, Window], float]:
        return self.rate

    def reconstruct(self, target: Nucleotide | str, window: Window) -> float:
        levels = self.partition[int(Nucleotide.parse(target))]
        total = 0.0
        for j, lev in enumerate(levels):
            if any(window in levels[ell].members for ell in range(j, len(levels))):
                total += lev.lam_bar
        return total

    def lambda_bar_0(self) -> float:
        return sum(levels[0].lam for levels in self.partition)

    def birth_marks(self) -> list[tuple[float, tuple[int, ...]]]:
        """``(rate, offsets)`` for every level ``j >= 1`` of every target.

        ``offsets`` is the union of ``S_l`` for ``l >= j``.
        """
        marks = []
        for levels in self.partition:
            for j in range(1, len(levels)):
                offs: set[int] = set()
                for ell in range(j, len(levels)):
                    offs |= levels[ell].offsets
                if levels[j].lam_bar > 0:
                    marks.append((levels[j].lam_bar, tuple(sorted(offs))))
        return marks

    @classmethod
    def independent(cls, Q: np.ndarray) -> "GenericRateModel":
        """Site-independent model with generator ``Q`` (rows: current letter)."""
        Q = np.asarray(Q, dtype=np.float64)
        if Q.shape != (4, 4):
            raise ValueError("Q must be 4x4")
        off = Q[~np.eye(4, dtype=bool)]
        if np.any(off < 0) or not np.all(np.isfinite(Q)):
            raise ValueError("Q needs finite non-negative off-diagonal entries")
        table = np.zeros((4, 4, 4, 4))
        for b in range(4):
            for c in range(4):
                if b != c:
                    table[b, :, c, :] = Q[c, b]
        return cls.from_table(table)

    @classmethod
    def from_table(cls, table: np.ndarray) -> "GenericRateModel":
        """Build the partition from distinct rate values of each target.

        Windows where the center equals the target are excluded.  The offsets
        of a level are the window positions its indicator actually depends on.
        """
        table = np.asarray(table, dtype=np.float64)
        if table.shape != (4, 4, 4, 4) or np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ValueError("rate table must be a finite non-negative 4x4x4x4 array")
        parts = []
        for b in range(4):
            cells = [
                w for w in itertools.product(range(4), repeat=3) if w[1] != b
            ]
            values = sorted({float(table[(b,) + w]) for w in cells})
            levels = []
            prev = 0.0
            for lam in values:
                members = frozenset(w for w in cells if table[(b,) + w] == lam)
                levels.append(Level(lam, lam - prev, _support(members, b), members))
                prev = lam
            parts.append(tuple(levels))
        return cls(radius=1, table=table, partition=tuple(parts))


def _support(members: frozenset[Window], target: int) -> frozenset[int]:
    """Offsets in {-1,0,1} on which membership in ``members`` depends."""
    offs = set()
    for pos in range(3):
        for w in itertools.product(range(4), repeat=3):
            if w[1] == target:
                continue
            for alt in range(4):
                w2 = w[:pos] + (alt,) + w[pos + 1:]
                if w2[1] == target:
                    continue
                if (w in members) != (w2 in members):
                    offs.add(pos - 1)
                    break
            if pos - 1 in offs:
                break
    return frozenset(offs)


def as_generic(params: RnYprParams) -> GenericRateModel:
    """Four-level partition of every target (base, enhanced, two YpR levels).

    Ties between the two interaction rates are broken so that the
    lower level keeps the first listed neighbor (c for purine targets,
    a for pyrimidine targets).
    """
    p = params
    parts = []
    allw = list(itertools.product(range(4), repeat=3))
    for b in (A, T, C, G):
        if b in (A, G):
            other = G if b == A else A
            d, e = (C, T) if p.r(b, C) <= p.r(b, T) else (T, C)
            pos, nb_set = 0, (A, G)  # left neighbor decides
        else:
            other = C if b == T else T
            d, e = (A, G) if p.r(b, A) <= p.r(b, G) else (G, A)
            pos, nb_set = 2, (C, T)
        offset = pos - 1
        rd, re = p.r(b, d), p.r(b, e)
        j0 = frozenset(w for w in allw if w[1] not in (b, other))
        j1 = frozenset(w for w in allw if w[1] == other and w[pos] in nb_set)
        j2 = frozenset(w for w in allw if w[1] == other and w[pos] == d)
        j3 = frozenset(w for w in allw if w[1] == other and w[pos] == e)
        lams = (p.v(b), p.w(b), p.w(b) + rd, p.w(b) + re)
        sets = (
            (j0, frozenset({0})),
            (j1, frozenset({0, offset})),
            (j2, frozenset({0, offset})),
            (j3, frozenset({0, offset})),
        )
        levels = []
        prev = 0.0
        for lam, (mem, offs) in zip(lams, sets):
            levels.append(Level(lam, lam - prev, offs, mem))
            prev = lam
        parts.append(tuple(levels))
    return GenericRateModel(radius=1, table=rate_table(p), partition=tuple(parts))


@dataclass(frozen=True)
class CutPasteKernel:
    """Cut-and-paste intensity ``rho`` with displacement law ``p(0, k)``."""

    rho: float
    weights: Mapping[int, float]

    def __post_init__(self) -> None:
        rho = float(self.rho)
        if not np.isfinite(rho) or rho < 0:
            raise ValueError("rho must be finite and non-negative")
        clean: dict[int, float] = {}
        for k, p in sorted(self.weights.items()):
            k, p = int(k), float(p)
            if k == 0:
                raise ValueError("displacement 0 is not a cut-and-paste move")
            if not np.isfinite(p) or p < 0:
                raise ValueError(f"weight for displacement {k} must be non-negative")
            if p > 0:
                clean[k] = p
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "weights", dict(sorted(clean.items())))

    @classmethod
    def stirring(cls, rho: float) -> "CutPasteKernel":
        """Nearest-neighbor swaps; every adjacent pair swaps at rate ``rho``."""
        return cls(rho, {-1: 0.5, 1: 0.5})

    @classmethod
    def none(cls) -> "CutPasteKernel":
        return cls(0.0, {})

    @property
    def mass(self) -> float:
        return sum(self.weights.values())

    @property
    def max_displacement(self) -> int:
        return max((abs(k) for k in self.weights), default=0)

    def total_rate(self, n: int) -> float:
        return self.rho * n * self.mass

    def validate(self, n: int) -> None:
        if self.max_displacement >= n:
            raise ValueError(
                f"kernel displacement {self.max_displacement} does not fit a ring of size {n}"
            )

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Displacements and cumulative weights for sampling."""
        ks = np.array(list(self.weights), dtype=np.int64)
        cum = np.cumsum(np.array(list(self.weights.values()), dtype=np.float64))
        return ks, cum

    def to_dict(self) -> dict:
        return {"rho": self.rho, "weights": {str(k): p for k, p in self.weights.items()}}
