"""Alphabet, admissible orders, ring configurations and the cut-and-paste map.

Letters are encoded as small integers in the fixed index order ``a, t, c, g``
(0..3).  Every array produced by the package uses this order, including the
CSV column layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Nucleotide",
    "LETTERS",
    "PYRIMIDINES",
    "PURINES",
    "Order",
    "ORDERS",
    "get_order",
    "rank",
    "RingConfig",
    "CoupledConfig",
    "config_leq",
    "apply_sigma",
    "sigma_permutation",
    "complement",
]

LETTERS = "atcg"


class Nucleotide(IntEnum):
    A = 0
    T = 1
    C = 2
    G = 3

    @property
    def letter(self) -> str:
        return LETTERS[self.value]

    @property
    def is_pyrimidine(self) -> bool:
        return self in PYRIMIDINES

    @property
    def is_purine(self) -> bool:
        return self in PURINES

    @classmethod
    def parse(cls, value: "Nucleotide | str | int") -> "Nucleotide":
        if isinstance(value, Nucleotide):
            return value
        if isinstance(value, str):
            idx = LETTERS.find(value.lower())
            if len(value) != 1 or idx < 0:
                raise ValueError(f"not a nucleotide: {value!r}")
            return cls(idx)
        return cls(int(value))

    def __str__(self) -> str:
        return self.letter


A, T, C, G = Nucleotide.A, Nucleotide.T, Nucleotide.C, Nucleotide.G
PYRIMIDINES = frozenset({C, T})
PURINES = frozenset({A, G})

_COMPLEMENT = {A: T, T: A, C: G, G: C}


def complement(a: Nucleotide) -> Nucleotide:
    """Strand complement (a<->t, c<->g)."""
    return _COMPLEMENT[Nucleotide.parse(a)]


@dataclass(frozen=True)
class Order:
    """A total order on the alphabet, stored lowest letter first."""

    id: str
    letters: tuple[Nucleotide, ...]

    def __post_init__(self) -> None:
        if sorted(self.letters) != [A, T, C, G]:
            raise ValueError(f"order {self.id} is not a bijection")
        low = set(self.letters[:2])
        if low != PYRIMIDINES and low != PURINES:
            raise ValueError(f"order {self.id} separates Y and R")

    def rank(self, a: Nucleotide | str) -> int:
        return self.letters.index(Nucleotide.parse(a)) + 1

    def letter(self, r: int) -> Nucleotide:
        """Letter of rank ``r`` (1..4)."""
        return self.letters[r - 1]

    def rank_array(self) -> np.ndarray:
        """``rank - 1`` indexed by letter code, as int8."""
        out = np.empty(4, dtype=np.int8)
        for i, a in enumerate(self.letters):
            out[int(a)] = i
        return out

    @property
    def minimal(self) -> Nucleotide:
        return self.letters[0]

    @property
    def maximal(self) -> Nucleotide:
        return self.letters[-1]

    def mirror(self) -> "Order":
        """The order obtained by complementing every letter."""
        letters = tuple(complement(a) for a in self.letters)
        for o in ORDERS.values():
            if o.letters == letters:
                return o
        raise AssertionError("complement of an admissible order is admissible")

    def __str__(self) -> str:
        return self.id + " " + "<".join(a.letter for a in self.letters)


def _order(oid: str, spec: str) -> Order:
    return Order(oid, tuple(Nucleotide.parse(ch) for ch in spec))


ORDERS: dict[str, Order] = {
    o.id: o
    for o in (
        _order("O1", "ctag"),
        _order("O2", "gatc"),
        _order("O3", "tcag"),
        _order("O4", "tcga"),
        _order("O5", "ctga"),
        _order("O6", "agct"),
        _order("O7", "agtc"),
        _order("O8", "gact"),
    )
}


def get_order(order: Order | str) -> Order:
    if isinstance(order, Order):
        return order
    try:
        return ORDERS[order.upper()]
    except KeyError:
        raise ValueError(f"unknown order {order!r}; expected O1..O8") from None


def rank(order: Order | str, a: Nucleotide | str) -> int:
    return get_order(order).rank(a)


@dataclass(frozen=True)
class RingConfig:
    """Immutable configuration on the ring Z/nZ, stored as a letter string."""

    cells: str

    def __post_init__(self) -> None:
        cells = self.cells.lower()
        if len(cells) < 3:
            raise ValueError("ring size must be at least 3")
        if cells.strip(LETTERS):
            raise ValueError(f"invalid letters in configuration {self.cells!r}")
        object.__setattr__(self, "cells", cells)

    @property
    def n(self) -> int:
        return len(self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    def __getitem__(self, x: int) -> Nucleotide:
        return Nucleotide(LETTERS.index(self.cells[x % self.n]))

    def __str__(self) -> str:
        return self.cells

    def to_array(self) -> np.ndarray:
        return _encode(self.cells)

    @classmethod
    def from_array(cls, arr: np.ndarray | Sequence[int]) -> "RingConfig":
        return cls("".join(LETTERS[int(v)] for v in arr))

    @classmethod
    def from_letters(cls, letters: Iterable[Nucleotide | str]) -> "RingConfig":
        return cls("".join(Nucleotide.parse(a).letter for a in letters))

    @classmethod
    def uniform(cls, a: Nucleotide | str, n: int) -> "RingConfig":
        return cls(Nucleotide.parse(a).letter * n)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "RingConfig":
        return cls.from_array(rng.integers(0, 4, size=n))

    def counts(self) -> tuple[int, int, int, int]:
        return tuple(self.cells.count(ch) for ch in LETTERS)  # type: ignore[return-value]


_LUT = np.full(256, -1, dtype=np.int8)
for _i, _ch in enumerate(LETTERS):
    _LUT[ord(_ch)] = _i


def _encode(cells: str) -> np.ndarray:
    return _LUT[np.frombuffer(cells.encode("ascii"), dtype=np.uint8)]


@dataclass(frozen=True)
class CoupledConfig:
    lower: RingConfig
    upper: RingConfig
    order: Order

    def __post_init__(self) -> None:
        if self.lower.n != self.upper.n:
            raise ValueError("coupled configurations must have equal length")

    @property
    def ordered(self) -> bool:
        return config_leq(self.lower, self.upper, self.order)

    def apply_sigma(self, x: int, y: int) -> "CoupledConfig":
        return CoupledConfig(
            apply_sigma(self.lower, x, y), apply_sigma(self.upper, x, y), self.order
        )


def config_leq(eta: RingConfig, xi: RingConfig, order: Order | str) -> bool:
    """True iff ``eta(x) <= xi(x)`` at every site under ``order``."""
    if eta.n != xi.n:
        raise ValueError(f"size mismatch: {eta.n} != {xi.n}")
    r = get_order(order).rank_array()
    return bool(np.all(r[eta.to_array()] <= r[xi.to_array()]))


def sigma_permutation(n: int, x: int, k: int) -> np.ndarray:
    """Permutation array ``perm[z] = sigma(z)`` for source ``x`` and displacement ``k``.

    The arc traced from ``x`` by ``k`` steps is cyclically shifted; sites off
    the arc are fixed.
    """
    if k == 0 or abs(k) >= n:
        raise ValueError(f"displacement {k} invalid on a ring of size {n}")
    perm = np.arange(n)
    step = 1 if k > 0 else -1
    x %= n
    perm[x] = (x + k) % n
    for i in range(1, abs(k) + 1):
        z = (x + step * i) % n
        perm[z] = (z - step) % n
    return perm


def apply_sigma(config: RingConfig, x: int, y: int) -> RingConfig:
    """Apply the cut-and-paste map moving the letter at ``x`` to ``y``.

    ``y`` is read as ``x + k`` with signed displacement ``k = y - x``; both are
    reduced modulo ``n`` only for indexing, so ``y`` may lie outside
    ``0..n-1`` to describe a segment that wraps past site 0.  With ``k > 0``
    the letters at ``x+1..y`` shift one site left, with ``k < 0`` the letters
    at ``y..x-1`` shift one site right.
    """
    n = config.n
    k = y - x
    if k == 0 or abs(k) >= n:
        raise ValueError(f"segment from {x} to {y} does not fit a ring of size {n}")
    perm = sigma_permutation(n, x, k)
    cells = config.cells
    out = [""] * n
    for z in range(n):
        out[perm[z]] = cells[z]
    return RingConfig("".join(out))
