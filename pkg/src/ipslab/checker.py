"""Sufficient ergodicity conditions and attractiveness tests.

Every check is a pure function of the substitution rates; cut-and-paste
intensity and kernel never enter.  Comparisons are exact on floats because
the equality cases are structural (a user writes ``r = 4 v`` on purpose).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import ORDERS, Nucleotide, Order, get_order
from .rates import DerivedConstants, RnYprParams, derived_constants

__all__ = [
    "Status",
    "Verdict",
    "ErgodicityReport",
    "NotAttractiveError",
    "InternalConsistencyError",
    "check_general",
    "check_decomposed",
    "check_rnypr",
    "check_strong_conditions",
    "check_attractiveness",
    "check_nu_diag",
    "ergodicity_report",
    "rank_rates",
]


class Status(str, Enum):
    EXPONENTIALLY_ERGODIC = "exponentially_ergodic"
    ERGODIC = "ergodic"
    INCONCLUSIVE = "inconclusive"


class NotAttractiveError(ValueError):
    """Raised when a check presupposes attractiveness under the given order."""


class InternalConsistencyError(RuntimeError):
    """A rank relabeling pointed at a rate slot the model does not define."""


@dataclass(frozen=True)
class Verdict:
    status: Status
    condition_name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.status is not Status.INCONCLUSIVE

    def to_dict(self) -> dict:
        return {
            "name": self.condition_name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "status": self.status.value,
        }


def _compare(name: str, lhs: float, rhs: float, assumption: bool = True) -> Verdict:
    if not assumption or lhs > rhs:
        status = Status.INCONCLUSIVE
    elif lhs < rhs:
        status = Status.EXPONENTIALLY_ERGODIC
    else:
        status = Status.ERGODIC
    return Verdict(status, name, float(lhs), float(rhs))


def check_general(
    s: int, lambda_bar: float, lambda_bar_0: float, m_positive: bool = True
) -> Verdict:
    """``(s-1) lambda_bar`` against ``lambda_bar_0``; needs ``m > 0``."""
    if s < 1 or lambda_bar < 0 or lambda_bar_0 < 0:
        raise ValueError("require s >= 1 and non-negative rates")
    return _compare("general", (s - 1) * lambda_bar, lambda_bar_0, m_positive)


def check_decomposed(
    parts: Sequence[tuple[int, float]],
    lambda_bar_0d: float,
    m_sum: float | None = None,
) -> Verdict:
    """Sum of ``(s_i-1) lambda_bar_i`` against ``lambda_bar_0d``.

    ``m_sum`` is the sum of the part minima; when given and zero the verdict
    is inconclusive.  Without it, ``lambda_bar_0d > 0`` stands in for the
    positivity assumption.
    """
    if not parts:
        raise ValueError("decomposition needs at least one part")
    lhs = sum((s - 1) * lam for s, lam in parts)
    ok = lambda_bar_0d > 0 if m_sum is None else m_sum > 0
    return _compare("decomposed", lhs, lambda_bar_0d, ok)


def check_rnypr(params: RnYprParams) -> Verdict:
    d = derived_constants(params)
    return _compare("rnypr", d.max_YR, d.lambda_bar_0, d.m > 0)


@dataclass(frozen=True)
class StrongVerdicts:
    general: Verdict
    decomposed: Verdict
    rnypr: Verdict


def check_strong_conditions(params: RnYprParams | DerivedConstants) -> StrongVerdicts:
    d = params if isinstance(params, DerivedConstants) else derived_constants(params)
    size = 4
    general = _compare("strong_general", (d.s - 1) * (d.K - d.m), size * d.m, d.m > 0)
    m_sum = sum(p.m for p in d.decomposition)
    decomposed = _compare(
        "strong_decomposed",
        sum((p.s - 1) * (p.K - p.m) for p in d.decomposition),
        size * m_sum,
        m_sum > 0,
    )
    max_r = d.decomposition[0].K
    rnypr = _compare("strong_rnypr", max_r, size * d.m, d.m > 0)
    return StrongVerdicts(general, decomposed, rnypr)


def _slot_name(letters: Sequence[Nucleotide], i: int, j: int) -> str:
    target, nb = letters[i - 1], letters[j - 1]
    y = {Nucleotide.C, Nucleotide.T}
    if (target in y) == (nb in y):
        raise InternalConsistencyError(
            f"rank slot r_{i}^{j} maps to r_{target.letter}^{nb.letter}, which is not a YpR rate"
        )
    return f"r_{target.letter}_{nb.letter}"


# slots read by the attractiveness and diagonal conditions
RANK_SLOTS = ((1, 3), (1, 4), (2, 3), (2, 4), (3, 1), (3, 2), (4, 1), (4, 2))


def rank_rates(params: RnYprParams, order: Order | str) -> dict[tuple[int, int], float]:
    """Interaction rates relabeled by rank: ``(i, j) -> r_{L(i)}^{L(j)}``."""
    letters = get_order(order).letters
    return {ij: getattr(params, _slot_name(letters, *ij)) for ij in RANK_SLOTS}


def check_attractiveness(params: RnYprParams, order: Order | str) -> bool:
    r = rank_rates(params, order)
    return (
        r[1, 3] == 0.0
        and r[1, 4] == 0.0
        and r[2, 3] <= r[2, 4]
        and r[3, 1] >= r[3, 2]
        and r[4, 1] == 0.0
        and r[4, 2] == 0.0
    )


def check_nu_diag(params: RnYprParams, order: Order | str) -> bool:
    """Conditions under which the coupled stationary law charges no mixed pair.

    Raises ``NotAttractiveError`` when ``params`` are not attractive for
    ``order``.
    """
    o = get_order(order)
    if not check_attractiveness(params, o):
        raise NotAttractiveError(f"parameters are not attractive under {o.id}")
    r = rank_rates(params, o)
    v = {i: params.v(o.letter(i)) for i in range(1, 5)}
    w = {i: params.w(o.letter(i)) for i in range(1, 5)}
    if r[3, 1] == r[3, 2] or r[2, 4] == r[2, 3]:
        return True
    x = (r[2, 4] - r[2, 3]) - r[3, 1]
    y = (r[3, 1] - r[3, 2]) - r[2, 4]
    alpha = x <= 0
    beta = 0 < x <= v[2] + v[1] + w[4] + w[3]
    gamma = y <= 0
    delta = 0 < y <= w[2] + w[1] + v[4] + v[3]
    return (alpha and gamma) or beta or delta


@dataclass(frozen=True)
class ErgodicityReport:
    general: Verdict
    decomposed: Verdict
    rnypr: Verdict
    strong_general: Verdict
    strong_decomposed: Verdict
    strong_rnypr: Verdict
    attractive_orders: dict[str, bool]
    # None where the order is not attractive (condition undefined)
    nu_diag: dict[str, bool | None]
    m_positive: bool
    constants: DerivedConstants

    def verdicts(self) -> list[Verdict]:
        return [
            self.general,
            self.decomposed,
            self.rnypr,
            self.strong_general,
            self.strong_decomposed,
            self.strong_rnypr,
        ]

    def to_dict(self) -> dict:
        return {
            "conditions": [v.to_dict() for v in self.verdicts()],
            "attractive_orders": dict(self.attractive_orders),
            "nu_diag": dict(self.nu_diag),
            "m_positive": self.m_positive,
            "constants": self.constants.to_dict(),
        }


def ergodicity_report(params: RnYprParams) -> ErgodicityReport:
    d = derived_constants(params)
    m_sum = sum(p.m for p in d.decomposition)
    strong = check_strong_conditions(d)
    attractive = {oid: check_attractiveness(params, o) for oid, o in ORDERS.items()}
    nu = {
        oid: (check_nu_diag(params, o) if attractive[oid] else None)
        for oid, o in ORDERS.items()
    }
    return ErgodicityReport(
        general=check_general(d.s, d.lambda_bar, d.lambda_bar_0, d.m > 0),
        decomposed=check_decomposed(
            [(p.s, p.lambda_bar) for p in d.decomposition], d.lambda_bar_0d, m_sum
        ),
        rnypr=check_rnypr(params),
        strong_general=strong.general,
        strong_decomposed=strong.decomposed,
        strong_rnypr=strong.rnypr,
        attractive_orders=attractive,
        nu_diag=nu,
        m_positive=d.m > 0,
        constants=d,
    )
