"""First-moment identities of the stationary measure and the independent-site oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LETTERS
from .rates import RnYprParams
from .stats import DEFAULT_BATCHES, batch_means

__all__ = [
    "MomentSolution",
    "solve_first_moments",
    "r_terms",
    "moment_residuals",
    "residual_series",
    "residual_table",
    "EQUATIONS",
    "independent_invariant",
]

IA, IT, IC, IG = range(4)

EQUATIONS = (
    "purine_a",
    "purine_g",
    "pyrimidine_c",
    "pyrimidine_t",
    "purine_total",
    "pyrimidine_total",
    "normalization",
)


def _pair(a: str, b: str) -> int:
    return 4 * LETTERS.index(a) + LETTERS.index(b)


@dataclass(frozen=True)
class MomentSolution:
    mu_a: float
    mu_t: float
    mu_c: float
    mu_g: float
    mu_Y: float
    mu_R: float
    r_Y: float
    r_R: float

    def vector(self) -> np.ndarray:
        return np.array([self.mu_a, self.mu_t, self.mu_c, self.mu_g])


def _classes(p: RnYprParams) -> tuple[float, float, float, float]:
    v_Y, v_R = p.v_t + p.v_c, p.v_a + p.v_g
    w_Y, w_R = p.w_t + p.w_c, p.w_a + p.w_g
    return v_Y, v_R, w_Y, w_R


def solve_first_moments(params: RnYprParams, r_Y: float, r_R: float) -> MomentSolution:
    """Closed-form single-site marginals given the two interaction terms."""
    p = params
    v_Y, v_R, w_Y, w_R = _classes(p)
    if v_Y + v_R <= 0 or w_R + v_Y <= 0 or w_Y + v_R <= 0:
        raise ZeroDivisionError("moment formulas need v_Y+v_R, w_R+v_Y and w_Y+v_R positive")
    mu_R = v_R / (v_Y + v_R)
    mu_Y = v_Y / (v_Y + v_R)
    mu_a = (p.v_a * mu_Y + p.w_a * mu_R - r_R) / (w_R + v_Y)
    mu_g = (p.v_g * mu_Y + p.w_g * mu_R + r_R) / (w_R + v_Y)
    mu_c = (p.v_c * mu_R + p.w_c * mu_Y - r_Y) / (w_Y + v_R)
    mu_t = (p.v_t * mu_R + p.w_t * mu_Y + r_Y) / (w_Y + v_R)
    return MomentSolution(mu_a, mu_t, mu_c, mu_g, mu_Y, mu_R, float(r_Y), float(r_R))


def r_terms(params: RnYprParams, pairs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(r_Y, r_R)`` from adjacent-pair frequencies.

    ``pairs`` has 16 trailing entries ordered ``aa, at, ..., gg`` where the
    first letter sits at the left site.
    """
    p = params
    q = np.asarray(pairs, dtype=np.float64)
    f = lambda a, b: q[..., _pair(a, b)]  # noqa: E731
    r_Y = (
        p.r_t_a * f("c", "a") + p.r_t_g * f("c", "g")
        - p.r_c_a * f("t", "a") - p.r_c_g * f("t", "g")
    )
    r_R = (
        p.r_g_c * f("c", "a") + p.r_g_t * f("t", "a")
        - p.r_a_c * f("c", "g") - p.r_a_t * f("t", "g")
    )
    return r_Y, r_R


def _system(params: RnYprParams, mu: np.ndarray, mu_Y: np.ndarray, mu_R: np.ndarray,
            r_Y: np.ndarray, r_R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left and right sides of the seven first-moment equations."""
    p = params
    v_Y, v_R, _, _ = _classes(p)
    ma, mt, mc, mg = (mu[..., i] for i in range(4))
    lhs = np.stack([
        -(v_Y + p.w_g) * ma + p.w_a * mg + p.v_a * mu_Y,
        p.w_g * ma - (v_Y + p.w_a) * mg + p.v_g * mu_Y,
        -(v_R + p.w_t) * mc + p.w_c * mt + p.v_c * mu_R,
        p.w_t * mc - (v_R + p.w_c) * mt + p.v_t * mu_R,
        ma + mg,
        mc + mt,
        ma + mg + mc + mt,
    ], axis=-1)
    rhs = np.stack([r_R, -r_R, r_Y, -r_Y, mu_R, mu_Y, np.ones_like(ma)], axis=-1)
    return lhs, rhs


def residual_series(params: RnYprParams, series: np.ndarray) -> np.ndarray:
    """Per-sample residuals ``lhs - rhs`` for rows of ``[freq_a..freq_g, pair_aa..pair_gg]``."""
    s = np.atleast_2d(np.asarray(series, dtype=np.float64))
    mu = s[:, :4]
    mu_Y = mu[:, IT] + mu[:, IC]
    mu_R = mu[:, IA] + mu[:, IG]
    r_Y, r_R = r_terms(params, s[:, 4:20])
    lhs, rhs = _system(params, mu, mu_Y, mu_R, r_Y, r_R)
    return lhs - rhs


def moment_residuals(params: RnYprParams, measured) -> np.ndarray:
    """Signed residuals of the seven equations at the measured frequencies.

    ``measured`` is a ``TrajectoryStats`` or a length-20 vector of
    marginals followed by the 16 pair frequencies.
    """
    if hasattr(measured, "marginal_vector"):
        vec = np.concatenate([measured.marginal_vector(), measured.pair_matrix().ravel()])
    else:
        vec = np.asarray(measured, dtype=np.float64).ravel()
    if vec.shape != (20,) or not np.all(np.isfinite(vec)):
        raise ValueError("measured statistics need 4 marginals and 16 finite pair frequencies")
    return residual_series(params, vec[None, :])[0]


def residual_table(
    params: RnYprParams, series: np.ndarray, k: float = 3.0, batches: int = DEFAULT_BATCHES
) -> list[dict]:
    """One row per equation with batch-means tolerance ``k * SE``.

    Equations are linear in the frequencies, so the residual of the mean
    equals the mean of the per-sample residuals.
    """
    s = np.atleast_2d(np.asarray(series, dtype=np.float64))
    res = residual_series(params, s)
    mean, se = batch_means(res, batches)
    mu = s[:, :4].mean(axis=0)
    pairs = s[:, 4:20].mean(axis=0)
    r_Y, r_R = r_terms(params, pairs)
    lhs, rhs = _system(params, mu, mu[IT] + mu[IC], mu[IA] + mu[IG], r_Y, r_R)
    rows = []
    for i, name in enumerate(EQUATIONS):
        # sums of frequencies carry only rounding error
        tol = max(k * float(se[i]), 1e-9)
        rows.append({
            "equation": name,
            "lhs": float(lhs[i]),
            "rhs": float(rhs[i]),
            "residual": float(mean[i]),
            "tolerance": tol,
            "pass": bool(abs(mean[i]) <= tol),
        })
    return rows


def independent_invariant(Q: np.ndarray) -> np.ndarray:
    """Invariant law of a 4-state generator ``Q`` by a direct linear solve."""
    Q = np.asarray(Q, dtype=np.float64)
    if Q.shape != (4, 4) or not np.all(np.isfinite(Q)):
        raise ValueError("Q must be a finite 4x4 matrix")
    off = Q[~np.eye(4, dtype=bool)]
    if np.any(off < 0):
        raise ValueError("off-diagonal rates must be non-negative")
    if np.max(np.abs(Q.sum(axis=1))) > 1e-12 * max(1.0, np.abs(Q).max()):
        raise ValueError("rows of Q must sum to zero")
    if np.linalg.matrix_rank(Q) < 3 or not _irreducible(Q):
        raise ValueError("Q is reducible")
    # replace one balance equation by the normalization
    M = Q.T.copy()
    M[-1, :] = 1.0
    b = np.zeros(4)
    b[-1] = 1.0
    return np.linalg.solve(M, b)


def _irreducible(Q: np.ndarray) -> bool:
    adj = (Q > 0) & ~np.eye(4, dtype=bool)
    reach = np.eye(4, dtype=bool) | adj
    for _ in range(3):
        reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
    return bool(reach.all())
