from __future__ import annotations

import numpy as np
import pytest

from ipslab.rates import RnYprParams

LETTERS = "atcg"
R_NAMES = ("r_a_c", "r_a_t", "r_t_a", "r_t_g", "r_c_a", "r_c_g", "r_g_c", "r_g_t")


def random_params(rng: np.random.Generator) -> RnYprParams:
    """Random admissible rates with frequent exact zeros and ties."""
    data: dict[str, float] = {}
    for x in LETTERS:
        v = float(rng.choice([0.0, rng.uniform(0, 2)], p=[0.1, 0.9]))
        w = v + float(rng.choice([0.0, rng.uniform(0, 3)], p=[0.3, 0.7]))
        data["v_" + x], data["w_" + x] = v, w
    pool = [0.0, 1.0, float(rng.uniform(0, 5))]
    for name in R_NAMES:
        kind = rng.integers(0, 3)
        data[name] = pool[kind] if kind < 2 else float(rng.uniform(0, 5))
    return RnYprParams(**data)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
