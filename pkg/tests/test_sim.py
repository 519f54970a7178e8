from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_params
from ipslab import _kernels as K
from ipslab.checker import NotAttractiveError, check_attractiveness
from ipslab.core import ORDERS, RingConfig, apply_sigma, get_order
from ipslab.rates import (
    CutPasteKernel,
    GenericRateModel,
    RnYprParams,
    rate_table,
    specialize_rnc,
    specialize_t92,
    substitution_rate,
)
from ipslab.sim import (
    CacheMismatchError,
    EventBudgetExceeded,
    SimSpec,
    coupling_is_monotone,
    estimate_stationary,
    simulate,
    simulate_coupled,
    simulate_replicas,
    stationary_coupled_pairs,
)

T92 = specialize_t92(0.3, 1.0, 2.0, 5.0)
IDX = {a: i for i, a in enumerate("atcg")}


def _moves(table: np.ndarray, order: str, lo: str, up: str) -> dict[tuple[str, str], float]:
    out = np.zeros((4, 3))
    rk = get_order(order).rank_array()
    a, b = [IDX[x] for x in lo], [IDX[x] for x in up]
    K.coupled_moves(table, rk, a[0], a[1], a[2], b[0], b[1], b[2], out)
    moves: dict[tuple[str, str], float] = {}
    for t in range(4):
        for kind, pair in enumerate([("b", "b"), ("b", up[1]), (lo[1], "b")]):
            key = tuple("atcg"[t] if x == "b" else x for x in pair)
            if out[t, kind] > 0:
                moves[key] = moves.get(key, 0.0) + out[t, kind]
    return moves


def _transcribed(p: RnYprParams, lo: str, up: str) -> dict[tuple[str, str], float]:
    """Coupled moves from (lo, up) windows under O1, written out case by case."""
    c = lambda x, w: substitution_rate(p, x, *w)  # noqa: E731
    v = p.v
    e, s = lo, up
    m = lambda x: min(c(x, e), c(x, s))  # noqa: E731
    rows = {
        ("c", "c"): [("aa", v("a")), ("gg", v("g")), ("tt", m("t")),
                     ("ct", c("t", s) - m("t")), ("tc", c("t", e) - m("t"))],
        ("c", "t"): [("aa", v("a")), ("gg", v("g")), ("tt", c("t", e)), ("cc", c("c", s))],
        ("c", "a"): [("aa", v("a")), ("tt", v("t")), ("ta", c("t", e) - v("t")),
                     ("cc", v("c")), ("gg", v("g")), ("cg", c("g", s) - v("g"))],
        ("c", "g"): [("aa", v("a")), ("ca", c("a", s) - v("a")), ("tt", v("t")),
                     ("tg", c("t", e) - v("t")), ("cc", v("c")), ("gg", v("g"))],
        ("t", "t"): [("aa", v("a")), ("cc", m("c")), ("ct", c("c", e) - m("c")),
                     ("tc", c("c", s) - m("c")), ("gg", v("g"))],
        ("t", "a"): [("aa", v("a")), ("tt", v("t")), ("cc", v("c")),
                     ("ca", c("c", e) - v("c")), ("gg", v("g")), ("tg", c("g", s) - v("g"))],
        ("t", "g"): [("aa", v("a")), ("ta", c("a", s) - v("a")), ("cc", v("c")),
                     ("cg", c("c", e) - v("c")), ("tt", v("t")), ("gg", v("g"))],
        ("a", "a"): [("tt", v("t")), ("cc", v("c")), ("gg", m("g")),
                     ("ag", c("g", s) - m("g")), ("ga", c("g", e) - m("g"))],
        ("a", "g"): [("aa", c("a", s)), ("gg", c("g", e)), ("tt", v("t")), ("cc", v("c"))],
        ("g", "g"): [("aa", m("a")), ("ag", c("a", e) - m("a")), ("ga", c("a", s) - m("a")),
                     ("tt", v("t")), ("cc", v("c"))],
    }
    out: dict[tuple[str, str], float] = {}
    for key, rate in rows[(lo[1], up[1])]:
        if rate > 0:
            out[(key[0], key[1])] = rate
    return out


def test_coupled_moves_match_case_tables(rng):
    o1 = get_order("O1")
    draws = [T92] + [random_params(rng) for _ in range(20)]
    for p in draws:
        table = rate_table(p)
        for lo_w in itertools.product("atcg", repeat=3):
            for up_w in itertools.product("atcg", repeat=3):
                if any(o1.rank(x) > o1.rank(y) for x, y in zip(lo_w, up_w)):
                    continue
                lo, up = "".join(lo_w), "".join(up_w)
                got = _moves(table, "O1", lo, up)
                want = _transcribed(p, lo, up)
                assert got.keys() == want.keys(), (lo, up)
                for k in want:
                    assert got[k] == pytest.approx(want[k], abs=1e-12)


def test_coupled_moves_marginals(rng):
    # each copy alone sees its own substitution rates
    for _ in range(10):
        table = rate_table(random_params(rng))
        for order in ORDERS:
            for lo, up in [("gca", "tta"), ("act", "gtc"), ("ccc", "ggg")]:
                out = np.zeros((4, 3))
                rk = get_order(order).rank_array()
                a, b = [IDX[x] for x in lo], [IDX[x] for x in up]
                K.coupled_moves(table, rk, *a, *b, out)
                for t in range(4):
                    assert out[t, 0] + out[t, 1] == pytest.approx(table[t, a[0], a[1], a[2]])
                    assert out[t, 0] + out[t, 2] == pytest.approx(table[t, b[0], b[1], b[2]])


def _spec(**kw) -> SimSpec:
    base = dict(model=T92, kernel=CutPasteKernel.stirring(1.0), n=32, horizon=20.0, seed=3)
    base.update(kw)
    return SimSpec(**base)


def test_null_generator_keeps_configuration():
    model = GenericRateModel.independent(np.zeros((4, 4)))
    init = RingConfig("acgtacgtac")
    stats = simulate(SimSpec(model, CutPasteKernel.none(), 10, init=init, horizon=5.0))
    assert stats.final == init
    assert sum(stats.events.values()) == 0


def test_pure_cut_and_paste_conserves_letters():
    model = GenericRateModel.independent(np.zeros((4, 4)))
    init = RingConfig.random(40, np.random.default_rng(1))
    kern = CutPasteKernel(1.5, {-3: 0.2, -1: 0.3, 2: 0.1, 5: 0.4})
    stats = simulate(SimSpec(model, kern, 40, init=init, horizon=50.0, debug_every=7))
    assert stats.final.counts() == init.counts()
    assert stats.events["cut_paste"] > 0


def test_determinism_and_replicas_differ():
    spec = _spec(sample_interval=1.0)
    a, b = simulate(spec), simulate(spec)
    assert a.final == b.final
    np.testing.assert_array_equal(a.series, b.series)
    reps = simulate_replicas(spec, 3)
    assert reps[0].final == a.final
    assert len({str(r.final) for r in reps}) == 3


def test_debug_mode_matches_incremental_cache():
    simulate(_spec(debug_every=1, horizon=10.0))
    simulate_coupled(_spec(debug_every=1, horizon=10.0), "O1")


def test_event_budget_exceeded():
    with pytest.raises(EventBudgetExceeded):
        simulate(_spec(max_events=10, horizon=1000.0))
    stats = simulate(_spec(max_events=10, horizon=None))
    assert sum(stats.events.values()) == 10


def test_cache_mismatch_error_is_runtime_error():
    assert issubclass(CacheMismatchError, RuntimeError)


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(n=2)
    with pytest.raises(ValueError):
        _spec(horizon=None)
    with pytest.raises(ValueError):
        _spec(init=RingConfig("acg"))
    with pytest.raises(ValueError):
        _spec(init="all-min")


def test_samples_are_frequencies():
    stats = simulate(_spec(sample_interval=0.5))
    assert stats.series.shape == (41, 20)
    np.testing.assert_allclose(stats.series[:, :4].sum(axis=1), 1.0)
    np.testing.assert_allclose(stats.series[:, 4:].sum(axis=1), 1.0)
    # pair rows and columns reduce to the marginals on a ring
    pairs = stats.series[:, 4:].reshape(-1, 4, 4)
    np.testing.assert_allclose(pairs.sum(axis=2), stats.series[:, :4])
    np.testing.assert_allclose(pairs.sum(axis=1), stats.series[:, :4])


def test_estimate_stationary_sample_times():
    stats = estimate_stationary(_spec(), burn_in=5.0, sample_interval=0.5, samples=40)
    np.testing.assert_allclose(stats.times, 5.0 + 0.5 * np.arange(1, 41))
    assert stats.samples == 40


@settings(max_examples=60, deadline=None)
@given(
    cells=st.text(alphabet="atcg", min_size=3, max_size=12),
    x=st.integers(0, 100),
    k=st.integers(-11, 11),
)
def test_rotate_arc_matches_sigma(cells, x, k):
    n = len(cells)
    x %= n
    if k == 0 or abs(k) > n - 1:
        return
    cfg = RingConfig(cells)
    arr = cfg.to_array().copy()
    K.rotate_arc(arr, n, x, k)
    assert RingConfig.from_array(arr) == apply_sigma(cfg, x, x + k)


def test_coupled_identical_start_coalesced():
    init = RingConfig.random(32, np.random.default_rng(5))
    res = simulate_coupled(_spec(), "O1", init, init)
    assert res.coalescence_time == 0.0
    assert res.discrepancy_freq == 0.0
    assert res.final_lower == res.final_upper


def test_coupled_t92_stays_ordered():
    for seed in range(3):
        res = simulate_coupled(_spec(seed=seed, horizon=50.0, debug_every=1000), "O1")
        assert res.order_violations == 0
        assert res.violated_sites == 0
        assert res.coalescence_time is not None


def test_coupled_marginals_are_single_copy_laws():
    # a coupled lower copy started from all-c is statistically the single chain from all-c
    n, reps = 16, 60
    lows, singles = [], []
    for r in range(reps):
        spec = _spec(n=n, horizon=1.0, seed=100 + r)
        lows.append(np.array(simulate_coupled(spec, "O1").final_lower.counts()) / n)
        singles.append(np.array(simulate(SimSpec(T92, spec.kernel, n, init="all-c",
                                                 horizon=1.0, seed=900 + r)).final.counts()) / n)
    lows, singles = np.array(lows), np.array(singles)
    se = np.sqrt(lows.var(axis=0, ddof=1) / reps + singles.var(axis=0, ddof=1) / reps)
    assert np.all(np.abs(lows.mean(axis=0) - singles.mean(axis=0)) <= 4 * se + 1e-9)


def test_non_attractive_model_counts_violations():
    p = RnYprParams(v_a=0.5, v_t=0.5, v_c=0.5, v_g=0.5, w_a=1, w_t=1, w_c=1, w_g=1,
                    r_c_a=6.0, r_c_g=6.0, r_g_t=4.0)
    assert not check_attractiveness(p, "O1")
    res = simulate_coupled(_spec(model=p, horizon=30.0), "O1")
    assert res.order_violations > 0
    assert res.flagged
    with pytest.raises(NotAttractiveError):
        stationary_coupled_pairs(_spec(model=p), "O1", burn_in=1.0, samples=5)


def test_closed_form_attractiveness_matches_exhaustive(rng):
    for _ in range(300):
        p = random_params(rng)
        table = rate_table(p)
        for oid in ORDERS:
            assert check_attractiveness(p, oid) == coupling_is_monotone(table, oid), (p, oid)


def test_coupled_rejects_unordered_start():
    with pytest.raises(ValueError):
        simulate_coupled(_spec(), "O1", "all-g", "all-c")


def test_stationary_coupled_pairs_fields():
    res = stationary_coupled_pairs(_spec(n=16), "O2", burn_in=5.0, samples=20)
    assert res.averaged_from == 5.0
    assert res.time == pytest.approx(25.0)
    assert len(res.pair_freqs) == 10
    assert res.all_pair_freqs.sum() == pytest.approx(1.0)
    assert set(res.pair_freqs) == set(res.ordered_pair_names())


def test_rnc_second_family_reversed_direction_breaks_order():
    # r_c^g > r_c^a lets the lower copy alone jump t -> c under O4
    p = specialize_rnc(1, 1, 2, 2, r_U=0, r_W=0, r_S=0.5, r_V=1.5)
    assert not coupling_is_monotone(rate_table(p), "O4")
    total = 0
    for seed in range(100):
        spec = SimSpec(p, CutPasteKernel.none(), 4, horizon=0.3, seed=seed)
        total += simulate_coupled(spec, "O4", RingConfig("atgt"), RingConfig("atat")).order_violations
    assert total > 0


def test_cache_check_detects_stale_leaf():
    table = rate_table(T92)
    tot = np.ascontiguousarray(table.sum(axis=0))
    cells = RingConfig("acgtgcatcg").to_array().astype(np.int8)
    n = cells.shape[0]
    size = K.tree_size(n)
    tree = np.zeros(2 * size)
    K.tree_build(tree, size, np.array([K.site_rate(tot, cells, n, x) for x in range(n)]))
    assert K.check_single(tree, size, tot, cells, n)
    cells[4] = (cells[4] + 1) % 4  # change a letter without updating the cache
    assert not K.check_single(tree, size, tot, cells, n)
    rk = get_order("O1").rank_array()
    lo = RingConfig.uniform("c", n).to_array().astype(np.int8)
    up = RingConfig.uniform("g", n).to_array().astype(np.int8)
    vals = np.array([K.coupled_site_rate(table, lo, up, rk, n, x) for x in range(n)])
    K.tree_build(tree, size, vals)
    assert K.check_coupled(tree, size, table, lo, up, rk, n)
    K.tree_set(tree, size, 2, vals[2] + 1e-9)
    assert not K.check_coupled(tree, size, table, lo, up, rk, n)
