import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from pacimdp.abstraction import SampleSet, build_imdp
from pacimdp.geometry import Partition
from pacimdp.harness.models import bas1
from pacimdp.harness.samplers import make_rng
from pacimdp.imdp import (
    IMDP, Row, aggregate_backup, export_explicit, improved_synthesis, inner_extreme, parse_explicit,
    robust_value_iteration, value_bins,
)
from pacimdp.linsys import LinearSystem, group_steps


def lp_inner(low, up, v, sense="min"):
    c = np.asarray(v, dtype=float) if sense == "min" else -np.asarray(v, dtype=float)
    res = linprog(c, A_eq=np.ones((1, len(v))), b_eq=[1.0], bounds=list(zip(low, up)), method="highs")
    assert res.status == 0
    return float(np.dot(res.x, v))


def random_row(r, k):
    low = r.uniform(0, 1, size=k)
    low *= r.uniform(0, 1) / low.sum()
    up = np.minimum(1.0, low + r.uniform(0, 1, size=k))
    if up.sum() < 1:
        up = np.minimum(1.0, up + (1 - up.sum()) / k + 1e-3)
    return Row(np.arange(k), low, up)


def chain(goal_iv=(0.4, 0.6), self_iv=(0.4, 0.6)):
    """State 0 moves to goal state 1 or stays."""
    rows = [Row([0, 1], [self_iv[0], goal_iv[0]], [self_iv[1], goal_iv[1]])]
    return IMDP(2, rows, [[0], []], [[0], []], [False, True], [False, False])


def four_state_model():
    """s1 goal, s4 critical; s2 and s3 lead to the goal with bounds 0.92 and 0.80."""
    rows = [
        Row([0, 1], [0.5, 0.2], [0.8, 0.5]),          # s1 -> {s1, s2}
        Row([0, 2], [0.92, 0.05], [0.95, 0.08]),      # s2 -> {s1, s3}
        Row([0, 1], [0.80, 0.10], [0.90, 0.20]),      # s3 -> {s1, s2}
        Row([2, 3], [0.3, 0.3], [0.7, 0.7]),          # s4 -> {s3, s4}
    ]
    enabled = [[0], [1], [2], [3]]
    return IMDP(4, rows, enabled, [[0], [1], [2], [3]], [True, False, False, False],
                [False, False, False, True])


def test_inner_examples():
    val, p = inner_extreme(Row([0], [0.3], [1.0]), [0.7])
    assert val == pytest.approx(0.7) and p.tolist() == [1.0]
    row = Row([0, 1, 2], [0.1, 0.2, 0.3], [0.6, 0.5, 0.6])
    v = [0.0, 0.5, 1.0]
    val, p = inner_extreme(row, v, "min")
    assert val == pytest.approx(lp_inner(row.low, row.up, v)) == pytest.approx(0.4)
    np.testing.assert_allclose(p, [0.5, 0.2, 0.3])
    val, p = inner_extreme(row, v, "max")
    assert val == pytest.approx(lp_inner(row.low, row.up, v, "max")) == pytest.approx(0.75)
    np.testing.assert_allclose(p, [0.1, 0.3, 0.6])


def test_inner_infeasible():
    with pytest.raises(ValueError):
        inner_extreme(Row([0, 1], [0.7, 0.6], [0.8, 0.9]), [0, 1])


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 8), sense=st.sampled_from(["min", "max"]))
def test_inner_against_lp_and_witness(seed, k, sense):
    r = np.random.default_rng(seed)
    row = random_row(r, k)
    v = r.uniform(0, 1, size=k)
    val, p = inner_extreme(row, v, sense)
    assert abs(val - lp_inner(row.low, row.up, v, sense)) <= 1e-9
    assert abs(p.sum() - 1) <= 1e-12
    assert np.all(p >= row.low - 1e-15) and np.all(p <= row.up + 1e-15)


def test_vi_examples():
    m = chain()
    assert robust_value_iteration(m, 1, "lower")[0][0] == pytest.approx(0.4)
    assert robust_value_iteration(m, 1, "upper")[0][0] == pytest.approx(0.6)
    assert robust_value_iteration(m, 2, "lower")[0][0] == pytest.approx(0.64)
    V, pol = robust_value_iteration(m, math.inf, "lower")
    assert V[0] == pytest.approx(1.0, abs=1e-5) and pol.stationary and pol.action(0, 7) == 0


def test_all_goal():
    m = IMDP(3, [Row([0], [1], [1])], [[0], [0], [0]], [[0], [0], [0]], [True] * 3, [False] * 3)
    for K in (0, 1, 5, math.inf):
        np.testing.assert_array_equal(robust_value_iteration(m, K)[0], 1.0)


def test_terminal_values_and_ties():
    rows = [Row([1], [1], [1]), Row([1], [1], [1]), Row([2], [1], [1])]
    m = IMDP(3, rows, [[2, 0, 1], [], []], [[2, 0, 1], [], []], [False, True, False], [False, False, True])
    V, pol = robust_value_iteration(m, 3)
    assert V.tolist() == [1.0, 1.0, 0.0]
    assert pol.action(0, 0) == 0  # actions 0 and 1 tie, lowest id wins
    assert pol.action(1, 0) == -1 and pol.action(2, 0) == -1


def _bas1_model(N=400, seed=3):
    spec = bas1()
    gsys = group_steps(spec.system, 1)
    w = spec.noise.draw(make_rng(seed), N)
    return build_imdp(gsys, spec.partition, SampleSet(w), 1e-6)[0]


def test_values_monotone_in_horizon_and_bounds_ordered():
    m = _bas1_model()
    prev = None
    for K in range(0, 12):
        lo, _ = robust_value_iteration(m, K, "lower")
        up, _ = robust_value_iteration(m, K, "upper")
        assert np.all(lo <= up + 1e-12)
        if prev is not None:
            assert np.all(lo >= prev - 1e-12)
        prev = lo
    assert np.all(m.goal <= robust_value_iteration(m, 3)[0])


def test_widening_intervals_never_helps():
    m = _bas1_model()
    wide = [Row(r.succ, r.low * 0.8, np.minimum(1, r.up * 1.2)) for r in m.rows]
    m2 = IMDP(m.n_states, wide, m.enabled, m.row_of, m.goal, m.critical, m.absorbing)
    a, _ = robust_value_iteration(m, 10)
    b, _ = robust_value_iteration(m2, 10)
    assert np.all(b <= a + 1e-12)


def test_value_bins():
    v = np.array([1.0, 0.92, 0.80, 0.0])
    assert value_bins(v, 10).tolist() == [9, 9, 8, 0]
    assert value_bins(v, 2).tolist() == [1, 1, 1, 0]
    assert len(set(value_bins(v, 10, "distinct").tolist())) == 4
    with pytest.raises(ValueError):
        value_bins(v, 0)


def test_four_state_bins():
    m = four_state_model()
    V_K = m.goal.astype(float)
    bins = value_bins(V_K, 10)
    assert bins[0] != bins[1] and bins[1] == bins[2] == bins[3]
    V1, _, _ = aggregate_backup(m, V_K, 10)
    np.testing.assert_allclose(V1, [1.0, 0.92, 0.80, 0.0])
    bins = value_bins(V1, 10)
    assert bins[0] == bins[1] and len({bins[0], bins[2], bins[3]}) == 3
    merged = {b: min(V1[bins == b]) for b in set(bins.tolist())}
    assert merged[bins[0]] == pytest.approx(0.92) and merged[bins[2]] == pytest.approx(0.80)


@pytest.mark.parametrize("rho", [2, 10, 100])
def test_aggregation_sound_four_state(rho):
    m = four_state_model()
    K = 4
    _, ref = robust_value_iteration(m, K)
    V, pol, _ = improved_synthesis(m, K, rho)
    assert np.all(pol.values <= ref.values + 1e-12)


def test_aggregation_lossless_with_distinct_bins():
    m = _bas1_model()
    V_ref, ref = robust_value_iteration(m, 6)
    V, pol, _ = improved_synthesis(m, 6, 10 ** 6, "distinct")
    np.testing.assert_allclose(pol.values, ref.values, atol=1e-12)


def test_improved_zero_horizon():
    m = four_state_model()
    V, pol, _ = improved_synthesis(m, 0, 5)
    np.testing.assert_array_equal(V, m.goal.astype(float))
    assert pol.actions.shape[0] == 0
    with pytest.raises(ValueError):
        improved_synthesis(m, math.inf, 5)


def test_pooled_counts_source():
    m = _bas1_model()
    V_sum, _, _ = improved_synthesis(m, 6, 20)
    V_cnt, _, rep = improved_synthesis(m, 6, 20, source="counts")
    assert rep.mode == "aggregated" and rep.alpha == pytest.approx(1e-6 * 20 * 6 * m.n_actions)
    # pooled counts give intervals no wider than clamped sums at the same beta
    assert np.all(V_cnt >= V_sum - 1e-9)


def toy_two_state():
    rows = [Row([0, 1], [0.25, 0.5], [0.5, 0.75]), Row([1], [1], [1])]
    return IMDP(2, rows, [[0, 1], [0]], [[0, 1], [1]], [False, True], [False, False], initial=0)


GOLDEN_TRA = "0 0 0 0.25 0.5\n0 0 1 0.5 0.75\n0 1 1 1 1\n1 0 1 1 1\n"
GOLDEN_STA = "0 init\n1 goal\n"


def test_export_golden(tmp_path):
    sta, tra = export_explicit(toy_two_state(), tmp_path / "toy")
    assert open(tra).read() == GOLDEN_TRA
    assert open(sta).read() == GOLDEN_STA


def test_export_round_trip(tmp_path):
    m = _bas1_model(N=100)
    m.initial = 17
    _, tra = export_explicit(m, tmp_path / "a")
    first = open(tra, "rb").read()
    back = parse_explicit(tmp_path / "a")
    _, tra2 = export_explicit(back, tmp_path / "b")
    assert open(tra2, "rb").read() == first
    assert open(tmp_path / "b.sta", "rb").read() == open(tmp_path / "a.sta", "rb").read()
    actionless = sum(1 for a in m.enabled if a.size == 0)
    assert first.count(b"\n") == m.n_transitions - actionless


def test_export_reports_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        export_explicit(toy_two_state(), tmp_path / "missing" / "x")


def test_row_validation():
    with pytest.raises(ValueError):
        IMDP(2, [Row([0, 1], [0.6, 0.6], [0.7, 0.7])], [[0], []], [[0], []], [False, True], [False, False])
    with pytest.raises(ValueError):
        IMDP(1, [], [[]], [[]], [True], [True])
