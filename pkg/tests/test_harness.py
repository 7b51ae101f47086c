import csv
import math

import numpy as np
import pytest

from pacimdp.geometry import Partition
from pacimdp.harness import (
    NoiseSampler, ProblemSpec, RunReport, builtin_model, emit_results, load_config, make_rng,
    monte_carlo, offline_plan, online_control,
)
from pacimdp.harness.cli import main
from pacimdp.harness.planning import draw_run_noise
from pacimdp.imdp import TimeVaryingPolicy
from pacimdp.linsys import group_steps

CONFIG = """
schema: pacimdp/1
name: toy
system:
  A: [[1.0, 1.0], [0.0, 1.0]]
  B: [[0.5], [1.0]]
  input_box: {low: [-4.0], high: [4.0]}
  group: 2
partition:
  origin: [-11.0, -5.5]
  widths: [2.0, 1.0]
  counts: [11, 11]
goal: [[[8, 9], [4, 6]]]
critical: [[[5, 5], [0, 2]]]
property: {K: 8, eta: 0.5, x0: [-8.0, 0.0]}
confidence: {alpha: 0.05}
sampling: {N0: 100, gamma: 2, Nmax: 400}
scheme: {symmetric: true}
noise: {kind: gaussian, cov: [[0.15, 0.0], [0.0, 0.15]]}
seed: 11
"""


@pytest.fixture
def di2():
    return builtin_model("di2")


def _zero(spec):
    return NoiseSampler("zero", {"dim": spec.partition.dim})


def test_config_matches_builtin(tmp_path, di2):
    path = tmp_path / "p.yaml"
    path.write_text(CONFIG)
    spec = load_config(path)
    assert spec.partition.goal_cells == di2.partition.goal_cells
    assert spec.partition.critical_cells == di2.partition.critical_cells
    assert spec.group == 2 and spec.K == 8 and spec.seed == 11 and spec.N_max == 400
    np.testing.assert_array_equal(spec.system.A, di2.system.A)


def test_config_rejects_bad_values(tmp_path):
    for old, new in [("eta: 0.5", "eta: 1.5"), ("gamma: 2", "gamma: 1"), ("x0: [-8.0, 0.0]", "x0: [-30.0, 0.0]"),
                     ("schema: pacimdp/1", "schema: other/9"), ("{alpha: 0.05}", "{alpha: 0.05, beta: 0.1}")]:
        path = tmp_path / "bad.yaml"
        path.write_text(CONFIG.replace(old, new))
        with pytest.raises(ValueError):
            load_config(path)


def test_builtin_models():
    bas = builtin_model("bas1")
    assert bas.partition.counts == (19, 20)
    np.testing.assert_allclose(bas.partition.low, [19.1, 36.0])
    np.testing.assert_allclose(bas.partition.high, [22.9, 40.0])
    np.testing.assert_allclose(builtin_model("bas2").system.A[0], [0.8425, 0.0537, -0.0084, 0.0])
    uav = builtin_model("uav")
    assert uav.partition.n_cells == 25515
    goal = np.array([uav.partition.cell_bounds(c) for c in uav.partition.goal_cells])
    np.testing.assert_allclose(goal[:, 0, [0, 2, 4]].min(axis=0), [11, 1, -7])
    np.testing.assert_allclose(goal[:, 1, [0, 2, 4]].max(axis=0), [15, 5, -3])
    with pytest.raises(ValueError):
        builtin_model("nope")


def test_sampler_file_without_replacement(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("w0,w1\n" + "\n".join(f"{i},{-i}" for i in range(50)) + "\n")
    s = NoiseSampler("file", {"path": str(path)})
    batch = s.draw(make_rng(0), 50)
    assert len({tuple(r) for r in batch}) == 50
    with pytest.raises(ValueError):
        s.draw(make_rng(0), 51)


def test_sampler_grouping_and_reproducibility(di2):
    A = di2.system.A
    s = di2.noise
    a = s.draw_grouped(make_rng(5), 1000, A, 2)
    b = s.draw_grouped(make_rng(5), 1000, A, 2)
    np.testing.assert_array_equal(a, b)
    base = s.draw(make_rng(5), 2000).reshape(1000, 2, 2)
    np.testing.assert_allclose(a, base[:, 0] @ A.T + base[:, 1])
    # covariance of the grouped noise: A S A^T + S
    S = 0.15 * np.eye(2)
    big = s.draw_grouped(make_rng(6), 200000, A, 2)
    np.testing.assert_allclose(np.cov(big.T), A @ S @ A.T + S, atol=0.01)


def test_online_terminal_starts(di2):
    gsys = group_steps(di2.system, 2)
    part = di2.partition
    pol = TimeVaryingPolicy(np.zeros((8, part.n_cells + 1), dtype=np.int64), 8)
    goal = part.cell_center(next(iter(part.goal_cells)))
    crit = part.cell_center(next(iter(part.critical_cells)))
    sat, tr = online_control(gsys, part, pol, goal, 8, _zero(di2), make_rng(0))
    assert sat and tr.actions.size == 0
    sat, tr = online_control(gsys, part, pol, crit, 8, _zero(di2), make_rng(0))
    assert not sat and tr.actions.size == 0


def test_zero_noise_visits_targets(di2):
    spec = di2
    spec.noise = _zero(spec)
    report, pol, m = offline_plan(spec)
    gsys = group_steps(spec.system, 2)
    sat, tr = online_control(gsys, spec.partition, pol, spec.x0, spec.K, spec.noise, make_rng(0))
    centers = spec.partition.centers()
    np.testing.assert_allclose(tr.states[1:], centers[tr.actions], atol=1e-9)
    # reaches the goal iff the certified upper bound is positive
    assert sat == (report.last.pr_up > 0)


def test_monte_carlo_matches_single_runs(di2):
    report, pol, _ = offline_plan(di2)
    gsys = group_steps(di2.system, 2)
    runs = 300
    rate, (lo, hi) = monte_carlo(gsys, di2.partition, pol, di2.x0, di2.K, di2.noise, runs=runs, seed=4)
    noise = draw_run_noise(di2.noise, make_rng(4), runs, 8, gsys)
    single = [online_control(gsys, di2.partition, pol, di2.x0, 8, noise=noise[i])[0] for i in range(runs)]
    assert rate == np.mean(single)
    assert lo <= rate <= hi
    again, _ = monte_carlo(gsys, di2.partition, pol, di2.x0, di2.K, di2.noise, runs=runs, seed=4)
    assert again == rate


def test_monte_carlo_all_goal():
    spec = builtin_model("di2")
    part = spec.partition.with_labels(goal_cells=[spec.partition.cell(i) for i in range(spec.partition.n_cells)])
    gsys = group_steps(spec.system, 2)
    pol = TimeVaryingPolicy(np.full((8, part.n_cells + 1), -1), 8)
    assert monte_carlo(gsys, part, pol, spec.x0, 8, spec.noise, runs=50)[0] == 1.0
    with pytest.raises(ValueError):
        monte_carlo(gsys, part, pol, spec.x0, 8, spec.noise, runs=0)


def test_backup_hook_only_helps(di2):
    spec = di2
    spec.noise = NoiseSampler("gaussian", {"cov": 1.0 * np.eye(2)})
    spec.eta = 0.0
    _, pol, _ = offline_plan(spec)
    gsys = group_steps(spec.system, 2)
    home = np.array([0.0, 0.0])
    plain, _ = monte_carlo(gsys, spec.partition, pol, spec.x0, 8, spec.noise, runs=300, seed=2)
    helped, _ = monte_carlo(gsys, spec.partition, pol, spec.x0, 8, spec.noise, runs=300, seed=2,
                            backup=lambda x, k: home)
    assert helped >= plain


def test_plan_verdicts(di2):
    di2.eta = 0.0
    r, pol, _ = offline_plan(di2)
    assert r.verdict == "certified" and len(r.iterations) == 1 and pol is not None
    di2.eta = 1.0
    r, pol, _ = offline_plan(di2)
    assert r.verdict == "Unsatisfiable" and pol is None and r.last.pr_up < 1
    di2.eta, di2.N_max = 0.999, 400
    r, pol, _ = offline_plan(di2)
    assert r.verdict == "inconclusive" and [i.N for i in r.iterations] == [100, 200, 400]


def test_plan_with_aggregation(di2):
    di2.rho = 20
    r, pol, _ = offline_plan(di2)
    assert r.verdict == "certified"
    assert r.beta == pytest.approx(0.05 / (20 * 8 * 121))


def test_emit_empty_report(tmp_path):
    paths = emit_results(RunReport(), tmp_path)
    for p in paths:
        assert len(open(p).read().splitlines()) == 1


def test_emit_is_deterministic(tmp_path, di2):
    r, _, m = offline_plan(di2, seed=3)
    for rec in r.iterations:
        rec.t_sample = rec.t_intervals = rec.t_solve = 0.0
    emit_results(r, tmp_path / "a")
    r2, _, _ = offline_plan(builtin_model("di2"), seed=3)
    for rec in r2.iterations:
        rec.t_sample = rec.t_intervals = rec.t_solve = 0.0
    emit_results(r2, tmp_path / "b")
    for name in ("run_report.csv", "values_k0.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.reader(open(tmp_path / "a" / "values_k0.csv")))
    assert rows[0] == ["state", "pr_low", "pr_up"] and len(rows) - 1 == m.n_states


def test_cli_exit_codes(tmp_path):
    cfg = tmp_path / "p.yaml"
    cfg.write_text(CONFIG)
    out = str(tmp_path / "o")
    assert main(["synthesize", "--config", str(cfg), "--out", out]) == 0
    assert main(["synthesize", "--config", str(cfg), "--eta", "1.0", "--out", out]) == 2
    assert main(["synthesize", "--config", str(cfg), "--eta", "0.999", "--out", out]) == 3
    assert main(["evaluate", "--model", "di2", "--runs", "200", "--out", out]) == 0
    assert main(["simulate", "--model", "di2", "--runs", "2", "--out", out]) == 0
    assert (tmp_path / "o" / "trajectory_1.csv").exists()
    assert main(["export", "--model", "di2", "--out", out]) == 0
    assert (tmp_path / "o" / "di2.tra").exists()
    assert main(["abstract", "--model", "di2"]) == 0
    assert main(["synthesize", "--config", str(tmp_path / "missing.yaml")]) == 1
