"""Offline planning loop, closed-loop simulation and Monte Carlo evaluation."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..abstraction import SampleSet, beta_for_alpha, build_imdp, build_states_actions
from ..geometry import ABSORBING
from ..imdp import improved_synthesis, robust_value_iteration
from ..linsys import group_steps, pinv_svd
from .problem import ProblemSpec
from .samplers import make_rng

CERTIFIED = "certified"
UNSATISFIABLE = "Unsatisfiable"
INCONCLUSIVE = "inconclusive"

REPORT_FIELDS = ("iteration", "N", "states", "choices", "transitions", "pr_low", "pr_up",
                 "t_sample", "t_intervals", "t_solve")


@dataclass
class IterationRecord:
    iteration: int
    N: int
    states: int
    choices: int
    transitions: int
    pr_low: float
    pr_up: float
    t_sample: float
    t_intervals: float
    t_solve: float

    def as_row(self):
        return [getattr(self, f) for f in REPORT_FIELDS]


@dataclass
class RunReport:
    name: str = ""
    seed: int | None = None
    eta: float | None = None
    beta: float | None = None
    alpha: float | None = None
    t_abstract: float = 0.0
    iterations: list = field(default_factory=list)
    verdict: str | None = None
    empirical: float | None = None
    empirical_ci: tuple | None = None
    values_k0: np.ndarray | None = None
    values_up_k0: np.ndarray | None = None
    trajectories: list = field(default_factory=list)

    @property
    def last(self):
        return self.iterations[-1] if self.iterations else None


@dataclass
class Trajectory:
    states: np.ndarray
    cells: np.ndarray
    actions: np.ndarray
    sat: bool


def _initial_state(part, x0):
    s = part.locate(x0)
    if s is ABSORBING:
        raise ValueError(f"initial state {x0} lies outside the partitioned domain")
    return part.flat(s)


def offline_plan(spec: ProblemSpec, sampler=None, seed=None, estimator="scenario", binning="uniform"):
    """Grow the sample size until the lower bound at x0 reaches eta or the upper bound falls below it.

    States and actions are built once; every iteration draws a fresh batch
    of N grouped noise samples.  Returns (report, policy or None, imdp).
    """
    spec.validate()
    sampler = sampler or spec.noise
    if sampler is None:
        raise ValueError("no noise sampler given")
    seed = spec.seed if seed is None else seed
    rng = make_rng(seed)
    part = spec.partition
    gsys = group_steps(spec.system, spec.group)
    s0 = _initial_state(part, spec.x0)
    t0 = time.perf_counter()
    sa = build_states_actions(part, gsys)
    t_abstract = time.perf_counter() - t0
    mode = "symmetric" if spec.symmetric else "generic"
    beta = spec.beta
    if beta is None:
        beta = beta_for_alpha(spec.alpha, part, spec.confidence_mode, spec.rho, spec.K)
    report = RunReport(name=spec.name, seed=seed, eta=spec.eta, beta=beta, t_abstract=t_abstract)
    N, it, policy, m = int(spec.N0), 0, None, None
    while True:
        t0 = time.perf_counter()
        w = sampler.draw_grouped(rng, N, gsys.base.A, gsys.group)
        t1 = time.perf_counter()
        m, conf = build_imdp(gsys, part, SampleSet(w, seed, sampler.kind), beta, mode,
                             states_actions=sa, estimator=estimator, initial=s0)
        t2 = time.perf_counter()
        if spec.rho is not None:
            source = "counts" if estimator == "scenario" else "sum"
            V_low, pol, conf = improved_synthesis(m, spec.K, spec.rho, binning, source=source)
        else:
            V_low, pol = robust_value_iteration(m, spec.K, "lower")
        V_up, _ = robust_value_iteration(m, spec.K, "upper")
        t3 = time.perf_counter()
        report.alpha = conf.alpha if conf is not None else None
        report.iterations.append(IterationRecord(
            it, N, m.n_states, m.n_choices, m.n_transitions, float(V_low[s0]), float(V_up[s0]),
            t1 - t0, t2 - t1, t3 - t2))
        report.values_k0, report.values_up_k0 = V_low, V_up
        if V_low[s0] >= spec.eta:
            report.verdict, policy = CERTIFIED, pol
            break
        if V_up[s0] < spec.eta:
            report.verdict = UNSATISFIABLE
            break
        if N >= spec.N_max:
            report.verdict = INCONCLUSIVE
            break
        N = min(int(math.ceil(N * spec.gamma)), int(spec.N_max))
        it += 1
    return report, policy, m


class _Controller:
    """Feedback law towards action targets, shared by the single-run and batched simulators."""

    def __init__(self, gsys, part):
        self.gsys = gsys
        self.part = part
        self.pinv = pinv_svd(gsys.B_bar)
        self.targets = part.centers()

    def step(self, X, targets, W):
        g = self.gsys
        U = (targets - g.q_bar - X @ g.A_bar.T) @ self.pinv.T
        return X @ g.A_bar.T + U @ g.B_bar.T + g.q_bar + W, U


def online_control(gsys, part, policy, x0, K, sampler=None, rng=None, backup=None, noise=None,
                   max_steps=1000):
    """Run the policy in closed loop from x0; returns (satisfied, trajectory).

    Noise comes from noise[k] when given, otherwise from the sampler.  Leaving
    the grid fails the run unless backup(x, k) returns a target point to
    steer to.  An infinite-horizon policy runs for at most max_steps steps.
    """
    ctrl = _Controller(gsys, part)
    goal, crit = part.label_arrays()
    steps = max_steps if math.isinf(K) else int(K)
    x = np.asarray(x0, dtype=float)
    xs, cells, acts = [x], [], []
    sat = False
    for k in range(steps + 1):
        c = part.locate_many(x[None, :])[0]
        cells.append(c)
        if c >= 0 and goal[c]:
            sat = True
            break
        if k == steps or (c >= 0 and crit[c]):
            break
        if c < 0:
            d = backup(x, k) if backup is not None else None
            if d is None:
                break
            a = -1
            d = np.asarray(d, dtype=float)
        else:
            a = policy.action(c, k)
            if a < 0:
                break
            d = ctrl.targets[a]
        acts.append(a)
        if noise is not None:
            w = np.asarray(noise[k], dtype=float)
        else:
            w = sampler.draw_grouped(rng, 1, gsys.base.A, gsys.group, batch=False)[0]
        x, _ = ctrl.step(x[None, :], d[None, :], w[None, :])
        x = x[0]
        xs.append(x)
    return sat, Trajectory(np.array(xs), np.array(cells), np.array(acts, dtype=np.int64), sat)


def draw_run_noise(sampler, rng, runs, steps, gsys):
    """Grouped noise for independent runs, shape (runs, steps, n)."""
    w = sampler.draw_grouped(rng, runs * steps, gsys.base.A, gsys.group, batch=False)
    return w.reshape(runs, steps, -1)


def clopper_pearson(successes, runs, conf=0.95):
    a = (1 - conf) / 2
    lo = stats.beta.ppf(a, successes, runs - successes + 1) if successes > 0 else 0.0
    hi = stats.beta.ppf(1 - a, successes + 1, runs - successes) if successes < runs else 1.0
    return float(lo), float(hi)


def simulate_batch(gsys, part, policy, x0, K, noise):
    """Vectorized closed loop without backup; returns a boolean array of satisfied runs."""
    ctrl = _Controller(gsys, part)
    goal, crit = part.label_arrays()
    runs, steps = noise.shape[0], noise.shape[1]
    X = np.tile(np.asarray(x0, dtype=float), (runs, 1))
    alive = np.ones(runs, dtype=bool)
    sat = np.zeros(runs, dtype=bool)
    acts = policy.actions
    for k in range(steps + 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        c = part.locate_many(X[idx])
        inside = c >= 0
        hit = np.zeros(idx.size, dtype=bool)
        hit[inside] = goal[c[inside]]
        sat[idx[hit]] = True
        stop = hit | ~inside
        stop[inside] |= crit[c[inside]]
        if k == steps:
            alive[idx] = False
            break
        row = 0 if policy.stationary else k
        a = np.full(idx.size, -1, dtype=np.int64)
        a[~stop] = acts[row, c[~stop]]
        stop |= a < 0
        alive[idx[stop]] = False
        go = idx[~stop]
        if go.size:
            X[go], _ = ctrl.step(X[go], ctrl.targets[a[~stop]], noise[go, k])
    return sat


def monte_carlo(gsys, part, policy, x0, K, sampler, runs=10000, seed=0, backup=None, max_steps=200,
                conf=0.95):
    """Empirical satisfaction rate over independent runs with a Clopper-Pearson interval.

    Returns (rate, (ci_low, ci_high)).  Reproducible per seed.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    rng = make_rng(seed)
    steps = max_steps if math.isinf(K) else int(K)
    noise = draw_run_noise(sampler, rng, runs, steps, gsys)
    if backup is None:
        sat = simulate_batch(gsys, part, policy, x0, K, noise)
    else:
        sat = np.array([online_control(gsys, part, policy, x0, K, backup=backup, noise=noise[i],
                                       max_steps=max_steps)[0] for i in range(runs)])
    n_sat = int(sat.sum())
    return n_sat / runs, clopper_pearson(n_sat, runs, conf)
