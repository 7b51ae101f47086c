"""Interval MDPs: data model, robust value iteration, state aggregation and export.

Transition rows are stored once and referenced by index from every
(state, action) pair that uses them, so an action whose successor
distribution does not depend on the source state costs one row in total.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
INF_TOL = 1e-6


@dataclass(frozen=True)
class Row:
    """Sparse interval distribution: successors with [low, up] bounds."""

    succ: np.ndarray
    low: np.ndarray
    up: np.ndarray

    def __post_init__(self):
        succ = np.asarray(self.succ, dtype=np.int64)
        low = np.asarray(self.low, dtype=float)
        up = np.asarray(self.up, dtype=float)
        order = np.argsort(succ, kind="stable")
        for name, val in (("succ", succ[order]), ("low", low[order]), ("up", up[order])):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def __len__(self):
        return self.succ.size

    def feasible(self, tol=FEAS_TOL):
        return (
            bool(np.all(self.low >= -tol))
            and bool(np.all(self.low <= self.up + tol))
            and bool(np.all(self.up <= 1 + tol))
            and self.low.sum() <= 1 + tol
            and self.up.sum() >= 1 - tol
        )


@dataclass
class IMDP:
    """Interval MDP with goal, critical and absorbing states.

    enabled[s] lists the action ids available in s and row_of[s] the index
    of the row each of them uses.  States without actions are sinks.
    """

    n_states: int
    rows: list
    enabled: list
    row_of: list
    goal: np.ndarray
    critical: np.ndarray
    absorbing: int | None = None
    initial: int | None = None
    n_actions: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=bool)
        self.critical = np.asarray(self.critical, dtype=bool)
        if self.goal.shape != (self.n_states,) or self.critical.shape != (self.n_states,):
            raise ValueError("label arrays must have one entry per state")
        if np.any(self.goal & self.critical):
            raise ValueError("goal and critical states overlap")
        if self.absorbing is not None and self.goal[self.absorbing]:
            raise ValueError("absorbing state cannot be a goal state")
        self.enabled = [np.asarray(a, dtype=np.int64) for a in self.enabled]
        self.row_of = [np.asarray(r, dtype=np.int64) for r in self.row_of]
        if self.n_actions is None:
            self.n_actions = int(max((a.max() + 1 for a in self.enabled if a.size), default=0))
        for i, row in enumerate(self.rows):
            if not row.feasible():
                raise ValueError(f"row {i} admits no distribution (sum low > 1 or sum up < 1)")
        self._csr = None
        self._choices = None

    @property
    def terminal(self):
        t = self.goal | self.critical
        if self.absorbing is not None:
            t = t.copy()
            t[self.absorbing] = True
        return t

    @property
    def n_choices(self):
        """State-action pairs; states without actions count one self-loop."""
        return int(sum(max(1, a.size) for a in self.enabled))

    @property
    def n_transitions(self):
        sizes = np.array([len(r) for r in self.rows], dtype=np.int64)
        return int(sum(sizes[r].sum() if r.size else 1 for r in self.row_of))

    # flat layouts used by the vectorized solvers
    def csr(self):
        if self._csr is None:
            sizes = np.array([len(r) for r in self.rows], dtype=np.int64)
            ptr = np.concatenate([[0], np.cumsum(sizes)])
            cat = lambda key: np.concatenate([getattr(r, key) for r in self.rows]) if self.rows else np.zeros(0)
            self._csr = (ptr, cat("succ").astype(np.int64), cat("low"), cat("up"))
        return self._csr

    def choices(self):
        """(state, action, row) arrays sorted by state then action id."""
        if self._choices is None:
            s = np.concatenate([np.full(a.size, i, dtype=np.int64) for i, a in enumerate(self.enabled)] or [np.zeros(0, np.int64)])
            a = np.concatenate(self.enabled or [np.zeros(0, np.int64)])
            r = np.concatenate(self.row_of or [np.zeros(0, np.int64)])
            order = np.lexsort((a, s))
            self._choices = (s[order], a[order], r[order])
        return self._choices


@dataclass
class TimeVaryingPolicy:
    """actions[k, s] is the action id at step k (-1: none); stationary if K is infinite."""

    actions: np.ndarray
    horizon: float
    values: np.ndarray | None = None

    @property
    def stationary(self):
        return math.isinf(self.horizon)

    def action(self, s, k=0):
        if self.stationary:
            k = 0
        return int(self.actions[k, s])


def inner_extreme(row: Row, values, sense="min"):
    """Worst (min) or best (max) expectation of values over the interval row.

    Every successor starts at its lower bound; the remaining mass goes to
    successors in increasing (min) or decreasing (max) order of value, ties
    by increasing successor id, each filled up to its upper bound.
    """
    if not row.feasible():
        raise ValueError("row admits no distribution")
    v = np.asarray(values, dtype=float)[row.succ]
    key = v if sense == "min" else -v
    order = np.lexsort((row.succ, key))
    p = row.low.copy()
    slack = 1.0 - p.sum()
    for j in order:
        if slack <= 0:
            break
        add = min(row.up[j] - row.low[j], slack)
        p[j] += add
        slack -= add
    return float(p @ v), p


def _batch_inner(ptr, succ, low, up, v_succ, sense):
    """inner_extreme for all rows of a CSR layout at once."""
    n_rows = ptr.size - 1
    if succ.size == 0:
        return np.zeros(n_rows)
    rid = np.repeat(np.arange(n_rows), np.diff(ptr))
    key = v_succ if sense == "min" else -v_succ
    order = np.lexsort((succ, key, rid))
    cap = (up - low)[order]
    lo = low[order]
    csum = np.cumsum(cap)
    start = np.concatenate([[0.0], csum])[ptr[:-1]]
    before = csum - cap - np.repeat(start, np.diff(ptr))
    slack = 1.0 - np.bincount(rid, weights=low, minlength=n_rows)
    add = np.clip(np.repeat(slack, np.diff(ptr)) - before, 0.0, cap)
    p = lo + add
    vals = np.bincount(rid[order], weights=p * v_succ[order], minlength=n_rows)
    return vals


def _argmax_choices(m: IMDP, q_rows, n_states):
    """Per-state max over enabled actions; ties go to the lowest action id."""
    s, a, r = m.choices()
    V = np.zeros(n_states)
    act = np.full(n_states, -1, dtype=np.int64)
    if s.size == 0:
        return V, act
    q = q_rows[r]
    order = np.lexsort((a, -q, s))
    first = np.ones(order.size, dtype=bool)
    first[1:] = s[order][1:] != s[order][:-1]
    pick = order[first]
    V[s[pick]] = q[pick]
    act[s[pick]] = a[pick]
    return V, act


def _backup(m: IMDP, V_next, sense):
    ptr, succ, low, up = m.csr()
    q_rows = _batch_inner(ptr, succ, low, up, V_next[succ], sense)
    V, act = _argmax_choices(m, q_rows, m.n_states)
    V[m.terminal] = 0.0
    act[m.terminal] = -1
    V[m.goal] = 1.0
    return V, act


def robust_value_iteration(m: IMDP, horizon=math.inf, bound="lower", tol=INF_TOL, max_iter=100000):
    """Robust reach-avoid values at k=0 and the maximizing policy.

    bound="lower" maximizes the worst case over the intervals, "upper" the
    best case.  A finite horizon runs exactly that many backups; an
    infinite one iterates until the sup-norm change drops below tol.
    """
    sense = {"lower": "min", "upper": "max"}[bound]
    V = m.goal.astype(float)
    if math.isinf(horizon):
        act = np.full(m.n_states, -1, dtype=np.int64)
        for _ in range(max_iter):
            V_new, act = _backup(m, V, sense)
            delta = np.max(np.abs(V_new - V)) if V.size else 0.0
            V = V_new
            if delta < tol:
                break
        return V, TimeVaryingPolicy(act[None, :], math.inf, V[None, :])
    K = int(horizon)
    actions = np.full((K, m.n_states), -1, dtype=np.int64)
    values = np.zeros((K + 1, m.n_states))
    values[K] = V
    for k in range(K - 1, -1, -1):
        V, actions[k] = _backup(m, V, sense)
        values[k] = V
    return V, TimeVaryingPolicy(actions, K, values)


def value_bins(values, rho, binning="uniform"):
    """Bin index per state.

    uniform: rho equal-width bins over [0, 1] (value 1 goes to the top bin).
    distinct: one bin per distinct value when there are at most rho of
    them, otherwise uniform.
    """
    if rho < 1:
        raise ValueError("rho must be at least 1")
    values = np.asarray(values, dtype=float)
    if binning == "distinct":
        uniq, inv = np.unique(values, return_inverse=True)
        if uniq.size <= rho:
            return inv.astype(np.int64)
    elif binning != "uniform":
        raise ValueError(f"unknown binning {binning!r}")
    return np.minimum(np.floor(values * rho).astype(np.int64), rho - 1).clip(0)


def aggregate_backup(m: IMDP, next_values, rho, binning="uniform", bound="lower", source="sum"):
    """One robust backup after merging successors into value bins.

    A bin acts as a single successor whose value is the smallest value of
    its members.  With source="sum" its interval is the clamped sum of the
    members' intervals, so the result never exceeds the plain backup.  With
    source="counts" the interval is recomputed from the pooled sample count
    of the bin (needs m.meta["row_counts"] and m.meta["table"]), which is
    what the per-bin confidence accounting assumes.
    """
    sense = {"lower": "min", "upper": "max"}[bound]
    next_values = np.asarray(next_values, dtype=float)
    bins = value_bins(next_values, rho, binning)
    n_bins = int(bins.max()) + 1 if bins.size else 0
    bin_val = np.full(n_bins, np.inf)
    np.minimum.at(bin_val, bins, next_values)
    ptr, succ, low, up = m.csr()
    n_rows = ptr.size - 1
    rid = np.repeat(np.arange(n_rows), np.diff(ptr))
    key = rid * n_bins + bins[succ]
    uk, inv = np.unique(key, return_inverse=True)
    if source == "sum":
        m_low = np.minimum(np.bincount(inv, weights=low), 1.0)
        m_up = np.minimum(np.bincount(inv, weights=up), 1.0)
    elif source == "counts":
        table = m.meta["table"]
        n_in = np.bincount(inv, weights=m.meta["row_counts"]).round().astype(np.int64)
        m_low, m_up = table.lookup(table.N - n_in)
    else:
        raise ValueError(f"unknown interval source {source!r}")
    m_rid = uk // n_bins
    m_bin = uk % n_bins
    m_ptr = np.searchsorted(m_rid, np.arange(n_rows + 1))
    q_rows = _batch_inner(m_ptr, m_bin, m_low, m_up, bin_val[m_bin], sense)
    V, act = _argmax_choices(m, q_rows, m.n_states)
    V[m.terminal] = 0.0
    act[m.terminal] = -1
    V[m.goal] = 1.0
    return V, act, bins


def improved_synthesis(m: IMDP, K, rho, binning="uniform", source="sum"):
    """Finite-horizon lower-bound synthesis with per-step value aggregation.

    Returns values at k=0, the policy and the confidence accounting.  With
    source="counts" that is alpha = beta * rho * K * |Act|; with "sum" the
    member intervals are used as they are and the model's own accounting
    applies.
    """
    from .abstraction import ConfidenceReport

    if math.isinf(K):
        raise ValueError("aggregation applies to finite horizons only")
    K = int(K)
    V = m.goal.astype(float)
    actions = np.full((K, m.n_states), -1, dtype=np.int64)
    values = np.zeros((K + 1, m.n_states))
    values[K] = V
    for k in range(K - 1, -1, -1):
        V, actions[k], _ = aggregate_backup(m, V, rho, binning, source=source)
        values[k] = V
    beta = m.meta.get("beta")
    if source == "counts" and beta is not None:
        report = ConfidenceReport.aggregated(beta, rho, K, m.n_actions)
    else:
        report = m.meta.get("confidence")
    return V, TimeVaryingPolicy(actions, K, values), report


# explicit file format

def _label(m: IMDP, s):
    labels = []
    if m.initial is not None and s == m.initial:
        labels.append("init")
    if m.goal[s]:
        labels.append("goal")
    if m.critical[s]:
        labels.append("critical")
    if m.absorbing is not None and s == m.absorbing:
        labels.append("absorbing")
    return ",".join(labels) if labels else "-"


def _fmt(x):
    return f"{x:.12g}"


def export_explicit(m: IMDP, path):
    """Write <path>.sta ("id label") and <path>.tra ("src action dst low up").

    Transitions are sorted by (src, action, dst); zero-probability
    successors and the implicit self-loops of action-less states are not
    written.  Returns the two file paths.
    """
    path = os.fspath(path)
    sta, tra = path + ".sta", path + ".tra"
    try:
        with open(sta, "w") as fh:
            for s in range(m.n_states):
                fh.write(f"{s} {_label(m, s)}\n")
        with open(tra, "w") as fh:
            for s in range(m.n_states):
                acts, rows = m.enabled[s], m.row_of[s]
                for j in np.argsort(acts, kind="stable"):
                    row = m.rows[rows[j]]
                    a = int(acts[j])
                    for d, lo, up in zip(row.succ, row.low, row.up):
                        fh.write(f"{s} {a} {int(d)} {_fmt(lo)} {_fmt(up)}\n")
    except OSError as exc:
        raise OSError(f"cannot write explicit model at {path}: {exc}") from exc
    return sta, tra


def parse_explicit(path) -> IMDP:
    """Read files written by export_explicit back into an IMDP."""
    path = os.fspath(path)
    sta, tra = path + ".sta", path + ".tra"
    labels = {}
    with open(sta) as fh:
        for line in fh:
            sid, lab = line.split()
            labels[int(sid)] = set() if lab == "-" else set(lab.split(","))
    n = max(labels) + 1 if labels else 0
    entries = {}
    with open(tra) as fh:
        for line in fh:
            s, a, d, lo, up = line.split()
            entries.setdefault((int(s), int(a)), []).append((int(d), float(lo), float(up)))
    rows, row_index = [], {}
    enabled = [[] for _ in range(n)]
    row_of = [[] for _ in range(n)]
    for (s, a), trans in sorted(entries.items()):
        key = (a, tuple(trans))
        if key not in row_index:
            row_index[key] = len(rows)
            d, lo, up = zip(*trans)
            rows.append(Row(d, lo, up))
        enabled[s].append(a)
        row_of[s].append(row_index[key])
    find = lambda tag: [s for s in range(n) if tag in labels[s]]
    goal = np.zeros(n, bool)
    goal[find("goal")] = True
    crit = np.zeros(n, bool)
    crit[find("critical")] = True
    absorbing = find("absorbing")
    init = find("init")
    return IMDP(n, rows, enabled, row_of, goal, crit,
                absorbing=absorbing[0] if absorbing else None,
                initial=init[0] if init else None)
