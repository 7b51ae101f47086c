"""Abstraction of a grouped linear system on a grid into an interval MDP.

States are the grid cells (flat ids 0..n_cells-1) plus one absorbing state
(id n_cells) standing for everything outside the grid.  Action a steers
towards the center of cell a and is enabled in every cell that lies inside
the backward reachable set of that center.  Successor intervals come from
counting where the shifted noise samples d_a + w land.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import scenario
from .geometry import Partition, enabled_pairs
from .imdp import IMDP, Row
from .linsys import GroupedSystem


@dataclass(frozen=True)
class SampleSet:
    """N noise realizations of the grouped system (one per row)."""

    samples: np.ndarray
    seed: int | None = None
    source: str = ""

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if w.shape[0] < 1:
            raise ValueError("a sample set needs at least one sample")
        w.setflags(write=False)
        object.__setattr__(self, "samples", w)

    @property
    def N(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class ActionDef:
    id: int
    target: np.ndarray
    enabled_in: np.ndarray


@dataclass
class StatesActions:
    partition: Partition
    actions: list
    state_actions: list
    absorbing: int

    @property
    def n_states(self):
        return self.absorbing + 1

    @property
    def n_actions(self):
        return len(self.actions)

    @property
    def n_pairs(self):
        return int(sum(a.size for a in self.state_actions))

    @property
    def n_choices(self):
        """State-action pairs, counting one self-loop for every state without actions."""
        return int(sum(max(1, a.size) for a in self.state_actions))


@dataclass(frozen=True)
class CountVector:
    """Number of shifted samples per successor; the absorbing state has id n_cells."""

    succ: np.ndarray
    n_in: np.ndarray
    N: int

    @property
    def n_out(self):
        return self.N - self.n_in


@dataclass(frozen=True)
class ConfidenceReport:
    beta: float
    mode: str
    unique_interval_count: int
    alpha: float
    params: dict = field(default_factory=dict)

    @classmethod
    def generic(cls, beta, n_actions, n_states):
        count = int(n_actions) * int(n_states)
        return cls(beta, "generic", count, beta * count)

    @classmethod
    def symmetric(cls, beta, counts, n_actions):
        count = int(np.prod([2 * r - 1 for r in counts])) + int(n_actions)
        return cls(beta, "symmetric", count, beta * count)

    @classmethod
    def aggregated(cls, beta, rho, K, n_actions):
        count = int(rho) * int(K) * int(n_actions)
        return cls(beta, "aggregated", count, beta * count, {"rho": int(rho), "K": int(K)})


def unique_interval_count(part: Partition, mode="generic", rho=None, K=None):
    n_act = part.n_cells
    if mode == "generic":
        return n_act * (part.n_cells + 1)
    if mode == "symmetric":
        return int(np.prod([2 * r - 1 for r in part.counts])) + n_act
    if mode == "aggregated":
        return int(rho) * int(K) * n_act
    raise ValueError(f"unknown confidence mode {mode!r}")


def beta_for_alpha(alpha, part: Partition, mode="generic", rho=None, K=None):
    """Per-interval beta that yields overall confidence 1 - alpha."""
    return alpha / unique_interval_count(part, mode, rho, K)


def build_states_actions(part: Partition, gsys: GroupedSystem, skip_critical=True) -> StatesActions:
    """One action per cell targeting its center; enabled where the cell fits the backward reachable set.

    With skip_critical, critical cells get no actions (they are terminal in
    every synthesis, and as sinks each counts as a single choice).
    """
    if gsys.n != part.dim:
        raise ValueError("system and partition dimensions differ")
    targets = part.centers()
    a_ids, s_ids = enabled_pairs(gsys, part, targets)
    if skip_critical and part.critical_cells:
        _, crit = part.label_arrays()
        keep = ~crit[s_ids]
        a_ids, s_ids = a_ids[keep], s_ids[keep]
    n = part.n_cells
    by_action = np.lexsort((s_ids, a_ids))
    a_sorted, s_sorted = a_ids[by_action], s_ids[by_action]
    a_ptr = np.searchsorted(a_sorted, np.arange(n + 1))
    actions = [ActionDef(i, targets[i], s_sorted[a_ptr[i]:a_ptr[i + 1]]) for i in range(n)]
    by_state = np.lexsort((a_ids, s_ids))
    a_st, s_st = a_ids[by_state], s_ids[by_state]
    s_ptr = np.searchsorted(s_st, np.arange(n + 2))
    state_actions = [a_st[s_ptr[i]:s_ptr[i + 1]] for i in range(n + 1)]
    return StatesActions(part, actions, state_actions, absorbing=n)


def count_successors(action: ActionDef, samples: SampleSet, part: Partition) -> CountVector:
    ids = part.locate_many(np.asarray(action.target) + samples.samples)
    ids = np.where(ids < 0, part.n_cells, ids)
    succ, n_in = np.unique(ids, return_counts=True)
    return CountVector(succ, n_in, samples.N)


def _offset_counts(samples: SampleSet, part: Partition):
    """Counts of samples per relative cell offset from a center target."""
    off = np.floor(0.5 + samples.samples / part.widths).astype(np.int64)
    uniq, n_in = np.unique(off, axis=0, return_counts=True)
    return uniq, n_in


def _symmetric_counts(action: ActionDef, offsets, n_in, part: Partition, N) -> CountVector:
    cell = np.array(part.cell(action.id))
    dest = cell + offsets
    inside = np.all((dest >= 0) & (dest < np.array(part.counts)), axis=1)
    flat = dest[inside] @ part._strides
    succ = flat.astype(np.int64)
    cnt = n_in[inside]
    absorbed = N - int(cnt.sum())
    if absorbed > 0:
        succ = np.append(succ, part.n_cells)
        cnt = np.append(cnt, absorbed)
    order = np.argsort(succ)
    return CountVector(succ[order], cnt[order], N)


def intervals_for_action(counts: CountVector, table: scenario.IntervalTable) -> Row:
    """Interval row: successors with samples get the PAC interval, others are left out."""
    if table.N != counts.N:
        raise ValueError(f"interval table built for N={table.N}, counts use N={counts.N}")
    keep = counts.n_in > 0
    low, up = table.lookup(counts.N - counts.n_in[keep])
    return Row(counts.succ[keep], low, up)


def _point_row(counts: CountVector, estimator, beta):
    keep = counts.n_in > 0
    n_in = counts.n_in[keep]
    if estimator == "frequentist":
        p = n_in / counts.N
        return Row(counts.succ[keep], p, p)
    if estimator == "hoeffding":
        iv = [scenario.hoeffding_interval(counts.N, beta, int(k)) for k in n_in]
        return Row(counts.succ[keep], [i.low for i in iv], [i.up for i in iv])
    raise ValueError(f"unknown estimator {estimator!r}")


def build_imdp(gsys: GroupedSystem, part: Partition, samples: SampleSet, beta, mode="generic",
               states_actions: StatesActions | None = None, estimator="scenario", initial=None):
    """Assemble the interval MDP and its confidence accounting.

    mode="symmetric" counts samples once per relative cell offset and reuses
    the counts for every action (valid on uniform grids with center targets).
    estimator may be "scenario" (PAC intervals), "frequentist" (point
    estimates as degenerate intervals) or "hoeffding".
    """
    if mode not in ("generic", "symmetric"):
        raise ValueError(f"unknown mode {mode!r}")
    if samples.dim != part.dim:
        raise ValueError("sample and partition dimensions differ")
    sa = states_actions or build_states_actions(part, gsys)
    if sa.partition is not part and (sa.partition.counts != part.counts
                                     or not np.array_equal(sa.partition.origin, part.origin)
                                     or not np.array_equal(sa.partition.widths, part.widths)):
        raise ValueError("states/actions were built for a different partition")
    N = samples.N
    table = scenario.cached_table(N, beta) if estimator == "scenario" else None
    used = [a for a in sa.actions if a.enabled_in.size]
    if mode == "symmetric":
        offsets, off_n = _offset_counts(samples, part)
    rows, row_index, row_counts = [], {}, []
    for act in used:
        if mode == "symmetric":
            counts = _symmetric_counts(act, offsets, off_n, part, N)
        else:
            counts = count_successors(act, samples, part)
        row = intervals_for_action(counts, table) if table is not None else _point_row(counts, estimator, beta)
        row_index[act.id] = len(rows)
        rows.append(row)
        row_counts.append(counts.n_in[counts.n_in > 0])
    row_of = [np.array([row_index[a] for a in acts], dtype=np.int64) for acts in sa.state_actions]
    goal, crit = part.label_arrays()
    goal = np.append(goal, False)
    crit = np.append(crit, False)
    if mode == "symmetric":
        report = ConfidenceReport.symmetric(beta, part.counts, sa.n_actions)
    else:
        report = ConfidenceReport.generic(beta, sa.n_actions, sa.n_states)
    m = IMDP(sa.n_states, rows, sa.state_actions, row_of, goal, crit,
             absorbing=sa.absorbing, initial=initial, n_actions=sa.n_actions,
             meta={"N": N, "beta": beta, "mode": mode, "estimator": estimator, "confidence": report,
                   "table": table,
                   "row_counts": np.concatenate(row_counts) if row_counts else np.zeros(0, np.int64)})
    return m, report
