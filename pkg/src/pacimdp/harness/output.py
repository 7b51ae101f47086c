"""CSV artifacts of a run: per-iteration report, values at k = 0, trajectories."""
from __future__ import annotations

import csv
import os

from .planning import REPORT_FIELDS, RunReport

VALUE_FIELDS = ("state", "pr_low", "pr_up")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return v


def emit_results(report: RunReport, out_dir):
    """Write run_report.csv, values_k0.csv and trajectory_<i>.csv; returns the paths written.

    Column order is fixed and every file starts with a header row.  In
    trajectory files the state vector x is spread over columns x0..x{n-1}.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    path = os.path.join(out_dir, "run_report.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS + ("verdict", "seed"))
        for i, rec in enumerate(report.iterations):
            last = i == len(report.iterations) - 1
            w.writerow([_fmt(v) for v in rec.as_row()] + [report.verdict if last else "", report.seed])
    paths.append(path)
    path = os.path.join(out_dir, "values_k0.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(VALUE_FIELDS)
        if report.values_k0 is not None:
            up = report.values_up_k0
            for s, v in enumerate(report.values_k0):
                w.writerow([s, _fmt(float(v)), _fmt(float(up[s])) if up is not None else ""])
    paths.append(path)
    for i, tr in enumerate(report.trajectories):
        path = os.path.join(out_dir, f"trajectory_{i}.csv")
        n = tr.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "cell", "action"] + [f"x{j}" for j in range(n)])
            for k, x in enumerate(tr.states):
                cell = int(tr.cells[k]) if k < tr.cells.size else ""
                act = int(tr.actions[k]) if k < tr.actions.size else ""
                w.writerow([k, cell, act] + [_fmt(float(v)) for v in x])
        paths.append(path)
    return paths
