"""Command-line entry point.

Exit codes: 0 certified (or the verb finished), 2 Unsatisfiable, 3 sample
budget exhausted without a verdict, 1 usage or input errors.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from ..abstraction import SampleSet, build_imdp, build_states_actions, beta_for_alpha
from ..imdp import export_explicit
from ..linsys import group_steps
from .models import MODELS, builtin_model
from .output import emit_results
from .planning import CERTIFIED, INCONCLUSIVE, UNSATISFIABLE, monte_carlo, offline_plan, online_control
from .problem import load_config
from .samplers import make_rng

log = logging.getLogger("pacimdp")

EXIT = {CERTIFIED: 0, UNSATISFIABLE: 2, INCONCLUSIVE: 3}


def _horizon(v):
    return math.inf if v.lower() in ("inf", "infinity") else int(v)


def _add_problem_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="problem file (YAML)")
    src.add_argument("--model", help=f"built-in model: {', '.join(sorted(MODELS))}")
    p.add_argument("--K", type=_horizon, help="horizon in grouped steps, or 'inf'")
    p.add_argument("--eta", type=float, help="probability threshold")
    p.add_argument("--x0", type=float, nargs="+", help="initial state")
    p.add_argument("--alpha", type=float, help="overall confidence budget")
    p.add_argument("--beta", type=float, help="per-interval confidence budget")
    p.add_argument("--N0", type=int, help="initial sample size")
    p.add_argument("--gamma", type=float, help="sample size growth factor")
    p.add_argument("--Nmax", dest="N_max", type=int, help="largest sample size")
    p.add_argument("--symmetric", action=argparse.BooleanOptionalAction, default=None,
                   help="count samples once per cell offset")
    p.add_argument("--rho", type=int, help="value bins per step (finite horizon only)")
    p.add_argument("--seed", type=int, help="64-bit RNG seed")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _load(args):
    if args.config:
        spec = load_config(args.config)
    elif args.model:
        spec = builtin_model(args.model)
    else:
        raise SystemExit("give --config or --model")
    for key in ("K", "eta", "x0", "N0", "gamma", "N_max", "symmetric", "rho", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(spec, key, v)
    if args.alpha is not None:
        spec.alpha, spec.beta = args.alpha, None
    if args.beta is not None:
        spec.alpha, spec.beta = None, args.beta
    return spec.validate()


def _print_report(report):
    print(f"{'N':>7} {'states':>8} {'choices':>9} {'transitions':>12} {'pr_low':>8} {'pr_up':>8} {'t_solve':>8}")
    for r in report.iterations:
        print(f"{r.N:>7} {r.states:>8} {r.choices:>9} {r.transitions:>12} "
              f"{r.pr_low:>8.4f} {r.pr_up:>8.4f} {r.t_solve:>8.3f}")
    print(f"verdict: {report.verdict}  (beta={report.beta:.3g}, alpha={report.alpha}, seed={report.seed})")


def cmd_abstract(args):
    spec = _load(args)
    gsys = group_steps(spec.system, spec.group)
    sa = build_states_actions(spec.partition, gsys)
    print(f"states: {sa.n_states}  actions: {sa.n_actions}  state-action pairs: {sa.n_pairs}")
    return 0


def _plan(args):
    spec = _load(args)
    report, policy, m = offline_plan(spec)
    _print_report(report)
    return spec, report, policy, m


def cmd_synthesize(args):
    _, report, _, _ = _plan(args)
    for path in emit_results(report, args.out):
        log.info("wrote %s", path)
    return EXIT[report.verdict]


def cmd_simulate(args):
    spec, report, policy, _ = _plan(args)
    if policy is not None:
        gsys = group_steps(spec.system, spec.group)
        rng = make_rng(report.seed + 1)
        for _ in range(args.runs):
            sat, traj = online_control(gsys, spec.partition, policy, spec.x0, spec.K, spec.noise, rng)
            report.trajectories.append(traj)
            print(f"trajectory {len(report.trajectories) - 1}: {'satisfied' if sat else 'violated'} "
                  f"after {len(traj.actions)} steps")
    emit_results(report, args.out)
    return EXIT[report.verdict]


def cmd_evaluate(args):
    spec, report, policy, _ = _plan(args)
    if policy is not None:
        gsys = group_steps(spec.system, spec.group)
        rate, ci = monte_carlo(gsys, spec.partition, policy, spec.x0, spec.K, spec.noise,
                               runs=args.runs, seed=report.seed + 1)
        report.empirical, report.empirical_ci = rate, ci
        print(f"empirical rate over {args.runs} runs: {rate:.4f}  95% CI [{ci[0]:.4f}, {ci[1]:.4f}]  "
              f"certified lower bound: {report.last.pr_low:.4f}")
    emit_results(report, args.out)
    return EXIT[report.verdict]


def cmd_export(args):
    spec = _load(args)
    gsys = group_steps(spec.system, spec.group)
    part = spec.partition
    mode = "symmetric" if spec.symmetric else "generic"
    beta = spec.beta if spec.beta is not None else beta_for_alpha(spec.alpha, part, mode)
    w = spec.noise.draw_grouped(make_rng(spec.seed), args.N or spec.N0, gsys.base.A, gsys.group)
    s0 = part.flat(part.locate(spec.x0)) if spec.x0 is not None else None
    m, _ = build_imdp(gsys, part, SampleSet(w, spec.seed), beta, mode, initial=s0)
    os.makedirs(args.out, exist_ok=True)
    for path in export_explicit(m, os.path.join(args.out, spec.name)):
        print(f"wrote {path}")
    return 0


def cmd_bench(args):
    args.model, args.config = args.name, None
    spec, report, policy, _ = _plan(args)
    if policy is not None and args.runs > 0:
        gsys = group_steps(spec.system, spec.group)
        rate, ci = monte_carlo(gsys, spec.partition, policy, spec.x0, spec.K, spec.noise,
                               runs=args.runs, seed=report.seed + 1)
        report.empirical, report.empirical_ci = rate, ci
        print(f"empirical rate: {rate:.4f}  95% CI [{ci[0]:.4f}, {ci[1]:.4f}]")
    emit_results(report, args.out)
    return EXIT[report.verdict]


def build_parser():
    parser = argparse.ArgumentParser(prog="pacimdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    specs = {
        "abstract": (cmd_abstract, "build states and enabled actions, print their sizes"),
        "synthesize": (cmd_synthesize, "run the sample-growth planning loop"),
        "simulate": (cmd_simulate, "synthesize, then simulate closed-loop trajectories"),
        "evaluate": (cmd_evaluate, "synthesize, then estimate the satisfaction rate by Monte Carlo"),
        "export": (cmd_export, "write one interval MDP in explicit-state format"),
    }
    for verb, (fn, text) in specs.items():
        p = sub.add_parser(verb, help=text)
        _add_problem_args(p)
        p.set_defaults(fn=fn)
        if verb in ("simulate", "evaluate"):
            p.add_argument("--runs", type=int, default=10 if verb == "simulate" else 10000)
        if verb == "export":
            p.add_argument("--N", type=int, help="sample size (default N0)")
    p = sub.add_parser("bench", help="run a built-in benchmark end to end")
    p.add_argument("name", choices=sorted(MODELS))
    _add_problem_args(p)
    p.add_argument("--runs", type=int, default=10000, help="Monte Carlo runs (0 to skip)")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
