"""Command-line entry point: ``translot {run,solve,gap,export-lp,plot-data}``."""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .config import load_instance, load_study
from .errors import ConfigurationError, ModelInfeasible
from .experiments import (PIVOTS, HeuristicSettings, boxplot_csv, boxplot_data, method_etc,
                          pivots_csv, read_records_csv, run_study)
from .heuristic import RecedingHorizonPolicy, estimate
from .milp import build_lp1, solve_static
from .mip import write_lp
from .sdp import solve_sdp1, solve_sdp2


def _state(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"state must look like '3,-2', got {text!r}") from None
    return a, b


def _fmt(x) -> str:
    return format(x, ".12g") if isinstance(x, float) else str(x)


def _emit(rows, header, out) -> None:
    fh = open(out, "w", newline="") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    finally:
        if out:
            fh.close()


def cmd_run(args) -> int:
    spec = load_study(args.study)
    out = Path(args.out or f"study-{spec.name}")
    res = run_study(spec, out, workers=args.workers)
    sys.stdout.write(pivots_csv(res.pivots))
    failed = sum(not r.ok for r in res.records)
    if failed:
        print(f"{failed} instance(s) failed; see {out / 'records.csv'}", file=sys.stderr)
    return 0


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    states = args.state or [(0, 0)]
    if args.method in ("sdp1", "sdp2"):
        table = (solve_sdp1 if args.method == "sdp1" else solve_sdp2)(inst, initial_states=states)
        if args.table:
            with open(args.table, "w", newline="") as fh:
                table.write_csv(fh)
        rows = []
        for s in states:
            a = table.action(1, *s)
            rows.append([args.method, s[0], s[1], table.value(1, s), a.W, a.Q1, a.Q2])
        _emit(rows, ["method", "i1", "i2", "cost", "W", "Q1", "Q2"], args.out)
    elif args.method == "milp":
        rows = []
        for s in states:
            plan = solve_static(build_lp1(inst, s, args.period, n_regions=args.regions),
                                args.backend)
            for k in range(plan.W.size):
                rows.append([s[0], s[1], args.period + k, plan.objective, float(plan.W[k]),
                             float(plan.Q[k, 0]), float(plan.Q[k, 1]), float(plan.I[k, 0]),
                             float(plan.I[k, 1])])
        _emit(rows, ["i1", "i2", "period", "objective", "W", "Q1", "Q2", "I1", "I2"], args.out)
    else:
        policy = RecedingHorizonPolicy(inst, backend=args.backend, n_regions=args.regions,
                                       seed=args.seed)
        rows = []
        for k, s in enumerate(states):
            est = estimate(inst, s, args.alpha, args.rel_halfwidth, seed=args.seed + k + 1,
                           policy=policy, max_n=args.max_n)
            rows.append(["heuristic", s[0], s[1], est.mean, est.halfwidth, est.n,
                         int(est.converged)])
        _emit(rows, ["method", "i1", "i2", "mean", "halfwidth", "n", "converged"], args.out)
    return 0


def cmd_gap(args) -> int:
    inst = load_instance(args.instance)
    states = args.state or [(0, 0)]
    m1, m2 = args.methods.split(",")
    settings = HeuristicSettings(rel_halfwidth=args.rel_halfwidth, alpha=args.alpha,
                                 max_n=args.max_n, backend=args.backend)
    e1, hw1, _ = method_etc(m1, inst, states, settings, args.seed)
    e2, hw2, _ = method_etc(m2, inst, states, settings, args.seed)
    gap = 100.0 * (e2 - e1) / e1
    hw = 100.0 * (hw1 ** 2 + hw2 ** 2) ** 0.5 / e1
    _emit([[m1, m2, e1, e2, gap, hw]], ["method1", "method2", "etc1", "etc2", "gap",
                                        "gap_halfwidth"], args.out)
    return 0


def cmd_export_lp(args) -> int:
    inst = load_instance(args.instance)
    sm = build_lp1(inst, args.state or (0, 0), args.period, n_regions=args.regions)
    text = write_lp(sm.model, comment=f"{inst.name or 'instance'} from period {args.period}")
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_plot_data(args) -> int:
    records = read_records_csv(Path(args.records).read_text())
    out = boxplot_csv(boxplot_data(records, args.pivot), args.pivot)
    if args.out:
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="translot",
                                description="Two-location lot sizing with transshipment.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a gap study from a TOML study file")
    r.add_argument("study")
    r.add_argument("--out", help="output directory (default: study-<name>)")
    r.add_argument("--workers", type=int, help="worker processes (default: $TRANSLOT_WORKERS or 1)")
    r.set_defaults(func=cmd_run)

    def instance_args(sp, with_states=True):
        sp.add_argument("instance", help="TOML instance file")
        if with_states:
            sp.add_argument("--state", type=_state, action="append",
                            help="opening inventory 'i1,i2' (repeatable; default 0,0)")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--regions", type=int, default=10, help="loss partition regions")
        sp.add_argument("--backend", default="highs",
                        help="MILP backend: builtin, highs or external:<command>")

    def sim_args(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--alpha", type=float, default=0.95)
        sp.add_argument("--rel-halfwidth", type=float, default=1e-3)
        sp.add_argument("--max-n", type=int, default=1_000_000)

    s = sub.add_parser("solve", help="solve one instance with one method")
    instance_args(s)
    s.add_argument("--method", choices=("sdp1", "sdp2", "milp", "heuristic"), default="sdp2")
    s.add_argument("--period", type=int, default=1, help="first period of the static model")
    s.add_argument("--table", help="also write the full value table (dynamic programs)")
    sim_args(s)
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("gap", help="percentage gap between two methods on one instance")
    instance_args(g)
    g.add_argument("--methods", default="sdp1,sdp2", help="pair such as sdp1,sdp2 or sdp2,heuristic")
    sim_args(g)
    g.set_defaults(func=cmd_gap)

    e = sub.add_parser("export-lp", help="write the static model in LP text format")
    instance_args(e, with_states=False)
    e.add_argument("--state", type=_state, help="opening inventory 'i1,i2' (default 0,0)")
    e.add_argument("--period", type=int, default=1)
    e.set_defaults(func=cmd_export_lp)

    d = sub.add_parser("plot-data", help="box-plot summaries from a records CSV")
    d.add_argument("records")
    d.add_argument("--pivot", choices=PIVOTS + ("all",), default="pattern1")
    d.add_argument("--out")
    d.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ModelInfeasible, ValueError, KeyError) as exc:
        print(f"translot: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
