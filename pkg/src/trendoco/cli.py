"""Command-line entry point.

Subcommands:

* ``run``     executes an experiment grid from a config file
* ``scaling`` runs the same grid plus slope fits and a log-log plot
* ``oracle``  solves the budgeted offline program for an ingested series
* ``demo``    writes a trend-filter overlay plot for an ingested series

Exit codes: 0 success, 1 configuration/input error, 2 at least one cell
failed.  ``TRENDOCO_WORKERS`` caps the worker pool (default: all cores).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import envgen, harness, oracle, svgplot
from .config import ConfigError
from .losses import scaled_squared_loss


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trendoco")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)

    scaling = sub.add_parser("scaling", help="run a grid and fit scaling slopes")
    scaling.add_argument("--config", required=True)
    scaling.add_argument("--out", required=True)
    scaling.add_argument("--fit", action="store_true",
                         help="write slope fits and a log-log plot")

    orc = sub.add_parser("oracle", help="offline-optimal fit of a CSV series")
    orc.add_argument("--input", required=True)
    orc.add_argument("--budget", type=float, required=True)
    orc.add_argument("--out", required=True)
    orc.add_argument("--column", default=None)

    demo = sub.add_parser("demo", help="trend-filter overlay plot")
    demo.add_argument("--input", required=True)
    demo.add_argument("--lambda", dest="lam", type=float, required=True)
    demo.add_argument("--out", required=True)
    demo.add_argument("--column", default=None)
    return parser


def _ingest(path, column):
    columns = [column] if column else None
    return envgen.ingest_csv(path, columns=columns)


def _cmd_run(args) -> int:
    config = harness.load_experiment_config(args.config)
    records = harness.run_cells(config, out_dir=args.out)
    failures = [r for r in records if r.status != "ok"]
    for r in failures:
        print(f"cell {r.cell_id} failed: {r.error}", file=sys.stderr)
    print(f"wrote {len(records)} records to {os.path.join(args.out, 'records.csv')}")
    return 2 if failures else 0


def _cmd_scaling(args) -> int:
    config = harness.load_experiment_config(args.config)
    records = harness.run_cells(config, out_dir=args.out)
    failures = [r for r in records if r.status != "ok"]
    for r in failures:
        print(f"cell {r.cell_id} failed: {r.error}", file=sys.stderr)
    if args.fit:
        groups, fits = {}, {}
        rows = []
        for spec in config.algorithms:
            algo_records = [r for r in records
                            if r.algorithm == spec.name and r.status == "ok"]
            by_n = {}
            for r in algo_records:
                if r.regret_offline > 0:
                    by_n.setdefault(r.n, []).append(r.regret_offline)
            if len(by_n) >= 4:
                slope, intercept, r2 = harness.fit_scaling_slope(algo_records)
                import math
                fits[spec.name] = (slope, intercept / math.log(10.0))
                rows.append([spec.name, repr(slope), repr(intercept), repr(r2)])
            ns = sorted(by_n)
            if ns:
                import statistics
                groups[spec.name] = (
                    ns, [statistics.median(by_n[n]) for n in ns])
        with open(os.path.join(args.out, "slopes.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["algorithm", "slope", "intercept", "r_squared"])
            writer.writerows(rows)
        if groups:
            # The fit is in natural log; convert to the base-10 axes of the
            # plot: slope is base-invariant, the intercept rescales.
            svg = svgplot.scaling_svg(groups, fits)
            with open(os.path.join(args.out, "scaling.svg"), "w") as fh:
                fh.write(svg)
        print(f"wrote fits for {len(rows)} algorithms to {args.out}")
    return 2 if failures else 0


def _cmd_oracle(args) -> int:
    series = _ingest(args.input, args.column)
    values = series.values
    if values.shape[1] != 1 and args.column is None:
        raise ConfigError(
            f"{args.input} has {values.shape[1]} numeric columns; pick one via --column"
        )
    n = values.shape[0]
    losses = [scaled_squared_loss(values[t]) for t in range(n)]
    budget = oracle.VariationBudget(c_n=args.budget, n=n)
    solution = oracle.solve_offline(losses, budget)
    oracle.solution_to_csv(solution, losses, budget, args.out)
    report = oracle.kkt_check(solution, losses, budget)
    print(
        f"objective {solution.objective:.6g}, lambda {solution.lam:.6g}, "
        f"stationarity residual {report.stationarity:.2e}"
    )
    return 0


def _cmd_demo(args) -> int:
    series = _ingest(args.input, args.column)
    values = series.values
    if values.shape[1] != 1:
        raise ConfigError(
            f"{args.input} has {values.shape[1]} numeric columns; pick one via --column"
        )
    y = values[:, 0]
    trend = oracle.l1_trend_filter(y, lam=args.lam)
    svg = svgplot.overlay_svg(series.denormalize(values)[:, 0],
                              series.denormalize(trend[:, None])[:, 0],
                              title=f"trend overlay (lambda={args.lam:g})")
    with open(args.out, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "scaling": _cmd_scaling,
        "oracle": _cmd_oracle,
        "demo": _cmd_demo,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
