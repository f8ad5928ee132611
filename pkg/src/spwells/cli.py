"""Command line entry point: ``spwells solve|limit|sweep-lambda|check``."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .experiment import (
    EXIT_CONFIG,
    EXIT_CONVERGENCE,
    EXIT_OK,
    ConfigError,
    build_context,
    check_suite,
    load_config,
    rows_to_csv,
    run,
    run_selection,
    run_status,
    solve_limit,
)
from .nehari import ConvergenceError, TSystemError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spwells", description=__doc__)
    p.add_argument("--version", action="version", version=f"spwells {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="limit problem, continuation, diagnostics and field dumps")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (defaults to output_dir in the config)")
    s.add_argument("--jobs", type=int, default=1, help="worker processes for batch configs")

    s = sub.add_parser("limit", help="limit problem only: w_Υ, c_Υ, tau and R")
    s.add_argument("--config", required=True)

    s = sub.add_parser("sweep-lambda", help="continuation only; diagnostics CSV on stdout")
    s.add_argument("--config", required=True)

    s = sub.add_parser("check", help="oracle cross-checks on small grids")
    s.add_argument("--grid-n", type=int, default=16)
    s.add_argument("--kernel-scale", type=float, default=1.0, help="fault injection: mis-scale the Coulomb kernel")
    s.add_argument("--seed", type=int, default=0)
    return p


def _print_outcome(outcome) -> None:
    items = outcome.items() if isinstance(outcome, dict) else [(None, outcome)]
    for ups, o in items:
        tag = "" if ups is None else f"[Υ={list(ups)}] "
        if o.limit is not None:
            print(f"{tag}c_Υ = {o.limit.c_upsilon:.12g}  tau = {o.limit.tau:.6g}  R = {o.limit.R:g}")
        for r in o.rows:
            print(f"{tag}λ = {r.lam:g}  energy = {r.energy:.12g}  residual = {r.residual:.3e}  {r.classification}")
        if o.report is not None:
            print(o.report.summary())
        if o.message:
            print(f"{tag}{o.message}", file=sys.stderr)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "check":
        ok, _ = check_suite(args.grid_n, args.kernel_scale, args.seed)
        return EXIT_OK if ok else 1
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "solve":
        outcome = run(cfg, args.out, jobs=args.jobs)
        _print_outcome(outcome)
        return run_status(outcome)

    if args.command == "sweep-lambda":
        outcomes = {ups: run_selection(cfg, ups, None, dump_fields=False) for ups in cfg.upsilon}
        for ups, o in outcomes.items():
            if cfg.batch:
                print(f"# upsilon {list(ups)}")
            sys.stdout.write(rows_to_csv(o.rows))
            if o.message:
                print(o.message, file=sys.stderr)
        return max(o.status for o in outcomes.values())

    # limit
    status = EXIT_OK
    report = []
    for ups in cfg.upsilon:
        ctx = build_context(cfg, ups)
        try:
            lim = solve_limit(cfg, ctx)
        except (ConvergenceError, TSystemError) as exc:
            print(f"limit problem failed for Υ={list(ups)}: {exc}", file=sys.stderr)
            status = EXIT_CONVERGENCE
            continue
        report.append({
            "upsilon": list(ups),
            "c_upsilon": lim.c_upsilon,
            "residual": lim.residual,
            "iterations": lim.iterations,
            "tau": lim.tau,
            "R": lim.R,
            "r_level": lim.r_level,
        })
    print(json.dumps(report if cfg.batch else (report[0] if report else {}), indent=2))
    return status


if __name__ == "__main__":
    raise SystemExit(main())
