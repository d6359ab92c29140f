"""Command-line front door: ``kestenmarket <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import tails
from .config import load_config, preset_names, resolve_path, validate_config
from .errors import KestenMarketError
from .runner import _clean, kesten_report, network_report, run_scenario, solver_report
from .series_io import read_column


def _print_json(obj) -> None:
    print(json.dumps(_clean(obj), indent=2))


def _cmd_simulate(args) -> int:
    summary = run_scenario(args.config, args.out, workers=args.workers)
    print(f"wrote {len(summary['files']) + 1} files to {args.out}")
    for note in summary["warnings"]:
        print(f"warning: {note}", file=sys.stderr)
    return 0


def _cmd_solve(args) -> int:
    _print_json(solver_report(args.config))
    return 0


def _cmd_estimate_tail(args) -> int:
    x = np.abs(read_column(args.csv, args.column))
    x = x[x > 0]
    band = tails.hill_band(x, args.k)
    rr = tails.rank_regression(x, args.tail_fraction)
    _print_json({"column": args.column, "n": int(x.size), "hill": band.to_json(),
                 "power_law": band.power_law, "mild_suspected": band.mild_suspected,
                 "rank_regression": rr.to_json()})
    return 0


def _cmd_check_kesten(args) -> int:
    report = kesten_report(args.config)
    if report is None:
        print("no scalar or impact-market recurrence in this scenario", file=sys.stderr)
        return 1
    _print_json(report)
    return 0


def _cmd_network(args) -> int:
    report = network_report(args.config)
    if report is None:
        print("no [network] section in this scenario", file=sys.stderr)
        return 1
    _print_json(report)
    return 0


def _cmd_validate(args) -> int:
    result = validate_config(args.config)
    for note in result.warnings:
        print(f"warning: {note}", file=sys.stderr)
    if not result.ok:
        for diag in result.diagnostics:
            print(f"error: {diag}", file=sys.stderr)
        return 1
    print(f"ok: {result.config.path}")
    return 0


def _cmd_presets(args) -> int:
    names = preset_names()
    width = max(len(n) for n in names)
    for name in names:
        cfg = load_config(resolve_path(name))
        print(f"{name:<{width}}  {cfg.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kestenmarket",
        description="Kesten-type market feedback simulations and tail diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("simulate", help="run a scenario and write CSVs plus summary.json")
    p.add_argument("config", help="scenario file or preset name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None, help="parallel replica workers")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("solve-exponent", help="solve the tail-exponent moment equation")
    p.add_argument("config")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("estimate-tail", help="Hill band and rank regression of a CSV column")
    p.add_argument("csv")
    p.add_argument("--column", required=True)
    p.add_argument("--k", type=int, default=None, help="central Hill order (default: automatic)")
    p.add_argument("--tail-fraction", type=float, default=0.01)
    p.set_defaults(func=_cmd_estimate_tail)

    p = sub.add_parser("check-kesten", help="check the tail-theorem conditions")
    p.add_argument("config")
    p.set_defaults(func=_cmd_check_kesten)

    p = sub.add_parser("network", help="weight-matrix diagnostics")
    p.add_argument("config")
    p.set_defaults(func=_cmd_network)

    p = sub.add_parser("validate", help="validate a scenario file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("presets", help="list shipped scenarios")
    p.set_defaults(func=_cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (KestenMarketError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
