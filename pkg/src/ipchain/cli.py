"""Command-line entry point: ``ipchain <subcommand> [--config FILE] [--set key=value ...]``.

Exit codes: 0 success, 1 an oracle check exceeded its tolerance, 2 bad
configuration, 3 a simulation failed (partial outputs are flagged in
``run.json``), 4 any other numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import experiments
from .config import parse_config, parse_overrides
from .errors import ConfigurationError, IpchainError, SimulationError

log = logging.getLogger("ipchain")


def _common(parser):
    parser.add_argument("--config", help="flat key = value file, or a config.json echo from an earlier run")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override one config key"
    )
    parser.add_argument("--outdir", help="shorthand for --set outdir=DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipchain", description="Spin-boson dynamics with chain, star and interaction-picture MPS.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chain-coeffs", help="write chain and star coefficients as JSON")
    _common(p)
    p.add_argument("-o", "--output", help="output path (default OUTDIR/chain_coeffs.json)")

    p = sub.add_parser("simulate", help="run one trajectory")
    _common(p)
    p.add_argument("--gnuplot", action="store_true", help="also write plot.gp referencing the CSVs")

    p = sub.add_parser("compare", help="run several schemes on the same bath")
    _common(p)
    p.add_argument("--schemes", default="IC,C,S", help="comma list of SCHEME or SCHEME:local_dim (default IC,C,S)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--gnuplot", action="store_true")

    p = sub.add_parser("oracle-check", help="compare a small run against exact propagation")
    _common(p)
    p.add_argument("--reference", choices=("chain", "native"), default="chain")
    p.add_argument("--tolerance", type=float, help="exit with status 1 if the max error exceeds this")
    p.add_argument("--gnuplot", action="store_true")

    p = sub.add_parser("bench", help="time matched C and IC runs and evaluate the SVD cost model")
    _common(p)
    p.add_argument("--dim-c", type=int, default=60)
    p.add_argument("--dim-ic", type=int, default=10)
    return parser


def _resolve(args):
    overrides = parse_overrides(args.overrides)
    if args.outdir:
        overrides["outdir"] = args.outdir
    return parse_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _resolve(args)
        if args.command == "chain-coeffs":
            print(experiments.cmd_chain_coeffs(config, args.output))
        elif args.command == "simulate":
            summary = experiments.cmd_simulate(config, gnuplot=args.gnuplot)
            print(json.dumps(summary, sort_keys=True))
        elif args.command == "compare":
            schemes = [s for s in args.schemes.split(",") if s.strip()]
            summary = experiments.cmd_compare(config, schemes, workers=args.workers, gnuplot=args.gnuplot)
            print(json.dumps(summary, indent=2, sort_keys=True))
        elif args.command == "oracle-check":
            summary = experiments.cmd_oracle_check(config, reference=args.reference, gnuplot=args.gnuplot)
            print(json.dumps(summary, sort_keys=True))
            if args.tolerance is not None and summary["max_abs_error"] >= args.tolerance:
                return 1
        elif args.command == "bench":
            report = experiments.cmd_bench(config, dim_c=args.dim_c, dim_ic=args.dim_ic)
            print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 3
    except IpchainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
