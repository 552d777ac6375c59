#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["parser", "main"]
__doc__ = """\
    Sweep the two-stage cache over a τ1 × τ2 grid

live    timed runs per cell and seed, quality against the uncached baseline
replay  decisions against recorded cache-free traces, cells run in parallel

The `best` column marks the cells with the highest mean of each quality (or hit) measure.
"""

from argparse import ArgumentParser, Namespace, RawTextHelpFormatter
from pathlib import Path

if __name__ == "__main__":
    from sys import path

    path[0] = str(Path(__file__).parents[1])
    parser = ArgumentParser(description=__doc__, formatter_class=RawTextHelpFormatter)
else:
    from .init import subparsers

    parser = subparsers.add_parser("sweep-thresholds", description=__doc__, formatter_class=RawTextHelpFormatter)

from h2bench.common import add_common_arguments, guarded, load_config, parse_args as _parse_args, write_outputs


def parse_args(argv: None | list[str] = None, /) -> Namespace:
    return _parse_args(parser, argv)


def _run(args: Namespace, /):
    from h2cache.tool import sweep_thresholds
    from h2cache.trace import Trace

    cfg = load_config(args, tau1_grid=args.tau1_grid, tau2_grid=args.tau2_grid)
    trace = Trace.load(args.trace) if args.trace else None
    write_outputs(sweep_thresholds(cfg, mode=args.mode, trace=trace), cfg)


def main(argv: None | list[str] | Namespace = None, /) -> int:
    if isinstance(argv, Namespace):
        args = argv
    else:
        args = parse_args(argv)
    return guarded(_run, args)


add_common_arguments(parser)
parser.add_argument("--tau1-grid", help="comma separated τ1 values, `inf` allowed")
parser.add_argument("--tau2-grid", help="comma separated τ2 values, `inf` allowed")
parser.add_argument("-m", "--mode", default="live", choices=("live", "replay"), help="evaluation mode, default: 'live'")
parser.add_argument("-t", "--trace", help="replay against this trace file (replay mode only)")
parser.set_defaults(func=main)


if __name__ == "__main__":
    raise SystemExit(main())
