#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["parser", "main"]
__doc__ = """\
    Compare the two-stage cache with pooled summaries (PFS) against the same cache on full tensors

For every τ2 and seed there is a "w/o pfs" row and a "pfs" row; the latter carries the
percentage change of run time and per-check time, and the quality and hit deltas.
"""

from argparse import ArgumentParser, Namespace, RawTextHelpFormatter
from pathlib import Path

if __name__ == "__main__":
    from sys import path

    path[0] = str(Path(__file__).parents[1])
    parser = ArgumentParser(description=__doc__, formatter_class=RawTextHelpFormatter)
else:
    from .init import subparsers

    parser = subparsers.add_parser("ablate-pfs", description=__doc__, formatter_class=RawTextHelpFormatter)

from h2bench.common import add_common_arguments, guarded, load_config, parse_args as _parse_args, write_outputs


def parse_args(argv: None | list[str] = None, /) -> Namespace:
    return _parse_args(parser, argv)


def _run(args: Namespace, /):
    from h2cache.tool import ablate_pfs

    cfg = load_config(args, tau2_grid=args.tau2_grid, ablation_metric=args.without)
    write_outputs(ablate_pfs(cfg), cfg)


def main(argv: None | list[str] | Namespace = None, /) -> int:
    if isinstance(argv, Namespace):
        args = argv
    else:
        args = parse_args(argv)
    return guarded(_run, args)


add_common_arguments(parser)
parser.add_argument("--tau2-grid", help="comma separated τ2 values")
parser.add_argument(
    "-w", "--without", choices=("full-rel-mean-abs", "full-rel-l2", "full-l2"), 
    help="metric of the variant without PFS, same as -s ablation_metric=...", 
)
parser.set_defaults(func=main)


if __name__ == "__main__":
    raise SystemExit(main())
