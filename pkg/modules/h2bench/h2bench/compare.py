#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["parser", "main"]
__doc__ = """\
    Compare baseline, block cache, structure-only, detail-only and the full two-stage cache

structure-only runs with τ2 = 0, detail-only with τ1 = 0.
"""

from argparse import ArgumentParser, Namespace, RawTextHelpFormatter
from pathlib import Path

if __name__ == "__main__":
    from sys import path

    path[0] = str(Path(__file__).parents[1])
    parser = ArgumentParser(description=__doc__, formatter_class=RawTextHelpFormatter)
else:
    from .init import subparsers

    parser = subparsers.add_parser("compare", description=__doc__, formatter_class=RawTextHelpFormatter)

from h2bench.common import add_common_arguments, guarded, load_config, parse_args as _parse_args, write_outputs


def parse_args(argv: None | list[str] = None, /) -> Namespace:
    return _parse_args(parser, argv)


def _run(args: Namespace, /):
    from h2cache.tool import compare_policies

    cfg = load_config(args)
    write_outputs(compare_policies(cfg), cfg)


def main(argv: None | list[str] | Namespace = None, /) -> int:
    if isinstance(argv, Namespace):
        args = argv
    else:
        args = parse_args(argv)
    return guarded(_run, args)


add_common_arguments(parser)
parser.set_defaults(func=main)


if __name__ == "__main__":
    raise SystemExit(main())
