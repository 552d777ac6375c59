#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["parser", "main"]
__doc__ = """\
    Time a single similarity check for every metric

Prints the median wall time per check and its ratio to the full relative L2.
"""

from argparse import ArgumentParser, Namespace, RawTextHelpFormatter
from pathlib import Path

if __name__ == "__main__":
    from sys import path

    path[0] = str(Path(__file__).parents[1])
    parser = ArgumentParser(description=__doc__, formatter_class=RawTextHelpFormatter)
else:
    from .init import subparsers

    parser = subparsers.add_parser("bench-metric", description=__doc__, formatter_class=RawTextHelpFormatter)

from h2bench.common import add_common_arguments, guarded, load_config, parse_args as _parse_args, write_outputs


def parse_args(argv: None | list[str] = None, /) -> Namespace:
    return _parse_args(parser, argv)


def _shape(value: str, /) -> tuple[int, int, int, int]:
    from argparse import ArgumentTypeError

    try:
        dims = tuple(int(n) for n in value.replace("x", ",").split(",") if n.strip())
    except ValueError:
        raise ArgumentTypeError(f"not a shape: {value!r}") from None
    if len(dims) != 4 or any(n < 1 for n in dims):
        raise ArgumentTypeError(f"need 4 positive dims, got {value!r}")
    return dims # type: ignore


def _run(args: Namespace, /):
    from h2cache.tool import bench_metric

    cfg = load_config(args)
    write_outputs(bench_metric(cfg, shape=args.shape, divisor=args.divisor, trials=args.trials), cfg)


def main(argv: None | list[str] | Namespace = None, /) -> int:
    if isinstance(argv, Namespace):
        args = argv
    else:
        args = parse_args(argv)
    return guarded(_run, args)


add_common_arguments(parser)
parser.add_argument("--shape", type=_shape, default=(1, 1, 256, 256), help="tensor shape B,C,H,W, default: 1,1,256,256")
parser.add_argument("-d", "--divisor", type=int, help="PFS divisor, defaults to dp1")
parser.add_argument("-n", "--trials", type=int, default=20, help="timed checks per metric, default: 20")
parser.set_defaults(func=main)


if __name__ == "__main__":
    raise SystemExit(main())
