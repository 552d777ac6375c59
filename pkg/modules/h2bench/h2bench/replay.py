#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["parser", "main"]
__doc__ = """\
    Replay the configured policy against a recorded trace

No stage is executed. The report has one row of hit counts, the JSON report adds the
per-step decisions and metric values.
"""

from argparse import ArgumentParser, Namespace, RawTextHelpFormatter
from pathlib import Path

if __name__ == "__main__":
    from sys import path

    path[0] = str(Path(__file__).parents[1])
    parser = ArgumentParser(description=__doc__, formatter_class=RawTextHelpFormatter)
else:
    from .init import subparsers

    parser = subparsers.add_parser("replay", description=__doc__, formatter_class=RawTextHelpFormatter)

from h2bench.common import add_common_arguments, guarded, load_config, parse_args as _parse_args, write_outputs


def parse_args(argv: None | list[str] = None, /) -> Namespace:
    return _parse_args(parser, argv)


def _run(args: Namespace, /):
    from h2cache.exception import ConfigError
    from h2cache.tool import replay_experiment
    from h2cache.trace import Trace

    cfg = load_config(args, trace_path=args.trace, policy=args.policy)
    if not cfg.trace_path:
        raise ConfigError("no trace path, pass -t/--trace or set trace_path", key="trace_path")
    write_outputs(replay_experiment(cfg, Trace.load(cfg.trace_path)), cfg)


def main(argv: None | list[str] | Namespace = None, /) -> int:
    if isinstance(argv, Namespace):
        args = argv
    else:
        args = parse_args(argv)
    return guarded(_run, args)


add_common_arguments(parser)
parser.add_argument("-t", "--trace", help="trace file, same as -s trace_path=...")
parser.add_argument("-p", "--policy", choices=("h2", "block", "none"), help="cache policy, same as -s policy=...")
parser.set_defaults(func=main)


if __name__ == "__main__":
    raise SystemExit(main())
