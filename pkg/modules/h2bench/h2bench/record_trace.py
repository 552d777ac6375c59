#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["parser", "main"]
__doc__ = """\
    Record a cache-free run to a trace file

The trace holds (z_t, z′_t, ε) of every sampler step and feeds `replay` and
`sweep-thresholds --mode replay`.
"""

from argparse import ArgumentParser, Namespace, RawTextHelpFormatter
from pathlib import Path

if __name__ == "__main__":
    from sys import path

    path[0] = str(Path(__file__).parents[1])
    parser = ArgumentParser(description=__doc__, formatter_class=RawTextHelpFormatter)
else:
    from .init import subparsers

    parser = subparsers.add_parser("record-trace", description=__doc__, formatter_class=RawTextHelpFormatter)

from h2bench.common import add_common_arguments, guarded, load_config, parse_args as _parse_args


def parse_args(argv: None | list[str] = None, /) -> Namespace:
    return _parse_args(parser, argv)


def _run(args: Namespace, /):
    from h2cache.exception import ConfigError
    from h2cache.log import logger
    from h2cache.trace import record_trace

    cfg = load_config(args, trace_path=args.output)
    if not cfg.trace_path:
        raise ConfigError("no trace path, pass -o/--output or set trace_path", key="trace_path")
    seed = cfg.seeds[0] if args.seed is None else args.seed
    sched = cfg.build_schedule()
    trace = record_trace(
        cfg.build_backend(sched), sched, cfg.initial_latent(seed), cfg.build_conditioning(),
        steps=cfg.sample_steps,
    )
    trace.save(cfg.trace_path)
    logger.info("[\x1b[1;32mGOOD\x1b[0m] wrote \x1b[4;34m%s\x1b[0m", cfg.trace_path)


def main(argv: None | list[str] | Namespace = None, /) -> int:
    if isinstance(argv, Namespace):
        args = argv
    else:
        args = parse_args(argv)
    return guarded(_run, args)


add_common_arguments(parser)
parser.add_argument("-o", "--output", help="trace file, same as -s trace_path=...")
parser.add_argument("--seed", type=int, help="seed of z_T, defaults to the first configured seed")
parser.set_defaults(func=main)


if __name__ == "__main__":
    raise SystemExit(main())
