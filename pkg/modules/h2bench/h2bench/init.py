#!/usr/bin/env python3
# encoding: utf-8

__all__ = ["parser", "subparsers"]

from argparse import ArgumentParser, RawTextHelpFormatter

parser = ArgumentParser(
    description="h2cache experiment runner", 
    formatter_class=RawTextHelpFormatter, 
)
parser.add_argument("-v", "--version", action="store_true", help="print the version")
parser.set_defaults(func=None)
subparsers = parser.add_subparsers()

from . import run, sweep_thresholds, sweep_steps, ablate_pfs, record_trace, replay, bench_metric, compare
