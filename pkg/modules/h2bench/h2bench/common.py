#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["add_common_arguments", "parse_args", "load_config", "write_outputs", "guarded"]

from argparse import ArgumentParser, Namespace
from collections.abc import Callable

from h2cache.const import EXIT_CONFIG_ERROR, EXIT_IO_ERROR, EXIT_OK, EXIT_RUNTIME_ERROR
from h2cache.exception import ConfigError
from h2cache.log import logger, set_level
from h2cache.tool import ExperimentConfig, RunReport, dumps_csv, emit_report, parse_config


def add_common_arguments(parser: ArgumentParser, /):
    parser.add_argument("config", nargs="?", help="config file (.toml, .yml, .json or flat `key = value` text), defaults apply without one")
    parser.add_argument(
        "-s", "--set", dest="overrides", metavar="KEY=VALUE", action="append", default=[], 
        help="override a config key, can be repeated, e.g. -s steps=50 -s tau1=inf", 
    )
    parser.add_argument("--tau1", help="joint-check threshold τ1, same as -s tau1=...")
    parser.add_argument("--tau2", help="detail-check threshold τ2, same as -s tau2=...")
    parser.add_argument("--seeds", help="comma separated seeds, same as -s seeds=...")
    parser.add_argument("--csv", help="write the CSV report to this path")
    parser.add_argument("--json", help="write the JSON report to this path")
    parser.add_argument("-ll", "--log-level", default="INFO", help="log level, a number or a name, default: 'INFO'")
    parser.add_argument("-l", "--license", action="store_true", help="print the license")
    parser.add_argument("-v", "--version", action="store_true", help="print the version")


def _print_meta(args: Namespace, /) -> bool:
    if getattr(args, "version", False):
        from h2bench import __version__
        print(".".join(map(str, __version__)))
        return True
    elif getattr(args, "license", False):
        from h2bench import __license__
        print(__license__)
        return True
    return False


def parse_args(parser: ArgumentParser, argv: None | list[str] = None, /) -> Namespace:
    args = parser.parse_args(argv)
    if _print_meta(args):
        raise SystemExit(0)
    return args


def load_config(args: Namespace, /, **extra: None | str) -> ExperimentConfig:
    """Config file (or defaults), then -s/--set pairs, then the named shortcuts and `extra`

    :raises ConfigError: bad file content or override
    """
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    pairs = list(args.overrides)
    named = {
        "tau1": args.tau1, 
        "tau2": args.tau2, 
        "seeds": args.seeds, 
        "output_csv": args.csv, 
        "output_json": args.json, 
        **extra, 
    }
    pairs.extend(f"{key}={value}" for key, value in named.items() if value is not None)
    return cfg.override(pairs)


def write_outputs(report: RunReport, cfg: ExperimentConfig, /):
    "write the configured report files, print the CSV when there is none"
    if not (cfg.output_csv or cfg.output_json):
        print(dumps_csv(report), end="")
        return
    if cfg.output_csv:
        emit_report(report, "csv", cfg.output_csv)
        logger.info("[\x1b[1;32mGOOD\x1b[0m] wrote \x1b[4;34m%s\x1b[0m", cfg.output_csv)
    if cfg.output_json:
        emit_report(report, "json", cfg.output_json)
        logger.info("[\x1b[1;32mGOOD\x1b[0m] wrote \x1b[4;34m%s\x1b[0m", cfg.output_json)


def guarded(run: Callable[[Namespace], None], args: Namespace, /) -> int:
    """Run a subcommand body and map failures to exit codes

    :return: 0 success, 1 config error, 2 runtime error, 3 io error
    """
    if _print_meta(args):
        return EXIT_OK
    set_level(args.log_level)
    try:
        run(args)
    except ConfigError as e:
        logger.error("[\x1b[1;31mFAIL\x1b[0m] config error: %s", e.message)
        return EXIT_CONFIG_ERROR
    except OSError:
        logger.exception("[\x1b[1;31mFAIL\x1b[0m] io error")
        return EXIT_IO_ERROR
    except Exception:
        logger.exception("[\x1b[1;31mFAIL\x1b[0m] runtime error")
        return EXIT_RUNTIME_ERROR
    return EXIT_OK
