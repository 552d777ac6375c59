#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["logger", "ColoredLevelNameFormatter", "set_level"]

import logging

from typing import Final


#: ANSI style per level number, anything else is dark grey
LEVEL_STYLES: Final[dict[int, str]] = {
    logging.DEBUG: "1;34",
    logging.INFO: "1;32",
    logging.WARNING: "1;33",
    logging.ERROR: "1;31",
    logging.CRITICAL: "1;35",
}


class ColoredLevelNameFormatter(logging.Formatter):
    "paints `levelname` for the duration of one `format` call"

    def format(self, record):
        levelname = record.levelname
        style = LEVEL_STYLES.get(record.levelno, "1;2")
        record.levelname = f"\x1b[{style}m{levelname}\x1b[0m"
        try:
            return super().format(record)
        finally:
            record.levelname = levelname


def set_level(level: int | str, /):
    """Set the package logger level

    :param level: a level number, a decimal string such as "10", or a name such as "debug";
                  unknown names fall back to INFO
    """
    if isinstance(level, str):
        if level.isascii() and level.isdecimal():
            level = int(level)
        else:
            level = getattr(logging, level.upper(), logging.INFO)
    logger.setLevel(level)


logger = logging.Logger("h2cache", level=logging.INFO)
handler = logging.StreamHandler()
handler.setFormatter(ColoredLevelNameFormatter(
    "[\x1b[1m%(asctime)s\x1b[0m] (%(levelname)s) \x1b[1;3;32m%(funcName)s\x1b[0m"
    " @ \x1b[1;35m%(name)s\x1b[0m \x1b[5;31m➜\x1b[0m %(message)s"
))
logger.addHandler(handler)
