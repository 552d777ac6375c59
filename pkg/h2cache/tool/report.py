#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["dumps_csv", "dumps_json", "emit_report"]
__doc__ = "Report emission: CSV with a fixed leading header and a versioned JSON mirror"

import csv

from io import StringIO
from math import inf, isnan
from os import PathLike
from typing import Any, Literal

from orjson import dumps as json_dumps, OPT_INDENT_2, OPT_SERIALIZE_NUMPY

from ..const import PSNR_INF_SENTINEL
from ..util import atomic_write
from .experiment import RunReport


def _cell(value: Any, /) -> str:
    match value:
        case None:
            return ""
        case bool():
            return str(value).lower()
        case float():
            if value == inf:
                return PSNR_INF_SENTINEL
            if value == -inf:
                return f"-{PSNR_INF_SENTINEL}"
            if isnan(value):
                return ""
            return repr(value)
        case _:
            return str(value)


def _jsonable(value: Any, /) -> Any:
    "replace non-finite floats, JSON has no literal for them"
    match value:
        case float():
            if value == inf:
                return PSNR_INF_SENTINEL
            if value == -inf:
                return f"-{PSNR_INF_SENTINEL}"
            if isnan(value):
                return None
            return value
        case dict():
            return {str(k): _jsonable(v) for k, v in value.items()}
        case list() | tuple():
            return [_jsonable(v) for v in value]
        case _:
            return value


def dumps_csv(report: RunReport, /) -> str:
    "header plus one line per row"
    columns = report.columns
    buffer = StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in report.rows:
        writer.writerow(_cell(row.get(key)) for key in columns)
    return buffer.getvalue()


def dumps_json(report: RunReport, /) -> bytes:
    return json_dumps(_jsonable(report.to_dict()), option=OPT_INDENT_2 | OPT_SERIALIZE_NUMPY)


def emit_report(
    report: RunReport,
    format: Literal["csv", "json"],
    path: bytes | str | PathLike,
    /,
):
    """Write a report, never leaving a partial file behind

    :param report: the report
    :param format: "csv" or "json"
    :param path: target file
    """
    match format:
        case "csv":
            data = dumps_csv(report).encode("utf-8")
        case "json":
            data = dumps_json(report)
        case _:
            raise ValueError(f"unknown report format: {format!r}")
    atomic_write(path, data)
