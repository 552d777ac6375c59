#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["atomic_write"]

from os import PathLike, fsync, remove, replace
from pathlib import Path


def atomic_write(path: bytes | str | PathLike, data: bytes, /):
    """Write `data` to a sibling temporary file, then rename it over `path`

    The target either keeps its old content or gets all of `data`.
    """
    path = Path(path) # type: ignore
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            fsync(f.fileno())
        replace(tmp, path)
    except BaseException:
        try:
            remove(tmp)
        except FileNotFoundError:
            pass
        raise
