#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = [
    "H2Warning", "H2Error", "ShapeError", "UnsupportedRankError", "KernelTooLargeError",
    "WindowError", "NonFiniteError", "InvalidScheduleError", "StepIndexError",
    "SingularCoefficientError", "SingularStageError", "CacheCorruptionError",
    "TraceFormatError", "ConfigError",
]

import warnings

from itertools import count
from functools import cached_property


class H2Warning(UserWarning):
    """Base warning of this package
    """


_count = count(1).__next__
warnings.filterwarnings("always", category=H2Warning)
warnings.formatwarning = lambda message, category, filename, lineno, line=None: f"\r\x1b[K\x1b[1;31;43m{category.__qualname__}\x1b[0m(\x1b[32m{_count()}\x1b[0m) @ \x1b[3;4;34m{filename}\x1b[0m:\x1b[36m{lineno}\x1b[0m \x1b[5;31m➜\x1b[0m \x1b[1m{message}\x1b[0m\n"


class H2Error(Exception):
    """Base exception of this package
    """
    def __init__(self, /, *args):
        super().__init__(*args)

    @cached_property
    def message(self, /) -> str:
        args = self.args
        if args:
            return str(args[0])
        return ""


class ShapeError(H2Error, ValueError):
    """Raised when tensor shapes do not agree
    """


class UnsupportedRankError(ShapeError):
    """Raised when a tensor of rank 0 or rank > 4 is standardized
    """


class KernelTooLargeError(H2Error, ValueError):
    """Raised when a pooling kernel does not fit the spatial dims
    """


class WindowError(H2Error, ValueError):
    """Raised when a tensor is smaller than the SSIM window
    """


class NonFiniteError(H2Error, ArithmeticError):
    """Raised when an operation produced NaN or Inf
    """


class InvalidScheduleError(H2Error, ValueError):
    """Raised when schedule parameters are out of bounds
    """


class StepIndexError(H2Error, IndexError):
    """Raised when a timestep is outside of 1..T
    """


class SingularCoefficientError(H2Error, ZeroDivisionError):
    """Raised when the sampler would divide by √ᾱ_t = 0
    """


class SingularStageError(H2Error, ZeroDivisionError):
    """Raised when a denoiser stage is evaluated where it is undefined (ᾱ_t = 1)
    """


class CacheCorruptionError(H2Error, RuntimeError):
    """Raised when the cached tensors no longer match the run
    """


class TraceFormatError(H2Error, ValueError):
    """Raised when a trace file is malformed
    """


class ConfigError(H2Error, ValueError):
    """Raised when an experiment configuration is invalid, has a `key` and, for text files, a `lineno`
    """
    def __init__(self, /, message: str, key: None | str = None, lineno: None | int = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.key = key
        self.lineno = lineno
