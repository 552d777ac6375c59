#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["psnr", "ssim", "rel_l2", "reference_range"]
__doc__ = "Quality of a cached run's final latent against the same-seed uncached one"

from math import inf, log10, sqrt
from warnings import warn

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view

from ..const import EPS_DIV, SSIM_K1, SSIM_K2, SSIM_WINDOW
from ..exception import H2Warning, ShapeError, WindowError
from ..tensor import Tensor4


def _pair(reference: Tensor4, test: Tensor4, /) -> tuple[np.ndarray, np.ndarray]:
    if reference.shape != test.shape:
        raise ShapeError(f"shape mismatch: {reference.shape} != {test.shape}")
    return reference.data.astype(np.float64), test.data.astype(np.float64)


def reference_range(reference: Tensor4, /) -> float:
    "peak-to-peak range of the reference, 1.0 (with a warning) when it is constant"
    r = float(np.ptp(reference.data))
    if r > 0:
        return r
    warn("reference tensor is constant, using a dynamic range of 1.0", category=H2Warning, stacklevel=3)
    return 1.0


def psnr(reference: Tensor4, test: Tensor4, peak: None | float = None, /) -> float:
    """Peak signal-to-noise ratio 10·log₁₀(peak² / MSE) in dB

    :param reference: the uncached result
    :param test: the cached result
    :param peak: signal peak, defaults to the reference's peak-to-peak range

    :return: dB, `math.inf` when the tensors are equal
    """
    ref, out = _pair(reference, test)
    if peak is None:
        peak = reference_range(reference)
    elif not peak > 0:
        raise ValueError(f"peak must be > 0, got {peak!r}")
    d = (out - ref).ravel()
    mse = float(np.dot(d, d)) / d.size
    if mse == 0:
        return inf
    return 10.0 * log10(peak * peak / mse)


def ssim(reference: Tensor4, test: Tensor4, /, window: int = SSIM_WINDOW) -> float:
    """Single-scale SSIM with a uniform square window of stride 1

    Local means, variances and covariance are population moments over each window;
    C1 = (0.01·L)², C2 = (0.03·L)² with L the reference's peak-to-peak range.
    The local map is averaged per (batch, channel) plane, then over planes.

    :param reference: the uncached result
    :param test: the cached result
    :param window: window side

    :return: score in [-1, 1]
    """
    ref, out = _pair(reference, test)
    h, w = ref.shape[-2:]
    if h < window or w < window:
        raise WindowError(f"spatial dims ({h}, {w}) are smaller than the {window}x{window} window")
    dyn = reference_range(reference)
    c1 = (SSIM_K1 * dyn) ** 2
    c2 = (SSIM_K2 * dyn) ** 2
    def local_mean(x: np.ndarray, /) -> np.ndarray:
        return sliding_window_view(x, (window, window), axis=(-2, -1)).mean(axis=(-2, -1))
    mu_x = local_mean(ref)
    mu_y = local_mean(out)
    var_x = local_mean(ref * ref) - mu_x * mu_x
    var_y = local_mean(out * out) - mu_y * mu_y
    cov = local_mean(ref * out) - mu_x * mu_y
    smap = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
    per_plane = smap.mean(axis=(-2, -1))
    return float(np.clip(per_plane.mean(), -1.0, 1.0))


def rel_l2(reference: Tensor4, test: Tensor4, /) -> float:
    "‖test - reference‖₂ / max(‖reference‖₂, 1e-12)"
    ref, out = _pair(reference, test)
    d = (out - ref).ravel()
    r = ref.ravel()
    return sqrt(float(np.dot(d, d))) / max(sqrt(float(np.dot(r, r))), EPS_DIV)
