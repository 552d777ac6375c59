#!/usr/bin/env python3
# encoding: utf-8

import numpy as np
import pytest

from h2cache.exception import ShapeError
from h2cache.pfs import (
    MetricKind, PfsConfig, SimilarityMetric, kernel_size, metric_evaluate, relative_difference,
    summarize, thumbnail_dims,
)
from h2cache.tensor import Tensor4, avg_pool_2d, seeded_gaussian


@pytest.mark.parametrize("h, divisor, expected", [(32, 4, 8), (32, 32, 1), (32, 64, 1), (33, 4, 8), (7, 2, 3)])
def test_kernel_size(h, divisor, expected):
    assert kernel_size(h, divisor) == expected


def test_kernel_size_validation():
    with pytest.raises(ValueError):
        kernel_size(8, 0)
    with pytest.raises(ValueError):
        PfsConfig(0)


@pytest.mark.parametrize("h, w, s_k", [(32, 32, 8), (33, 35, 8), (10, 7, 3), (9, 9, 9), (6, 11, 5)])
def test_thumbnail_dims(h, w, s_k):
    assert thumbnail_dims(h, w, s_k) == ((h - s_k) // s_k + 1, (w - s_k) // s_k + 1)


def test_summarize_pools_and_memoizes():
    t = seeded_gaussian((1, 2, 32, 32), 0)
    thumb = summarize(t, PfsConfig(4))
    assert thumb.shape == (1, 2, 4, 4)
    assert thumb.bitwise_equal(avg_pool_2d(t, 8))
    assert summarize(t, PfsConfig(4)) is thumb


def test_summarize_standardizes_lower_ranks():
    assert summarize(np.ones((16, 8)), PfsConfig(2)).shape == (1, 1, 2, 1)


@pytest.mark.parametrize("divisor", [32, 33, 1000])
def test_divisor_at_least_h_is_identity(divisor):
    a = seeded_gaussian((1, 4, 32, 32), 0)
    b = seeded_gaussian((1, 4, 32, 32), 1)
    assert summarize(a, PfsConfig(divisor)) is a
    pfs = SimilarityMetric.pfs_rel_diff(divisor)
    assert pfs(a, b) == SimilarityMetric.full_rel_mean_abs()(a, b)


def test_relative_difference_formula():
    cur = Tensor4(np.full((1, 1, 4, 4), 3.0))
    cached = Tensor4(np.full((1, 1, 4, 4), 2.0))
    assert relative_difference(cur, cached, PfsConfig(2)) == pytest.approx(0.5)
    assert relative_difference(cached, cached, PfsConfig(2)) == 0.0


def test_zero_cached_side_is_guarded():
    cur = Tensor4.full((1, 1, 4, 4), 1.0)
    d = relative_difference(cur, Tensor4.zeros((1, 1, 4, 4)), PfsConfig(1))
    assert np.isfinite(d) and d > 1e6


def test_pooling_hides_fine_detail():
    base = Tensor4.full((1, 1, 8, 8), 1.0)
    checker = np.where((np.indices((8, 8)).sum(axis=0) % 2) == 0, 0.5, -0.5)
    detailed = Tensor4(1.0 + checker[None, None])
    assert SimilarityMetric.pfs_rel_diff(4)(detailed, base) == 0.0
    assert SimilarityMetric.full_rel_mean_abs()(detailed, base) == pytest.approx(0.5)


class TestMetrics:

    def test_full_metrics(self):
        a = Tensor4(np.array([[[[3.0, 4.0]]]]))
        z = Tensor4.zeros((1, 1, 1, 2))
        b = Tensor4(np.array([[[[0.0, 1.0]]]]))
        assert SimilarityMetric.full_l2()(a, z) == 5.0
        assert SimilarityMetric.full_rel_l2()(a, b) == pytest.approx(np.hypot(3.0, 3.0))
        assert metric_evaluate(SimilarityMetric.full_rel_mean_abs(), a, b) == pytest.approx(3.0 / 0.5)

    def test_of_and_label(self):
        assert SimilarityMetric.of("pfs", 4).label == "pfs/4"
        assert SimilarityMetric.of("full-l2", 4) == SimilarityMetric.full_l2()
        assert SimilarityMetric().kind is MetricKind.PFS
        assert SimilarityMetric().pfs == PfsConfig(1)
        with pytest.raises(ValueError):
            SimilarityMetric(MetricKind.FULL_L2, PfsConfig(2))
        with pytest.raises(ValueError):
            SimilarityMetric.of("cosine")

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            SimilarityMetric()(Tensor4.zeros((1, 1, 4, 4)), Tensor4.zeros((1, 1, 4, 2)))


@pytest.mark.bench
@pytest.mark.parametrize("divisor", [64, 32])
def test_pfs_check_is_faster_than_full_rel_l2(divisor):
    from h2cache.tool.experiment import time_metric
    from statistics import median

    shape = (1, 1, 256, 256)
    assert kernel_size(shape[2], divisor) >= 4
    pfs = median(time_metric(SimilarityMetric.pfs_rel_diff(divisor), shape, 20))
    full = median(time_metric(SimilarityMetric.full_rel_l2(), shape, 20))
    assert full / pfs >= 2.0


@pytest.mark.parametrize("metric", [
    SimilarityMetric.pfs_rel_diff(8), SimilarityMetric.pfs_rel_diff(2), SimilarityMetric.full_rel_mean_abs(),
])
@pytest.mark.parametrize("k", [0.25, 2.0, 8.0, 1024.0])
def test_scale_covariance(metric, k):
    for seed in range(5):
        a = seeded_gaussian((1, 2, 32, 32), seed)
        b = seeded_gaussian((1, 2, 32, 32), seed, 1)
        assert metric(a * k, b * k) == metric(a, b)
        rel_l2 = SimilarityMetric.full_rel_l2()
        assert rel_l2(a * k, b * k) == pytest.approx(rel_l2(a, b), rel=1e-12)


def _smooth_base(n: int, /) -> np.ndarray:
    i, j = np.indices((n, n)) * (2 * np.pi / n)
    return 1.0 + 0.5 * np.sin(i) * np.cos(j)


def test_pooling_suppresses_high_frequency_noise():
    n, delta, seeds = 64, 0.1, 200
    base = Tensor4(_smooth_base(n)[None, None])
    pfs = SimilarityMetric.pfs_rel_diff(16)
    full = SimilarityMetric.full_rel_mean_abs()
    assert kernel_size(n, 16) == 4
    noisy = [base + seeded_gaussian(base.shape, seed, 5) * delta for seed in range(seeds)]
    pfs_noise = np.mean([pfs(x, base) for x in noisy])
    full_noise = np.mean([full(x, base) for x in noisy])
    # i.i.d. noise averages down by s_k under pooling
    assert pfs_noise < 0.5 * full_noise
    # a low-frequency change of the same amplitude survives pooling
    i = np.indices((n, n))[0] * (2 * np.pi / 32)
    shifted = Tensor4((_smooth_base(n) + delta * np.cos(i))[None, None])
    pfs_signal, full_signal = pfs(shifted, base), full(shifted, base)
    assert pfs_signal > 0.9 * full_signal
    assert pfs_signal / pfs_noise > 2 * (full_signal / full_noise)
