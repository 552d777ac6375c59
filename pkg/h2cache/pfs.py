#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = [
    "MetricKind", "PfsConfig", "SimilarityMetric", "kernel_size", "thumbnail_dims", "summarize",
    "relative_difference", "metric_evaluate",
]
__doc__ = """\
Pooled Feature Summarization and the similarity metrics behind every cache check

PFS average-pools both tensors to thumbnails with kernel = stride = max(1, ⌊H / divisor⌋)
and compares them with the relative mean-absolute difference

    D = E|T̃_cur - T̃_cached| / max(E|T̃_cached|, 1e-12)

Thumbnails and norms of a tensor are memoized on the (immutable) tensor, so the cached side
of a check is summarized once however many checks it takes part in.
"""

from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np

from .const import EPS_DIV
from .exception import ShapeError
from .tensor import Tensor4, avg_pool_2d, l2_distance, l2_norm, pooled_dims, standardize_to_4d


class MetricKind(StrEnum):
    FULL_L2 = "full-l2"
    FULL_REL_L2 = "full-rel-l2"
    FULL_REL_MEAN_ABS = "full-rel-mean-abs"
    PFS = "pfs"


@dataclass(frozen=True, slots=True)
class PfsConfig:
    "pooling divisor of one stage (D_p1 for stage 1, D_p2 for stage 2)"
    divisor: int = 1

    def __post_init__(self, /):
        if not isinstance(self.divisor, int) or self.divisor < 1:
            raise ValueError(f"divisor must be an integer >= 1, got {self.divisor!r}")


@dataclass(frozen=True, slots=True)
class SimilarityMetric:
    """A distance between the current tensor and its cached counterpart

    - FULL_L2: ‖a - b‖₂
    - FULL_REL_L2: ‖a - b‖₂ / max(‖b‖₂, ε)
    - FULL_REL_MEAN_ABS: E|a - b| / max(E|b|, ε), PFS without pooling
    - PFS: the relative mean-abs difference of the thumbnails
    """
    kind: MetricKind = MetricKind.PFS
    pfs: None | PfsConfig = None

    def __post_init__(self, /):
        object.__setattr__(self, "kind", MetricKind(self.kind))
        if self.kind is MetricKind.PFS:
            if self.pfs is None:
                object.__setattr__(self, "pfs", PfsConfig())
        elif self.pfs is not None:
            raise ValueError(f"{self.kind} takes no pooling config")

    @classmethod
    def full_l2(cls, /) -> "SimilarityMetric":
        return cls(MetricKind.FULL_L2)

    @classmethod
    def full_rel_l2(cls, /) -> "SimilarityMetric":
        return cls(MetricKind.FULL_REL_L2)

    @classmethod
    def full_rel_mean_abs(cls, /) -> "SimilarityMetric":
        return cls(MetricKind.FULL_REL_MEAN_ABS)

    @classmethod
    def pfs_rel_diff(cls, divisor: int = 1, /) -> "SimilarityMetric":
        return cls(MetricKind.PFS, PfsConfig(divisor))

    @classmethod
    def of(cls, kind: str | MetricKind, divisor: int = 1, /) -> "SimilarityMetric":
        "build from a kind name, `divisor` only counts for PFS"
        kind = MetricKind(kind)
        if kind is MetricKind.PFS:
            return cls.pfs_rel_diff(divisor)
        return cls(kind)

    @property
    def label(self, /) -> str:
        if self.pfs is not None:
            return f"{self.kind}/{self.pfs.divisor}"
        return str(self.kind)

    def __call__(self, current: Tensor4, cached: Tensor4, /) -> float:
        return metric_evaluate(self, current, cached)


def kernel_size(h: int, divisor: int, /) -> int:
    "S_k = max(1, ⌊h / divisor⌋)"
    if h < 1 or divisor < 1:
        raise ValueError(f"need h >= 1 and divisor >= 1, got h={h}, divisor={divisor}")
    return max(1, h // divisor)


def thumbnail_dims(h: int, w: int, s_k: int, /) -> tuple[int, int]:
    "(H′, W′) = (⌊(h - s_k) / s_k⌋ + 1, ⌊(w - s_k) / s_k⌋ + 1)"
    return pooled_dims(h, w, s_k)


def summarize(t: Any, cfg: PfsConfig, /) -> Tensor4:
    """Thumbnail of a tensor: standardize to 4-d, then average-pool with S_k from its height

    :param t: a `Tensor4` or any rank 1..4 array
    :param cfg: pooling divisor

    :return: tensor of shape (B, C, H′, W′)
    """
    return _thumbnail(standardize_to_4d(t), cfg.divisor)


def _mean_abs_of(t: Tensor4, /) -> float:
    return t.memo("mean_abs", lambda x: float(np.mean(np.abs(x.data), dtype=np.float64)))


def _rel_mean_abs(cur: Tensor4, ref: Tensor4, /) -> float:
    d = np.subtract(cur.data, ref.data, dtype=np.float64)
    np.abs(d, out=d)
    return float(d.mean()) / max(_mean_abs_of(ref), EPS_DIV)


def _thumbnail(t: Tensor4, divisor: int, /) -> Tensor4:
    s_k = kernel_size(t.height, divisor)
    return t.memo(("pfs", s_k), lambda x: avg_pool_2d(x, s_k))


def _standardized_pair(current: Any, cached: Any, /) -> tuple[Tensor4, Tensor4]:
    current = standardize_to_4d(current)
    cached = standardize_to_4d(cached)
    if current.shape != cached.shape:
        raise ShapeError(f"shape mismatch: {current.shape} != {cached.shape}")
    return current, cached


def relative_difference(current: Any, cached: Any, cfg: PfsConfig, /) -> float:
    """Relative mean-absolute difference of the two thumbnails

    :param current: tensor of this step
    :param cached: cached tensor, same shape
    :param cfg: pooling divisor

    :return: D >= 0; an all-zero cached thumbnail gives a huge D
    """
    current, cached = _standardized_pair(current, cached)
    return _rel_mean_abs(_thumbnail(current, cfg.divisor), _thumbnail(cached, cfg.divisor))


def metric_evaluate(m: SimilarityMetric, current: Any, cached: Any, /) -> float:
    """Evaluate a similarity metric

    :param m: the metric
    :param current: tensor of this step
    :param cached: cached tensor, same shape

    :return: distance >= 0
    """
    current, cached = _standardized_pair(current, cached)
    match m.kind:
        case MetricKind.FULL_L2:
            return l2_distance(current, cached)
        case MetricKind.FULL_REL_L2:
            return l2_distance(current, cached) / max(l2_norm(cached), EPS_DIV)
        case MetricKind.FULL_REL_MEAN_ABS:
            return _rel_mean_abs(current, cached)
        case MetricKind.PFS:
            divisor = m.pfs.divisor # type: ignore
            return _rel_mean_abs(_thumbnail(current, divisor), _thumbnail(cached, divisor))
        case _:
            raise ValueError(f"unknown metric kind: {m.kind!r}")
