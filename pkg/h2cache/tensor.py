#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = [
    "Tensor4", "standardize_to_4d", "avg_pool_2d", "l2_distance", "l2_norm", "mean_abs",
    "seeded_gaussian", "standard_normal",
]
__doc__ = """\
Minimal dense tensor kernels on rank-4 float32 arrays

Storage is float32 in (B, C, H, W) row-major order. Norms and linear combinations
accumulate in float64 and round to float32 once. Pooling sums its windows in float32.

Random numbers come from the Philox-4x64 counter-based bit generator keyed with
``(seed mod 2**64, stream)``. Each pair of raw 64-bit words ``(r1, r2)`` is mapped to
``u = ((r >> 11) + 0.5) * 2**-53`` in the open interval (0, 1), then to two normals by
the Box–Muller transform ``sqrt(-2 ln u1) * (cos 2πu2, sin 2πu2)``, in that order.
The first ``B·C·H·W`` normals, in row-major order, are rounded to float32.
"""

from collections.abc import Callable, Iterable, Sequence
from functools import lru_cache
from math import sqrt
from typing import Any, Final

import numpy as np

from .exception import NonFiniteError, ShapeError, UnsupportedRankError, KernelTooLargeError


_MASK64: Final = (1 << 64) - 1
_U53: Final = 2.0 ** -53


class Tensor4:
    """Immutable dense rank-4 tensor of float32 values

    :param data: anything `numpy.asarray` accepts, must have rank 4 and no zero-sized dim
    """
    __slots__ = ("data", "_memo")

    data: np.ndarray

    def __init__(self, data: Any, /):
        arr = np.array(data, dtype=np.float32)
        self._adopt(arr)

    def _adopt(self, arr: np.ndarray, /):
        if arr.ndim != 4:
            raise ShapeError(f"expected a rank-4 array, got shape {arr.shape}")
        if 0 in arr.shape:
            raise ShapeError(f"empty dimension in shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in tensor of shape {arr.shape}")
        arr.flags.writeable = False
        self.data = arr
        self._memo = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, /) -> "Tensor4":
        # `arr` must be a fresh array owned by the caller
        self = cls.__new__(cls)
        self._adopt(np.ascontiguousarray(arr, dtype=np.float32))
        return self

    @classmethod
    def full(cls, shape: Sequence[int], value: float, /) -> "Tensor4":
        return cls._wrap(np.full(tuple(shape), value, dtype=np.float32))

    @classmethod
    def zeros(cls, shape: Sequence[int], /) -> "Tensor4":
        return cls._wrap(np.zeros(tuple(shape), dtype=np.float32))

    def __repr__(self, /) -> str:
        return f"{type(self).__qualname__}(shape={self.shape})"

    def __len__(self, /) -> int:
        return self.data.shape[0]

    @property
    def shape(self, /) -> tuple[int, int, int, int]:
        return self.data.shape # type: ignore

    @property
    def batch(self, /) -> int:
        return self.data.shape[0]

    @property
    def channels(self, /) -> int:
        return self.data.shape[1]

    @property
    def height(self, /) -> int:
        return self.data.shape[2]

    @property
    def width(self, /) -> int:
        return self.data.shape[3]

    @property
    def size(self, /) -> int:
        return self.data.size

    def numpy(self, /) -> np.ndarray:
        "read-only view of the data"
        return self.data

    def tobytes(self, /) -> bytes:
        "little-endian float32, row-major"
        return self.data.astype("<f4", copy=False).tobytes()

    def bitwise_equal(self, other: "Tensor4", /) -> bool:
        return self.shape == other.shape and self.tobytes() == other.tobytes()

    def memo(self, key: Any, factory: Callable[["Tensor4"], Any], /) -> Any:
        """Cache a value derived from this tensor, tensors never change once built

        :param key: cache key, e.g. ("pool", 4)
        :param factory: called with this tensor on the first lookup

        :return: the cached value
        """
        memo = self._memo
        if memo is None:
            memo = self._memo = {}
        try:
            return memo[key]
        except KeyError:
            value = memo[key] = factory(self)
            return value

    def _check_same_shape(self, other: "Tensor4", /):
        if not isinstance(other, Tensor4):
            raise TypeError(f"expected Tensor4, got {type(other).__qualname__}")
        if self.shape != other.shape:
            raise ShapeError(f"shape mismatch: {self.shape} != {other.shape}")

    def __add__(self, other: "Tensor4", /) -> "Tensor4":
        self._check_same_shape(other)
        return Tensor4._wrap(self.data + other.data)

    def __sub__(self, other: "Tensor4", /) -> "Tensor4":
        self._check_same_shape(other)
        return Tensor4._wrap(self.data - other.data)

    def __neg__(self, /) -> "Tensor4":
        return Tensor4._wrap(-self.data)

    def __mul__(self, k: float, /) -> "Tensor4":
        if isinstance(k, Tensor4):
            return NotImplemented
        return Tensor4._wrap(self.data.astype(np.float64) * float(k))

    __rmul__ = __mul__

    def __truediv__(self, k: float, /) -> "Tensor4":
        if isinstance(k, Tensor4):
            return NotImplemented
        return Tensor4._wrap(self.data.astype(np.float64) / float(k))

    def minus_zero(self, value: float, /) -> "Tensor4":
        """Subtract `0.0 * value` from every element, the result is bitwise equal to this tensor

        `value` must be finite and non-negative, so the subtrahend is +0.0 and both signed zeros survive
        """
        if not value >= 0.0 or value == float("inf"):
            raise NonFiniteError(f"folded value must be finite and >= 0, got {value!r}")
        return Tensor4._wrap(self.data - np.float32(0.0 * value))

    @staticmethod
    def lincomb(terms: Iterable[tuple[float, "Tensor4"]], /) -> "Tensor4":
        """Linear combination Σ kᵢ·xᵢ accumulated in float64 and rounded once

        :param terms: pairs of (coefficient, tensor), all tensors of one shape

        :return: the combination
        """
        acc: None | np.ndarray = None
        shape = None
        for k, x in terms:
            if shape is None:
                shape = x.shape
                acc = x.data.astype(np.float64) * float(k)
            else:
                if x.shape != shape:
                    raise ShapeError(f"shape mismatch: {x.shape} != {shape}")
                acc += x.data.astype(np.float64) * float(k) # type: ignore
        if acc is None:
            raise ValueError("empty linear combination")
        return Tensor4._wrap(acc)


def standardize_to_4d(raw: Any, /) -> Tensor4:
    """Bring a rank 1..4 tensor into (B, C, H, W) form without touching the data order

    rank 4 passes through; (B, L, D) -> (B, 1, L, D); (L, D) -> (1, 1, L, D); (N,) -> (1, 1, N, 1)

    :param raw: a `Tensor4` or anything `numpy.asarray` accepts

    :return: the standardized tensor
    """
    if isinstance(raw, Tensor4):
        return raw
    arr = np.array(raw, dtype=np.float32)
    match arr.ndim:
        case 4:
            pass
        case 3:
            arr = arr[:, None, :, :]
        case 2:
            arr = arr[None, None, :, :]
        case 1:
            arr = arr.reshape(1, 1, -1, 1)
        case rank:
            raise UnsupportedRankError(f"unsupported rank {rank}, expected 1..4")
    if arr.size == 0:
        raise ShapeError("cannot standardize an empty tensor")
    return Tensor4._wrap(arr)


def pooled_dims(h: int, w: int, s_k: int, /) -> tuple[int, int]:
    if s_k < 1:
        raise KernelTooLargeError(f"kernel size must be >= 1, got {s_k}")
    if s_k > h or s_k > w:
        raise KernelTooLargeError(f"kernel {s_k} does not fit spatial dims ({h}, {w})")
    return (h - s_k) // s_k + 1, (w - s_k) // s_k + 1


def avg_pool_2d(t: Tensor4, s_k: int, /) -> Tensor4:
    """Non-overlapping average pooling with kernel = stride = `s_k`, per (batch, channel) plane

    Rows and columns that do not fill a whole window are dropped.

    :param t: input tensor
    :param s_k: kernel size and stride

    :return: tensor of shape (B, C, H′, W′)
    """
    hp, wp = pooled_dims(t.height, t.width, s_k)
    if s_k == 1:
        return t
    b, c, _, width = t.shape
    x = t.data[:, :, :hp * s_k]
    # whole rows are added first, the inner loop stays contiguous
    rows = x.reshape(b, c, hp, s_k, width).sum(axis=3)
    if wp * s_k != width:
        rows = rows[..., :wp * s_k]
    pooled = rows.reshape(-1, s_k) @ _window_weights(s_k)
    return Tensor4._wrap(pooled.reshape(b, c, hp, wp))


@lru_cache(maxsize=64)
def _window_weights(s_k: int, /) -> np.ndarray:
    weights = np.full(s_k, 1.0 / (s_k * s_k), dtype=np.float32)
    weights.flags.writeable = False
    return weights


def l2_distance(a: Tensor4, b: Tensor4, /) -> float:
    "Euclidean norm of a - b"
    a._check_same_shape(b)
    d = a.data.astype(np.float64).ravel()
    d -= b.data.ravel()
    return sqrt(float(np.dot(d, d)))


def _l2_norm(t: Tensor4, /) -> float:
    x = t.data.astype(np.float64).ravel()
    return sqrt(float(np.dot(x, x)))


def l2_norm(t: Tensor4, /) -> float:
    "Euclidean norm of all elements, memoized on the tensor"
    return t.memo("l2_norm", _l2_norm)


def mean_abs(t: Tensor4, /) -> float:
    "mean of |x| over all elements"
    return float(np.mean(np.abs(t.data), dtype=np.float64))


def standard_normal(count: int, seed: int, /, stream: int = 0) -> np.ndarray:
    """Draw `count` float64 standard normals (Philox + Box–Muller, see module doc)

    :param count: number of samples
    :param seed: integer seed, taken modulo 2**64
    :param stream: independent stream id under the same seed

    :return: 1-d float64 array
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    pairs = (count + 1) // 2
    bitgen = np.random.Philox(key=np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64))
    raw = bitgen.random_raw(2 * pairs)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _U53
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    theta = (2.0 * np.pi) * u[1::2]
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


def seeded_gaussian(shape: Sequence[int], seed: int, /, stream: int = 0) -> Tensor4:
    """Standard-normal tensor, bit-identical for the same (shape, seed, stream)

    :param shape: (B, C, H, W)
    :param seed: integer seed
    :param stream: independent stream id under the same seed

    :return: the sampled tensor
    """
    shape = tuple(shape)
    if len(shape) != 4 or any(n < 1 for n in shape):
        raise ShapeError(f"invalid shape {shape}")
    count = shape[0] * shape[1] * shape[2] * shape[3]
    return Tensor4._wrap(standard_normal(count, seed, stream).reshape(shape))
