#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = [
    "DenoiserBackend", "AnalyticGaussianBackend", "SmoothRandomBackend", "CostModel",
    "CostWrappedBackend", "CountingBackend", "busywork", "wrap_with_cost",
]
__doc__ = """\
Two-stage toy denoisers

stage1(z_t, t, c) -> z′ plays the structure-defining stage, stage2(z′, t, c) -> ε the
detail-refining stage. Stage 2 never sees z_t.
"""

from dataclasses import dataclass
from math import sqrt
from typing import Final, Protocol, runtime_checkable

import numpy as np

from .const import DEFAULT_COST_L1, DEFAULT_COST_L2
from .diffusion import Conditioning, NoiseSchedule
from .exception import ShapeError, SingularStageError
from .tensor import Tensor4, seeded_gaussian, standard_normal


@runtime_checkable
class DenoiserBackend(Protocol):

    def stage1(self, z_t: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        ...

    def stage2(self, z_prime: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        ...


class AnalyticGaussianBackend:
    """Exact denoiser for data z0 ~ N(μ, σ²I)

    stage 1 returns the structural residual z′ = z_t - √ᾱ_t·E[z0 | z_t] with
    E[z0 | z_t] = (√ᾱ_t σ² z_t + (1 - ᾱ_t) μ) / (ᾱ_t σ² + 1 - ᾱ_t); stage 2 rescales it
    to ε̂ = z′ / √(1 - ᾱ_t), which is E[ε | z_t].

    :param mu: data mean, sets the run shape
    :param sigma: isotropic standard deviation, > 0
    :param sched: the noise schedule
    """
    def __init__(self, /, mu: Tensor4, sigma: float, sched: NoiseSchedule):
        if not sigma > 0 or sigma == float("inf"):
            raise ValueError(f"sigma must be finite and > 0, got {sigma!r}")
        self.mu = mu
        self.sigma = float(sigma)
        self.sched = sched

    def __repr__(self, /) -> str:
        return f"{type(self).__qualname__}(shape={self.mu.shape}, sigma={self.sigma!r})"

    @classmethod
    def constant(
        cls,
        shape: tuple[int, int, int, int],
        /,
        mean: float = 0.0,
        sigma: float = 1.0,
        *,
        sched: NoiseSchedule,
    ) -> "AnalyticGaussianBackend":
        return cls(Tensor4.full(shape, mean), sigma, sched)

    def _alpha_bar(self, t: int, /) -> float:
        ab = self.sched.alpha_bar(t)
        if ab >= 1.0:
            raise SingularStageError(f"alpha_bar is 1 at step {t}, the stage is undefined")
        return ab

    def stage1(self, z_t: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        ab = self._alpha_bar(t)
        var = self.sigma * self.sigma
        denom = ab * var + 1.0 - ab
        s = sqrt(ab)
        # z - s·E[z0|z], expanded to one rounding
        return Tensor4.lincomb(((1.0 - ab * var / denom, z_t), (-s * (1.0 - ab) / denom, self.mu)))

    def stage2(self, z_prime: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        ab = self._alpha_bar(t)
        return z_prime / sqrt(1.0 - ab)

    def posterior_mean(self, z_t: Tensor4, t: int, /) -> Tensor4:
        "E[z0 | z_t]"
        ab = self._alpha_bar(t)
        var = self.sigma * self.sigma
        denom = ab * var + 1.0 - ab
        return Tensor4.lincomb(((sqrt(ab) * var / denom, z_t), ((1.0 - ab) / denom, self.mu)))

    def sample_data(self, seed: int, /) -> Tensor4:
        "draw z0 ~ N(μ, σ²I)"
        return Tensor4.lincomb(((1.0, self.mu), (self.sigma, seeded_gaussian(self.mu.shape, seed, 0xDA7A))))


class SmoothRandomBackend:
    """Seeded random two-stage map, smooth and Lipschitz-bounded

    Both stages mix channels at every spatial position with fixed seeded weights:

        stage1: z′ = z + tanh(W1·z + b1 + P·c + t/T)
        stage2: ε  = g · tanh(W2·z′ + b2 + P·c + t/T)

    tanh is 1-Lipschitz, so stage 1 is (1 + ‖W1‖₂)-Lipschitz and stage 2 is g·‖W2‖₂-Lipschitz
    in the Euclidean norm over the whole tensor, see `lipschitz_bounds`.

    :param shape: run shape (B, C, H, W)
    :param seed: weight seed, equal seeds give equal functions
    :param steps: T, used for the t/T time embedding
    :param cond_dim: conditioning dimension
    :param weight_scale: scale of W1, W2 relative to 1/√C
    :param gain: output scale g of stage 2
    """
    def __init__(
        self,
        /,
        shape: tuple[int, int, int, int],
        seed: int = 0,
        steps: int = 100,
        cond_dim: int = 8,
        weight_scale: float = 0.8,
        gain: float = 1.0,
    ):
        shape = tuple(shape) # type: ignore
        if len(shape) != 4 or any(n < 1 for n in shape):
            raise ShapeError(f"invalid shape {shape}")
        if steps < 1:
            raise ValueError(f"steps must be >= 1, got {steps}")
        self.shape = shape
        self.seed = seed
        self.steps = steps
        self.cond_dim = cond_dim
        self.gain = float(gain)
        n = shape[1]
        scale = weight_scale / sqrt(n)
        self.w1 = standard_normal(n * n, seed, 1).reshape(n, n) * scale
        self.w2 = standard_normal(n * n, seed, 2).reshape(n, n) * scale
        self.b1 = standard_normal(n, seed, 3) * 0.1
        self.b2 = standard_normal(n, seed, 4) * 0.1
        self.proj = standard_normal(n * cond_dim, seed, 5).reshape(n, cond_dim) * (0.1 / sqrt(cond_dim))
        for arr in (self.w1, self.w2, self.b1, self.b2, self.proj):
            arr.flags.writeable = False

    def __repr__(self, /) -> str:
        return f"{type(self).__qualname__}(shape={self.shape}, seed={self.seed!r})"

    def lipschitz_bounds(self, /) -> tuple[float, float]:
        "(L1, L2) with ‖stageᵢ(x) - stageᵢ(y)‖ <= Lᵢ·‖x - y‖ at fixed (t, c)"
        return (
            1.0 + float(np.linalg.norm(self.w1, 2)),
            self.gain * float(np.linalg.norm(self.w2, 2)),
        )

    def _pre(self, x: np.ndarray, w: np.ndarray, b: np.ndarray, t: int, c: Conditioning, /) -> np.ndarray:
        if c.dim != self.cond_dim:
            raise ShapeError(f"conditioning dim {c.dim} != {self.cond_dim}")
        bias = b + self.proj @ c.embedding.astype(np.float64) + t / self.steps
        return np.einsum("oc,bchw->bohw", w, x) + bias[None, :, None, None]

    def _check(self, x: Tensor4, /):
        if x.shape != self.shape:
            raise ShapeError(f"input shape {x.shape} != backend shape {self.shape}")

    def stage1(self, z_t: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        self._check(z_t)
        z = z_t.data.astype(np.float64)
        return Tensor4._wrap(z + np.tanh(self._pre(z, self.w1, self.b1, t, c)))

    def stage2(self, z_prime: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        self._check(z_prime)
        z = z_prime.data.astype(np.float64)
        return Tensor4._wrap(self.gain * np.tanh(self._pre(z, self.w2, self.b2, t, c)))


@dataclass(frozen=True, slots=True)
class CostModel:
    """Synthetic busywork units per stage call
    """
    l1_work: int = DEFAULT_COST_L1
    l2_work: int = DEFAULT_COST_L2

    def __post_init__(self, /):
        if self.l1_work < 0 or self.l2_work < 0:
            raise ValueError(f"work counts must be >= 0, got {self.l1_work}, {self.l2_work}")


_CHUNK: Final = 1 << 16
_BUSY_INPUT: Final = np.linspace(0.0, 3.0, _CHUNK)
_BUSY_INPUT.flags.writeable = False


def busywork(units: int, /) -> float:
    """Spend `units` elementwise sin + multiply-add operations

    :return: a finite value >= 0
    """
    acc = 0.0
    while units > 0:
        n = min(units, _CHUNK)
        x = np.sin(_BUSY_INPUT[:n])
        acc += float(np.dot(x, x))
        units -= n
    return acc


class CostWrappedBackend:
    """Backend wrapper that runs busywork next to every stage call

    The busywork result r >= 0 is folded into the output as `out - 0.0·r`, which leaves the output bitwise unchanged.
    """
    def __init__(self, /, backend: DenoiserBackend, cost: CostModel):
        self.backend = backend
        self.cost = cost

    def __repr__(self, /) -> str:
        return f"{type(self).__qualname__}({self.backend!r}, {self.cost!r})"

    def stage1(self, z_t: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        out = self.backend.stage1(z_t, t, c)
        if work := self.cost.l1_work:
            out = out.minus_zero(busywork(work))
        return out

    def stage2(self, z_prime: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        out = self.backend.stage2(z_prime, t, c)
        if work := self.cost.l2_work:
            out = out.minus_zero(busywork(work))
        return out


class CountingBackend:
    """Backend wrapper that counts stage calls and remembers the last call of each stage
    """
    def __init__(self, /, backend: DenoiserBackend):
        self.backend = backend
        self.stage1_calls = 0
        self.stage2_calls = 0
        self.last_stage1: None | tuple[int, Tensor4] = None
        self.last_stage2: None | tuple[int, Tensor4] = None

    def stage1(self, z_t: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        self.stage1_calls += 1
        out = self.backend.stage1(z_t, t, c)
        self.last_stage1 = (t, out)
        return out

    def stage2(self, z_prime: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        self.stage2_calls += 1
        out = self.backend.stage2(z_prime, t, c)
        self.last_stage2 = (t, out)
        return out


def wrap_with_cost(backend: DenoiserBackend, cost: CostModel, /) -> CostWrappedBackend:
    """Attach a synthetic compute cost to both stages, outputs stay bitwise identical

    :param backend: any two-stage backend
    :param cost: busywork per stage call

    :return: the wrapped backend
    """
    return CostWrappedBackend(backend, cost)
