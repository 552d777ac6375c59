#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = [
    "NoiseSchedule", "Conditioning", "build_linear_schedule", "sampling_timesteps",
    "forward_diffuse_closed", "forward_diffuse_chain", "ddim_predict_z0", "ddim_step",
    "eps_mse_loss",
]
__doc__ = """\
Noise schedules, the forward process and the deterministic DDIM reverse step

Timesteps are 1-indexed, t = 1..T, and stored 0-indexed: ``betas[t - 1]`` is β_t.
ᾱ₀ is defined as 1, so the last reverse step (t = 1) returns the predicted z₀.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .const import DEFAULT_BETA_END, DEFAULT_BETA_START
from .exception import InvalidScheduleError, ShapeError, SingularCoefficientError, StepIndexError
from .tensor import Tensor4, standard_normal


def _readonly(arr: np.ndarray, /) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, slots=True, eq=False)
class NoiseSchedule:
    """β_t, α_t = 1 - β_t and ᾱ_t = Π α_i for t = 1..T
    """
    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)

    def __post_init__(self, /):
        betas, alphas, alpha_bars = self.betas, self.alphas, self.alpha_bars
        if not (betas.ndim == alphas.ndim == alpha_bars.ndim == 1):
            raise InvalidScheduleError("schedule arrays must be 1-d")
        if not (len(betas) == len(alphas) == len(alpha_bars) >= 1):
            raise InvalidScheduleError("schedule arrays must be non-empty and of equal length")
        if not (np.isfinite(alpha_bars).all() and (alpha_bars >= 0).all() and (alpha_bars <= 1).all()):
            raise InvalidScheduleError("alpha_bars must lie in [0, 1]")
        if (np.diff(alpha_bars) > 0).any():
            raise InvalidScheduleError("alpha_bars must be non-increasing")

    @property
    def steps(self, /) -> int:
        "T"
        return len(self.betas)

    def check_step(self, t: int, /) -> int:
        if not 1 <= t <= self.steps:
            raise StepIndexError(f"step {t} outside of 1..{self.steps}")
        return t

    def alpha_bar(self, t: int, /) -> float:
        "ᾱ_t for t = 0..T, with ᾱ₀ = 1"
        if t == 0:
            return 1.0
        return float(self.alpha_bars[self.check_step(t) - 1])

    def beta(self, t: int, /) -> float:
        return float(self.betas[self.check_step(t) - 1])

    def alpha(self, t: int, /) -> float:
        return float(self.alphas[self.check_step(t) - 1])

    @classmethod
    def from_betas(cls, betas: Sequence[float] | np.ndarray, /) -> "NoiseSchedule":
        """Build a schedule from β_1..β_T, every β must lie in (0, 1)
        """
        b = np.array(betas, dtype=np.float64)
        if b.ndim != 1 or not len(b):
            raise InvalidScheduleError("betas must be a non-empty 1-d sequence")
        if not (np.isfinite(b).all() and (b > 0).all() and (b < 1).all()):
            raise InvalidScheduleError("every beta must lie in (0, 1)")
        alphas = 1.0 - b
        alpha_bars = np.cumprod(alphas)
        if not (alpha_bars > 0).all():
            raise InvalidScheduleError("alpha_bars underflow to 0, use fewer steps or smaller betas")
        return cls(_readonly(b), _readonly(alphas), _readonly(alpha_bars))

    @classmethod
    def from_alpha_bars(cls, alpha_bars: Sequence[float] | np.ndarray, /) -> "NoiseSchedule":
        """Build a schedule from explicit ᾱ_1..ᾱ_T in [0, 1], non-increasing

        Boundary values are allowed, which makes limits such as ᾱ_t = 1 or ᾱ_t = 0 directly checkable.
        α_t is ᾱ_t / ᾱ_{t-1} (taken as 0 once ᾱ_{t-1} = 0).
        """
        ab = np.array(alpha_bars, dtype=np.float64)
        if ab.ndim != 1 or not len(ab):
            raise InvalidScheduleError("alpha_bars must be a non-empty 1-d sequence")
        prev = np.concatenate(([1.0], ab[:-1]))
        with np.errstate(divide="ignore", invalid="ignore"):
            alphas = np.where(prev > 0, ab / np.where(prev > 0, prev, 1.0), 0.0)
        return cls(_readonly(1.0 - alphas), _readonly(alphas), _readonly(ab))


@dataclass(frozen=True, slots=True, eq=False)
class Conditioning:
    """Fixed-length conditioning vector, a stand-in for text embeddings
    """
    embedding: np.ndarray

    def __post_init__(self, /):
        emb = np.array(self.embedding, dtype=np.float32)
        if emb.ndim != 1 or not len(emb):
            raise ShapeError("conditioning must be a non-empty 1-d vector")
        if not np.isfinite(emb).all():
            raise ValueError("conditioning must be finite")
        object.__setattr__(self, "embedding", _readonly(emb))

    @property
    def dim(self, /) -> int:
        return len(self.embedding)

    @classmethod
    def zeros(cls, dim: int = 8, /) -> "Conditioning":
        return cls(np.zeros(dim, dtype=np.float32))

    @classmethod
    def seeded(cls, dim: int = 8, seed: int = 0, /) -> "Conditioning":
        return cls(standard_normal(dim, seed, 0xC0D).astype(np.float32))


def build_linear_schedule(
    t_steps: int,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear β schedule, both endpoints included

    :param t_steps: T >= 1
    :param beta_start: β_1, in (0, 1)
    :param beta_end: β_T, in [beta_start, 1)

    :return: the schedule
    """
    if t_steps < 1:
        raise InvalidScheduleError(f"t_steps must be >= 1, got {t_steps}")
    if not 0 < beta_start <= beta_end < 1:
        raise InvalidScheduleError(
            f"need 0 < beta_start <= beta_end < 1, got beta_start={beta_start!r}, beta_end={beta_end!r}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, t_steps, dtype=np.float64))


def sampling_timesteps(sched: NoiseSchedule, num_steps: None | int = None, /) -> list[int]:
    """Descending timesteps visited by the sampler, a uniform stride over T..1

    :param sched: the schedule
    :param num_steps: sampler steps, None means every schedule step

    :return: list of t, first is T, last is 1 when num_steps > 1
    """
    steps = sched.steps
    if num_steps is None or num_steps >= steps:
        return list(range(steps, 0, -1))
    if num_steps < 1:
        raise StepIndexError(f"num_steps must be >= 1, got {num_steps}")
    if num_steps == 1:
        return [steps]
    grid = np.linspace(steps, 1, num_steps)
    return [int(t) for t in np.round(grid).astype(np.int64)]


def forward_diffuse_closed(
    z0: Tensor4,
    t: int,
    eps: Tensor4,
    sched: NoiseSchedule,
) -> Tensor4:
    "z_t = √ᾱ_t·z0 + √(1 - ᾱ_t)·ε"
    ab = sched.alpha_bar(sched.check_step(t))
    return Tensor4.lincomb(((sqrt(ab), z0), (sqrt(1.0 - ab), eps)))


def forward_diffuse_chain(
    z0: Tensor4,
    t: int,
    sched: NoiseSchedule,
    seed: int,
) -> Tensor4:
    """Run the one-step Markov kernel z_i = √α_i·z_{i-1} + √β_i·ε_i for i = 1..t

    ε_i is the i-th block of B·C·H·W normals drawn under `seed`, so the first draw is
    `seeded_gaussian(z0.shape, seed)`.

    :param z0: clean latent
    :param t: number of forward steps, 1..T
    :param sched: the schedule
    :param seed: seed of the noise draws

    :return: z_t
    """
    sched.check_step(t)
    shape = z0.shape
    n = z0.size
    noise = standard_normal(n * t, seed).astype(np.float32).reshape((t, *shape))
    z = z0.data.astype(np.float64)
    for i in range(t):
        z = sqrt(float(sched.alphas[i])) * z + sqrt(float(sched.betas[i])) * noise[i]
    return Tensor4._wrap(z)


def ddim_predict_z0(
    z_t: Tensor4,
    eps: Tensor4,
    t: int,
    sched: NoiseSchedule,
) -> Tensor4:
    "ẑ0 = (z_t - √(1 - ᾱ_t)·ε) / √ᾱ_t"
    ab = sched.alpha_bar(sched.check_step(t))
    if ab <= 0:
        raise SingularCoefficientError(f"alpha_bar is 0 at step {t}")
    s = sqrt(ab)
    return Tensor4.lincomb(((1.0 / s, z_t), (-sqrt(1.0 - ab) / s, eps)))


def ddim_step(
    z_t: Tensor4,
    eps: Tensor4,
    t: int,
    sched: NoiseSchedule,
    t_prev: None | int = None,
) -> Tensor4:
    """Deterministic DDIM update z_t -> z_{t_prev}

    :param z_t: current latent
    :param eps: noise prediction for (z_t, t)
    :param t: current step, 1..T
    :param sched: the schedule
    :param t_prev: target step, defaults to t - 1; 0 means the final output

    :return: √ᾱ_prev·ẑ0 + √(1 - ᾱ_prev)·ε
    """
    if t_prev is None:
        t_prev = t - 1
    elif not 0 <= t_prev < t:
        raise StepIndexError(f"t_prev must lie in 0..{t - 1}, got {t_prev}")
    z0_hat = ddim_predict_z0(z_t, eps, t, sched)
    ab_prev = sched.alpha_bar(t_prev)
    return Tensor4.lincomb(((sqrt(ab_prev), z0_hat), (sqrt(1.0 - ab_prev), eps)))


def eps_mse_loss(eps_true: Tensor4, eps_pred: Tensor4, /) -> float:
    "mean of (ε - ε̂)² over all elements, evaluation only"
    eps_true._check_same_shape(eps_pred)
    d = eps_true.data.astype(np.float64) - eps_pred.data
    return float(np.mean(d * d))
