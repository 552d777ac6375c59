#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = [
    "StepKind", "StepOutcome", "StepDecision", "CacheState", "NoCache", "BlockCache", "H2Config",
    "Policy", "RunStats", "policy_name", "h2_decide", "block_cache_decide", "no_cache_decide",
    "decide", "h2_step", "block_cache_step", "sample_loop",
]
__doc__ = """\
The hierarchical two-stage cache and its baselines

One step of the two-stage cache, given the cache (z_cache_in, z′_cache, ε_cache) of the
last step that ran stage 1:

1. joint check: metric1(z_t, z_cache_in) < τ1 reuses z′_cache and ε_cache, both stages are
   skipped and the cache is left as it is
2. otherwise z′_t = stage1(z_t); detail check: metric2(z′_t, z′_cache) < τ2 reuses ε_cache,
   otherwise ε = stage2(z′_t)
3. after a joint-check miss the cache becomes (z_t, z′_t, ε) in one assignment

A cold cache always computes both stages. Hits use a strict ``<``, so τ = 0 turns a check off.
"""

from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum
from logging import DEBUG, Logger
from math import isnan
from statistics import fmean
from time import perf_counter
from typing import NamedTuple

from .diffusion import Conditioning, NoiseSchedule, ddim_step, sampling_timesteps
from .denoiser import DenoiserBackend
from .exception import CacheCorruptionError
from .log import logger as _logger
from .pfs import SimilarityMetric
from .tensor import Tensor4


class StepKind(StrEnum):
    JOINT_HIT = "joint-hit"
    DETAIL_HIT = "detail-hit"
    FULL_COMPUTE = "full-compute"


_EXECUTED: dict[StepKind, tuple[bool, bool]] = {
    StepKind.JOINT_HIT: (False, False),
    StepKind.DETAIL_HIT: (True, False),
    StepKind.FULL_COMPUTE: (True, True),
}


@dataclass(frozen=True, slots=True)
class StepOutcome:
    """What one sampling step did

    `metric1` and `metric2` are the values of the checks that were evaluated (None if a check
    did not run), `check_time` is the time spent evaluating them in seconds.
    """
    kind: StepKind
    stage1_executed: bool
    stage2_executed: bool
    t: int = 0
    metric1: None | float = None
    metric2: None | float = None
    check_time: float = 0.0

    def __post_init__(self, /):
        if _EXECUTED[self.kind] != (self.stage1_executed, self.stage2_executed):
            raise ValueError(
                f"{self.kind} does not fit stage1_executed={self.stage1_executed}, "
                f"stage2_executed={self.stage2_executed}")

    @classmethod
    def of(
        cls,
        kind: StepKind,
        /,
        t: int = 0,
        metric1: None | float = None,
        metric2: None | float = None,
        check_time: float = 0.0,
    ) -> "StepOutcome":
        s1, s2 = _EXECUTED[kind]
        return cls(kind, s1, s2, t, metric1, metric2, check_time)

    @property
    def checks(self, /) -> int:
        "number of metric evaluations"
        return (self.metric1 is not None) + (self.metric2 is not None)


class StepDecision(NamedTuple):
    z_prime: Tensor4
    eps: Tensor4
    outcome: StepOutcome


@dataclass(slots=True)
class CacheState:
    """The cache of one sampling run, owned by that run alone
    """
    populated: bool = False
    z_cache_in: None | Tensor4 = None
    z_prime_cache: None | Tensor4 = None
    eps_cache: None | Tensor4 = None
    #: the step the cached tensors come from
    step: None | int = None

    def update(self, z_in: Tensor4, z_prime: Tensor4, eps: Tensor4, t: int, /):
        "replace all three tensors at once"
        (self.z_cache_in, self.z_prime_cache, self.eps_cache,
         self.step, self.populated) = z_in, z_prime, eps, t, True

    def clear(self, /):
        (self.z_cache_in, self.z_prime_cache, self.eps_cache,
         self.step, self.populated) = None, None, None, None, False

    def check(self, z_t: Tensor4, /):
        """Raise `CacheCorruptionError` unless the cache fits a run of `z_t`'s shape
        """
        if not self.populated:
            return
        shape = z_t.shape
        for name in ("z_cache_in", "z_prime_cache", "eps_cache"):
            cached = getattr(self, name)
            if cached is None:
                raise CacheCorruptionError(f"populated cache misses {name}")
            if cached.shape != shape:
                raise CacheCorruptionError(f"{name} has shape {cached.shape}, the run has {shape}")


def _check_tau(name: str, tau: float, /) -> float:
    tau = float(tau)
    if isnan(tau) or tau < 0:
        raise ValueError(f"{name} must be >= 0, got {tau!r}")
    return tau


@dataclass(frozen=True, slots=True)
class NoCache:
    "run both stages at every step"

    @property
    def name(self, /) -> str:
        return "none"


@dataclass(frozen=True, slots=True)
class BlockCache:
    """Monolithic cache: a single check of z_t against z_cache_in
    """
    tau: float
    metric: SimilarityMetric = field(default_factory=SimilarityMetric)

    def __post_init__(self, /):
        object.__setattr__(self, "tau", _check_tau("tau", self.tau))

    @property
    def name(self, /) -> str:
        return "block"


@dataclass(frozen=True, slots=True)
class H2Config:
    """Thresholds and metrics of the two-stage cache

    :param tau1: joint-check threshold, applied to `metric1(z_t, z_cache_in)`
    :param tau2: detail-check threshold, applied to `metric2(z′_t, z′_cache)`
    :param metric1: metric of the joint check, carries D_p1
    :param metric2: metric of the detail check, carries D_p2
    """
    tau1: float
    tau2: float
    metric1: SimilarityMetric = field(default_factory=SimilarityMetric)
    metric2: SimilarityMetric = field(default_factory=SimilarityMetric)

    def __post_init__(self, /):
        object.__setattr__(self, "tau1", _check_tau("tau1", self.tau1))
        object.__setattr__(self, "tau2", _check_tau("tau2", self.tau2))

    @property
    def name(self, /) -> str:
        return "h2"


type Policy = NoCache | BlockCache | H2Config


def policy_name(policy: Policy, /) -> str:
    return policy.name


def no_cache_decide(
    z_t: Tensor4,
    t: int,
    c: Conditioning,
    backend: DenoiserBackend,
    /,
) -> StepDecision:
    z_prime = backend.stage1(z_t, t, c)
    eps = backend.stage2(z_prime, t, c)
    return StepDecision(z_prime, eps, StepOutcome.of(StepKind.FULL_COMPUTE, t))


def _cold_start(
    z_t: Tensor4,
    t: int,
    c: Conditioning,
    backend: DenoiserBackend,
    state: CacheState,
    /,
) -> StepDecision:
    decision = no_cache_decide(z_t, t, c, backend)
    state.update(z_t, decision.z_prime, decision.eps, t)
    return decision


def h2_decide(
    z_t: Tensor4,
    t: int,
    c: Conditioning,
    backend: DenoiserBackend,
    cfg: H2Config,
    state: CacheState,
    /,
) -> StepDecision:
    """Run the two cache checks for one step and update the cache

    :param z_t: current latent
    :param t: current step
    :param c: conditioning
    :param backend: the two stages, only called when a check misses
    :param cfg: thresholds and metrics
    :param state: the run's cache, updated in place

    :return: (z′ used, ε used, outcome)
    """
    if not state.populated:
        return _cold_start(z_t, t, c, backend, state)
    state.check(z_t)
    start = perf_counter()
    m1 = cfg.metric1(z_t, state.z_cache_in) # type: ignore
    check_time = perf_counter() - start
    if m1 < cfg.tau1:
        return StepDecision(
            state.z_prime_cache, # type: ignore
            state.eps_cache, # type: ignore
            StepOutcome.of(StepKind.JOINT_HIT, t, m1, None, check_time),
        )
    z_prime = backend.stage1(z_t, t, c)
    start = perf_counter()
    m2 = cfg.metric2(z_prime, state.z_prime_cache) # type: ignore
    check_time += perf_counter() - start
    if m2 < cfg.tau2:
        eps: Tensor4 = state.eps_cache # type: ignore
        kind = StepKind.DETAIL_HIT
    else:
        eps = backend.stage2(z_prime, t, c)
        kind = StepKind.FULL_COMPUTE
    state.update(z_t, z_prime, eps, t)
    return StepDecision(z_prime, eps, StepOutcome.of(kind, t, m1, m2, check_time))


def block_cache_decide(
    z_t: Tensor4,
    t: int,
    c: Conditioning,
    backend: DenoiserBackend,
    tau: float,
    metric: SimilarityMetric,
    state: CacheState,
    /,
) -> StepDecision:
    """Single-check cache: reuse ε_cache when metric(z_t, z_cache_in) < tau, else compute both stages
    """
    if not state.populated:
        return _cold_start(z_t, t, c, backend, state)
    state.check(z_t)
    start = perf_counter()
    m = metric(z_t, state.z_cache_in) # type: ignore
    check_time = perf_counter() - start
    if m < tau:
        return StepDecision(
            state.z_prime_cache, # type: ignore
            state.eps_cache, # type: ignore
            StepOutcome.of(StepKind.JOINT_HIT, t, m, None, check_time),
        )
    z_prime = backend.stage1(z_t, t, c)
    eps = backend.stage2(z_prime, t, c)
    state.update(z_t, z_prime, eps, t)
    return StepDecision(z_prime, eps, StepOutcome.of(StepKind.FULL_COMPUTE, t, m, None, check_time))


def decide(
    policy: Policy,
    z_t: Tensor4,
    t: int,
    c: Conditioning,
    backend: DenoiserBackend,
    state: CacheState,
    /,
) -> StepDecision:
    "dispatch one step to the decision rule of `policy`"
    match policy:
        case H2Config():
            return h2_decide(z_t, t, c, backend, policy, state)
        case BlockCache(tau=tau, metric=metric):
            return block_cache_decide(z_t, t, c, backend, tau, metric, state)
        case NoCache():
            return no_cache_decide(z_t, t, c, backend)
        case _:
            raise TypeError(f"unknown policy: {policy!r}")


def h2_step(
    z_t: Tensor4,
    t: int,
    c: Conditioning,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    cfg: H2Config,
    state: CacheState,
    /,
    t_prev: None | int = None,
) -> tuple[Tensor4, StepOutcome, CacheState]:
    """One sampling step under the two-stage cache

    :return: (z_{t_prev}, outcome, the updated state)
    """
    decision = h2_decide(z_t, t, c, backend, cfg, state)
    return ddim_step(z_t, decision.eps, t, sched, t_prev), decision.outcome, state


def block_cache_step(
    z_t: Tensor4,
    t: int,
    c: Conditioning,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    tau: float,
    metric: SimilarityMetric,
    state: CacheState,
    /,
    t_prev: None | int = None,
) -> tuple[Tensor4, StepOutcome, CacheState]:
    """One sampling step under the monolithic block cache

    :return: (z_{t_prev}, outcome, the updated state)
    """
    tau = _check_tau("tau", tau)
    decision = block_cache_decide(z_t, t, c, backend, tau, metric, state)
    return ddim_step(z_t, decision.eps, t, sched, t_prev), decision.outcome, state


@dataclass(slots=True)
class RunStats:
    """Outcome log and timings of one sampling run (or of one trace replay, then `final` is None)
    """
    policy: str
    timesteps: list[int]
    outcomes: list[StepOutcome] = field(default_factory=list)
    step_times: list[float] = field(default_factory=list)
    total_time: float = 0.0
    final: None | Tensor4 = None

    @property
    def steps(self, /) -> int:
        return len(self.outcomes)

    def count(self, kind: StepKind, /) -> int:
        return sum(o.kind is kind for o in self.outcomes)

    @property
    def joint_hits(self, /) -> int:
        return self.count(StepKind.JOINT_HIT)

    @property
    def detail_hits(self, /) -> int:
        return self.count(StepKind.DETAIL_HIT)

    @property
    def full_computes(self, /) -> int:
        return self.count(StepKind.FULL_COMPUTE)

    @property
    def stage1_calls(self, /) -> int:
        return sum(o.stage1_executed for o in self.outcomes)

    @property
    def stage2_calls(self, /) -> int:
        return sum(o.stage2_executed for o in self.outcomes)

    @property
    def hit_fraction(self, /) -> float:
        "share of steps that skipped stage 2"
        if not self.outcomes:
            return 0.0
        return 1.0 - self.full_computes / len(self.outcomes)

    @property
    def check_time(self, /) -> float:
        "seconds spent in similarity checks"
        return sum(o.check_time for o in self.outcomes)

    @property
    def per_check_time(self, /) -> float:
        "mean seconds per metric evaluation, 0 when nothing was checked"
        checks = sum(o.checks for o in self.outcomes)
        return self.check_time / checks if checks else 0.0

    @property
    def kinds(self, /) -> list[StepKind]:
        return [o.kind for o in self.outcomes]

    @property
    def metric1_series(self, /) -> list[None | float]:
        return [o.metric1 for o in self.outcomes]

    @property
    def metric2_series(self, /) -> list[None | float]:
        return [o.metric2 for o in self.outcomes]

    @property
    def mean_step_time(self, /) -> float:
        return fmean(self.step_times) if self.step_times else 0.0

    def summary(self, /) -> dict:
        return {
            "policy": self.policy,
            "steps": self.steps,
            "joint_hits": self.joint_hits,
            "detail_hits": self.detail_hits,
            "full_computes": self.full_computes,
            "time_total_s": self.total_time,
            "check_time_s": self.check_time,
        }


type StepCallback = Callable[[int, Tensor4, StepDecision], None]


def sample_loop(
    policy: Policy,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    z_T: Tensor4,
    c: Conditioning,
    /,
    steps: None | int = None,
    on_step: None | StepCallback = None,
    logger: None | Logger = _logger,
) -> RunStats:
    """Run the reverse process from z_T under a cache policy

    :param policy: `NoCache()`, `BlockCache(tau, metric)` or `H2Config(...)`
    :param backend: the two-stage denoiser
    :param sched: the noise schedule
    :param z_T: initial latent, fixes the run shape
    :param c: conditioning
    :param steps: sampler steps, None visits every t = T..1
    :param on_step: called as `on_step(t, z_t, decision)` after each step, outside the step timing
    :param logger: receives per-step decisions at DEBUG, None disables output

    :return: outcomes, per-step wall time and the final latent
    """
    timesteps = sampling_timesteps(sched, steps)
    stats = RunStats(policy_name(policy), timesteps)
    outcomes_append = stats.outcomes.append
    times_append = stats.step_times.append
    state = CacheState()
    debug = logger is not None and logger.isEnabledFor(DEBUG)
    z = z_T
    hook_time = 0.0
    start_run = perf_counter()
    for i, t in enumerate(timesteps):
        t_prev = timesteps[i + 1] if i + 1 < len(timesteps) else 0
        start = perf_counter()
        decision = decide(policy, z, t, c, backend, state)
        z_next = ddim_step(z, decision.eps, t, sched, t_prev)
        times_append(perf_counter() - start)
        outcome = decision.outcome
        outcomes_append(outcome)
        if debug:
            logger.debug( # type: ignore
                "t=%d %s metric1=%s metric2=%s", t, outcome.kind, outcome.metric1, outcome.metric2)
        if on_step is not None:
            hook_start = perf_counter()
            on_step(t, z, decision)
            hook_time += perf_counter() - hook_start
        z = z_next
    stats.total_time = perf_counter() - start_run - hook_time
    stats.final = z
    if debug:
        logger.debug( # type: ignore
            "[\x1b[1;32mGOOD\x1b[0m] %s, joint: %d, detail: %d, full: %d, cost: %.6f s",
            stats.policy, stats.joint_hits, stats.detail_hits, stats.full_computes, stats.total_time,
        )
    return stats
