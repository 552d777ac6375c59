#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["TraceRecord", "Trace", "RecordedStages", "record_trace", "replay_policy"]
__doc__ = """\
Cache-free trajectories on disk, and offline evaluation of cache decisions against them

File layout, all little-endian:

    b"H2TR" | version: u8 | T: u32 | B: u32 | C: u32 | H: u32 | W: u32
    T records of (z_t, z′_t, ε), each tensor B·C·H·W float32 in row-major order
"""

from dataclasses import dataclass
from logging import Logger
from os import PathLike
from pathlib import Path
from time import perf_counter

import numpy as np

from .const import TRACE_MAGIC, TRACE_VERSION
from .diffusion import Conditioning, NoiseSchedule
from .denoiser import DenoiserBackend
from .engine import CacheState, NoCache, Policy, RunStats, StepDecision, decide, policy_name, sample_loop
from .exception import NonFiniteError, ShapeError, TraceFormatError
from .log import logger as _logger
from .tensor import Tensor4
from .util import atomic_write


_HEADER_SIZE = len(TRACE_MAGIC) + 1 + 5 * 4


@dataclass(frozen=True, slots=True)
class TraceRecord:
    "stage inputs and outputs of one cache-free step"
    z_t: Tensor4
    z_prime: Tensor4
    eps: Tensor4

    def __post_init__(self, /):
        shape = self.z_t.shape
        if self.z_prime.shape != shape or self.eps.shape != shape:
            raise ShapeError(
                f"record shapes differ: {shape}, {self.z_prime.shape}, {self.eps.shape}")


@dataclass(frozen=True, slots=True)
class Trace:
    """A recorded cache-free run, one record per sampler step, highest t first
    """
    shape: tuple[int, int, int, int]
    records: tuple[TraceRecord, ...]

    def __post_init__(self, /):
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise TraceFormatError("a trace needs at least one record")
        for i, record in enumerate(self.records):
            if record.z_t.shape != self.shape:
                raise TraceFormatError(f"record {i} has shape {record.z_t.shape}, expected {self.shape}")

    def __len__(self, /) -> int:
        return len(self.records)

    @property
    def steps(self, /) -> int:
        return len(self.records)

    def dumps(self, /) -> bytes:
        "serialize to the trace file format"
        header = TRACE_MAGIC + bytes((TRACE_VERSION,)) + np.array(
            (len(self.records), *self.shape), dtype="<u4").tobytes()
        body = b"".join(
            tensor.tobytes()
            for record in self.records
            for tensor in (record.z_t, record.z_prime, record.eps)
        )
        return header + body

    @classmethod
    def loads(cls, data: bytes | bytearray | memoryview, /) -> "Trace":
        """Parse the trace file format

        :raises TraceFormatError: bad magic, unknown version, truncated or oversized body, non-finite values
        """
        data = bytes(data)
        if len(data) < _HEADER_SIZE:
            raise TraceFormatError(f"trace too short: {len(data)} bytes")
        magic_size = len(TRACE_MAGIC)
        if data[:magic_size] != TRACE_MAGIC:
            raise TraceFormatError(f"bad magic: {data[:magic_size]!r}")
        if (version := data[magic_size]) != TRACE_VERSION:
            raise TraceFormatError(f"unsupported trace version: {version}")
        steps, *dims = (int(n) for n in np.frombuffer(data, dtype="<u4", count=5, offset=magic_size + 1))
        if steps < 1 or any(n < 1 for n in dims):
            raise TraceFormatError(f"bad header: T={steps}, shape={tuple(dims)}")
        size = dims[0] * dims[1] * dims[2] * dims[3]
        expected = _HEADER_SIZE + steps * 3 * size * 4
        if len(data) != expected:
            raise TraceFormatError(f"trace body size mismatch: {len(data)} bytes, expected {expected}")
        body = np.frombuffer(data, dtype="<f4", offset=_HEADER_SIZE).reshape((steps, 3, *dims))
        try:
            records = tuple(
                TraceRecord(Tensor4(body[i, 0]), Tensor4(body[i, 1]), Tensor4(body[i, 2]))
                for i in range(steps)
            )
        except NonFiniteError as e:
            raise TraceFormatError(f"trace holds non-finite values: {e}") from e
        return cls(tuple(dims), records) # type: ignore

    def save(self, path: bytes | str | PathLike, /):
        """Write the trace file, the target is replaced only once the whole file is written
        """
        atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path: bytes | str | PathLike, /) -> "Trace":
        return cls.loads(Path(path).read_bytes()) # type: ignore


def record_trace(
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    z_T: Tensor4,
    c: Conditioning,
    /,
    steps: None | int = None,
    logger: None | Logger = _logger,
) -> Trace:
    """Record (z_t, z′_t, ε) of every step of a cache-free run

    :param backend: the two-stage denoiser
    :param sched: the noise schedule
    :param z_T: initial latent
    :param c: conditioning
    :param steps: sampler steps, None for every schedule step
    :param logger: None disables output

    :return: the trace, its first record holds z_T
    """
    records: list[TraceRecord] = []
    def on_step(t: int, z_t: Tensor4, decision: StepDecision, /):
        records.append(TraceRecord(z_t, decision.z_prime, decision.eps))
    stats = sample_loop(NoCache(), backend, sched, z_T, c, steps=steps, on_step=on_step, logger=logger)
    if logger is not None:
        logger.info(
            "[\x1b[1;32mGOOD\x1b[0m] recorded \x1b[1m%d\x1b[0m steps of shape %s, cost: %.6f s",
            len(records), z_T.shape, stats.total_time,
        )
    return Trace(z_T.shape, tuple(records))


class RecordedStages:
    """Backend that answers stage calls with the recorded outputs of one step
    """
    __slots__ = ("record",)

    def __init__(self, /, record: TraceRecord):
        self.record = record

    def stage1(self, z_t: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        return self.record.z_prime

    def stage2(self, z_prime: Tensor4, t: int, c: Conditioning, /) -> Tensor4:
        return self.record.eps


_NO_CONDITIONING = Conditioning.zeros(1)


def replay_policy(
    trace: Trace,
    policy: Policy,
    /,
    logger: None | Logger = _logger,
) -> RunStats:
    """Evaluate the decisions of a cache policy against a recorded trajectory

    Each step sees the recorded z_t, and a stage "call" yields the recorded output. The
    trajectory is never altered by the decisions, so the outcomes isolate the checks and
    thresholds. Steps are numbered T..1 with T = len(trace).

    :param trace: a cache-free trace
    :param policy: the policy to evaluate
    :param logger: None disables output

    :return: outcomes with metric values, `final` is None
    """
    if not isinstance(trace, Trace):
        raise TraceFormatError(f"expected a Trace, got {type(trace).__qualname__}")
    steps = len(trace)
    stats = RunStats(policy_name(policy), list(range(steps, 0, -1)))
    state = CacheState()
    start_run = perf_counter()
    for t, record in zip(stats.timesteps, trace.records):
        start = perf_counter()
        decision = decide(policy, record.z_t, t, _NO_CONDITIONING, RecordedStages(record), state)
        stats.step_times.append(perf_counter() - start)
        stats.outcomes.append(decision.outcome)
    stats.total_time = perf_counter() - start_run
    if logger is not None:
        logger.debug(
            "[\x1b[1;37;43mSTAT\x1b[0m] replay %s, joint: %d, detail: %d, full: %d",
            stats.policy, stats.joint_hits, stats.detail_hits, stats.full_computes,
        )
    return stats
