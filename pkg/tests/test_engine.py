#!/usr/bin/env python3
# encoding: utf-8

from math import inf

import numpy as np
import pytest

from h2cache.denoiser import CountingBackend
from h2cache.diffusion import ddim_step
from h2cache.engine import (
    BlockCache, CacheState, H2Config, NoCache, StepKind, StepOutcome, block_cache_step, decide,
    h2_decide, h2_step, sample_loop,
)
from h2cache.exception import CacheCorruptionError
from h2cache.pfs import SimilarityMetric
from h2cache.tensor import Tensor4, seeded_gaussian


def run(policy, backend, sched, cond, seed=0, shape=(1, 4, 32, 32), **kwargs):
    return sample_loop(policy, backend, sched, seeded_gaussian(shape, seed), cond, logger=None, **kwargs)


class TestStepOutcome:

    def test_flags_follow_kind(self):
        assert StepOutcome.of(StepKind.JOINT_HIT).stage1_executed is False
        detail = StepOutcome.of(StepKind.DETAIL_HIT)
        assert (detail.stage1_executed, detail.stage2_executed) == (True, False)
        with pytest.raises(ValueError):
            StepOutcome(StepKind.JOINT_HIT, True, False)

    def test_checks(self):
        assert StepOutcome.of(StepKind.FULL_COMPUTE).checks == 0
        assert StepOutcome.of(StepKind.FULL_COMPUTE, 3, 0.1, 0.2).checks == 2


class TestPolicies:

    @pytest.mark.parametrize("tau", [-0.1, float("nan")])
    def test_threshold_validation(self, tau):
        with pytest.raises(ValueError):
            H2Config(tau, 0.1)
        with pytest.raises(ValueError):
            H2Config(0.1, tau)
        with pytest.raises(ValueError):
            BlockCache(tau)

    def test_infinite_threshold_allowed(self):
        assert H2Config(inf, inf).tau1 == inf

    def test_names(self):
        assert (NoCache().name, BlockCache(0.1).name, H2Config(0.1, 0.1).name) == ("none", "block", "h2")

    def test_unknown_policy(self, smooth_backend, cond, shape):
        with pytest.raises(TypeError):
            decide(object(), Tensor4.zeros(shape), 1, cond, smooth_backend, CacheState()) # type: ignore


class TestDecisions:

    def test_cold_cache_computes_both_stages(self, smooth_backend, cond, shape):
        counting = CountingBackend(smooth_backend)
        state = CacheState()
        z = seeded_gaussian(shape, 0)
        decision = h2_decide(z, 10, cond, counting, H2Config(inf, inf), state)
        assert decision.outcome.kind is StepKind.FULL_COMPUTE
        assert (counting.stage1_calls, counting.stage2_calls) == (1, 1)
        assert state.populated and state.step == 10 and state.z_cache_in is z

    def test_joint_hit_skips_both_and_keeps_cache(self, smooth_backend, cond, shape):
        counting = CountingBackend(smooth_backend)
        state = CacheState()
        cfg = H2Config(inf, 0.0)
        z = seeded_gaussian(shape, 0)
        first = h2_decide(z, 10, cond, counting, cfg, state)
        second = h2_decide(seeded_gaussian(shape, 1), 9, cond, counting, cfg, state)
        assert second.outcome.kind is StepKind.JOINT_HIT
        assert second.eps is first.eps and second.z_prime is first.z_prime
        assert (counting.stage1_calls, counting.stage2_calls) == (1, 1)
        assert state.step == 10 and state.z_cache_in is z
        assert second.outcome.metric1 is not None and second.outcome.metric2 is None

    def test_detail_hit_refreshes_cache(self, smooth_backend, cond, shape):
        counting = CountingBackend(smooth_backend)
        state = CacheState()
        cfg = H2Config(0.0, inf)
        first = h2_decide(seeded_gaussian(shape, 0), 10, cond, counting, cfg, state)
        z2 = seeded_gaussian(shape, 1)
        second = h2_decide(z2, 9, cond, counting, cfg, state)
        assert second.outcome.kind is StepKind.DETAIL_HIT
        assert second.eps is first.eps
        assert (counting.stage1_calls, counting.stage2_calls) == (2, 1)
        assert state.z_cache_in is z2 and state.z_prime_cache is second.z_prime and state.eps_cache is first.eps
        assert state.step == 9

    def test_strict_threshold(self, smooth_backend, cond, shape):
        state = CacheState()
        z = seeded_gaussian(shape, 0)
        h2_decide(z, 10, cond, smooth_backend, H2Config(0.0, 0.0), state)
        # identical input, distance exactly 0, still a miss at τ = 0
        again = h2_decide(z, 9, cond, smooth_backend, H2Config(0.0, 0.0), state)
        assert again.outcome.metric1 == 0.0
        assert again.outcome.kind is StepKind.FULL_COMPUTE

    def test_corrupted_cache(self, smooth_backend, cond, shape):
        state = CacheState()
        state.update(Tensor4.zeros((1, 1, 4, 4)), Tensor4.zeros((1, 1, 4, 4)), Tensor4.zeros((1, 1, 4, 4)), 5)
        with pytest.raises(CacheCorruptionError):
            h2_decide(Tensor4.zeros(shape), 4, cond, smooth_backend, H2Config(0.1, 0.1), state)
        state.clear()
        assert not state.populated and state.eps_cache is None


class TestSampling:

    def test_degenerate_thresholds_match_no_cache(self, backend, sched, cond):
        for seed in range(20):
            base = run(NoCache(), backend, sched, cond, seed)
            h2 = run(H2Config(0.0, 0.0), backend, sched, cond, seed)
            assert h2.final.bitwise_equal(base.final)
            assert h2.full_computes == sched.steps

    def test_structure_only_reduces_to_block_cache(self, backend, sched, cond):
        for tau in (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, inf):
            for seed in range(10):
                h2 = run(H2Config(tau, 0.0), backend, sched, cond, seed)
                block = run(BlockCache(tau), backend, sched, cond, seed)
                assert h2.kinds == block.kinds
                assert h2.final.bitwise_equal(block.final)

    def test_infinite_tau1_computes_once(self, smooth_backend, sched, cond):
        stats = run(H2Config(inf, inf), smooth_backend, sched, cond)
        assert stats.full_computes == 1
        assert stats.joint_hits == sched.steps - 1
        assert stats.stage1_calls == 1 and stats.stage2_calls == 1

    def test_stats_are_consistent(self, smooth_backend, sched, cond):
        stats = run(H2Config(0.05, 0.18, SimilarityMetric.pfs_rel_diff(4), SimilarityMetric.pfs_rel_diff(4)),
                    smooth_backend, sched, cond)
        assert stats.steps == sched.steps == len(stats.step_times)
        assert stats.joint_hits + stats.detail_hits + stats.full_computes == stats.steps
        assert stats.stage1_calls == stats.detail_hits + stats.full_computes
        assert stats.hit_fraction == pytest.approx(1 - stats.full_computes / stats.steps)
        assert stats.outcomes[0].kind is StepKind.FULL_COMPUTE
        assert stats.timesteps == list(range(sched.steps, 0, -1))
        assert [o.t for o in stats.outcomes] == stats.timesteps
        assert stats.summary()["steps"] == sched.steps

    def test_sub_sequence_sampling(self, smooth_backend, sched, cond):
        stats = run(NoCache(), smooth_backend, sched, cond, steps=10)
        assert stats.steps == 10
        assert stats.timesteps[0] == sched.steps and stats.timesteps[-1] == 1

    def test_on_step_sees_inputs(self, smooth_backend, sched, cond, shape):
        seen = []
        z_T = seeded_gaussian(shape, 0)
        sample_loop(NoCache(), smooth_backend, sched, z_T, cond, logger=None,
                    on_step=lambda t, z, d: seen.append((t, z)))
        assert seen[0][0] == sched.steps and seen[0][1] is z_T
        assert len(seen) == sched.steps

    def test_on_step_is_not_timed(self, cond):
        from time import sleep
        from h2cache.denoiser import AnalyticGaussianBackend
        from h2cache.diffusion import build_linear_schedule

        sched = build_linear_schedule(5)
        backend = AnalyticGaussianBackend.constant((1, 4, 32, 32), sched=sched)
        stats = sample_loop(NoCache(), backend, sched, seeded_gaussian((1, 4, 32, 32), 0), cond,
                            logger=None, on_step=lambda t, z, d: sleep(0.05))
        assert stats.total_time < 0.05 * sched.steps
        assert sum(stats.step_times) <= stats.total_time

    def test_runs_do_not_share_caches(self, smooth_backend, sched, cond):
        policy = H2Config(0.1, 0.18)
        a = run(policy, smooth_backend, sched, cond, 3)
        run(policy, smooth_backend, sched, cond, 4)
        b = run(policy, smooth_backend, sched, cond, 3)
        assert a.kinds == b.kinds and a.final.bitwise_equal(b.final)


class TestStepFunctions:

    def test_h2_step_applies_ddim(self, smooth_backend, sched, cond, shape):
        state = CacheState()
        z = seeded_gaussian(shape, 0)
        z_prev, outcome, state2 = h2_step(z, 50, cond, smooth_backend, sched, H2Config(0.1, 0.1), state)
        assert state2 is state and outcome.kind is StepKind.FULL_COMPUTE
        eps = smooth_backend.stage2(smooth_backend.stage1(z, 50, cond), 50, cond)
        assert z_prev.bitwise_equal(ddim_step(z, eps, 50, sched))

    def test_block_cache_step(self, smooth_backend, sched, cond, shape):
        state = CacheState()
        z = seeded_gaussian(shape, 0)
        block_cache_step(z, 50, cond, smooth_backend, sched, inf, SimilarityMetric(), state)
        _, outcome, _ = block_cache_step(z, 49, cond, smooth_backend, sched, inf, SimilarityMetric(), state)
        assert outcome.kind is StepKind.JOINT_HIT
        with pytest.raises(ValueError):
            block_cache_step(z, 48, cond, smooth_backend, sched, -1.0, SimilarityMetric(), state)

    def test_detail_only_runs_stage2_once(self, smooth_backend, sched, cond):
        stats = run(H2Config(0.0, inf), smooth_backend, sched, cond)
        assert stats.stage2_calls == 1
        assert stats.stage1_calls == sched.steps
        assert stats.detail_hits == sched.steps - 1
