#!/usr/bin/env python3
# encoding: utf-8

from pathlib import Path
from sys import path

ROOT = Path(__file__).parents[1]
for p in (ROOT, ROOT / "modules" / "h2bench"):
    if str(p) not in path:
        path.insert(0, str(p))

import pytest

from h2cache.denoiser import AnalyticGaussianBackend, SmoothRandomBackend
from h2cache.diffusion import Conditioning, build_linear_schedule
from h2cache.tool.config import ExperimentConfig


SMALL_SHAPE = (1, 4, 32, 32)


@pytest.fixture
def shape():
    return SMALL_SHAPE


@pytest.fixture
def sched():
    return build_linear_schedule(50)


@pytest.fixture
def cond():
    return Conditioning.seeded(8, 0)


@pytest.fixture
def smooth_backend(sched):
    return SmoothRandomBackend(SMALL_SHAPE, seed=0, steps=sched.steps, cond_dim=8)


@pytest.fixture
def analytic_backend(sched):
    return AnalyticGaussianBackend.constant(SMALL_SHAPE, 0.0, 1.0, sched=sched)


@pytest.fixture(params=["smooth", "analytic"])
def backend(request, smooth_backend, analytic_backend):
    return smooth_backend if request.param == "smooth" else analytic_backend


@pytest.fixture
def fast_config():
    "small, cost-free config so harness tests take well under a second per run"
    return ExperimentConfig(
        shape=(1, 2, 16, 16),
        steps=12,
        cost_l1=0,
        cost_l2=0,
        repeats=1,
        warmup=0,
        seeds=(0, 1),
        tau1_grid=(0.0, 0.15, float("inf")),
        tau2_grid=(0.0, 0.18),
        step_counts=(4, 8),
    )
