#!/usr/bin/env python3
# encoding: utf-8

from math import inf

import pytest

from h2cache.denoiser import AnalyticGaussianBackend, CostWrappedBackend, SmoothRandomBackend
from h2cache.engine import BlockCache, H2Config, NoCache
from h2cache.exception import ConfigError
from h2cache.pfs import SimilarityMetric
from h2cache.tool.config import ExperimentConfig, config_from_mapping, parse_config, parse_config_text


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.shape == (1, 4, 32, 32)
    assert (cfg.tau1, cfg.tau2) == (0.15, 0.18)
    assert cfg.tau1_grid == (0.0, 0.05, 0.15, 0.5, inf)
    assert cfg.step_counts == (10, 30, 100)


def test_flat_text_format():
    cfg = parse_config_text("""
        # threshold sweep on a small shape
        shape = 1, 2, 16, 16
        steps = 30      # T
        tau1 = inf
        tau2_grid = 0, 0.05, 0.18
        policy = block
        psnr_peak = none
        output_csv = out.csv
    """)
    assert cfg.shape == (1, 2, 16, 16)
    assert cfg.steps == 30
    assert cfg.tau1 == inf
    assert cfg.tau2_grid == (0.0, 0.05, 0.18)
    assert cfg.policy == "block"
    assert cfg.psnr_peak is None
    assert cfg.output_csv == "out.csv"


@pytest.mark.parametrize("text, key, lineno", [
    ("steps = 10\ncolour = red\n", "colour", 2),
    ("steps = ten\n", "steps", 1),
    ("\n\ntau1 = -1\n", "tau1", 3),
    ("steps = 10\nsteps = 20\n", "steps", 2),
    ("policy = lru\n", "policy", 1),
    ("metric1 = cosine\n", "metric1", 1),
])
def test_errors_name_key_and_line(text, key, lineno):
    with pytest.raises(ConfigError) as excinfo:
        parse_config_text(text)
    assert excinfo.value.key == key
    assert excinfo.value.lineno == lineno
    assert f"line {lineno}" in excinfo.value.message


def test_missing_separator():
    with pytest.raises(ConfigError) as excinfo:
        parse_config_text("steps 10\n")
    assert excinfo.value.lineno == 1


def test_text_round_trip():
    cfg = ExperimentConfig(tau1=inf, seeds=(4, 5), sample_steps=20, workers=2)
    assert parse_config_text(cfg.to_text()) == cfg


def test_config_hash_ignores_outputs():
    cfg = ExperimentConfig()
    assert cfg.config_hash == cfg.override(["output_csv=a.csv", "trace_path=t.h2tr"]).config_hash
    assert cfg.config_hash != cfg.override(["tau1=0.2"]).config_hash
    assert len(cfg.config_hash) == 12


def test_override():
    cfg = ExperimentConfig().override(["tau1=inf", "seeds = 1,2,3"], steps=20)
    assert (cfg.tau1, cfg.seeds, cfg.steps) == (inf, (1, 2, 3), 20)
    with pytest.raises(ConfigError):
        ExperimentConfig().override(["tau1"])
    with pytest.raises(ConfigError):
        ExperimentConfig().override(["nope=1"])


def test_file_formats(tmp_path):
    (tmp_path / "a.toml").write_text('steps = 20\ntau1_grid = [0, 0.1, "inf"]\nshape = [1, 1, 8, 8]\n')
    (tmp_path / "a.yml").write_text("steps: 20\ntau1_grid: [0, 0.1, .inf]\nshape: [1, 1, 8, 8]\n")
    (tmp_path / "a.json").write_text('{"steps": 20, "tau1_grid": [0, 0.1, "inf"], "shape": [1, 1, 8, 8]}')
    (tmp_path / "a.cfg").write_text("steps = 20\ntau1_grid = 0, 0.1, inf\nshape = 1, 1, 8, 8\n")
    configs = [parse_config(tmp_path / name) for name in ("a.toml", "a.yml", "a.json", "a.cfg")]
    assert all(cfg == configs[0] for cfg in configs)
    assert configs[0].tau1_grid == (0.0, 0.1, inf)


def test_file_errors(tmp_path):
    (tmp_path / "bad.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "bad.json")
    (tmp_path / "bad.toml").write_text("steps = ")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "bad.toml")
    with pytest.raises(OSError):
        parse_config(tmp_path / "missing.cfg")


def test_counts_accept_integral_exponent_notation(tmp_path):
    cfg = parse_config_text("cost_l1 = 1e7\ncost_l2 = 1E6\nsteps = 1e2\n")
    assert (cfg.cost_l1, cfg.cost_l2, cfg.steps) == (10_000_000, 1_000_000, 100)
    assert ExperimentConfig().override(["cost_l2=2.5e6"]).cost_l2 == 2_500_000
    (tmp_path / "a.yml").write_text("cost_l1: 1e7\n")
    (tmp_path / "a.toml").write_text("cost_l1 = 1e7\n")
    assert parse_config(tmp_path / "a.yml").cost_l1 == parse_config(tmp_path / "a.toml").cost_l1 == 10_000_000
    for text in ("cost_l1 = 1.5\n", "cost_l1 = 1e-3\n", "cost_l1 = inf\n", "steps = nan\n"):
        with pytest.raises(ConfigError):
            parse_config_text(text)


def test_mapping_type_errors():
    with pytest.raises(ConfigError):
        config_from_mapping({"steps": 2.5})
    with pytest.raises(ConfigError):
        config_from_mapping({"policy": 3})
    with pytest.raises(ConfigError):
        config_from_mapping({"steps": True})


def test_builders():
    cfg = ExperimentConfig(steps=20, dp1=4, dp2=8)
    sched = cfg.build_schedule()
    assert sched.steps == 20
    backend = cfg.build_backend(sched)
    assert isinstance(backend, CostWrappedBackend)
    assert isinstance(backend.backend, SmoothRandomBackend)
    assert isinstance(cfg.override(backend="analytic").build_backend(sched).backend, AnalyticGaussianBackend)
    policy = cfg.build_policy()
    assert policy == H2Config(0.15, 0.18, SimilarityMetric.pfs_rel_diff(4), SimilarityMetric.pfs_rel_diff(8))
    assert cfg.build_policy("block", 0.3) == BlockCache(0.3, SimilarityMetric.pfs_rel_diff(4))
    assert cfg.build_policy("none") == NoCache()
    assert cfg.initial_latent(3).bitwise_equal(cfg.initial_latent(3))
    assert cfg.build_conditioning().dim == cfg.conditioning_dim
