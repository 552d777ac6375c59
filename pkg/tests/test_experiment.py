#!/usr/bin/env python3
# encoding: utf-8

from math import inf

import pytest

from h2cache.const import CSV_COLUMNS, FULL_SCALE_REFERENCE
from h2cache.engine import H2Config, NoCache
from h2cache.tool.experiment import (
    ablate_pfs, bench_metric, compare_policies, measure_pair, replay_experiment, run_experiment,
    summarize_values, sweep_steps, sweep_thresholds,
)
from h2cache.trace import record_trace


def test_summarize_values():
    stats = summarize_values([1.0, None, 3.0])
    assert stats == {"n": 2, "mean": 2.0, "std": 1.0, "median": 2.0}
    assert summarize_values([])["mean"] is None


def test_measure_pair(fast_config):
    pair = measure_pair(fast_config.override(repeats=3), H2Config(inf, inf), 0)
    assert len(pair.baseline_times) == len(pair.cached_times) == 3
    assert pair.cached.joint_hits == fast_config.steps - 1
    assert pair.baseline.full_computes == fast_config.steps


def test_no_cache_is_its_own_baseline(fast_config):
    pair = measure_pair(fast_config, NoCache(), 0)
    assert pair.cached is pair.baseline
    assert pair.speedup == 1.0


def test_run_experiment(fast_config):
    report = run_experiment(fast_config, logger=None)
    assert [row["policy"] for row in report.rows] == ["none", "h2", "none", "h2"]
    assert report.columns[:len(CSV_COLUMNS)] == list(CSV_COLUMNS)
    base = report.rows[0]
    assert base["psnr_db"] == inf and base["rel_l2"] == 0.0 and base["speedup"] == 1.0
    assert base["full_computes"] == fast_config.steps
    assert report.aggregate["speedup"]["n"] == 2
    assert len(report.series) == 2
    assert report.to_dict()["full_scale_reference"] == FULL_SCALE_REFERENCE


def test_sweep_thresholds_live(fast_config):
    report = sweep_thresholds(fast_config, logger=None)
    cells = len(fast_config.tau1_grid) * len(fast_config.tau2_grid)
    assert len(report.rows) == cells * len(fast_config.seeds)
    assert [(r["tau1"], r["tau2"]) for r in report.rows[::2]] == [
        (a, b) for a in fast_config.tau1_grid for b in fast_config.tau2_grid]
    degenerate = [r for r in report.rows if r["tau1"] == 0.0 and r["tau2"] == 0.0]
    assert all(r["psnr_db"] == inf for r in degenerate)
    marked = {key for r in report.rows for key in r["best"].split(",") if key}
    assert marked == {"psnr_db", "ssim", "speedup"}
    assert set(report.aggregate["best"]) == {"psnr_db", "ssim", "speedup"}


def test_psnr_falls_as_hits_grow(fast_config):
    cfg = fast_config.override(steps=30, seeds="0", tau1_grid="0", tau2_grid="0, 0.05, 0.2, 0.5, 1, inf")
    rows = sweep_thresholds(cfg, logger=None).rows
    rows.sort(key=lambda r: r["hit_fraction"])
    finite = [r["psnr_db"] for r in rows if r["hit_fraction"] > 0.5]
    assert all(v < inf for v in finite)
    inversions = sum(a < b for a, b in zip(finite, finite[1:]))
    assert inversions <= 1


def test_psnr_falls_along_each_tau1_row(fast_config):
    cfg = fast_config.override(
        steps=30, seeds="0", tau1_grid="0, 0.05, 0.15, 0.5, inf", tau2_grid="0, 0.05, 0.2, 0.5, 1, inf")
    assert cfg.backend == "smooth"
    rows = sweep_thresholds(cfg, logger=None).rows
    assert len(rows) == 5 * 6
    assert [r["psnr_db"] for r in rows if r["tau1"] == 0.0 and r["tau2"] == 0.0] == [inf]
    for tau1 in cfg.tau1_grid:
        row = sorted(
            (r for r in rows if r["tau1"] == tau1 and r["hit_fraction"] > 0.5),
            key=lambda r: (r["hit_fraction"], -r["psnr_db"]),
        )
        psnr = [r["psnr_db"] for r in row]
        assert all(v < inf for v in psnr)
        assert sum(a < b for a, b in zip(psnr, psnr[1:])) <= 1


def test_sweep_thresholds_replay(fast_config):
    report = sweep_thresholds(fast_config, mode="replay", logger=None)
    assert report.kind == "sweep-thresholds-replay"
    assert len(report.rows) == len(fast_config.tau1_grid) * len(fast_config.tau2_grid) * len(fast_config.seeds)
    assert all(r["psnr_db"] is None and r["speedup"] is None for r in report.rows)
    inf_rows = [r for r in report.rows if r["tau1"] == inf]
    assert all(r["joint_hits"] == fast_config.steps - 1 for r in inf_rows)
    with pytest.raises(ValueError):
        sweep_thresholds(fast_config, mode="offline", logger=None) # type: ignore


def test_replay_sweep_matches_across_workers(fast_config):
    serial = sweep_thresholds(fast_config.override(workers=1), mode="replay", logger=None)
    parallel = sweep_thresholds(fast_config.override(workers=4), mode="replay", logger=None)
    key = lambda r: (r["tau1"], r["tau2"], r["seed"], r["joint_hits"], r["detail_hits"], r["full_computes"])
    assert list(map(key, serial.rows)) == list(map(key, parallel.rows))


def test_replay_experiment(fast_config):
    sched = fast_config.build_schedule()
    trace = record_trace(
        fast_config.build_backend(sched), sched, fast_config.initial_latent(0),
        fast_config.build_conditioning(), logger=None,
    )
    report = replay_experiment(fast_config, trace, logger=None)
    (row,) = report.rows
    assert row["T"] == fast_config.steps
    assert row["joint_hits"] + row["detail_hits"] + row["full_computes"] == fast_config.steps
    assert len(report.series[0]["metric1"]) == fast_config.steps


def test_sweep_steps(fast_config):
    report = sweep_steps(fast_config.override(tau1="inf"), logger=None)
    assert sorted({r["T"] for r in report.rows}) == [4, 8]
    assert set(report.aggregate["speedup_by_T"]) == {"4", "8"}
    assert isinstance(report.aggregate["strictly_increasing"], bool)


def test_ablate_pfs(fast_config):
    report = ablate_pfs(fast_config, logger=None)
    assert len(report.rows) == 2 * len(fast_config.tau2_grid) * len(fast_config.seeds)
    without, with_pfs = report.rows[0], report.rows[1]
    assert (without["variant"], with_pfs["variant"]) == ("w/o pfs", "pfs")
    assert without["dp1"] is None and with_pfs["dp1"] == fast_config.dp1
    for key in ("time_change_pct", "check_time_change_pct", "joint_hits_delta", "detail_hits_delta"):
        assert key in with_pfs
    assert with_pfs["joint_hits_delta"] == with_pfs["joint_hits"] - without["joint_hits"]


def test_compare_policies(fast_config):
    report = compare_policies(fast_config.override(seeds="0"), logger=None)
    variants = [r["variant"] for r in report.rows]
    assert variants == ["baseline", "block", "structure-only", "detail-only", "h2"]
    rows = {r["variant"]: r for r in report.rows}
    assert rows["baseline"]["speedup"] == 1.0
    assert rows["structure-only"]["detail_hits"] == 0
    assert rows["detail-only"]["joint_hits"] == 0
    assert rows["block"]["detail_hits"] == 0
    assert set(report.aggregate) == set(variants)


def test_bench_metric(fast_config):
    report = bench_metric(fast_config, shape=(1, 1, 32, 32), divisor=4, trials=3, logger=None)
    assert [r["metric"] for r in report.rows] == ["full-l2", "full-rel-l2", "full-rel-mean-abs", "pfs/4"]
    assert report.columns[0] == "metric"
    assert report.rows[-1]["s_k"] == 8
    assert report.rows[1]["speedup_vs_full_rel_l2"] == pytest.approx(1.0)


@pytest.mark.bench
def test_speedup_grows_with_steps():
    from h2cache.tool.config import ExperimentConfig

    cfg = ExperimentConfig(tau1=inf, seeds=(0,), repeats=3)
    passed = 0
    for _ in range(5):
        report = sweep_steps(cfg, logger=None)
        by_steps = report.aggregate["speedup_by_T"]
        passed += report.aggregate["strictly_increasing"] and by_steps["100"] > 10.0
    assert passed >= 4


def test_reports_are_deterministic_without_timings(fast_config):
    timing = {"time_total_s", "baseline_time_s", "speedup", "check_time_s", "best"}
    strip = lambda report: [{k: v for k, v in row.items() if k not in timing} for row in report.rows]
    a = sweep_thresholds(fast_config, logger=None)
    b = sweep_thresholds(fast_config, logger=None)
    assert strip(a) == strip(b)
