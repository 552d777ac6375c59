#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = [
    "PairedRun", "RunReport", "measure_pair", "run_experiment", "sweep_thresholds", "sweep_steps",
    "ablate_pfs", "compare_policies", "replay_experiment", "time_metric", "bench_metric",
    "summarize_values",
]
__doc__ = "Experiments: paired timing runs, threshold and step sweeps, the PFS ablation and policy comparison"

from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from logging import Logger
from math import inf, isfinite
from pathlib import Path
from statistics import fmean, median, pstdev
from time import perf_counter
from typing import Any, Literal
from warnings import warn

from ..const import CSV_COLUMNS, CSV_EXTRA_COLUMNS, FULL_SCALE_REFERENCE, REPORT_SCHEMA_VERSION
from ..engine import BlockCache, H2Config, NoCache, Policy, RunStats, sample_loop
from ..exception import H2Warning, WindowError
from ..log import logger as _logger
from ..pfs import SimilarityMetric, kernel_size
from ..tensor import seeded_gaussian
from ..trace import Trace, record_trace, replay_policy
from .config import ExperimentConfig
from .metric import psnr, rel_l2, ssim


@dataclass(slots=True)
class PairedRun:
    """A cached run and its same-seed uncached baseline, with all timed repetitions
    """
    seed: int
    baseline: RunStats
    cached: RunStats
    baseline_times: list[float]
    cached_times: list[float]

    @property
    def baseline_time(self, /) -> float:
        return median(self.baseline_times)

    @property
    def cached_time(self, /) -> float:
        return median(self.cached_times)

    @property
    def speedup(self, /) -> float:
        cached_time = self.cached_time
        if cached_time <= 0:
            warn("cached run took no measurable time, speedup is inf", category=H2Warning)
            return inf
        return self.baseline_time / cached_time


@dataclass(slots=True)
class RunReport:
    """Rows of one experiment plus aggregates and per-step series

    Rows are plain dicts; CSV columns follow `columns`.
    """
    kind: str
    config: ExperimentConfig
    rows: list[dict[str, Any]] = field(default_factory=list)
    aggregate: dict[str, Any] = field(default_factory=dict)
    series: list[dict[str, Any]] = field(default_factory=list)

    @property
    def columns(self, /) -> list[str]:
        if self.kind == "bench-metric":
            columns: list[str] = []
        else:
            columns = [*CSV_COLUMNS, *CSV_EXTRA_COLUMNS]
        seen = set(columns)
        for row in self.rows:
            for key in row:
                if key not in seen:
                    seen.add(key)
                    columns.append(key)
        return columns

    def to_dict(self, /) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": self.kind,
            "config_hash": self.config.config_hash,
            "config": self.config.to_dict(),
            "rows": self.rows,
            "aggregate": self.aggregate,
            "series": self.series,
            "full_scale_reference": dict(FULL_SCALE_REFERENCE),
        }


def summarize_values(values: Iterable[None | float], /) -> dict[str, Any]:
    "count, mean, population std and median of the non-None values"
    vals = [float(v) for v in values if v is not None]
    if not vals:
        return {"n": 0, "mean": None, "std": None, "median": None}
    return {
        "n": len(vals),
        "mean": fmean(vals),
        "std": pstdev(vals) if all(isfinite(v) for v in vals) else None,
        "median": median(vals),
    }


def _divisor(metric: SimilarityMetric, /) -> None | int:
    return metric.pfs.divisor if metric.pfs is not None else None


def _policy_params(policy: Policy, /) -> tuple[None | float, None | float, None | int, None | int]:
    match policy:
        case H2Config(tau1=tau1, tau2=tau2, metric1=m1, metric2=m2):
            return tau1, tau2, _divisor(m1), _divisor(m2)
        case BlockCache(tau=tau, metric=m):
            return tau, None, _divisor(m), None
        case _:
            return None, None, None, None


def measure_pair(
    cfg: ExperimentConfig,
    policy: Policy,
    seed: int,
    /,
    steps: None | int = None,
) -> PairedRun:
    """Time a policy against the uncached baseline on the same z_T, backend and conditioning

    Warm-up runs are discarded, then baseline and cached runs alternate `cfg.repeats` times.
    The uncached policy is its own baseline, so its speedup is exactly 1.

    :param cfg: the experiment
    :param policy: the policy under test
    :param seed: seed of z_T
    :param steps: schedule length, defaults to `cfg.steps`; when given, every step is sampled

    :return: the last run of each side and all timings
    """
    sched = cfg.build_schedule(steps)
    backend = cfg.build_backend(sched)
    c = cfg.build_conditioning()
    z_T = cfg.initial_latent(seed)
    sample_steps = cfg.sample_steps if steps is None else None
    def run(p: Policy, /) -> RunStats:
        return sample_loop(p, backend, sched, z_T, c, steps=sample_steps, logger=None)
    self_baseline = isinstance(policy, NoCache)
    for _ in range(cfg.warmup):
        run(NoCache())
        if not self_baseline:
            run(policy)
    baseline_times: list[float] = []
    cached_times: list[float] = []
    baseline = cached = None
    for _ in range(cfg.repeats):
        baseline = run(NoCache())
        baseline_times.append(baseline.total_time)
        if not self_baseline:
            cached = run(policy)
            cached_times.append(cached.total_time)
    if self_baseline:
        cached, cached_times = baseline, baseline_times
    return PairedRun(seed, baseline, cached, baseline_times, cached_times) # type: ignore


def _quality(cfg: ExperimentConfig, pair: PairedRun, /) -> tuple[float, None | float, float]:
    ref, out = pair.baseline.final, pair.cached.final
    try:
        score: None | float = ssim(ref, out) # type: ignore
    except WindowError as e:
        warn(f"ssim skipped: {e}", category=H2Warning)
        score = None
    return psnr(ref, out, cfg.psnr_peak), score, rel_l2(ref, out) # type: ignore


def _row(cfg: ExperimentConfig, pair: PairedRun, policy: Policy, /, **extra) -> dict[str, Any]:
    cached = pair.cached
    tau1, tau2, dp1, dp2 = _policy_params(policy)
    psnr_db, ssim_score, rel = _quality(cfg, pair)
    return {
        "config_hash": cfg.config_hash,
        "seed": pair.seed,
        "policy": policy.name,
        "tau1": tau1,
        "tau2": tau2,
        "dp1": dp1,
        "dp2": dp2,
        "T": cached.steps,
        "time_total_s": pair.cached_time,
        "joint_hits": cached.joint_hits,
        "detail_hits": cached.detail_hits,
        "full_computes": cached.full_computes,
        "psnr_db": psnr_db,
        "ssim": ssim_score,
        "rel_l2": rel,
        "baseline_time_s": pair.baseline_time,
        "speedup": pair.speedup,
        "hit_fraction": cached.hit_fraction,
        "check_time_s": cached.check_time,
        "best": "",
        **extra,
    }


def _replay_row(cfg: ExperimentConfig, policy: Policy, stats: RunStats, seed: None | int = None, /) -> dict[str, Any]:
    "row of a replayed run, no final latent so the quality and speedup columns stay empty"
    tau1, tau2, dp1, dp2 = _policy_params(policy)
    return {
        "config_hash": cfg.config_hash,
        "seed": seed,
        "policy": policy.name,
        "tau1": tau1,
        "tau2": tau2,
        "dp1": dp1,
        "dp2": dp2,
        "T": stats.steps,
        "time_total_s": stats.total_time,
        "joint_hits": stats.joint_hits,
        "detail_hits": stats.detail_hits,
        "full_computes": stats.full_computes,
        "psnr_db": None,
        "ssim": None,
        "rel_l2": None,
        "baseline_time_s": None,
        "speedup": None,
        "hit_fraction": stats.hit_fraction,
        "check_time_s": stats.check_time,
        "best": "",
    }


def _baseline_row(cfg: ExperimentConfig, pair: PairedRun, /, **extra) -> dict[str, Any]:
    own = PairedRun(pair.seed, pair.baseline, pair.baseline, pair.baseline_times, pair.baseline_times)
    return _row(cfg, own, NoCache(), **extra)


def _series(stats: RunStats, /, **labels) -> dict[str, Any]:
    return {
        **labels,
        "kinds": [str(kind) for kind in stats.kinds],
        "metric1": stats.metric1_series,
        "metric2": stats.metric2_series,
        "step_times": stats.step_times,
    }


def _aggregate(rows: Sequence[dict], /, keys: Sequence[str] = (
    "time_total_s", "baseline_time_s", "speedup", "psnr_db", "ssim", "rel_l2", "hit_fraction",
)) -> dict[str, Any]:
    return {key: summarize_values(row.get(key) for row in rows) for key in keys}


def _good(logger: None | Logger, row: dict, /, label: str = ""):
    if logger is not None:
        logger.info(
            "[\x1b[1;32mGOOD\x1b[0m] %sseed \x1b[1m%s\x1b[0m, %s, joint: %d, detail: %d, full: %d, speedup: %.2fx, cost: %.6f s",
            label, row["seed"], row["policy"], row["joint_hits"], row["detail_hits"], row["full_computes"],
            row["speedup"] or 0.0, row["time_total_s"],
        )


def run_experiment(cfg: ExperimentConfig, /, logger: None | Logger = _logger) -> RunReport:
    """Run the configured policy and its baseline for every seed

    Emits a baseline row and, unless the policy is "none", a policy row per seed.
    Quality is measured against the same-seed baseline.

    :param cfg: the experiment
    :param logger: None disables output

    :return: the report, aggregates cover the policy rows
    """
    policy = cfg.build_policy()
    report = RunReport("run", cfg)
    if logger is not None:
        logger.info(
            "[\x1b[1;37;42mTELL\x1b[0m] policy \x1b[1m%s\x1b[0m, %d seeds, %d repeats after %d warm-up",
            policy.name, len(cfg.seeds), cfg.repeats, cfg.warmup,
        )
    policy_rows: list[dict] = []
    for seed in cfg.seeds:
        pair = measure_pair(cfg, policy, seed)
        report.rows.append(row := _baseline_row(cfg, pair))
        if not isinstance(policy, NoCache):
            report.rows.append(row := _row(cfg, pair, policy))
        policy_rows.append(row)
        report.series.append(_series(pair.cached, seed=seed, policy=policy.name))
        _good(logger, row)
    report.aggregate = _aggregate(policy_rows)
    if logger is not None:
        agg = report.aggregate["speedup"]
        logger.info("[\x1b[1;37;43mSTAT\x1b[0m] speedup mean: %s, std: %s", agg["mean"], agg["std"])
    return report


def _mark_best(rows: list[dict], keys: Sequence[str], /) -> dict[str, Any]:
    """Mark the rows of the grid cell with the best mean of each key in the `best` column

    Quality keys only consider cells that skipped at least one stage, unless none did.
    """
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault((row["tau1"], row["tau2"]), []).append(row)
    best: dict[str, Any] = {}
    for key in keys:
        candidates = list(cells.items())
        if key != "speedup" and key != "hit_fraction":
            with_hits = [(cell, rs) for cell, rs in candidates if any(r["hit_fraction"] > 0 for r in rs)]
            candidates = with_hits or candidates
        top_cell = None
        top = -inf
        for cell, rs in candidates:
            mean = summarize_values(r.get(key) for r in rs)["mean"]
            if mean is not None and mean > top:
                top_cell, top = cell, mean
        if top_cell is None:
            continue
        best[key] = {"tau1": top_cell[0], "tau2": top_cell[1], "mean": top}
        for r in cells[top_cell]:
            r["best"] = ",".join(filter(None, (r["best"], key)))
    return best


def _load_or_record(cfg: ExperimentConfig, seed: int, logger: None | Logger, /) -> Trace:
    sched = cfg.build_schedule()
    backend = cfg.override(cost_l1=0, cost_l2=0).build_backend(sched)
    return record_trace(
        backend, sched, cfg.initial_latent(seed), cfg.build_conditioning(),
        steps=cfg.sample_steps, logger=logger,
    )


def sweep_thresholds(
    cfg: ExperimentConfig,
    /,
    tau1_grid: None | Sequence[float] = None,
    tau2_grid: None | Sequence[float] = None,
    mode: Literal["live", "replay"] = "live",
    trace: None | Trace = None,
    logger: None | Logger = _logger,
) -> RunReport:
    """Evaluate the two-stage cache on the full τ1 × τ2 grid

    live: timed paired runs per cell and seed, quality against the baseline.
    replay: decisions against a recorded trace per seed (or `trace` / `cfg.trace_path`); cells run
    on a thread pool, quality and speedup columns stay empty.

    Rows come in grid order (τ1 outer, τ2 inner, then seed); the `best` column marks argmax cells.

    :param cfg: the experiment
    :param tau1_grid: defaults to `cfg.tau1_grid`
    :param tau2_grid: defaults to `cfg.tau2_grid`
    :param mode: "live" or "replay"
    :param trace: replay against this trace only
    :param logger: None disables output

    :return: the report
    """
    tau1_grid = tuple(cfg.tau1_grid if tau1_grid is None else tau1_grid)
    tau2_grid = tuple(cfg.tau2_grid if tau2_grid is None else tau2_grid)
    if not tau1_grid or not tau2_grid:
        raise ValueError("threshold grids must not be empty")
    cells = list(product(tau1_grid, tau2_grid))
    report = RunReport(f"sweep-thresholds-{mode}", cfg)
    if logger is not None:
        logger.info(
            "[\x1b[1;37;42mTELL\x1b[0m] %d x %d grid, %s mode", len(tau1_grid), len(tau2_grid), mode)
    if mode == "live":
        for tau1, tau2 in cells:
            policy = cfg.build_policy("h2", tau1, tau2)
            for seed in cfg.seeds:
                pair = measure_pair(cfg, policy, seed)
                report.rows.append(row := _row(cfg, pair, policy))
                report.series.append(_series(pair.cached, seed=seed, tau1=tau1, tau2=tau2))
                _good(logger, row, f"τ1={tau1} τ2={tau2} ")
        report.aggregate["best"] = _mark_best(report.rows, ("psnr_db", "ssim", "speedup"))
    elif mode == "replay":
        if trace is not None:
            traces: list[tuple[None | int, Trace]] = [(None, trace)]
        elif cfg.trace_path and Path(cfg.trace_path).exists():
            traces = [(None, Trace.load(cfg.trace_path))]
        else:
            traces = [(seed, _load_or_record(cfg, seed, logger)) for seed in cfg.seeds]
        tasks = [
            (tau1, tau2, seed, tr, cfg.build_policy("h2", tau1, tau2))
            for tau1, tau2 in cells
            for seed, tr in traces
        ]
        with ThreadPoolExecutor(cfg.workers) as executor:
            results = list(executor.map(lambda task: replay_policy(task[3], task[4], logger=None), tasks))
        for (tau1, tau2, seed, _, policy), stats in zip(tasks, results):
            report.rows.append(_replay_row(cfg, policy, stats, seed))
            report.series.append(_series(stats, seed=seed, tau1=tau1, tau2=tau2))
        report.aggregate["best"] = _mark_best(report.rows, ("hit_fraction",))
    else:
        raise ValueError(f"unknown sweep mode: {mode!r}")
    return report


def replay_experiment(
    cfg: ExperimentConfig,
    trace: Trace,
    /,
    logger: None | Logger = _logger,
) -> RunReport:
    """Replay the configured policy against one recorded trace

    :param cfg: the experiment, supplies the policy
    :param trace: a cache-free trace
    :param logger: None disables output

    :return: one row with hit counts, the per-step metric values go to `series`
    """
    policy = cfg.build_policy()
    stats = replay_policy(trace, policy, logger=logger)
    report = RunReport("replay", cfg)
    report.rows.append(_replay_row(cfg, policy, stats))
    report.series.append(_series(stats, policy=policy.name))
    if logger is not None:
        logger.info(
            "[\x1b[1;37;43mSTAT\x1b[0m] replay %s over %d steps, joint: %d, detail: %d, full: %d",
            policy.name, stats.steps, stats.joint_hits, stats.detail_hits, stats.full_computes,
        )
    return report


def sweep_steps(
    cfg: ExperimentConfig,
    /,
    step_counts: None | Sequence[int] = None,
    logger: None | Logger = _logger,
) -> RunReport:
    """Speedup of the configured policy against a same-T baseline for each schedule length T

    :param cfg: the experiment
    :param step_counts: defaults to `cfg.step_counts`
    :param logger: None disables output

    :return: the report, `aggregate["speedup_by_T"]` holds the mean speedup per T
    """
    step_counts = tuple(cfg.step_counts if step_counts is None else step_counts)
    if not step_counts or any(n < 1 for n in step_counts):
        raise ValueError(f"step counts must be >= 1, got {step_counts!r}")
    policy = cfg.build_policy()
    report = RunReport("sweep-steps", cfg)
    by_steps: dict[str, Any] = {}
    for steps in step_counts:
        rows = []
        for seed in cfg.seeds:
            pair = measure_pair(cfg, policy, seed, steps)
            rows.append(row := _row(cfg, pair, policy))
            _good(logger, row, f"T={steps} ")
        report.rows.extend(rows)
        by_steps[str(steps)] = summarize_values(r["speedup"] for r in rows)["mean"]
    means = list(by_steps.values())
    report.aggregate["speedup_by_T"] = by_steps
    report.aggregate["strictly_increasing"] = all(a < b for a, b in zip(means, means[1:]))
    if logger is not None:
        logger.info("[\x1b[1;37;43mSTAT\x1b[0m] speedup by T: %s", by_steps)
    return report


def _delta(a: None | float, b: None | float, /) -> None | float:
    if a is None or b is None or not (isfinite(a) and isfinite(b)):
        return None
    return a - b


def _pct(a: None | float, b: None | float, /) -> None | float:
    if a is None or b is None or not b or not (isfinite(a) and isfinite(b)):
        return None
    return (a / b - 1.0) * 100.0


def ablate_pfs(
    cfg: ExperimentConfig,
    /,
    tau2_grid: None | Sequence[float] = None,
    logger: None | Logger = _logger,
) -> RunReport:
    """Two-stage cache with PFS against the same cache on the unpooled `cfg.ablation_metric`

    For each τ2 and seed, emits a "w/o pfs" row and a "pfs" row; the latter carries the
    percentage change of time and per-check time and the quality and hit deltas.

    :param cfg: the experiment, τ1 = `cfg.tau1`
    :param tau2_grid: defaults to `cfg.tau2_grid`
    :param logger: None disables output

    :return: the report
    """
    tau2_grid = tuple(cfg.tau2_grid if tau2_grid is None else tau2_grid)
    full = SimilarityMetric.of(cfg.ablation_metric)
    pooled1 = SimilarityMetric.pfs_rel_diff(cfg.dp1)
    pooled2 = SimilarityMetric.pfs_rel_diff(cfg.dp2)
    report = RunReport("ablate-pfs", cfg)
    for tau2 in tau2_grid:
        for seed in cfg.seeds:
            without = H2Config(cfg.tau1, tau2, full, full)
            with_pfs = H2Config(cfg.tau1, tau2, pooled1, pooled2)
            pair_without = measure_pair(cfg, without, seed)
            pair_with = measure_pair(cfg, with_pfs, seed)
            row_without = _row(
                cfg, pair_without, without, variant="w/o pfs", per_check_time_s=pair_without.cached.per_check_time)
            row_with = _row(
                cfg, pair_with, with_pfs, variant="pfs", per_check_time_s=pair_with.cached.per_check_time)
            row_with.update(
                time_change_pct=_pct(row_with["time_total_s"], row_without["time_total_s"]),
                check_time_change_pct=_pct(row_with["per_check_time_s"], row_without["per_check_time_s"]),
                psnr_delta_db=_delta(row_with["psnr_db"], row_without["psnr_db"]),
                ssim_delta=_delta(row_with["ssim"], row_without["ssim"]),
                joint_hits_delta=row_with["joint_hits"] - row_without["joint_hits"],
                detail_hits_delta=row_with["detail_hits"] - row_without["detail_hits"],
            )
            report.rows.extend((row_without, row_with))
            _good(logger, row_with, f"τ2={tau2} ")
    pfs_rows = [r for r in report.rows if r["variant"] == "pfs"]
    report.aggregate = {
        "time_change_pct": summarize_values(r["time_change_pct"] for r in pfs_rows),
        "check_time_change_pct": summarize_values(r["check_time_change_pct"] for r in pfs_rows),
    }
    return report


def compare_policies(cfg: ExperimentConfig, /, logger: None | Logger = _logger) -> RunReport:
    """Baseline, block cache, structure-only, detail-only and full two-stage cache on the same seeds

    Structure-only is (τ1, 0), detail-only is (0, τ2). Every row carries its speedup and
    percentage changes of time and SSIM relative to the baseline.

    :param cfg: the experiment
    :param logger: None disables output

    :return: the report, `aggregate` is keyed by variant
    """
    metric1 = cfg.metric(cfg.metric1, cfg.dp1)
    metric2 = cfg.metric(cfg.metric2, cfg.dp2)
    variants: list[tuple[str, Policy]] = [
        ("baseline", NoCache()),
        ("block", BlockCache(cfg.tau1, metric1)),
        ("structure-only", H2Config(cfg.tau1, 0.0, metric1, metric2)),
        ("detail-only", H2Config(0.0, cfg.tau2, metric1, metric2)),
        ("h2", H2Config(cfg.tau1, cfg.tau2, metric1, metric2)),
    ]
    report = RunReport("compare", cfg)
    for seed in cfg.seeds:
        for name, policy in variants:
            pair = measure_pair(cfg, policy, seed)
            row = _row(cfg, pair, policy, variant=name)
            row.update(
                time_change_pct=_pct(row["time_total_s"], row["baseline_time_s"]),
                ssim_change_pct=None if row["ssim"] is None else (row["ssim"] - 1.0) * 100.0,
            )
            report.rows.append(row)
            _good(logger, row, f"{name}: ")
    report.aggregate = {
        name: _aggregate([r for r in report.rows if r["variant"] == name])
        for name, _ in variants
    }
    return report


def time_metric(
    metric: SimilarityMetric,
    shape: tuple[int, int, int, int],
    /,
    trials: int = 20,
    seed: int = 0,
) -> list[float]:
    """Wall time of single checks: a fresh current tensor per trial against one persistent cached tensor

    :return: seconds per trial
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    cached = seeded_gaussian(shape, seed)
    metric(seeded_gaussian(shape, seed, 1), cached)
    times: list[float] = []
    for i in range(trials):
        current = seeded_gaussian(shape, seed, i + 2)
        start = perf_counter()
        metric(current, cached)
        times.append(perf_counter() - start)
    return times


def bench_metric(
    cfg: ExperimentConfig,
    /,
    shape: tuple[int, int, int, int] = (1, 1, 256, 256),
    divisor: None | int = None,
    trials: int = 20,
    logger: None | Logger = _logger,
) -> RunReport:
    """Per-check wall time of every metric on one shape

    :param cfg: the experiment, supplies the default divisor `cfg.dp1`
    :param shape: tensor shape
    :param divisor: PFS divisor
    :param trials: timed checks per metric
    :param logger: None disables output

    :return: one row per metric with the median time and its ratio to the full relative L2
    """
    divisor = cfg.dp1 if divisor is None else divisor
    metrics = [
        SimilarityMetric.full_l2(),
        SimilarityMetric.full_rel_l2(),
        SimilarityMetric.full_rel_mean_abs(),
        SimilarityMetric.pfs_rel_diff(divisor),
    ]
    report = RunReport("bench-metric", cfg)
    medians: dict[str, float] = {}
    for metric in metrics:
        times = time_metric(metric, shape, trials)
        stats = summarize_values(times)
        medians[metric.label] = stats["median"]
        report.rows.append({
            "metric": metric.label,
            "shape": "x".join(map(str, shape)),
            "s_k": kernel_size(shape[2], divisor) if metric.pfs is not None else 1,
            "trials": trials,
            "median_s": stats["median"],
            "mean_s": stats["mean"],
            "std_s": stats["std"],
        })
    reference = medians[SimilarityMetric.full_rel_l2().label]
    for row in report.rows:
        row["speedup_vs_full_rel_l2"] = reference / row["median_s"] if row["median_s"] else None
        if logger is not None:
            logger.info(
                "[\x1b[1;37;43mSTAT\x1b[0m] \x1b[1m%s\x1b[0m, median: %.3e s, %.2fx vs full-rel-l2",
                row["metric"], row["median_s"], row["speedup_vs_full_rel_l2"] or 0.0,
            )
    return report
