#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = [
    "DEFAULT_BETA_START", "DEFAULT_BETA_END", "DEFAULT_STEPS", "DEFAULT_COST_L1", "DEFAULT_COST_L2",
    "EPS_DIV", "SSIM_WINDOW", "SSIM_K1", "SSIM_K2", "TRACE_MAGIC", "TRACE_VERSION",
    "REPORT_SCHEMA_VERSION", "CSV_COLUMNS", "CSV_EXTRA_COLUMNS", "PSNR_INF_SENTINEL",
    "EXIT_OK", "EXIT_CONFIG_ERROR", "EXIT_RUNTIME_ERROR", "EXIT_IO_ERROR",
    "FULL_SCALE_REFERENCE", "DEFAULT_SHAPE", "DEFAULT_TAU1", "DEFAULT_TAU2", "DEFAULT_DIVISOR",
    "DEFAULT_REPEATS", "DEFAULT_COND_DIM",
]

from typing import Final

#: first β of the default linear schedule
DEFAULT_BETA_START: Final[float] = 1e-4
#: last β of the default linear schedule
DEFAULT_BETA_END: Final[float] = 2e-2
#: default number of schedule steps T
DEFAULT_STEPS: Final[int] = 100
#: default busywork units per stage-1 call (stage 1 is twice as heavy as stage 2)
DEFAULT_COST_L1: Final[int] = 2_000_000
#: default busywork units per stage-2 call
DEFAULT_COST_L2: Final[int] = 1_000_000
#: default run shape (B, C, H, W)
DEFAULT_SHAPE: Final[tuple[int, int, int, int]] = (1, 4, 32, 32)
#: default joint-check threshold τ1
DEFAULT_TAU1: Final[float] = 0.15
#: default detail-check threshold τ2
DEFAULT_TAU2: Final[float] = 0.18
#: default PFS divisor of both stages
DEFAULT_DIVISOR: Final[int] = 4
#: default timed repetitions per run (median of k)
DEFAULT_REPEATS: Final[int] = 5
#: default conditioning vector length
DEFAULT_COND_DIM: Final[int] = 8
#: guard for relative metrics when the cached side is all zeros
EPS_DIV: Final[float] = 1e-12
#: side of the uniform SSIM window
SSIM_WINDOW: Final[int] = 8
#: SSIM stabilization constants
SSIM_K1: Final[float] = 0.01
SSIM_K2: Final[float] = 0.03
#: trace file magic bytes
TRACE_MAGIC: Final[bytes] = b"H2TR"
#: trace file format version
TRACE_VERSION: Final[int] = 1
#: version of the JSON report schema
REPORT_SCHEMA_VERSION: Final[int] = 1
#: fixed CSV columns, in order
CSV_COLUMNS: Final[tuple[str, ...]] = (
    "config_hash", "seed", "policy", "tau1", "tau2", "dp1", "dp2", "T", "time_total_s",
    "joint_hits", "detail_hits", "full_computes", "psnr_db", "ssim", "rel_l2",
)
#: columns appended after the fixed ones
CSV_EXTRA_COLUMNS: Final[tuple[str, ...]] = (
    "baseline_time_s", "speedup", "hit_fraction", "check_time_s", "best",
)
#: how an infinite PSNR (identical tensors) is written to reports
PSNR_INF_SENTINEL: Final[str] = "inf"
#: process exit codes of the command line tools
EXIT_OK: Final[int] = 0
EXIT_CONFIG_ERROR: Final[int] = 1
EXIT_RUNTIME_ERROR: Final[int] = 2
EXIT_IO_ERROR: Final[int] = 3
#: full-scale reference numbers (Flux, 1024px); recorded for reports, never asserted at desk scale
FULL_SCALE_REFERENCE: Final[dict[str, float]] = {
    "speedup_at_100_steps": 5.08,
    "speedup_at_10_steps": 1.22,
    "tau1": 0.15,
    "tau2": 0.18,
    "pfs_max_time_reduction": 0.145,
}
