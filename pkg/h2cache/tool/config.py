#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__all__ = ["ExperimentConfig", "parse_config", "parse_config_text", "config_from_mapping"]
__doc__ = "Experiment configuration, loaded from flat `key = value` text, TOML, YAML or JSON"

from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, fields, replace
from hashlib import sha1
from math import inf, isfinite, isnan
from os import PathLike
from pathlib import Path
from typing import Any, Final

from ..const import (
    DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_COND_DIM, DEFAULT_COST_L1, DEFAULT_COST_L2,
    DEFAULT_DIVISOR, DEFAULT_REPEATS, DEFAULT_SHAPE, DEFAULT_STEPS, DEFAULT_TAU1, DEFAULT_TAU2,
)
from ..denoiser import (
    AnalyticGaussianBackend, CostModel, CostWrappedBackend, SmoothRandomBackend, wrap_with_cost,
)
from ..diffusion import Conditioning, NoiseSchedule, build_linear_schedule
from ..engine import BlockCache, H2Config, NoCache, Policy
from ..exception import ConfigError, H2Error
from ..pfs import MetricKind, SimilarityMetric
from ..tensor import Tensor4, seeded_gaussian


BACKENDS: Final = ("smooth", "analytic")
POLICIES: Final = ("h2", "block", "none")
METRICS: Final = tuple(str(kind) for kind in MetricKind)
#: keys that only name output files, they do not enter the config hash
OUTPUT_KEYS: Final = ("output_csv", "output_json", "trace_path")


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    """Everything an experiment needs, validated on construction

    Thresholds accept ``inf``. ``sample_steps`` and ``psnr_peak`` accept ``none``.
    """
    shape: tuple[int, int, int, int] = DEFAULT_SHAPE
    steps: int = DEFAULT_STEPS
    sample_steps: None | int = None
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    backend: str = "smooth"
    backend_seed: int = 0
    analytic_mean: float = 0.0
    analytic_sigma: float = 1.0
    cost_l1: int = DEFAULT_COST_L1
    cost_l2: int = DEFAULT_COST_L2
    policy: str = "h2"
    tau1: float = DEFAULT_TAU1
    tau2: float = DEFAULT_TAU2
    dp1: int = DEFAULT_DIVISOR
    dp2: int = DEFAULT_DIVISOR
    metric1: str = "pfs"
    metric2: str = "pfs"
    ablation_metric: str = "full-rel-mean-abs"
    tau1_grid: tuple[float, ...] = (0.0, 0.05, 0.15, 0.5, inf)
    tau2_grid: tuple[float, ...] = (0.0, 0.05, 0.18, 0.5)
    step_counts: tuple[int, ...] = (10, 30, 100)
    seeds: tuple[int, ...] = (0, 1, 2)
    repeats: int = DEFAULT_REPEATS
    warmup: int = 1
    psnr_peak: None | float = None
    conditioning_dim: int = DEFAULT_COND_DIM
    conditioning_seed: int = 0
    workers: None | int = None
    output_csv: None | str = None
    output_json: None | str = None
    trace_path: None | str = None

    def __post_init__(self, /):
        def check(key: str, ok: bool, what: str, /):
            if not ok:
                raise ConfigError(f"{key}: {what}, got {getattr(self, key)!r}", key=key)
        check("shape", len(self.shape) == 4 and all(n >= 1 for n in self.shape), "need 4 positive dims")
        check("steps", self.steps >= 1, "must be >= 1")
        check("sample_steps", self.sample_steps is None or self.sample_steps >= 1, "must be >= 1")
        check("beta_start", 0 < self.beta_start < 1, "must lie in (0, 1)")
        check("beta_end", self.beta_start <= self.beta_end < 1, "must lie in [beta_start, 1)")
        check("backend", self.backend in BACKENDS, f"must be one of {BACKENDS}")
        check("analytic_mean", isfinite(self.analytic_mean), "must be finite")
        check("analytic_sigma", isfinite(self.analytic_sigma) and self.analytic_sigma > 0, "must be finite and > 0")
        check("cost_l1", self.cost_l1 >= 0, "must be >= 0")
        check("cost_l2", self.cost_l2 >= 0, "must be >= 0")
        check("policy", self.policy in POLICIES, f"must be one of {POLICIES}")
        for key in ("tau1", "tau2"):
            tau = getattr(self, key)
            check(key, not isnan(tau) and tau >= 0, "must be >= 0")
        for key in ("tau1_grid", "tau2_grid"):
            grid = getattr(self, key)
            check(key, bool(grid) and all(not isnan(tau) and tau >= 0 for tau in grid), "need values >= 0")
        check("dp1", self.dp1 >= 1, "must be >= 1")
        check("dp2", self.dp2 >= 1, "must be >= 1")
        for key in ("metric1", "metric2", "ablation_metric"):
            check(key, getattr(self, key) in METRICS, f"must be one of {METRICS}")
        check("step_counts", bool(self.step_counts) and all(n >= 1 for n in self.step_counts), "need values >= 1")
        check("seeds", bool(self.seeds), "must not be empty")
        check("repeats", self.repeats >= 1, "must be >= 1")
        check("warmup", self.warmup >= 0, "must be >= 0")
        check("psnr_peak", self.psnr_peak is None or (isfinite(self.psnr_peak) and self.psnr_peak > 0), "must be > 0")
        check("conditioning_dim", self.conditioning_dim >= 1, "must be >= 1")
        check("workers", self.workers is None or self.workers >= 1, "must be >= 1")

    def to_dict(self, /) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self, /) -> str:
        "flat `key = value` echo, `parse_config_text` reads it back to an equal config"
        return "".join(f"{key} = {_format_value(value)}\n" for key, value in self.to_dict().items())

    @property
    def config_hash(self, /) -> str:
        "short digest of everything but the output paths"
        text = "".join(
            f"{key} = {_format_value(value)}\n"
            for key, value in self.to_dict().items()
            if key not in OUTPUT_KEYS
        )
        return sha1(text.encode("utf-8")).hexdigest()[:12]

    def override(self, /, pairs: Iterable[str] = (), **values) -> "ExperimentConfig":
        """New config with `KEY=VALUE` strings and keyword values applied

        :raises ConfigError: unknown key or bad value
        """
        changes: dict[str, Any] = {}
        for pair in pairs:
            key, sep, value = pair.partition("=")
            key = key.strip()
            if not sep:
                raise ConfigError(f"expected KEY=VALUE, got {pair!r}", key=key or None)
            changes[key] = _coerce(key, value.strip())
        for key, value in values.items():
            changes[key] = _coerce(key, value)
        return _build(replace, self, changes=changes)

    def build_schedule(self, /, steps: None | int = None) -> NoiseSchedule:
        return build_linear_schedule(steps or self.steps, self.beta_start, self.beta_end)

    def build_backend(self, sched: NoiseSchedule, /) -> CostWrappedBackend:
        "the configured backend with the configured cost model attached"
        if self.backend == "analytic":
            inner: Any = AnalyticGaussianBackend.constant(
                self.shape, self.analytic_mean, self.analytic_sigma, sched=sched)
        else:
            inner = SmoothRandomBackend(
                self.shape, seed=self.backend_seed, steps=sched.steps, cond_dim=self.conditioning_dim)
        return wrap_with_cost(inner, CostModel(self.cost_l1, self.cost_l2))

    def build_conditioning(self, /) -> Conditioning:
        return Conditioning.seeded(self.conditioning_dim, self.conditioning_seed)

    def metric(self, kind: str, divisor: int = 1, /) -> SimilarityMetric:
        return SimilarityMetric.of(kind, divisor)

    def build_policy(
        self,
        /,
        policy: None | str = None,
        tau1: None | float = None,
        tau2: None | float = None,
    ) -> Policy:
        "the configured policy, thresholds and policy kind can be overridden"
        policy = policy or self.policy
        tau1 = self.tau1 if tau1 is None else tau1
        tau2 = self.tau2 if tau2 is None else tau2
        metric1 = self.metric(self.metric1, self.dp1)
        match policy:
            case "none":
                return NoCache()
            case "block":
                return BlockCache(tau1, metric1)
            case _:
                return H2Config(tau1, tau2, metric1, self.metric(self.metric2, self.dp2))

    def initial_latent(self, seed: int, /) -> Tensor4:
        "z_T of a run, shared by the cached run and its baseline"
        return seeded_gaussian(self.shape, seed)


def _format_value(value: Any, /) -> str:
    match value:
        case None:
            return "none"
        case bool():
            return str(value).lower()
        case float():
            return repr(value)
        case tuple():
            return ", ".join(_format_value(v) for v in value)
        case _:
            return str(value)


def _is_none(value: Any, /) -> bool:
    return value is None or isinstance(value, str) and value.strip().lower() in ("", "none", "null")


def _to_int(value: Any, /) -> int:
    "integers, also integral floats and their spellings such as '1e6'"
    if isinstance(value, bool):
        raise ValueError(f"not an integer: {value!r}")
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            value = float(value)
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"not an integer: {value!r}")
        return int(value)
    return int(value)


def _to_float(value: Any, /) -> float:
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
        return inf
    return float(value)


def _to_str(value: Any, /) -> str:
    if not isinstance(value, str):
        raise ValueError(f"not a string: {value!r}")
    return value.strip()


def _optional(convert: Callable[[Any], Any], /) -> Callable[[Any], Any]:
    def wrapper(value: Any, /):
        if _is_none(value):
            return None
        return convert(value)
    return wrapper


def _tuple_of(convert: Callable[[Any], Any], /) -> Callable[[Any], tuple]:
    def wrapper(value: Any, /) -> tuple:
        if isinstance(value, str):
            value = [part for part in value.replace(" ", ",").split(",") if part]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        return tuple(convert(v) for v in value)
    return wrapper


_CONVERTERS: Final[dict[str, Callable[[Any], Any]]] = {
    "shape": _tuple_of(_to_int),
    "steps": _to_int,
    "sample_steps": _optional(_to_int),
    "beta_start": _to_float,
    "beta_end": _to_float,
    "backend": _to_str,
    "backend_seed": _to_int,
    "analytic_mean": _to_float,
    "analytic_sigma": _to_float,
    "cost_l1": _to_int,
    "cost_l2": _to_int,
    "policy": _to_str,
    "tau1": _to_float,
    "tau2": _to_float,
    "dp1": _to_int,
    "dp2": _to_int,
    "metric1": _to_str,
    "metric2": _to_str,
    "ablation_metric": _to_str,
    "tau1_grid": _tuple_of(_to_float),
    "tau2_grid": _tuple_of(_to_float),
    "step_counts": _tuple_of(_to_int),
    "seeds": _tuple_of(_to_int),
    "repeats": _to_int,
    "warmup": _to_int,
    "psnr_peak": _optional(_to_float),
    "conditioning_dim": _to_int,
    "conditioning_seed": _to_int,
    "workers": _optional(_to_int),
    "output_csv": _optional(_to_str),
    "output_json": _optional(_to_str),
    "trace_path": _optional(_to_str),
}


def _coerce(key: str, value: Any, /, lineno: None | int = None) -> Any:
    try:
        convert = _CONVERTERS[key]
    except KeyError:
        raise ConfigError(f"unknown key: {key!r}", key=key, lineno=lineno) from None
    try:
        return convert(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({e})", key=key, lineno=lineno) from e


def _build(factory: Callable, /, *args, changes: Mapping[str, Any], lines: None | Mapping[str, int] = None):
    try:
        return factory(*args, **changes)
    except ConfigError as e:
        if lines and e.key in lines and e.lineno is None:
            raise ConfigError(e.message, key=e.key, lineno=lines[e.key]) from e # type: ignore
        raise
    except H2Error as e:
        raise ConfigError(str(e)) from e


def config_from_mapping(mapping: Mapping[str, Any], /) -> ExperimentConfig:
    """Build a config from already parsed key-value pairs, e.g. a TOML table

    :raises ConfigError: unknown key, bad value or failed validation
    """
    changes = {key: _coerce(key, value) for key, value in mapping.items()}
    return _build(ExperimentConfig, changes=changes)


def parse_config_text(text: str, /) -> ExperimentConfig:
    """Parse the flat format: one `key = value` per line, `#` starts a comment

    Sequences are comma separated, ``inf`` and ``none`` are literal values.

    :raises ConfigError: names the offending key and line
    """
    changes: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.partition("#")[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"expected `key = value`, got {line!r}", key=key or None, lineno=lineno)
        if key in changes:
            raise ConfigError(f"duplicate key: {key!r}", key=key, lineno=lineno)
        changes[key] = _coerce(key, value.strip(), lineno=lineno)
        lines[key] = lineno
    return _build(ExperimentConfig, changes=changes, lines=lines)


def parse_config(path: bytes | str | PathLike, /) -> ExperimentConfig:
    """Load a config file, the format follows the suffix

    - ``.toml``: a flat TOML table
    - ``.yml`` / ``.yaml``: a flat YAML mapping
    - ``.json``: a flat JSON object
    - anything else: the flat `key = value` text format

    :raises ConfigError: bad content
    :raises OSError: the file cannot be read
    """
    path = Path(path) # type: ignore
    match path.suffix.lower():
        case ".toml":
            from tomllib import loads as toml_loads, TOMLDecodeError
            try:
                data = toml_loads(path.read_text("utf-8"))
            except TOMLDecodeError as e:
                raise ConfigError(f"invalid TOML: {e}") from e
        case ".yml" | ".yaml":
            from yaml import load as yaml_load, SafeLoader, YAMLError
            try:
                data = yaml_load(path.read_text("utf-8"), Loader=SafeLoader) or {}
            except YAMLError as e:
                raise ConfigError(f"invalid YAML: {e}") from e
        case ".json":
            from orjson import loads as json_loads, JSONDecodeError
            try:
                data = json_loads(path.read_bytes())
            except JSONDecodeError as e:
                raise ConfigError(f"invalid JSON: {e}") from e
        case _:
            return parse_config_text(path.read_text("utf-8"))
    if not isinstance(data, Mapping):
        raise ConfigError(f"expected a key-value mapping at the top level of {str(path)!r}")
    return config_from_mapping(data)
