"""
Configuration Manager - Experiment settings with strict validation

Settings live in a sectioned JSON file (see config.json). Values are merged
over built-in defaults; unknown keys and wrongly typed values are rejected
with the dotted path of the offending field.
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..core.errors import ConfigError
from ..core.field_model import CorrelationParams, Discipline, Scheduler, SystemConfig
from ..core.rate_optimizer import SearchOptions

logger = logging.getLogger(__name__)

RUN_KINDS = ("analytic", "simulate", "optimize", "sweep", "check")
CHECK_SUITES = ("appendix-a", "identities")

NUMBER = (int, float)
AxisSpec = Union[None, List[float], Dict[str, Any]]


@dataclass
class RunSettings:
    kind: str = "analytic"


@dataclass
class ModelSettings:
    a: float = 1.0
    b: float = 1.0
    lambda_s: float = 1.0
    lambda_t: float = 2.0
    mu_bar: Optional[float] = 4.0
    mu: Optional[float] = None
    length: Optional[float] = None
    discipline: str = "fcfs"
    scheduler: str = "ur"


@dataclass
class SimulationSettings:
    sim_length: float = 200.0
    horizon: float = 1e5
    warmup: Optional[float] = None
    probes: int = 2000
    replications: int = 20
    seed: Optional[int] = None
    channel_mode: str = "decoupled"
    edge_mode: str = "torus"
    lst_points: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    workers: int = 1


@dataclass
class SweepSettings:
    lambda_s: AxisSpec = None
    lambda_t: AxisSpec = None


@dataclass
class OptimizeSettings:
    grid_points: int = 64
    span: float = 1e3
    delta: float = 1e-3
    refine_points: int = 9
    rel_tol: float = 1e-4
    max_iterations: int = 100
    within: float = 0.01


@dataclass
class CheckSettings:
    suite: str = "identities"
    seeds: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    horizon: float = 2e4


@dataclass
class OutputSettings:
    out_dir: str = "results"


SECTIONS = {
    "run": RunSettings,
    "model": ModelSettings,
    "simulation": SimulationSettings,
    "sweep": SweepSettings,
    "optimize": OptimizeSettings,
    "check": CheckSettings,
    "output": OutputSettings,
}

# (accepted types, nullable)
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "run": {"kind": ((str,), False)},
    "model": {
        "a": (NUMBER, False), "b": (NUMBER, False), "lambda_s": (NUMBER, False),
        "lambda_t": (NUMBER, False), "mu_bar": (NUMBER, True), "mu": (NUMBER, True),
        "length": (NUMBER, True), "discipline": ((str,), False), "scheduler": ((str,), False),
    },
    "simulation": {
        "sim_length": (NUMBER, False), "horizon": (NUMBER, False), "warmup": (NUMBER, True),
        "probes": ((int,), False), "replications": ((int,), False), "seed": ((int,), True),
        "channel_mode": ((str,), False), "edge_mode": ((str,), False), "lst_points": ((list,), False),
        "workers": ((int,), False),
    },
    "sweep": {"lambda_s": ((list, dict), True), "lambda_t": ((list, dict), True)},
    "optimize": {
        "grid_points": ((int,), False), "span": (NUMBER, False), "delta": (NUMBER, False),
        "refine_points": ((int,), False), "rel_tol": (NUMBER, False), "max_iterations": ((int,), False),
        "within": (NUMBER, False),
    },
    "check": {"suite": ((str,), False), "seeds": ((list,), False), "horizon": (NUMBER, False)},
    "output": {"out_dir": ((str,), False)},
}


def _check_value(path: str, value: Any, types: tuple, nullable: bool) -> None:
    if value is None:
        if not nullable:
            raise ConfigError("value must not be null", field=path)
        return
    if isinstance(value, bool) or not isinstance(value, types):
        names = " or ".join(t.__name__ for t in types)
        raise ConfigError(f"expected {names}, got {type(value).__name__} {value!r}", field=path)
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"value must be finite, got {value!r}", field=path)


def axis_values(spec: AxisSpec, name: str) -> Optional[List[float]]:
    """
    Expand a sweep axis specification.

    Args:
        spec: None, an explicit list of values, or
              {"start": x, "stop": y, "num": n, "scale": "log" | "linear"}
        name: Dotted field path used in error messages

    Returns:
        List of axis values, or None when the axis is not swept
    """
    if spec is None:
        return None
    if isinstance(spec, list):
        for index, value in enumerate(spec):
            _check_value(f"{name}[{index}]", value, NUMBER, False)
        return [float(value) for value in spec]
    unknown = set(spec) - {"start", "stop", "num", "scale"}
    if unknown:
        raise ConfigError(f"unknown axis key(s) {sorted(unknown)}", field=name)
    try:
        start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"axis needs numeric start, stop and num: {e}", field=name)
    scale = spec.get("scale", "log")
    if scale == "log":
        if start <= 0 or stop <= 0:
            raise ConfigError("log-scaled axes need positive start and stop", field=name)
        return [float(v) for v in np.geomspace(start, stop, num)]
    if scale == "linear":
        return [float(v) for v in np.linspace(start, stop, num)]
    raise ConfigError(f"scale must be 'log' or 'linear', got {scale!r}", field=f"{name}.scale")


@dataclass
class ExperimentConfig:
    """Typed view of a complete, validated configuration."""

    run: RunSettings = field(default_factory=RunSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    optimize: OptimizeSettings = field(default_factory=OptimizeSettings)
    check: CheckSettings = field(default_factory=CheckSettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    @classmethod
    def from_settings(cls, settings: Dict[str, Dict[str, Any]]) -> "ExperimentConfig":
        validate_settings(settings)
        return cls(**{name: SECTIONS[name](**dict(settings.get(name, {}))) for name in SECTIONS})

    def to_settings(self) -> Dict[str, Dict[str, Any]]:
        return {f.name: asdict(getattr(self, f.name)) for f in fields(self)}

    def system_config(self) -> SystemConfig:
        model = self.model
        mu_bar = model.mu_bar if model.mu is None else None
        try:
            return SystemConfig(lambda_s=model.lambda_s, lambda_t=model.lambda_t, mu_bar=mu_bar,
                                discipline=model.discipline, scheduler=model.scheduler,
                                region_length=model.length, mu=model.mu)
        except ValueError as e:
            raise ConfigError(str(e), field="model")

    def correlation(self) -> CorrelationParams:
        try:
            return CorrelationParams(self.model.a, self.model.b)
        except ValueError as e:
            raise ConfigError(str(e), field="model")

    def search_options(self) -> SearchOptions:
        opt = self.optimize
        try:
            return SearchOptions(grid_points=opt.grid_points, span=opt.span, refine_points=opt.refine_points,
                                 tolerance=opt.rel_tol, margin=opt.delta, max_iterations=opt.max_iterations)
        except ValueError as e:
            raise ConfigError(str(e), field="optimize")

    def sweep_axes(self):
        return (axis_values(self.sweep.lambda_s, "sweep.lambda_s"),
                axis_values(self.sweep.lambda_t, "sweep.lambda_t"))


def validate_settings(settings: Dict[str, Any]) -> None:
    """Raise ConfigError for unknown sections/keys, bad types or bad enum values."""
    if not isinstance(settings, dict):
        raise ConfigError("top level must be a JSON object")
    for section, values in settings.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section (expected one of {sorted(SCHEMA)})", field=section)
        if not isinstance(values, dict):
            raise ConfigError("section must be a JSON object", field=section)
        for key, value in values.items():
            path = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key (expected one of {sorted(SCHEMA[section])})", field=path)
            types, nullable = SCHEMA[section][key]
            _check_value(path, value, types, nullable)

    run = settings.get("run", {})
    if "kind" in run and run["kind"] not in RUN_KINDS:
        raise ConfigError(f"kind must be one of {RUN_KINDS}, got {run['kind']!r}", field="run.kind")
    check = settings.get("check", {})
    if "suite" in check and check["suite"] not in CHECK_SUITES:
        raise ConfigError(f"suite must be one of {CHECK_SUITES}, got {check['suite']!r}", field="check.suite")
    model = settings.get("model", {})
    for key, parser in (("discipline", Discipline.parse), ("scheduler", Scheduler.parse)):
        if key in model:
            try:
                parser(model[key])
            except ValueError as e:
                raise ConfigError(str(e), field=f"model.{key}")
    for key in ("lambda_s", "lambda_t"):
        axis_values(settings.get("sweep", {}).get(key), f"sweep.{key}")
    for path, types in (("simulation.lst_points", NUMBER), ("check.seeds", (int,))):
        section, key = path.split(".")
        for index, value in enumerate(settings.get(section, {}).get(key) or []):
            _check_value(f"{path}[{index}]", value, types, False)


class Config:
    """Experiment configuration manager."""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self.default_settings = ExperimentConfig().to_settings()
        self.settings: Dict[str, Any] = self._merge_settings(self.default_settings, {})
        if config_file:
            self.load_settings()

    def load_settings(self):
        """Load settings from the config file and merge them over the defaults."""
        if not os.path.exists(self.config_file):
            raise ConfigError(f"Config file not found: {self.config_file}")
        loaded = self._read(self.config_file)
        validate_settings(loaded)
        self.settings = self._merge_settings(self.default_settings, loaded)
        logger.debug(f"Loaded configuration from {self.config_file}")

    @staticmethod
    def _read(filepath: str) -> Dict[str, Any]:
        try:
            with open(filepath, "r") as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {filepath}: {e.msg}", line=e.lineno, column=e.colno)
        except IOError as e:
            raise ConfigError(f"Failed to read config file {filepath}: {e}")

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        Get a setting value using dot notation.

        Args:
            key_path: Path to setting (e.g., 'model.lambda_s' or 'simulation.seed')
            default: Default value if key not found

        Returns:
            Setting value or default
        """
        value = self.settings
        try:
            for key in key_path.split("."):
                value = value[key]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key_path: str, value: Any):
        """
        Set a setting value using dot notation; the path must exist in the schema.

        Raises:
            ConfigError: If the path is unknown or the value has the wrong type
        """
        keys = key_path.split(".")
        if len(keys) != 2:
            raise ConfigError("expected a 'section.key' path", field=key_path)
        candidate = self._merge_settings(self.settings, {keys[0]: {keys[1]: value}})
        validate_settings({keys[0]: {keys[1]: value}})
        self.settings = candidate

    def get_section(self, section: str) -> Dict[str, Any]:
        """Get an entire configuration section."""
        return self.settings.get(section, {})

    def update_section(self, section: str, updates: Dict[str, Any]):
        """Update multiple settings in a section."""
        validate_settings({section: updates})
        self.settings = self._merge_settings(self.settings, {section: updates})

    def reset_to_defaults(self):
        """Reset all settings to defaults."""
        self.settings = self._merge_settings(self.default_settings, {})

    def _merge_settings(self, defaults: Dict[str, Any], loaded: Dict[str, Any]) -> Dict[str, Any]:
        """Recursively merge loaded settings with defaults."""
        result = {key: (dict(value) if isinstance(value, dict) else value) for key, value in defaults.items()}
        for key, value in loaded.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict) and key in SCHEMA:
                result[key] = self._merge_settings(result[key], value)
            else:
                result[key] = value
        return result

    def export_config(self, filepath: str):
        """Export current configuration to a file."""
        try:
            with open(filepath, "w") as f:
                json.dump(self.settings, f, indent=2)
                f.write("\n")
        except IOError as e:
            raise IOError(f"Failed to export config to {filepath}: {e}")

    def import_config(self, filepath: str):
        """Import configuration from a file, merged over the current settings."""
        if not os.path.exists(filepath):
            raise ConfigError(f"Config file not found: {filepath}")
        imported = self._read(filepath)
        validate_settings(imported)
        self.settings = self._merge_settings(self.settings, imported)

    def validate_config(self) -> bool:
        """Validate current configuration; raises ConfigError on the first problem."""
        validate_settings(self.settings)
        self.experiment().system_config()
        return True

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig.from_settings(self.settings)
