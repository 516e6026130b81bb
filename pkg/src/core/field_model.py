"""
Field Model - Domain types, parameter validation and the exponential correlation model

Units are fixed throughout the package: distances in meters, times in
seconds, rates in the reciprocal units. The normalized service rate
``mu_bar`` (1/(second*meter)) is the canonical service parameter; a raw
channel rate ``mu`` over a region of length ``L`` is converted at the
boundary with ``mu_bar = mu / L``.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import InvalidParameterError, StabilityError

ArrayLike = Union[float, np.ndarray]


class Discipline(str, Enum):
    """Queueing discipline at each spatial sampling point."""

    FCFS = "fcfs"
    LCFS = "lcfs"

    @classmethod
    def parse(cls, value: Union[str, "Discipline"]) -> "Discipline":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidParameterError(f"Unknown discipline: {value!r} (expected fcfs or lcfs)")


class Scheduler(str, Enum):
    """Channel scheduling rule among the sampling points."""

    UNIFORM_RANDOM = "ur"
    ROUND_ROBIN = "rr"

    @classmethod
    def parse(cls, value: Union[str, "Scheduler"]) -> "Scheduler":
        if isinstance(value, cls):
            return value
        aliases = {
            "ur": cls.UNIFORM_RANDOM,
            "uniformrandom": cls.UNIFORM_RANDOM,
            "uniform_random": cls.UNIFORM_RANDOM,
            "rr": cls.ROUND_ROBIN,
            "roundrobin": cls.ROUND_ROBIN,
            "round_robin": cls.ROUND_ROBIN,
        }
        key = str(value).strip().lower()
        if key not in aliases:
            raise InvalidParameterError(f"Unknown scheduler: {value!r} (expected ur or rr)")
        return aliases[key]


def require_positive(name: str, value: float) -> float:
    """Return ``value`` as float, raising if it is not finite and > 0."""
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"{name} must be a number, got {value!r}")
    if not math.isfinite(number) or number <= 0.0:
        raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
    return number


def _require_non_negative(name: str, value: ArrayLike) -> None:
    if np.any(np.asarray(value) < 0) or np.any(np.isnan(value)):
        raise InvalidParameterError(f"{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class CorrelationParams:
    """Time (a, 1/s) and space (b, 1/m) decay rates of the exponential correlation."""

    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", require_positive("a", self.a))
        object.__setattr__(self, "b", require_positive("b", self.b))

    def correlation(self, distance: ArrayLike, age: ArrayLike) -> ArrayLike:
        """g(d, t) = exp(-b*d/2 - a*t/2); works element-wise on arrays."""
        _require_non_negative("distance", distance)
        _require_non_negative("age", age)
        return np.exp(-0.5 * self.b * np.asarray(distance, dtype=float)
                      - 0.5 * self.a * np.asarray(age, dtype=float))

    def error(self, distance: ArrayLike, age: ArrayLike) -> ArrayLike:
        """1 - g(d, t)^2 written as -expm1 for accuracy near zero."""
        _require_non_negative("distance", distance)
        _require_non_negative("age", age)
        exponent = (self.b * np.asarray(distance, dtype=float)
                    + self.a * np.asarray(age, dtype=float))
        return -np.expm1(-exponent)


@dataclass(frozen=True)
class PointError:
    """Instantaneous mean squared estimation error at one field location."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise InvalidParameterError(f"PointError must lie in [0, 1], got {self.value!r}")

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class SystemConfig:
    """Sampling rates, service rate and queueing policy of one deployment.

    Either ``mu_bar`` is given directly, or ``mu`` and ``region_length`` are
    both given and ``mu_bar`` is derived as ``mu / region_length``.
    """

    lambda_s: float
    lambda_t: float
    mu_bar: Optional[float] = None
    discipline: Discipline = Discipline.FCFS
    scheduler: Scheduler = Scheduler.UNIFORM_RANDOM
    region_length: Optional[float] = None
    mu: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "discipline", Discipline.parse(self.discipline))
        object.__setattr__(self, "scheduler", Scheduler.parse(self.scheduler))
        if self.mu is not None and self.region_length is not None:
            derived = float(self.mu) / float(self.region_length)
            if self.mu_bar is None:
                object.__setattr__(self, "mu_bar", derived)
            elif not math.isclose(float(self.mu_bar), derived, rel_tol=1e-12):
                raise InvalidParameterError(
                    f"mu_bar={self.mu_bar!r} disagrees with mu/L = {self.mu!r}/{self.region_length!r}"
                )
        if self.mu_bar is None:
            raise InvalidParameterError("Either mu_bar or both mu and region_length must be given")

    @classmethod
    def from_channel(cls, lambda_s: float, lambda_t: float, mu: float, region_length: float,
                     discipline: Union[str, Discipline] = Discipline.FCFS,
                     scheduler: Union[str, Scheduler] = Scheduler.UNIFORM_RANDOM) -> "SystemConfig":
        """Build a configuration from a raw channel rate over a region."""
        return cls(lambda_s=lambda_s, lambda_t=lambda_t, mu_bar=None, discipline=discipline,
                   scheduler=scheduler, region_length=region_length, mu=mu)

    @property
    def mu0(self) -> float:
        """Per-point service rate mu_bar / lambda_s."""
        return self.mu_bar / self.lambda_s

    @property
    def rho0(self) -> float:
        """Per-point traffic intensity lambda_t / mu0."""
        return self.lambda_t * self.lambda_s / self.mu_bar

    def with_rates(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedQuantities:
    mu0: float
    rho0: float
    point_count: Optional[float]
    stable: bool

    @property
    def fcfs_margin(self) -> float:
        """Distance of rho0 below the FCFS stability limit (negative if unstable)."""
        return 1.0 - self.rho0


def correlation(params: CorrelationParams, distance: float, age: float) -> float:
    """
    Correlation coefficient between a field value and a sample of it.

    Args:
        params: Decay rates of the exponential correlation
        distance: Spatial separation in meters (>= 0)
        age: Time separation in seconds (>= 0)

    Returns:
        exp(-b*distance/2 - a*age/2), in (0, 1]

    Raises:
        InvalidParameterError: If distance or age is negative
    """
    return float(params.correlation(distance, age))


def instantaneous_error(params: CorrelationParams, distance: float, age: float) -> PointError:
    """
    MMSE of estimating the field at distance ``distance`` from a sample aged ``age``.

    Args:
        params: Decay rates of the exponential correlation
        distance: Distance to the nearest sampling point in meters (>= 0)
        age: Age of information of that point's last delivered sample (>= 0)

    Returns:
        PointError holding 1 - exp(-b*distance - a*age)
    """
    return PointError(float(params.error(distance, age)))


def validate(config: SystemConfig, require_stability: bool = True) -> DerivedQuantities:
    """
    Check a configuration and derive mu0, rho0 and the expected point count.

    Args:
        config: Configuration to check
        require_stability: Reject FCFS configurations with rho0 >= 1

    Returns:
        DerivedQuantities with mu0 = mu_bar/lambda_s, rho0 = lambda_t*lambda_s/mu_bar
        and M = lambda_s*L when a region length is known

    Raises:
        InvalidParameterError: On non-positive or non-finite rates
        StabilityError: On an unstable FCFS configuration
    """
    require_positive("lambda_s", config.lambda_s)
    require_positive("lambda_t", config.lambda_t)
    require_positive("mu_bar", config.mu_bar)
    point_count = None
    if config.region_length is not None:
        point_count = config.lambda_s * require_positive("region_length", config.region_length)
    if config.mu is not None:
        require_positive("mu", config.mu)

    rho0 = config.rho0
    stable = config.discipline is Discipline.LCFS or rho0 < 1.0
    if require_stability and not stable:
        raise StabilityError(rho0)
    return DerivedQuantities(mu0=config.mu0, rho0=rho0, point_count=point_count, stable=stable)
