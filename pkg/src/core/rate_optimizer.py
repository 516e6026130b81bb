"""
Rate Optimizer - Error-minimizing spatial and temporal sampling rates

FCFS deployments are searched on a logarithmic (lambda_s, lambda_t) grid
restricted to the stable region, then refined around each coarse local
minimum. Keep-freshest deployments have a closed-form optimum with an
unbounded temporal rate.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .error_laws import average_error, eps_grid, saturation
from .errors import InfeasibleGridError, InvalidParameterError, RaggedGridError, StabilityError
from .field_model import CorrelationParams, Discipline, SystemConfig, require_positive

logger = logging.getLogger(__name__)

INFEASIBLE = "infeasible"
SURFACE_COLUMNS = ["lambda_s", "lambda_t", "eps", "status"]


@dataclass
class SearchOptions:
    """Grid-search settings; ranges default to the natural scales of the problem."""

    grid_points: int = 64
    span: float = 1e3
    refine_points: int = 9
    tolerance: float = 1e-4
    margin: float = 1e-3
    max_iterations: int = 100
    lambda_s_range: Optional[Tuple[float, float]] = None
    lambda_t_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.grid_points < 3 or self.refine_points < 3:
            raise InvalidParameterError("Search grids need at least 3 points per axis")
        if not 0.0 <= self.margin < 1.0:
            raise InvalidParameterError(f"Stability margin must lie in [0, 1), got {self.margin!r}")
        require_positive("tolerance", self.tolerance)
        require_positive("span", self.span)

    def ranges(self, params: CorrelationParams, mu_bar: float) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        scale_s = math.sqrt(params.b * mu_bar / (2.0 * params.a))
        scale_t = math.sqrt(2.0 * params.a * mu_bar / params.b)
        spatial = self.lambda_s_range or (scale_s / self.span, scale_s * self.span)
        temporal = self.lambda_t_range or (scale_t / self.span, scale_t * self.span)
        for name, (low, high) in (("lambda_s", spatial), ("lambda_t", temporal)):
            if not 0.0 < low < high:
                raise InvalidParameterError(f"Invalid {name} search range ({low!r}, {high!r})")
        return spatial, temporal


@dataclass
class OptimizationResult:
    """Optimal rates; lambda_t_star is math.inf for keep-freshest queues."""

    lambda_s_star: float
    lambda_t_star: float
    eps_star: float
    method: str
    evaluations: int
    feasible_region: str
    practical_lambda_t: Optional[float] = None
    local_minima: List[Tuple[float, float, float]] = field(default_factory=list)
    history: List[float] = field(default_factory=list)

    @property
    def unbounded_lambda_t(self) -> bool:
        return math.isinf(self.lambda_t_star)

    def to_dict(self) -> dict:
        return {
            "lambda_s_star": self.lambda_s_star,
            "lambda_t_star": "inf" if self.unbounded_lambda_t else self.lambda_t_star,
            "eps_star": self.eps_star,
            "method": self.method,
            "evaluations": self.evaluations,
            "feasible_region": self.feasible_region,
            "practical_lambda_t": self.practical_lambda_t,
            "local_minima": [list(minimum) for minimum in self.local_minima],
        }


class _FcfsSurface:
    """Masked FCFS error surface with an evaluation counter."""

    def __init__(self, params: CorrelationParams, mu_bar: float, margin: float):
        self.params = params
        self.mu_bar = mu_bar
        self.limit = (1.0 - margin) * mu_bar
        self.evaluations = 0

    def __call__(self, lambda_s: np.ndarray, lambda_t: np.ndarray) -> np.ndarray:
        lambda_s, lambda_t = np.broadcast_arrays(lambda_s, lambda_t)
        self.evaluations += lambda_s.size
        values = eps_grid(lambda_s, lambda_t, self.mu_bar, self.params, Discipline.FCFS)
        return np.where(lambda_s * lambda_t < self.limit, values, np.nan)


def _coarse_minima(values: np.ndarray) -> List[Tuple[int, int]]:
    """Feasible nodes no worse than any feasible neighbour (8-neighbourhood)."""
    rows, cols = values.shape
    padded = np.full((rows + 2, cols + 2), np.inf)
    padded[1:-1, 1:-1] = np.where(np.isnan(values), np.inf, values)
    centre = padded[1:-1, 1:-1]
    is_minimum = np.isfinite(centre)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neighbour = padded[1 + di:rows + 1 + di, 1 + dj:cols + 1 + dj]
            is_minimum &= centre <= neighbour
    return [tuple(index) for index in np.argwhere(is_minimum)]


def _refine(surface: _FcfsSurface, start: Tuple[float, float, float], half_widths: Tuple[float, float],
            options: SearchOptions) -> Tuple[float, float, float, List[float]]:
    """Shrink a log-space box around the incumbent; the incumbent never worsens."""
    log_s, log_t = math.log(start[0]), math.log(start[1])
    best = start[2]
    history = [best]
    half_s, half_t = half_widths
    offsets = np.linspace(-1.0, 1.0, options.refine_points)

    for _ in range(options.max_iterations):
        cell = 2.0 * max(half_s, half_t) / (options.refine_points - 1)
        if cell < options.tolerance:
            break
        grid_s = np.exp(log_s + half_s * offsets)
        grid_t = np.exp(log_t + half_t * offsets)
        values = surface(grid_s[:, None], grid_t[None, :])
        if not np.all(np.isnan(values)):
            i, j = np.unravel_index(np.nanargmin(values), values.shape)
            if values[i, j] < best:
                best = float(values[i, j])
                log_s, log_t = math.log(grid_s[i]), math.log(grid_t[j])
        history.append(best)
        half_s *= 2.0 / (options.refine_points - 1)
        half_t *= 2.0 / (options.refine_points - 1)
        logger.debug(f"refine: lambda_s={math.exp(log_s):.6g} lambda_t={math.exp(log_t):.6g} eps={best:.10f}")
    return math.exp(log_s), math.exp(log_t), best, history


def optimize_fcfs(params: CorrelationParams, mu_bar: float,
                  options: Optional[SearchOptions] = None) -> OptimizationResult:
    """
    Minimize the FCFS average error over (lambda_s, lambda_t).

    Args:
        params: Correlation decay rates
        mu_bar: Normalized service rate (1/(s*m))
        options: Grid settings; defaults cover six decades around the natural scales

    Returns:
        OptimizationResult with the best refined node; every coarse local
        minimum that survives refinement is listed in ``local_minima``

    Raises:
        InfeasibleGridError: If no coarse node satisfies lambda_s*lambda_t < (1-margin)*mu_bar
    """
    mu_bar = require_positive("mu_bar", mu_bar)
    options = options or SearchOptions()
    (s_low, s_high), (t_low, t_high) = options.ranges(params, mu_bar)
    spatial = np.geomspace(s_low, s_high, options.grid_points)
    temporal = np.geomspace(t_low, t_high, options.grid_points)

    surface = _FcfsSurface(params, mu_bar, options.margin)
    values = surface(spatial[:, None], temporal[None, :])
    if np.all(np.isnan(values)):
        raise InfeasibleGridError(
            f"No grid node satisfies lambda_s * lambda_t < {surface.limit:.6g}; widen the search ranges"
        )

    half_widths = (math.log(spatial[1] / spatial[0]), math.log(temporal[1] / temporal[0]))
    refined = []
    for i, j in _coarse_minima(values):
        start = (float(spatial[i]), float(temporal[j]), float(values[i, j]))
        refined.append(_refine(surface, start, half_widths, options))

    survivors: List[Tuple[float, float, float, List[float]]] = []
    for candidate in sorted(refined, key=lambda item: (item[2], item[0], item[1])):
        duplicate = any(abs(math.log(candidate[0] / kept[0])) < 10 * options.tolerance and
                        abs(math.log(candidate[1] / kept[1])) < 10 * options.tolerance for kept in survivors)
        if not duplicate:
            survivors.append(candidate)

    lambda_s_star, lambda_t_star, eps_star, history = survivors[0]
    if len(survivors) > 1:
        logger.info(f"{len(survivors)} distinct local minima survived refinement")
    logger.info(f"FCFS optimum: lambda_s={lambda_s_star:.6g}, lambda_t={lambda_t_star:.6g}, "
                f"eps={eps_star:.6f} after {surface.evaluations} evaluations")
    return OptimizationResult(
        lambda_s_star=lambda_s_star,
        lambda_t_star=lambda_t_star,
        eps_star=eps_star,
        method="grid_refine",
        evaluations=surface.evaluations,
        feasible_region=f"lambda_s * lambda_t < {surface.limit:.6g}",
        local_minima=[(s, t, e) for s, t, e, _ in survivors],
        history=history,
    )


def lcfs_limit_error(lambda_s, mu_bar: float, params: CorrelationParams):
    """Keep-freshest error as lambda_t -> inf: 1 - F(2 lambda_s / b) F(mu0 / a)."""
    lambda_s = np.asarray(lambda_s, dtype=float)
    return 1.0 - saturation(2.0 * lambda_s / params.b) * saturation(mu_bar / (lambda_s * params.a))


def lcfs_practical_lambda_t(params: CorrelationParams, mu_bar: float, lambda_s: float,
                            within: float = 0.01) -> Optional[float]:
    """
    Smallest lambda_t whose keep-freshest error is within ``within`` (relative) of the limit.

    Solves F(r_d) F(lambda_t / a) F(mu0 / a) = 1 - (1 + within) * eps_limit
    exactly; returns None when every lambda_t already qualifies.
    """
    limit = float(lcfs_limit_error(lambda_s, mu_bar, params))
    spatial_factor = float(saturation(2.0 * lambda_s / params.b) * saturation(mu_bar / (lambda_s * params.a)))
    target = (1.0 - (1.0 + within) * limit) / spatial_factor
    if target <= 0.0:
        return None
    return params.a * target / (1.0 - target)


def optimize_lcfs(params: CorrelationParams, mu_bar: float, within: float = 0.01) -> OptimizationResult:
    """
    Closed-form keep-freshest optimum.

    Args:
        params: Correlation decay rates
        mu_bar: Normalized service rate

    Returns:
        lambda_s* = sqrt(b mu_bar / (2a)), lambda_t* = inf and
        eps* = 1 - F(sqrt(2 mu_bar / (a b)))^2, plus the practical lambda_t
        reaching within 1% of eps*
    """
    mu_bar = require_positive("mu_bar", mu_bar)
    lambda_s_star = math.sqrt(params.b * mu_bar / (2.0 * params.a))
    balance = math.sqrt(2.0 * mu_bar / (params.a * params.b))
    eps_star = 1.0 - float(saturation(balance)) ** 2
    return OptimizationResult(
        lambda_s_star=lambda_s_star,
        lambda_t_star=math.inf,
        eps_star=eps_star,
        method="closed_form",
        evaluations=1,
        feasible_region="all positive rates (keep-freshest queues do not saturate)",
        practical_lambda_t=lcfs_practical_lambda_t(params, mu_bar, lambda_s_star, within),
    )


@dataclass
class SweepPoint:
    lambda_s: float
    lambda_t: float
    eps: Optional[float]
    status: str
    method: str = ""


def _check_axis(name: str, values: Iterable[float]) -> List[float]:
    axis = [require_positive(name, value) for value in values]
    if not axis:
        raise InvalidParameterError(f"Sweep axis {name} is empty")
    steps = np.diff(axis)
    if len(axis) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
        raise InvalidParameterError(f"Sweep axis {name} must be strictly monotone")
    return axis


def sweep(template: SystemConfig, params: CorrelationParams, lambda_s_values: Optional[Sequence[float]] = None,
          lambda_t_values: Optional[Sequence[float]] = None) -> List[SweepPoint]:
    """
    Evaluate the analytic average error on a (lambda_s, lambda_t) grid.

    A missing axis holds the template's value. Rows come in lambda_s-major
    order; unstable FCFS nodes carry status 'infeasible' and no value.
    """
    spatial = _check_axis("lambda_s", lambda_s_values if lambda_s_values is not None else [template.lambda_s])
    temporal = _check_axis("lambda_t", lambda_t_values if lambda_t_values is not None else [template.lambda_t])
    points = []
    for lambda_s in spatial:
        for lambda_t in temporal:
            config = template.with_rates(lambda_s=lambda_s, lambda_t=lambda_t)
            try:
                summary = average_error(config, params)
            except StabilityError:
                points.append(SweepPoint(lambda_s, lambda_t, None, INFEASIBLE))
                continue
            points.append(SweepPoint(lambda_s, lambda_t, summary.eps_bar, "ok", summary.method))
    infeasible = sum(point.status == INFEASIBLE for point in points)
    logger.info(f"sweep: {len(points)} nodes evaluated, {infeasible} infeasible")
    return points


def to_frame(points: Sequence[SweepPoint]) -> pd.DataFrame:
    """Surface rows as a DataFrame; infeasible nodes hold NaN in 'eps'."""
    return pd.DataFrame(
        [(p.lambda_s, p.lambda_t, np.nan if p.eps is None else p.eps, p.status) for p in points],
        columns=SURFACE_COLUMNS,
    )


def to_matrix(frame: pd.DataFrame) -> pd.DataFrame:
    """Pivot surface rows into a lambda_s x lambda_t matrix.

    Raises:
        RaggedGridError: If some (lambda_s, lambda_t) node is missing or repeated
    """
    spatial = frame["lambda_s"].unique()
    temporal = frame["lambda_t"].unique()
    if len(frame) != len(spatial) * len(temporal) or frame.duplicated(["lambda_s", "lambda_t"]).any():
        raise RaggedGridError(
            f"{len(frame)} rows do not form a {len(spatial)} x {len(temporal)} grid"
        )
    return frame.pivot(index="lambda_s", columns="lambda_t", values="eps")
