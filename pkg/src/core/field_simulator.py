"""
Field Simulator - Monte Carlo ground truth for AoI and field estimation error

Each sampling point receives Poisson(lambda_t) packets and competes for one
shared channel. A point's packets leave only at its transmission
opportunities: a packet is delivered at the end of an epoch won by its point.
Sample paths are handled as whole arrays per point, and the AoI sawtooth is
integrated exactly, segment by segment.

Channel modes:
    channel    one global stream of exponential(mu) epochs; the scheduler
               assigns each epoch to a point (uniform over all M points, or
               cyclically for round robin). An epoch won by an idle point is wasted.
    decoupled  each point is simulated on its own: Poisson(mu0) opportunities
               for uniform scheduling; Erlang(M, mu) service (FCFS) or
               Erlang-spaced opportunities (keep-freshest) for round robin.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .errors import InvalidParameterError, SimulationError
from .field_model import CorrelationParams, Discipline, Scheduler, SystemConfig, require_positive, validate
from .random_streams import ALGORITHM, StreamPurpose, fresh_seed, make_generator
from .spatial_sampling import PointSet, probe_positions, sample_points

logger = logging.getLogger(__name__)

DEFAULT_LST_POINTS = (0.5, 1.0, 2.0)
CHANNEL_EPOCH_WARNING = 5e7
MIN_EXPECTED_POINTS = 10


class ChannelMode(str, Enum):
    CHANNEL_LEVEL = "channel"
    DECOUPLED = "decoupled"

    @classmethod
    def parse(cls, value: Union[str, "ChannelMode"]) -> "ChannelMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"channel": cls.CHANNEL_LEVEL, "channellevel": cls.CHANNEL_LEVEL, "decoupled": cls.DECOUPLED}
        if key not in aliases:
            raise InvalidParameterError(f"Unknown channel mode: {value!r} (expected channel or decoupled)")
        return aliases[key]


def _poisson_times(rng: np.random.Generator, rate: float, horizon: float) -> np.ndarray:
    count = rng.poisson(rate * horizon)
    return np.sort(rng.uniform(0.0, horizon, size=count))


def _renewal_times(rng: np.random.Generator, shape: int, rate: float, horizon: float) -> np.ndarray:
    """Renewal epochs on [0, horizon] with Erlang(shape, rate) gaps."""
    expected = horizon * rate / shape
    chunk = int(expected + 10.0 * math.sqrt(expected) + 10)
    times = np.cumsum(rng.gamma(shape, 1.0 / rate, size=chunk))
    while times[-1] <= horizon:
        extra = np.cumsum(rng.gamma(shape, 1.0 / rate, size=chunk)) + times[-1]
        times = np.concatenate([times, extra])
    return times[times <= horizon]


@dataclass(frozen=True)
class ChannelModel:
    """Shared channel of rate mu serving M points."""

    mode: ChannelMode
    scheduler: Scheduler
    mu: float
    point_count: int

    def __post_init__(self):
        object.__setattr__(self, "mode", ChannelMode.parse(self.mode))
        object.__setattr__(self, "scheduler", Scheduler.parse(self.scheduler))
        object.__setattr__(self, "mu", require_positive("mu", self.mu))
        if int(self.point_count) != self.point_count or self.point_count < 1:
            raise InvalidParameterError(f"Point count must be an integer >= 1, got {self.point_count!r}")
        object.__setattr__(self, "point_count", int(self.point_count))

    @property
    def mu0(self) -> float:
        return self.mu / self.point_count

    def uses_service_times(self, discipline: Discipline) -> bool:
        """Decoupled round-robin FCFS runs a Lindley queue instead of opportunities."""
        return (self.mode is ChannelMode.DECOUPLED and self.scheduler is Scheduler.ROUND_ROBIN
                and discipline is Discipline.FCFS)

    def service_times(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Erlang(M, mu): M exponential epochs between a point's turns."""
        return rng.gamma(self.point_count, 1.0 / self.mu, size=count)

    def opportunities(self, seed: int, replication: int, horizon: float) -> Iterator[np.ndarray]:
        """Sorted transmission opportunities of each point, in point order."""
        count = self.point_count
        if self.mode is ChannelMode.CHANNEL_LEVEL:
            if self.mu * horizon > CHANNEL_EPOCH_WARNING:
                logger.warning(f"Channel-level run holds ~{self.mu * horizon:.3g} epochs in memory; "
                               f"consider channel_mode='decoupled'")
            epochs = _poisson_times(make_generator(seed, replication, StreamPurpose.SERVICE, 0), self.mu, horizon)
            if self.scheduler is Scheduler.UNIFORM_RANDOM:
                schedule = make_generator(seed, replication, StreamPurpose.SCHEDULE, 0)
                picks = schedule.integers(0, count, size=epochs.size)
            else:
                picks = np.arange(epochs.size) % count
            order = np.argsort(picks, kind="stable")
            bounds = np.cumsum(np.bincount(picks, minlength=count))[:-1]
            yield from np.split(epochs[order], bounds)
            return

        for index in range(count):
            rng = make_generator(seed, replication, StreamPurpose.SERVICE, index)
            if self.scheduler is Scheduler.UNIFORM_RANDOM:
                yield _poisson_times(rng, self.mu0, horizon)
            else:
                yield _renewal_times(rng, count, self.mu, horizon)


def fcfs_deliveries(arrivals: np.ndarray, opportunities: np.ndarray) -> np.ndarray:
    """Delivery time of each packet (inf if still queued) when the queue drains in arrival order.

    Packet n leaves at the first opportunity strictly after both its arrival
    and the departure of packet n-1.
    """
    if arrivals.size == 0:
        return np.empty(0)
    first = np.searchsorted(opportunities, arrivals, side="right")
    order = np.arange(arrivals.size)
    slots = order + np.maximum.accumulate(first - order)
    delivered = np.full(arrivals.size, np.inf)
    served = slots < opportunities.size
    delivered[served] = opportunities[slots[served]]
    return delivered


def lcfs_deliveries(arrivals: np.ndarray, opportunities: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(delivery, generation) pairs when each opportunity sends the freshest undelivered packet."""
    if arrivals.size == 0 or opportunities.size == 0:
        return np.empty(0), np.empty(0)
    freshest = np.searchsorted(arrivals, opportunities, side="right") - 1
    previous = np.concatenate(([-1], freshest[:-1]))
    fresh = freshest > previous
    return opportunities[fresh], arrivals[freshest[fresh]]


def lindley_deliveries(arrivals: np.ndarray, services: np.ndarray) -> np.ndarray:
    """FCFS departures D_n = max(A_n, D_{n-1}) + S_n, vectorized."""
    if arrivals.size == 0:
        return np.empty(0)
    completed = np.cumsum(services)
    backlog = arrivals - np.concatenate(([0.0], completed[:-1]))
    return completed + np.maximum.accumulate(backlog)


@dataclass
class AoiTracker:
    """AoI sawtooth of one point: Delta(t) = t - u(t), with u(0) = 0."""

    delivery_times: np.ndarray
    generation_times: np.ndarray

    @classmethod
    def from_deliveries(cls, delivery_times: np.ndarray, generation_times: np.ndarray,
                        horizon: float) -> "AoiTracker":
        kept = np.isfinite(delivery_times) & (delivery_times <= horizon)
        return cls(delivery_times[kept], generation_times[kept])

    @property
    def deliveries(self) -> int:
        return int(self.delivery_times.size)

    def age_at(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        last = np.searchsorted(self.delivery_times, times, side="right") - 1
        generated = np.where(last >= 0, self.generation_times[np.maximum(last, 0)], 0.0)
        return times - generated

    def segments(self, horizon: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(start, end, age at start) of every linear piece on [0, horizon]."""
        starts = np.concatenate(([0.0], self.delivery_times))
        ends = np.concatenate((self.delivery_times, [horizon]))
        start_ages = np.concatenate(([0.0], self.delivery_times - self.generation_times))
        return starts, ends, start_ages

    def integrate(self, warmup: float, horizon: float, s_values: Sequence[float]) -> Tuple[float, np.ndarray]:
        """
        Exact integrals of Delta(t) and exp(-s Delta(t)) over [warmup, horizon].

        A piece starting at age d0 and lasting tau contributes tau*d0 + tau^2/2
        and exp(-s d0) (1 - exp(-s tau)) / s.
        """
        starts, ends, start_ages = self.segments(horizon)
        clipped_start = np.clip(starts, warmup, horizon)
        durations = np.clip(ends, warmup, horizon) - clipped_start
        ages = start_ages + (clipped_start - starts)
        age_integral = float(np.sum(durations * ages + 0.5 * durations ** 2))
        lst_integrals = np.array([
            float(np.sum(np.exp(-s * ages) * -np.expm1(-s * durations))) / s for s in s_values
        ])
        return age_integral, lst_integrals


@dataclass
class PointAoiStats:
    mean_age: float
    lst: Dict[float, float]
    deliveries: int
    mean_in_system: float


@dataclass
class AoiRunStats:
    """Time-averaged AoI statistics of every point in one run."""

    mean_age: np.ndarray
    lst: np.ndarray
    deliveries: np.ndarray
    mean_in_system: np.ndarray
    s_values: Tuple[float, ...]
    horizon: float
    warmup: float

    @property
    def point_count(self) -> int:
        return int(self.mean_age.size)

    def point(self, index: int) -> PointAoiStats:
        return PointAoiStats(
            mean_age=float(self.mean_age[index]),
            lst={s: float(self.lst[index, k]) for k, s in enumerate(self.s_values)},
            deliveries=int(self.deliveries[index]),
            mean_in_system=float(self.mean_in_system[index]),
        )

    def average_lst(self) -> Dict[float, float]:
        """Empirical LST samples averaged over points."""
        return {s: float(np.mean(self.lst[:, k])) for k, s in enumerate(self.s_values)}


def _check_window(horizon: float, warmup: float) -> Tuple[float, float]:
    horizon = require_positive("horizon", horizon)
    warmup = float(warmup)
    if not 0.0 <= warmup < horizon:
        raise InvalidParameterError(f"Need horizon > warmup >= 0, got horizon={horizon!r}, warmup={warmup!r}")
    return horizon, warmup


def _check_s_values(s_values: Sequence[float]) -> Tuple[float, ...]:
    return tuple(require_positive("s", s) for s in s_values)


def _run_points(discipline: Discipline, channel: ChannelModel, lambda_t: float, horizon: float,
                warmup: float, s_values: Tuple[float, ...], seed: int, replication: int) -> AoiRunStats:
    count = channel.point_count
    window = horizon - warmup
    mean_age = np.empty(count)
    lst = np.empty((count, len(s_values)))
    deliveries = np.zeros(count, dtype=np.int64)
    in_system = np.full(count, np.nan)

    lindley = channel.uses_service_times(discipline)
    opportunity_stream = None if lindley else channel.opportunities(seed, replication, horizon)
    for index in range(count):
        arrivals = _poisson_times(make_generator(seed, replication, StreamPurpose.ARRIVALS, index),
                                  lambda_t, horizon)
        if lindley:
            services = channel.service_times(
                make_generator(seed, replication, StreamPurpose.SERVICE, index), arrivals.size)
            departures, generations = lindley_deliveries(arrivals, services), arrivals
        elif discipline is Discipline.FCFS:
            departures, generations = fcfs_deliveries(arrivals, next(opportunity_stream)), arrivals
        else:
            departures, generations = lcfs_deliveries(arrivals, next(opportunity_stream))

        if discipline is Discipline.FCFS:
            leave = np.minimum(departures, horizon)
            overlap = np.clip(leave, warmup, horizon) - np.clip(arrivals, warmup, horizon)
            in_system[index] = float(np.sum(overlap)) / window

        tracker = AoiTracker.from_deliveries(departures, generations, horizon)
        age_integral, lst_integrals = tracker.integrate(warmup, horizon, s_values)
        mean_age[index] = age_integral / window
        lst[index] = lst_integrals / window
        deliveries[index] = tracker.deliveries

    return AoiRunStats(mean_age=mean_age, lst=lst, deliveries=deliveries, mean_in_system=in_system,
                       s_values=s_values, horizon=horizon, warmup=warmup)


def simulate_aoi(discipline: Union[str, Discipline], scheduler: Union[str, Scheduler], lambda_t: float,
                 mu: float, point_count: int, horizon: float, warmup: float, seed: int,
                 mode: Union[str, ChannelMode] = ChannelMode.CHANNEL_LEVEL,
                 s_values: Sequence[float] = DEFAULT_LST_POINTS, replication: int = 0) -> AoiRunStats:
    """
    Simulate M points sharing one channel and return per-point AoI statistics.

    Args:
        discipline: fcfs or lcfs (keep-freshest)
        scheduler: ur or rr
        lambda_t: Packet rate of every point
        mu: Channel transmission rate
        point_count: Number of points M
        horizon: End of the simulated interval
        warmup: Start of the measurement window
        seed: Top-level seed
        mode: channel (shared epochs) or decoupled (independent per-point queues)
        s_values: Points at which the empirical LST is integrated
        replication: Replication index selecting independent streams

    Returns:
        AoiRunStats with time-averaged AoI, empirical LST and FCFS queue length

    Raises:
        SimulationError: If no point received any delivery before the horizon
    """
    discipline = Discipline.parse(discipline)
    channel = ChannelModel(mode, scheduler, mu, point_count)
    lambda_t = require_positive("lambda_t", lambda_t)
    horizon, warmup = _check_window(horizon, warmup)
    s_values = _check_s_values(s_values)
    rho0 = lambda_t / channel.mu0
    if discipline is Discipline.FCFS and rho0 >= 1.0:
        logger.warning(f"FCFS run with rho0 = {rho0:.4g} >= 1 has no stationary regime")

    run = _run_points(discipline, channel, lambda_t, horizon, warmup, s_values, int(seed), replication)
    if run.deliveries.sum() == 0:
        raise SimulationError(f"No delivery happened before horizon {horizon:g}; lengthen the run")
    return run


def default_warmup(config: SystemConfig) -> float:
    """10 mean busy periods for FCFS, 10 mean AoI spans for keep-freshest."""
    if config.discipline is Discipline.FCFS:
        return 10.0 / ((1.0 - config.rho0) * config.mu0)
    return 10.0 * (1.0 / config.lambda_t + 1.0 / config.mu0)


@dataclass
class ReplicationOutcome:
    replication: int
    error_mean: float
    spatial_only_error: float
    aoi_mean: float
    lst: Dict[float, float]
    point_count: int
    redraws: int
    silent_points: int


@dataclass
class _FieldTask:
    config: SystemConfig
    params: CorrelationParams
    region_length: float
    probes: int
    horizon: float
    warmup: float
    seed: int
    replication: int
    channel_mode: ChannelMode
    edge_mode: str
    s_values: Tuple[float, ...]


def _draw_points(task: _FieldTask) -> Tuple[PointSet, int]:
    redraws = 0
    while True:
        rng = make_generator(task.seed, task.replication, StreamPurpose.POINTS, redraws)
        points = sample_points(task.config.lambda_s, task.region_length, rng)
        if not points.is_empty:
            return points, redraws
        redraws += 1


def _field_replication(task: _FieldTask) -> ReplicationOutcome:
    config, params = task.config, task.params
    points, redraws = _draw_points(task)
    channel = ChannelModel(task.channel_mode, config.scheduler, config.mu_bar * task.region_length, len(points))
    s_values = tuple(dict.fromkeys((params.a,) + task.s_values))
    run = _run_points(config.discipline, channel, config.lambda_t, task.horizon, task.warmup,
                      s_values, task.seed, task.replication)

    rng = make_generator(task.seed, task.replication, StreamPurpose.PROBES, 0)
    positions = probe_positions(points, task.probes, rng, task.edge_mode)
    nearest, distances = points.nearest(positions, torus=task.edge_mode == "torus")
    spatial = np.exp(-params.b * distances)
    temporal = run.lst[nearest, 0]
    lst = {s: value for s, value in run.average_lst().items() if s in task.s_values}
    return ReplicationOutcome(
        replication=task.replication,
        error_mean=float(np.mean(1.0 - spatial * temporal)),
        spatial_only_error=float(np.mean(1.0 - spatial)),
        aoi_mean=float(np.mean(run.mean_age)),
        lst=lst,
        point_count=len(points),
        redraws=redraws,
        silent_points=int(np.sum(run.deliveries == 0)),
    )


def _confidence_half_width(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return math.nan
    return float(stats.t.ppf(0.975, values.size - 1) * values.std(ddof=1) / math.sqrt(values.size))


@dataclass
class SimResult:
    """Field error estimate aggregated over replications."""

    eps_hat: float
    ci95: float
    aoi_mean: float
    lst_samples: Dict[float, float]
    replications: int
    seed: int
    horizon: float
    warmup: float
    spatial_only_error: float
    replication_means: List[float] = field(default_factory=list)
    manifest: Dict[str, object] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def covers(self, value: float) -> bool:
        """True when ``value`` lies inside eps_hat +/- ci95."""
        return abs(self.eps_hat - value) <= self.ci95


def simulate_field_error(config: SystemConfig, params: CorrelationParams, region_length: float,
                         probes: int = 2000, horizon: float = 1e5, warmup: Optional[float] = None,
                         replications: int = 20, seed: Optional[int] = None,
                         channel_mode: Union[str, ChannelMode] = ChannelMode.DECOUPLED,
                         edge_mode: str = "torus", workers: int = 1,
                         s_values: Sequence[float] = DEFAULT_LST_POINTS) -> SimResult:
    """
    Estimate the time- and space-averaged estimation error of the field.

    Args:
        config: Deployment; the channel rate is mu_bar * region_length
        params: Correlation decay rates
        region_length: Segment length L
        probes: Probe positions per replication
        horizon: Simulated time per replication
        warmup: Discarded initial interval; defaults to the discipline's relaxation time
        replications: Independent replications
        seed: Top-level seed; a fresh one is drawn and logged when omitted
        channel_mode: decoupled (default) or channel
        edge_mode: torus distances or interior probes
        workers: Processes for the replications (1 runs inline)
        s_values: LST points reported for the AoI

    Returns:
        SimResult with eps_hat, its Student-t 95% half-width and a manifest
    """
    derived = validate(config, require_stability=False)
    region_length = require_positive("region_length", region_length)
    if int(probes) < 1:
        raise InvalidParameterError(f"probes must be >= 1, got {probes!r}")
    if int(replications) < 1:
        raise InvalidParameterError(f"replications must be >= 1, got {replications!r}")
    warnings = []
    if not derived.stable:
        warnings.append(f"FCFS rho0 = {derived.rho0:.4g} >= 1: the queues do not settle")
    if config.lambda_s * region_length < MIN_EXPECTED_POINTS:
        warnings.append(f"lambda_s * L = {config.lambda_s * region_length:.3g} < {MIN_EXPECTED_POINTS}: "
                        f"few sampling points per replication")
    if warmup is None:
        warmup = default_warmup(config) if derived.stable else 0.0
    horizon, warmup = _check_window(horizon, warmup)
    if seed is None:
        seed = fresh_seed()
        logger.info(f"No seed given; using seed {seed}")

    mode = ChannelMode.parse(channel_mode)
    tasks = [
        _FieldTask(config, params, region_length, int(probes), horizon, warmup, int(seed), rep, mode,
                   edge_mode, _check_s_values(s_values))
        for rep in range(int(replications))
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_field_replication, tasks))
    else:
        outcomes = [_field_replication(task) for task in tasks]

    means = [outcome.error_mean for outcome in outcomes]
    redraws = sum(outcome.redraws for outcome in outcomes)
    silent = sum(outcome.silent_points for outcome in outcomes)
    if silent:
        warnings.append(f"{silent} sampling point(s) had no delivery inside the horizon")
    for note in warnings:
        logger.warning(note)

    lst_samples = {s: float(np.mean([outcome.lst[s] for outcome in outcomes])) for s in tasks[0].s_values}
    result = SimResult(
        eps_hat=float(np.mean(means)),
        ci95=_confidence_half_width(means),
        aoi_mean=float(np.mean([outcome.aoi_mean for outcome in outcomes])),
        lst_samples=lst_samples,
        replications=len(outcomes),
        seed=int(seed),
        horizon=horizon,
        warmup=warmup,
        spatial_only_error=float(np.mean([outcome.spatial_only_error for outcome in outcomes])),
        replication_means=means,
        warnings=warnings,
    )
    result.manifest = {
        "seed": int(seed),
        "algorithm": ALGORITHM,
        "streams": [purpose.name.lower() for purpose in StreamPurpose],
        "replications": len(outcomes),
        "point_counts": [outcome.point_count for outcome in outcomes],
        "empty_point_set_redraws": redraws,
        "channel_mode": mode.value,
        "edge_mode": edge_mode,
        "region_length": region_length,
        "probes": int(probes),
        "horizon": horizon,
        "warmup": warmup,
    }
    logger.info(f"simulated eps = {result.eps_hat:.6f} +/- {result.ci95:.6f} over {len(outcomes)} replications")
    return result


@dataclass
class EquivalenceRow:
    metric: str
    channel_level: float
    channel_ci95: float
    decoupled: float
    decoupled_ci95: float

    @property
    def difference(self) -> float:
        return self.decoupled - self.channel_level

    @property
    def tolerance(self) -> float:
        return self.channel_ci95 + self.decoupled_ci95

    @property
    def within(self) -> bool:
        return abs(self.difference) <= self.tolerance


@dataclass
class EquivalenceReport:
    scheduler: Scheduler
    discipline: Discipline
    point_count: int
    rows: List[EquivalenceRow]

    @property
    def passed(self) -> bool:
        return all(row.within for row in self.rows)


def equivalence_check(scheduler: Union[str, Scheduler], lambda_t: float, mu: float, point_count: int,
                      seeds: Sequence[int], horizon: float = 2e4, warmup: Optional[float] = None,
                      s_values: Sequence[float] = DEFAULT_LST_POINTS,
                      discipline: Union[str, Discipline] = Discipline.FCFS) -> EquivalenceReport:
    """
    Compare channel-level and decoupled runs of the same system.

    Each seed gives one point-averaged AoI mean and LST sample per mode; a
    metric passes when the difference of the two seed means is no larger than
    the sum of their 95% half-widths (the intervals overlap).
    """
    scheduler = Scheduler.parse(scheduler)
    discipline = Discipline.parse(discipline)
    if len(seeds) < 2:
        raise InvalidParameterError("equivalence_check needs at least two seeds")
    mu0 = require_positive("mu", mu) / point_count
    lambda_t = require_positive("lambda_t", lambda_t)
    if warmup is None:
        if discipline is Discipline.FCFS:
            warmup = 10.0 / (mu0 - lambda_t) if lambda_t < mu0 else 0.0
        else:
            warmup = 10.0 * (1.0 / lambda_t + 1.0 / mu0)

    samples = {mode: [] for mode in ChannelMode}
    for seed in seeds:
        for mode in ChannelMode:
            run = simulate_aoi(discipline, scheduler, lambda_t, mu, point_count, horizon, warmup, seed,
                               mode=mode, s_values=s_values)
            samples[mode].append([float(np.mean(run.mean_age))] + list(np.mean(run.lst, axis=0)))

    metrics = ["aoi_mean"] + [f"lst({s:g})" for s in s_values]
    channel = np.asarray(samples[ChannelMode.CHANNEL_LEVEL])
    decoupled = np.asarray(samples[ChannelMode.DECOUPLED])
    rows = [
        EquivalenceRow(metric, float(channel[:, k].mean()), _confidence_half_width(channel[:, k]),
                       float(decoupled[:, k].mean()), _confidence_half_width(decoupled[:, k]))
        for k, metric in enumerate(metrics)
    ]
    report = EquivalenceReport(scheduler, discipline, int(point_count), rows)
    logger.info(f"equivalence ({scheduler.value}, M={point_count}): {'pass' if report.passed else 'fail'}")
    return report
