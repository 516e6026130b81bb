"""
AoI Laws - Stationary age-of-information distributions of one sampling point

Covers FCFS and LCFS (keep-freshest) queues under uniformly random
scheduling, where each point sees exponential(mu0) service, and FCFS under
round-robin scheduling, where service is Erlang(M, mu). CDFs are carried as
finite exponential mixtures sum_i c_i * t**k_i * exp(-r_i * t); LSTs are
evaluated in closed form.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FieldStatusError, InvalidParameterError, StabilityError
from .field_model import Discipline, Scheduler, SystemConfig, require_positive

logger = logging.getLogger(__name__)

CONFLUENCE_TOL = 1e-9
SERIES_THRESHOLD = 1e-8


def rates_coincide(rate1: float, rate2: float, tol: float = CONFLUENCE_TOL) -> bool:
    """Two rates are treated as equal when |r1 - r2| <= tol * max(r1, r2)."""
    return abs(rate1 - rate2) <= tol * max(abs(rate1), abs(rate2))


def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise InvalidParameterError(f"Time argument must be >= 0, got {t!r}")
    return t


def _check_transform_argument(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise InvalidParameterError(f"Transform argument must be >= 0, got {s!r}")
    return s


@dataclass(frozen=True)
class MixtureTerm:
    coefficient: float
    degree: int
    rate: float


@dataclass(frozen=True)
class ExpMixtureCdf:
    """CDF of the form F(t) = sum c * t**k * exp(-r * t) over its terms.

    A proper CDF carries exactly one constant term (c = 1, k = 0, r = 0).
    """

    terms: Tuple[MixtureTerm, ...]

    def cdf(self, t):
        t = _check_time(t)
        total = np.zeros_like(t)
        for term in self.terms:
            total = total + term.coefficient * t ** term.degree * np.exp(-term.rate * t)
        return total

    def pdf(self, t):
        t = _check_time(t)
        total = np.zeros_like(t)
        for term in self.terms:
            if term.rate == 0.0 and term.degree == 0:
                continue
            polynomial = -term.rate * t ** term.degree
            if term.degree > 0:
                polynomial = polynomial + term.degree * t ** (term.degree - 1)
            total = total + term.coefficient * polynomial * np.exp(-term.rate * t)
        return total

    def lst(self, s):
        """E[exp(-s X)] = sum c * k! * s / (s + r)**(k + 1)."""
        s = np.asarray(s, dtype=float)
        total = np.zeros_like(s)
        for term in self.terms:
            if term.rate == 0.0:
                total = total + term.coefficient
                continue
            total = total + (term.coefficient * math.factorial(term.degree) * s
                             / (s + term.rate) ** (term.degree + 1))
        return total

    def mean(self) -> float:
        """Integral of 1 - F over [0, inf)."""
        return -sum(term.coefficient * math.factorial(term.degree) / term.rate ** (term.degree + 1)
                    for term in self.terms if term.rate > 0.0)

    def scaled(self, factor: float) -> "ExpMixtureCdf":
        """Mixture describing factor * X."""
        factor = require_positive("factor", factor)
        return ExpMixtureCdf(tuple(
            MixtureTerm(term.coefficient / factor ** term.degree, term.degree, term.rate / factor)
            for term in self.terms
        ))


def group_rates(rates: Sequence[float], tol: float = CONFLUENCE_TOL) -> List[Tuple[float, int]]:
    """Collapse rates that coincide within tolerance into (rate, multiplicity) pairs."""
    groups: List[List[float]] = []
    for rate in sorted(require_positive("rate", r) for r in rates):
        if groups and rates_coincide(groups[-1][0], rate, tol):
            groups[-1].append(rate)
        else:
            groups.append([rate])
    return [(group[0], len(group)) for group in groups]


def hypoexponential(rates: Sequence[float]) -> ExpMixtureCdf:
    """
    CDF of a sum of independent exponentials, by partial fractions.

    The Laplace transform of the CDF is C / (s * prod (s + r_j)**k_j). Each
    pole -r_j of order k contributes sum_l A_jl * x**(l-1) * exp(-r_j x) / (l-1)!
    with A_jl = h_j^(k-l)(-r_j) / (k-l)!, where h_j is the transform with the
    (s + r_j)**k factor removed; derivatives of h_j follow from h' = h * psi.

    Args:
        rates: Exponential rates; repeated rates (within tolerance) are allowed

    Returns:
        ExpMixtureCdf of the sum
    """
    groups = group_rates(rates)
    scale = 1.0
    for rate, multiplicity in groups:
        scale *= rate ** multiplicity

    terms = [MixtureTerm(1.0, 0, 0.0)]
    for j, (pole_rate, order) in enumerate(groups):
        others = [(rate, mult) for i, (rate, mult) in enumerate(groups) if i != j]
        s0 = -pole_rate

        def psi_derivative(m: int) -> float:
            inner = 1.0 / s0 ** (m + 1) + sum(mult / (s0 + rate) ** (m + 1) for rate, mult in others)
            return (-1.0) ** (m + 1) * math.factorial(m) * inner

        h0 = scale / s0
        for rate, mult in others:
            h0 /= (s0 + rate) ** mult
        derivatives = [h0]
        for n in range(1, order):
            derivatives.append(sum(math.comb(n - 1, i) * derivatives[i] * psi_derivative(n - 1 - i)
                                   for i in range(n)))

        for power in range(1, order + 1):
            residue = derivatives[order - power] / math.factorial(order - power)
            terms.append(MixtureTerm(residue / math.factorial(power - 1), power - 1, pole_rate))
    return ExpMixtureCdf(tuple(terms))


def hypo2(lambda1: float, lambda2: float, x):
    """Element-wise hypoexponential(lambda1, lambda2) CDF for x >= 0."""
    x = _check_time(x)
    if rates_coincide(lambda1, lambda2):
        return -np.expm1(-lambda1 * x) - lambda1 * x * np.exp(-lambda1 * x)
    gap = lambda2 - lambda1
    return 1.0 - lambda2 / gap * np.exp(-lambda1 * x) + lambda1 / gap * np.exp(-lambda2 * x)


def hypo2_cdf(lambda1: float, lambda2: float, x: float) -> float:
    """
    CDF of the sum of independent exponential(lambda1) and exponential(lambda2) variables.

    Args:
        lambda1: First rate (> 0)
        lambda2: Second rate (> 0)
        x: Argument (>= 0)

    Returns:
        1 - l2/(l2-l1) e^{-l1 x} + l1/(l2-l1) e^{-l2 x}, or 1 - (1 + l1 x) e^{-l1 x}
        when the rates coincide within tolerance
    """
    lambda1 = require_positive("lambda1", lambda1)
    lambda2 = require_positive("lambda2", lambda2)
    return float(hypo2(lambda1, lambda2, x))


def hypo2_pdf(lambda1: float, lambda2: float, x):
    """Density of the hypoexponential(lambda1, lambda2) law, element-wise."""
    x = _check_time(x)
    if rates_coincide(lambda1, lambda2):
        return lambda1 ** 2 * x * np.exp(-lambda1 * x)
    return lambda1 * lambda2 / (lambda2 - lambda1) * (np.exp(-lambda1 * x) - np.exp(-lambda2 * x))


class AoiKind(str, Enum):
    FCFS_UR = "fcfs_ur"
    LCFS_UR = "lcfs_ur"
    FCFS_RR = "fcfs_rr"


@dataclass(frozen=True)
class AoiLaw:
    """Stationary AoI law of a single sampling point."""

    kind: AoiKind
    lambda_t: float
    mu0: float
    point_count: Optional[int] = None
    mu: Optional[float] = None

    @property
    def rho0(self) -> float:
        return self.lambda_t / self.mu0

    @property
    def mixture(self) -> ExpMixtureCdf:
        if self.kind is AoiKind.FCFS_UR:
            rho0 = self.rho0
            drain = (1.0 - rho0) * self.mu0
            return ExpMixtureCdf((
                MixtureTerm(1.0, 0, 0.0),
                MixtureTerm(-1.0, 0, drain),
                MixtureTerm(1.0 / (1.0 - rho0), 0, self.mu0),
                MixtureTerm(rho0 * self.mu0, 1, self.mu0),
                MixtureTerm(-1.0 / (1.0 - rho0), 0, self.lambda_t),
            ))
        if self.kind is AoiKind.LCFS_UR:
            return hypoexponential([self.lambda_t, self.mu0])
        raise FieldStatusError("Round-robin AoI has no closed-form CDF; only its LST is available")

    @property
    def convergence_bound(self) -> float:
        """The LST is finite for s > -convergence_bound."""
        if self.kind is AoiKind.FCFS_UR:
            return min(self.lambda_t, (1.0 - self.rho0) * self.mu0)
        if self.kind is AoiKind.LCFS_UR:
            return min(self.lambda_t, self.mu0)
        return (1.0 - self.rho0) * min(self.lambda_t, self.mu0)

    def cdf(self, t):
        return self.mixture.cdf(t)

    def pdf(self, t):
        return self.mixture.pdf(t)

    def lst(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s <= -self.convergence_bound):
            raise InvalidParameterError(
                f"LST argument {s!r} is outside the region of convergence s > {-self.convergence_bound:.6g}"
            )
        if self.kind is AoiKind.FCFS_UR:
            return _fcfs_ur_lst(s, self.lambda_t, self.mu0)
        if self.kind is AoiKind.LCFS_UR:
            return self.lambda_t / (s + self.lambda_t) * self.mu0 / (s + self.mu0)
        return _fcfs_rr_lst(s, self.lambda_t, self.mu, self.point_count)

    def scaled_lst(self, factor: float, s):
        """LST of factor * AoI, i.e. s -> LST(factor * s)."""
        return self.lst(factor * np.asarray(s, dtype=float))

    def mean(self) -> float:
        if self.kind is AoiKind.FCFS_UR:
            rho0 = self.rho0
            return (1.0 + 1.0 / rho0 + rho0 ** 2 / (1.0 - rho0)) / self.mu0
        if self.kind is AoiKind.LCFS_UR:
            return 1.0 / self.lambda_t + 1.0 / self.mu0
        count, mu, lam = self.point_count, self.mu, self.lambda_t
        rho0 = self.rho0
        service_mean = count / mu
        service_second = count * (count + 1) / mu ** 2
        sojourn = service_mean + lam * service_second / (2.0 * (1.0 - rho0))
        return sojourn + (1.0 - rho0) / (lam * (mu / (lam + mu)) ** count)


def _fcfs_ur_lst(s, lam: float, mu0: float):
    drain = (1.0 - lam / mu0) * mu0
    return drain / (s + drain) - drain * s * (s + lam + mu0) / ((s + mu0) ** 2 * (s + lam))


def _fcfs_rr_lst(s, lam: float, mu: float, count: int):
    rho0 = lam * count / mu
    q = (mu / (s + mu)) ** count
    near_zero = np.abs(s) < SERIES_THRESHOLD * lam
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (1.0 - rho0) * s * q / (s - lam + lam * q)
    # (1 - q(s)) / s = M/mu - M(M+1) s / (2 mu^2) + O(s^2)
    slope = count / mu - count * (count + 1) * s / (2.0 * mu ** 2)
    series = (1.0 - rho0) * q / (1.0 - lam * slope)
    sojourn = np.where(near_zero, series, direct)
    shifted = (mu / (s + lam + mu)) ** count
    return sojourn - (1.0 - rho0) * s * q / (s + lam * shifted)


def fcfs_ur_law(lambda_t: float, mu0: float) -> AoiLaw:
    """FCFS queue with exponential(mu0) service (uniformly random scheduling)."""
    lambda_t = require_positive("lambda_t", lambda_t)
    mu0 = require_positive("mu0", mu0)
    if lambda_t >= mu0:
        raise StabilityError(lambda_t / mu0)
    return AoiLaw(AoiKind.FCFS_UR, lambda_t, mu0)


def lcfs_ur_law(lambda_t: float, mu0: float) -> AoiLaw:
    """Keep-freshest queue under uniformly random scheduling; any rho0 is allowed."""
    return AoiLaw(AoiKind.LCFS_UR, require_positive("lambda_t", lambda_t), require_positive("mu0", mu0))


def fcfs_rr_law(lambda_t: float, mu: float, point_count: int) -> AoiLaw:
    """FCFS queue whose service is Erlang(M, mu) (round-robin scheduling)."""
    lambda_t = require_positive("lambda_t", lambda_t)
    mu = require_positive("mu", mu)
    if int(point_count) != point_count or point_count < 1:
        raise InvalidParameterError(f"Point count M must be an integer >= 1, got {point_count!r}")
    point_count = int(point_count)
    mu0 = mu / point_count
    if lambda_t >= mu0:
        raise StabilityError(lambda_t / mu0)
    return AoiLaw(AoiKind.FCFS_RR, lambda_t, mu0, point_count=point_count, mu=mu)


def fcfs_ur_cdf(lambda_t: float, mu0: float, t: float) -> float:
    """Stationary AoI CDF of the FCFS point under uniformly random scheduling."""
    return float(fcfs_ur_law(lambda_t, mu0).cdf(t))


def fcfs_ur_lst(lambda_t: float, mu0: float, s: float) -> float:
    """AoI LST of the FCFS point under uniformly random scheduling."""
    return float(fcfs_ur_law(lambda_t, mu0).lst(_check_transform_argument(s)))


def lcfs_ur_lst(lambda_t: float, mu0: float, s: float) -> float:
    """AoI LST of the keep-freshest point: lambda_t/(s+lambda_t) * mu0/(s+mu0)."""
    return float(lcfs_ur_law(lambda_t, mu0).lst(_check_transform_argument(s)))


def lcfs_ur_cdf(lambda_t: float, mu0: float, t: float) -> float:
    """AoI CDF of the keep-freshest point: hypoexponential(lambda_t, mu0)."""
    lcfs_ur_law(lambda_t, mu0)
    return hypo2_cdf(lambda_t, mu0, t)


def fcfs_rr_lst(lambda_t: float, mu: float, point_count: int, s: float) -> float:
    """AoI LST of an FCFS point under round-robin scheduling among M points."""
    return float(fcfs_rr_law(lambda_t, mu, point_count).lst(_check_transform_argument(s)))


def mean_from_lst(lst: Callable[[float], float], step: float = 1e-2, depth: int = 4,
                  rel_tol: float = 1e-9, max_halvings: int = 40) -> float:
    """
    First moment -L'(0) from forward differences with Richardson extrapolation.

    Only arguments s >= 0 are evaluated. The step is halved until two
    successive extrapolated estimates agree, so laws whose transform varies
    on a scale much smaller than the initial step are handled as well.

    Args:
        lst: Transform evaluator on s >= 0
        step: Initial forward step
        depth: Richardson depth; each estimate uses the last depth + 1 steps
        rel_tol: Relative agreement required between successive estimates
        max_halvings: Upper bound on the number of step halvings

    Returns:
        The mean of the distribution

    Raises:
        InvalidParameterError: If the transform returns non-finite values
    """
    step = require_positive("step", step)
    at_zero = float(lst(0.0))
    rows: List[List[float]] = []
    previous: Optional[float] = None
    best: Tuple[float, float] = (math.inf, math.nan)
    h = step
    for i in range(max_halvings + 1):
        upper = float(lst(h))
        if not (math.isfinite(upper) and math.isfinite(at_zero)):
            raise InvalidParameterError(f"LST is not finite near 0 (step {h:g})")
        row = [(upper - at_zero) / h]
        for j in range(1, min(i, depth) + 1):
            row.append(row[j - 1] + (row[j - 1] - rows[i - 1][j - 1]) / (2.0 ** j - 1.0))
        rows.append(row)
        h /= 2.0
        if i < depth:
            continue
        estimate = row[depth]
        if previous is not None:
            gap = abs(estimate - previous)
            if gap <= rel_tol * abs(estimate):
                return -estimate
            if gap < best[0]:
                best = (gap, estimate)
        previous = estimate
    logger.warning(f"mean_from_lst did not settle after {max_halvings} halvings; "
                   f"returning the estimate with the smallest gap ({best[0]:.3g})")
    return -best[1]


def point_count_for(config: SystemConfig) -> int:
    """Integral M = lambda_s * L for round-robin analysis."""
    if config.region_length is None:
        raise InvalidParameterError("Round-robin analysis needs region_length to fix M = lambda_s * L")
    expected = config.lambda_s * config.region_length
    count = round(expected)
    if count < 1 or abs(expected - count) > 1e-9 * max(1.0, expected):
        raise InvalidParameterError(f"lambda_s * L = {expected!r} is not a positive integer point count")
    return int(count)


def law_for(config: SystemConfig) -> AoiLaw:
    """Per-point AoI law implied by a deployment's discipline and scheduler."""
    if config.scheduler is Scheduler.ROUND_ROBIN:
        if config.discipline is Discipline.LCFS:
            raise InvalidParameterError("Keep-freshest queues are only analysed under uniformly random scheduling")
        count = point_count_for(config)
        return fcfs_rr_law(config.lambda_t, config.mu0 * count, count)
    if config.discipline is Discipline.FCFS:
        return fcfs_ur_law(config.lambda_t, config.mu0)
    return lcfs_ur_law(config.lambda_t, config.mu0)
