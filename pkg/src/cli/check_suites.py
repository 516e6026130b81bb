"""
Check Suites - Self-consistency and channel-equivalence checks run from the CLI

identities   closed forms agree with their transform and quadrature oracles
appendix-a   channel-level and decoupled simulations agree statistically
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from ..core.aoi_laws import rates_coincide
from ..core.error_laws import eps_fcfs, eps_lcfs, eps_via_lst_at_one, pdf_coefficients, saturation
from ..core.field_model import CorrelationParams, Discipline, Scheduler, SystemConfig
from ..core.field_simulator import equivalence_check

logger = logging.getLogger(__name__)


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    detail: str


@dataclass
class SuiteReport:
    suite: str
    outcomes: List[CheckOutcome] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(outcome.passed for outcome in self.outcomes)


def _log_uniform(rng: np.random.Generator, low: float, high: float) -> float:
    return float(np.exp(rng.uniform(np.log(low), np.log(high))))


def random_fcfs_config(rng: np.random.Generator):
    """A stable FCFS deployment with rates spread over several decades."""
    params = CorrelationParams(_log_uniform(rng, 0.1, 10.0), _log_uniform(rng, 0.1, 10.0))
    lambda_s = _log_uniform(rng, 0.1, 10.0)
    mu_bar = _log_uniform(rng, 0.1, 100.0)
    lambda_t = rng.uniform(0.01, 0.99) * mu_bar / lambda_s
    return SystemConfig(lambda_s, lambda_t, mu_bar, Discipline.FCFS), params


def random_lcfs_config(rng: np.random.Generator):
    params = CorrelationParams(_log_uniform(rng, 0.1, 10.0), _log_uniform(rng, 0.1, 10.0))
    config = SystemConfig(_log_uniform(rng, 0.1, 10.0), _log_uniform(rng, 0.01, 100.0),
                          _log_uniform(rng, 0.1, 100.0), Discipline.LCFS)
    return config, params


def _well_separated(rates: Sequence[float], gap: float = 0.05) -> bool:
    return not any(rates_coincide(rates[i], rates[j], gap)
                   for i in range(len(rates)) for j in range(i + 1, len(rates)))


def check_fcfs_identity(rng: np.random.Generator, draws: int = 1000) -> CheckOutcome:
    worst = 0.0
    for _ in range(draws):
        config, params = random_fcfs_config(rng)
        worst = max(worst, abs(eps_fcfs(config, params).eps_bar - eps_via_lst_at_one(config, params).eps_bar))
    return CheckOutcome("fcfs product form vs 1 - LST_K(1)", worst <= 1e-9, f"max gap {worst:.3e}")


def check_lcfs_identity(rng: np.random.Generator, draws: int = 1000) -> CheckOutcome:
    worst = 0.0
    for _ in range(draws):
        config, params = random_lcfs_config(rng)
        summary = eps_lcfs(config, params)
        r, lam, m = summary.rates["r_d"], summary.rates["r_lambda"], summary.rates["r_mu"]
        product = 1.0 - float(saturation(r) * saturation(lam) * saturation(m))
        worst = max(worst, abs(summary.eps_bar - product))
    return CheckOutcome("lcfs partial fractions vs product form", worst <= 1e-10, f"max gap {worst:.3e}")


def check_pdf_normalization(rng: np.random.Generator, draws: int = 100) -> CheckOutcome:
    worst_mass, worst_mean, used = 0.0, 0.0, 0
    while used < draws:
        config, params = random_fcfs_config(rng)
        mu0 = config.mu0
        rates = (2 * config.lambda_s / params.b, config.lambda_t / params.a, mu0 / params.a,
                 (1 - config.rho0) * mu0 / params.a)
        if not _well_separated(rates):
            continue
        coefficients = pdf_coefficients(config, params)
        worst_mass = max(worst_mass, abs(coefficients.total_mass() - 1.0))
        worst_mean = max(worst_mean, abs(coefficients.mean() - eps_fcfs(config, params).eps_bar))
        used += 1
    passed = worst_mass <= 1e-6 and worst_mean <= 1e-6
    return CheckOutcome("fcfs error density mass and mean", passed,
                        f"max |mass - 1| {worst_mass:.3e}, max |mean - eps| {worst_mean:.3e}")


def run_identities(seed: int = 0) -> SuiteReport:
    rng = np.random.default_rng(seed)
    report = SuiteReport("identities")
    for check in (check_fcfs_identity, check_lcfs_identity, check_pdf_normalization):
        report.outcomes.append(check(rng))
    return report


# (scheduler, lambda_t, mu, M)
APPENDIX_A_REFERENCE = (
    (Scheduler.UNIFORM_RANDOM, 0.1, 4.0, 4),
    (Scheduler.UNIFORM_RANDOM, 0.5, 1.0, 1),
    (Scheduler.ROUND_ROBIN, 0.5, 1.0, 1),
)


def run_appendix_a(seeds: Sequence[int], horizon: float) -> SuiteReport:
    report = SuiteReport("appendix-a")
    for scheduler, lambda_t, mu, count in APPENDIX_A_REFERENCE:
        equivalence = equivalence_check(scheduler, lambda_t, mu, count, seeds, horizon=horizon)
        worst = max(equivalence.rows, key=lambda row: abs(row.difference) - row.tolerance)
        report.outcomes.append(CheckOutcome(
            f"{scheduler.value} M={count} channel-level vs decoupled",
            equivalence.passed,
            f"{worst.metric}: diff {worst.difference:+.4g} vs tolerance {worst.tolerance:.4g}",
        ))
    return report


SUITES: Dict[str, Callable[..., SuiteReport]] = {
    "identities": run_identities,
    "appendix-a": run_appendix_a,
}
