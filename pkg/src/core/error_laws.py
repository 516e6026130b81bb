"""
Error Laws - Distribution and average of the remote estimation error

The error at a probe location is xi = 1 - exp(-K) with K = D + H, where
D = b * d_min is the scaled nearest-sampler distance and H = a * AoI is the
scaled age of that sampler. D and H are independent, so the LST of K is the
product of their transforms; every rate below is dimensionless.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import integrate

from .aoi_laws import (AoiKind, AoiLaw, ExpMixtureCdf, hypo2, hypo2_pdf, hypoexponential, law_for,
                       rates_coincide)
from .errors import ConfluentRatesError, FieldStatusError, InvalidParameterError
from .field_model import CorrelationParams, Discipline, Scheduler, SystemConfig, validate
from .spatial_sampling import DistanceLaw

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-9


def saturation(x):
    """F(x) = x / (x + 1)."""
    x = np.asarray(x, dtype=float)
    return x / (x + 1.0)


@dataclass(frozen=True)
class CombinedLaw:
    """Law of K = b * d_min + a * AoI for one deployment."""

    discipline: Discipline
    a: float
    r_d: float
    r_lambda: float
    r_mu: float
    r_q: Optional[float]
    aoi: AoiLaw
    rho0: float

    @classmethod
    def build(cls, config: SystemConfig, params: CorrelationParams) -> "CombinedLaw":
        """
        Derive the dimensionless rates of K from a deployment.

        Raises:
            StabilityError: For an unstable FCFS configuration
        """
        derived = validate(config)
        r_q = None
        if config.discipline is Discipline.FCFS:
            r_q = (1.0 - derived.rho0) * derived.mu0 / params.a
        return cls(
            discipline=config.discipline,
            a=params.a,
            r_d=2.0 * config.lambda_s / params.b,
            r_lambda=config.lambda_t / params.a,
            r_mu=derived.mu0 / params.a,
            r_q=r_q,
            aoi=law_for(config),
            rho0=derived.rho0,
        )

    @property
    def rates(self) -> Dict[str, float]:
        rates = {"r_d": self.r_d, "r_lambda": self.r_lambda, "r_mu": self.r_mu}
        if self.r_q is not None:
            rates["r_q"] = self.r_q
        return rates

    @property
    def distance(self) -> DistanceLaw:
        return DistanceLaw(self.r_d)

    def lst(self, s):
        """LST of K: distance part times the AoI transform at a * s."""
        return self.distance.lst(s) * self.aoi.scaled_lst(self.a, s)

    def mixture(self) -> ExpMixtureCdf:
        """Keep-freshest K is hypoexponential in three rates."""
        if self.discipline is not Discipline.LCFS:
            raise InvalidParameterError("Only the keep-freshest combined law is a plain hypoexponential")
        return hypoexponential([self.r_d, self.r_lambda, self.r_mu])

    def cdf(self, x):
        """F_K(x), element-wise."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise InvalidParameterError(f"Combined-law argument must be >= 0, got {x!r}")
        if self.aoi.kind is AoiKind.FCFS_RR:
            raise FieldStatusError("Round-robin deployments have no closed-form error distribution")
        if self.discipline is Discipline.LCFS:
            return self.mixture().cdf(x)

        r, lam, m, q = self.r_d, self.r_lambda, self.r_mu, self.r_q
        share = 1.0 / (1.0 - self.rho0)
        value = hypo2(r, q, x) + share * hypo2(r, lam, x) - share * hypo2(r, m, x)
        if rates_coincide(r, m):
            tail = lam * r * x ** 2 * np.exp(-m * x) / 2.0
        else:
            gap = m - r
            tail = lam * r * ((np.exp(-r * x) - np.exp(-m * x)) / gap ** 2 - x * np.exp(-m * x) / gap)
        return value + tail

    def pdf(self, x):
        """Density of K, element-wise."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise InvalidParameterError(f"Combined-law argument must be >= 0, got {x!r}")
        if self.aoi.kind is AoiKind.FCFS_RR:
            raise FieldStatusError("Round-robin deployments have no closed-form error distribution")
        if self.discipline is Discipline.LCFS:
            return self.mixture().pdf(x)

        r, lam, m, q = self.r_d, self.r_lambda, self.r_mu, self.r_q
        share = 1.0 / (1.0 - self.rho0)
        value = hypo2_pdf(r, q, x) + share * hypo2_pdf(r, lam, x) - share * hypo2_pdf(r, m, x)
        if rates_coincide(r, m):
            tail = lam * r * (x - m * x ** 2 / 2.0) * np.exp(-m * x)
        else:
            gap = m - r
            tail = lam * r * ((m * np.exp(-m * x) - r * np.exp(-r * x)) / gap ** 2
                              + (m * x - 1.0) * np.exp(-m * x) / gap)
        return value + tail

    def cdf_numeric(self, x: float) -> float:
        """F_K(x) by direct convolution of the distance density with the scaled AoI CDF."""
        if x <= 0.0:
            return 0.0
        r = self.r_d
        scaled_aoi = self.aoi.mixture.scaled(self.a)
        value, _ = integrate.quad(lambda y: float(scaled_aoi.cdf(x - y)) * r * math.exp(-r * y),
                                  0.0, x, epsabs=1e-13, epsrel=1e-12, limit=200)
        return value

    def mean(self) -> float:
        return 1.0 / self.r_d + self.a * self.aoi.mean()


def combined_cdf(config: SystemConfig, params: CorrelationParams, x: float) -> float:
    """
    CDF of K = b * d_min + a * AoI.

    Args:
        config: Deployment (FCFS must be stable)
        params: Correlation decay rates
        x: Argument (>= 0)

    Returns:
        F_K(x); FCFS uses the hypoexponential combination with confluent
        branches, LCFS the three-rate hypoexponential
    """
    return float(CombinedLaw.build(config, params).cdf(x))


def _check_z(z: float) -> float:
    z = float(z)
    if not 0.0 <= z <= 1.0:
        raise InvalidParameterError(f"Error level z must lie in [0, 1], got {z!r}")
    return z


def error_cdf_z(config: SystemConfig, params: CorrelationParams, z: float) -> float:
    """Pr{xi <= z} = F_K(-log(1 - z)); equals 1 at z = 1."""
    z = _check_z(z)
    if z == 1.0:
        return 1.0
    return combined_cdf(config, params, -math.log1p(-z))


def error_pdf_z(config: SystemConfig, params: CorrelationParams, z: float) -> float:
    """
    Density of the error xi at level z in [0, 1).

    f(z) = f_K(-log(1 - z)) / (1 - z); valid for either discipline and for
    repeated rates, where the FCFS coefficient form is unavailable.
    """
    z = _check_z(z)
    if z == 1.0:
        raise InvalidParameterError("The error density is defined on [0, 1)")
    law = CombinedLaw.build(config, params)
    return float(law.pdf(-math.log1p(-z))) / (1.0 - z)


@dataclass(frozen=True)
class PdfCoefficients:
    """Coefficients of the FCFS error density in z.

    f(z) = alpha (1-z)^(r_d-1) + beta (1-z)^(r_lambda-1) + gamma (1-z)^(r_mu-1)
           + omega log(1-z) (1-z)^(r_mu-1) + kappa (1-z)^(r_q-1)
    """

    alpha: float
    beta: float
    gamma: float
    omega: float
    kappa: float
    r_d: float
    r_lambda: float
    r_mu: float
    r_q: float

    def _power_terms(self):
        return ((self.alpha, self.r_d), (self.beta, self.r_lambda),
                (self.gamma, self.r_mu), (self.kappa, self.r_q))

    def density(self, z):
        z = np.asarray(z, dtype=float)
        if np.any((z < 0) | (z >= 1)):
            raise InvalidParameterError("The error density is defined on [0, 1)")
        tail = 1.0 - z
        total = self.omega * np.log(tail) * tail ** (self.r_mu - 1.0)
        for coefficient, rate in self._power_terms():
            total = total + coefficient * tail ** (rate - 1.0)
        return total

    def density_in_x(self, x):
        """f_K(x) = f(1 - e^-x) e^-x; removes the endpoint singularity for quadrature."""
        x = np.asarray(x, dtype=float)
        total = -self.omega * x * np.exp(-self.r_mu * x)
        for coefficient, rate in self._power_terms():
            total = total + coefficient * np.exp(-rate * x)
        return total

    def total_mass(self) -> float:
        value, _ = integrate.quad(lambda x: float(self.density_in_x(x)), 0.0, np.inf,
                                  epsabs=1e-12, epsrel=1e-10, limit=200)
        return value

    def mean(self) -> float:
        """E[xi] by quadrature of z * f(z)."""
        value, _ = integrate.quad(lambda x: -math.expm1(-x) * float(self.density_in_x(x)), 0.0, np.inf,
                                  epsabs=1e-12, epsrel=1e-10, limit=200)
        return value

    def eps_closed_form(self) -> float:
        """Term-by-term Beta integrals of z * f(z)."""
        total = self.omega * (1.0 / (self.r_mu + 1.0) ** 2 - 1.0 / self.r_mu ** 2)
        for coefficient, rate in self._power_terms():
            total += coefficient / (rate * (rate + 1.0))
        return total


def _require_fcfs_ur(config: SystemConfig) -> None:
    if config.discipline is not Discipline.FCFS:
        raise InvalidParameterError("This closed form applies to FCFS queues only")
    if config.scheduler is not Scheduler.UNIFORM_RANDOM:
        raise InvalidParameterError("This closed form applies to uniformly random scheduling only")


def pdf_coefficients(config: SystemConfig, params: CorrelationParams) -> PdfCoefficients:
    """
    Coefficients of the FCFS error density when all four rates are distinct.

    Raises:
        ConfluentRatesError: If any two of r_d, r_lambda, r_mu, r_q coincide;
            use quadrature on combined_cdf in that case
    """
    _require_fcfs_ur(config)
    law = CombinedLaw.build(config, params)
    r, lam, m, q = law.r_d, law.r_lambda, law.r_mu, law.r_q
    rates = (r, lam, m, q)
    for i in range(len(rates)):
        for j in range(i + 1, len(rates)):
            if rates_coincide(rates[i], rates[j]):
                raise ConfluentRatesError(rates)

    share = 1.0 / (1.0 - law.rho0)
    spatial_temporal = lam * r ** 2 / (m - r) ** 2
    return PdfCoefficients(
        alpha=(q * r / (q - r) + share * (lam * r / (lam - r) - m * r / (m - r)) - spatial_temporal),
        beta=-share * r * lam / (lam - r),
        gamma=share * r * m / (m - r) + spatial_temporal,
        omega=-lam * r * m / (m - r),
        kappa=-r * q / (q - r),
        r_d=r, r_lambda=lam, r_mu=m, r_q=q,
    )


@dataclass
class ErrorSummary:
    """Average error of the field plus the evidence behind it."""

    eps_bar: float
    method: str
    discipline: Discipline
    rates: Dict[str, float]
    cross_checks: Dict[str, float] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)

    def __float__(self) -> float:
        return self.eps_bar


def _compare(summary: ErrorSummary, name: str, value: float) -> None:
    summary.cross_checks[name] = value
    gap = abs(value - summary.eps_bar)
    if gap > IDENTITY_TOL:
        note = f"{name} differs from {summary.method} by {gap:.3e}"
        summary.diagnostics.append(note)
        logger.warning(note)


def eps_via_lst_at_one(config: SystemConfig, params: CorrelationParams) -> ErrorSummary:
    """
    Average error as 1 - LST_K(1) = 1 - LST_D(1) * LST_AoI(a).

    Works for every discipline and scheduler that has an AoI transform,
    including round robin when ``config.region_length`` fixes M.
    """
    law = CombinedLaw.build(config, params)
    eps = 1.0 - float(law.lst(1.0))
    return ErrorSummary(eps_bar=eps, method="lst_at_one", discipline=config.discipline, rates=law.rates)


def eps_fcfs(config: SystemConfig, params: CorrelationParams) -> ErrorSummary:
    """
    Average error of the field with FCFS queues and uniformly random scheduling.

    Args:
        config: Stable FCFS deployment
        params: Correlation decay rates

    Returns:
        ErrorSummary with the product form
        1 - F(r_d) F(r_lambda) F(r_mu - r_lambda) [1 + r_lambda / (r_mu + 1)^2],
        cross-checked against 1 - LST_K(1) and, for distinct rates, the
        density-coefficient form

    Raises:
        StabilityError: If rho0 >= 1
    """
    _require_fcfs_ur(config)
    law = CombinedLaw.build(config, params)
    r, lam, m = law.r_d, law.r_lambda, law.r_mu
    eps = 1.0 - float(saturation(r) * saturation(lam) * saturation(m - lam) * (1.0 + lam / (m + 1.0) ** 2))
    summary = ErrorSummary(eps_bar=eps, method="product_form", discipline=config.discipline, rates=law.rates)
    _compare(summary, "lst_at_one", 1.0 - float(law.lst(1.0)))
    try:
        coefficients = pdf_coefficients(config, params)
    except ConfluentRatesError:
        summary.diagnostics.append("rates repeat; coefficient form skipped")
    else:
        _compare(summary, "coefficient_form", coefficients.eps_closed_form())
    return summary


def eps_lcfs(config: SystemConfig, params: CorrelationParams) -> ErrorSummary:
    """
    Average error of the field with keep-freshest queues.

    Distinct rates use eta/(r_d+1) + nu/(r_lambda+1) + upsilon/(r_mu+1);
    repeated rates fall back to 1 - LST_K(1). Any rho0 is allowed.
    """
    if config.discipline is not Discipline.LCFS:
        raise InvalidParameterError("eps_lcfs applies to keep-freshest queues only")
    law = CombinedLaw.build(config, params)
    r, lam, m = law.r_d, law.r_lambda, law.r_mu
    product = 1.0 - float(saturation(r) * saturation(lam) * saturation(m))

    if rates_coincide(r, lam) or rates_coincide(r, m) or rates_coincide(lam, m):
        summary = ErrorSummary(eps_bar=1.0 - float(law.lst(1.0)), method="lst_at_one",
                               discipline=config.discipline, rates=law.rates)
        _compare(summary, "product_form", product)
        return summary

    eta = lam * m / ((r - lam) * (r - m))
    nu = r * m / ((lam - r) * (lam - m))
    upsilon = r * lam / ((m - r) * (m - lam))
    eps = eta / (r + 1.0) + nu / (lam + 1.0) + upsilon / (m + 1.0)
    summary = ErrorSummary(eps_bar=eps, method="partial_fraction", discipline=config.discipline, rates=law.rates)
    _compare(summary, "lst_at_one", 1.0 - float(law.lst(1.0)))
    _compare(summary, "product_form", product)
    return summary


def average_error(config: SystemConfig, params: CorrelationParams) -> ErrorSummary:
    """Pick the closed form that matches the deployment."""
    if config.scheduler is Scheduler.ROUND_ROBIN:
        return eps_via_lst_at_one(config, params)
    if config.discipline is Discipline.FCFS:
        return eps_fcfs(config, params)
    return eps_lcfs(config, params)


def eps_quadrature(config: SystemConfig, params: CorrelationParams) -> ErrorSummary:
    """E[xi] = integral over x of e^-x (1 - F_K(x)); independent of any closed form."""
    law = CombinedLaw.build(config, params)
    value, _ = integrate.quad(lambda x: math.exp(-x) * (1.0 - float(law.cdf(x))), 0.0, np.inf,
                              epsabs=1e-12, epsrel=1e-10, limit=200)
    return ErrorSummary(eps_bar=value, method="quadrature", discipline=config.discipline, rates=law.rates)


def eps_grid(lambda_s, lambda_t, mu_bar: float, params: CorrelationParams,
             discipline: Discipline = Discipline.FCFS) -> np.ndarray:
    """
    Vectorized average error over broadcast (lambda_s, lambda_t) arrays.

    FCFS nodes with rho0 >= 1 come back as NaN.
    """
    lambda_s = np.asarray(lambda_s, dtype=float)
    lambda_t = np.asarray(lambda_t, dtype=float)
    r = 2.0 * lambda_s / params.b
    lam = lambda_t / params.a
    m = mu_bar / (lambda_s * params.a)
    if Discipline.parse(discipline) is Discipline.LCFS:
        return 1.0 - saturation(r) * saturation(lam) * saturation(m)
    with np.errstate(invalid="ignore"):
        eps = 1.0 - saturation(r) * saturation(lam) * saturation(m - lam) * (1.0 + lam / (m + 1.0) ** 2)
    return np.where(lambda_s * lambda_t < mu_bar, eps, np.nan)
