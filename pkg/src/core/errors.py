"""
Errors - Exception types shared by the analytic, simulation and CLI layers
"""


class FieldStatusError(ValueError):
    """Base class for every error raised by this package."""


class InvalidParameterError(FieldStatusError):
    """A rate, distance, age or probability is outside its domain."""


class StabilityError(FieldStatusError):
    """An FCFS configuration has rho0 >= 1 and no stationary law."""

    def __init__(self, rho0: float, message: str = ""):
        self.rho0 = rho0
        super().__init__(message or f"FCFS queue is unstable: rho0 = {rho0:.6g} >= 1")


class ConfluentRatesError(FieldStatusError):
    """A partial-fraction closed form was requested for repeated rates."""

    def __init__(self, rates, message: str = ""):
        self.rates = tuple(rates)
        super().__init__(
            message or
            f"Rates {self.rates} repeat within tolerance; use quadrature on the combined CDF instead"
        )


class NoSamplerError(FieldStatusError):
    """A nearest-sampler query was made on an empty point set."""


class InfeasibleGridError(FieldStatusError):
    """No node of a search grid satisfies the stability constraint."""


class RaggedGridError(FieldStatusError):
    """A sweep result is not a rectangular lambda_s x lambda_t grid."""


class ConfigError(FieldStatusError):
    """Malformed experiment configuration."""

    def __init__(self, message: str, field: str = "", line: int = 0, column: int = 0):
        self.field = field
        self.line = line
        self.column = column
        location = []
        if field:
            location.append(f"field '{field}'")
        if line:
            location.append(f"line {line}, column {column}")
        prefix = f"[{'; '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


class SimulationError(FieldStatusError):
    """A simulation run cannot produce the requested statistic."""
