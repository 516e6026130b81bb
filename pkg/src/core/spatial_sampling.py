"""
Spatial Sampling - One-dimensional Poisson sampling points and nearest-sampler distances
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import InvalidParameterError, NoSamplerError
from .field_model import require_positive
from .random_streams import SeedLike, as_generator

logger = logging.getLogger(__name__)

EDGE_MODES = ("torus", "interior")
INTERIOR_MARGIN = 5.0  # probes stay this many mean spacings away from either end


@dataclass(frozen=True, eq=False)
class PointSet:
    """Sorted sampling-point locations on the segment [0, L]."""

    locations: np.ndarray
    lambda_s: float
    region_length: float

    def __len__(self) -> int:
        return int(self.locations.size)

    @property
    def is_empty(self) -> bool:
        return self.locations.size == 0

    def nearest(self, positions: Union[float, np.ndarray], torus: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """
        Index of and distance to the nearest sampling point for each position.

        Args:
            positions: Probe positions in meters
            torus: Measure distance around the segment ends (wrap-around)

        Returns:
            (indices, distances) arrays shaped like ``positions``; equal
            distances resolve to the lower-index point

        Raises:
            NoSamplerError: If the set is empty
        """
        if self.is_empty:
            raise NoSamplerError("No sampling point in the region (Poisson draw of 0 points)")
        ys = np.atleast_1d(np.asarray(positions, dtype=float))
        locs = self.locations
        count = locs.size
        slot = np.searchsorted(locs, ys)

        if torus:
            length = self.region_length
            left = (slot - 1) % count
            right = slot % count
            dist_left = np.mod(ys - locs[left], length)
            dist_right = np.mod(locs[right] - ys, length)
        else:
            left = np.clip(slot - 1, 0, count - 1)
            right = np.clip(slot, 0, count - 1)
            dist_left = np.abs(ys - locs[left])
            dist_right = np.abs(locs[right] - ys)

        indices = np.where(dist_left < dist_right, left,
                           np.where(dist_right < dist_left, right, np.minimum(left, right)))
        distances = np.minimum(dist_left, dist_right)
        return indices, distances


@dataclass(frozen=True)
class DistanceLaw:
    """Law of the scaled nearest-sampler distance D = b * d_min: exponential(2*lambda_s/b)."""

    rate: float

    def __post_init__(self):
        object.__setattr__(self, "rate", require_positive("rate", self.rate))

    @classmethod
    def for_field(cls, lambda_s: float, b: float) -> "DistanceLaw":
        return cls(2.0 * require_positive("lambda_s", lambda_s) / require_positive("b", b))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise InvalidParameterError(f"Scaled distance must be >= 0, got {x!r}")
        return -np.expm1(-self.rate * x)

    def lst(self, s):
        return self.rate / (np.asarray(s, dtype=float) + self.rate)

    def mean(self) -> float:
        return 1.0 / self.rate


def sample_points(lambda_s: float, region_length: float, seed: SeedLike = None) -> PointSet:
    """
    Draw a homogeneous Poisson point process on [0, L].

    Args:
        lambda_s: Density in points per meter
        region_length: Segment length L in meters
        seed: Integer seed or numpy Generator

    Returns:
        PointSet with N ~ Poisson(lambda_s * L) sorted uniform locations
    """
    lambda_s = require_positive("lambda_s", lambda_s)
    region_length = require_positive("region_length", region_length)
    rng = as_generator(seed)
    count = rng.poisson(lambda_s * region_length)
    locations = np.sort(rng.uniform(0.0, region_length, size=count))
    return PointSet(locations=locations, lambda_s=lambda_s, region_length=region_length)


def nearest_distance(points: PointSet, y: float) -> float:
    """Distance from ``y`` to the closest point of ``points`` (no wrap-around)."""
    _, distances = points.nearest(y, torus=False)
    return float(distances[0])


def probe_positions(points: PointSet, probes: int, rng: np.random.Generator,
                    edge_mode: str = "torus") -> np.ndarray:
    """Uniform probe positions; 'interior' keeps them 5/lambda_s away from both ends."""
    if edge_mode not in EDGE_MODES:
        raise InvalidParameterError(f"Unknown edge mode: {edge_mode!r} (expected one of {EDGE_MODES})")
    low, high = 0.0, points.region_length
    if edge_mode == "interior":
        margin = INTERIOR_MARGIN / points.lambda_s
        low, high = margin, points.region_length - margin
        if high <= low:
            raise InvalidParameterError(
                f"Region length {points.region_length} is too short for interior probes "
                f"(needs > {2 * margin})"
            )
    return rng.uniform(low, high, size=int(probes))


def distance_cdf(lambda_s: float, b: float, x: float) -> float:
    """
    CDF of the scaled nearest-sampler distance D = b * d_min on the infinite line.

    Args:
        lambda_s: Sampling density (points/meter)
        b: Spatial decay rate (1/meter)
        x: Scaled distance (>= 0)

    Returns:
        1 - exp(-(2*lambda_s/b) * x)
    """
    return float(DistanceLaw.for_field(lambda_s, b).cdf(x))


def distance_lst(lambda_s: float, b: float, s: float) -> float:
    """Laplace-Stieltjes transform (2*lambda_s/b) / (s + 2*lambda_s/b) of D."""
    return float(DistanceLaw.for_field(lambda_s, b).lst(s))
