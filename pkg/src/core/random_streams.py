"""
Random Streams - Reproducible, independent random number streams

Every random quantity in a simulation run is drawn from its own stream,
keyed by (replication, purpose, point). Streams come from a counter-based
Philox generator seeded through numpy's SeedSequence spawn keys, so the same
(seed, key) pair yields the same numbers regardless of how many other
streams were used or in which process they ran.
"""

from enum import IntEnum
from typing import Union

import numpy as np

ALGORITHM = "numpy.random.Philox (SeedSequence spawn_key = (replication, purpose, index))"

SeedLike = Union[int, np.random.Generator, None]


class StreamPurpose(IntEnum):
    POINTS = 0
    PROBES = 1
    ARRIVALS = 2
    SERVICE = 3
    SCHEDULE = 4


def make_generator(seed: int, replication: int = 0, purpose: StreamPurpose = StreamPurpose.POINTS,
                   index: int = 0) -> np.random.Generator:
    """Return the generator for one (replication, purpose, index) stream."""
    if seed is None or int(seed) < 0:
        raise ValueError(f"Stream seeds must be non-negative integers, got {seed!r}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(replication), int(purpose), int(index)))
    return np.random.Generator(np.random.Philox(sequence))


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Accept an integer seed, an existing generator, or None (fresh entropy)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.Generator(np.random.Philox())
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def fresh_seed() -> int:
    """Draw a new top-level seed for runs that were not given one."""
    return int(np.random.default_rng().integers(0, 2**63 - 1))
