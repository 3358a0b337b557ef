"""
Counter-based seeding and a process pool for independent replications.

Each replication derives its generator from (master seed, *keys, index) via
numpy's SeedSequence, so results never depend on which worker ran what.
Results come back in index order and are reduced in that order.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Sub-stream tags keep purposes apart under one master seed
PURPOSE_TIMES = 0
PURPOSE_PLAIN_ERROR = 1
PURPOSE_IMPORTANCE = 2
PURPOSE_CALIBRATION = 3
PURPOSE_COMPOSITE = 4
PURPOSE_AUDIT = 5


def seed_sequence(master_seed: int, *keys: int) -> np.random.SeedSequence:
    entropy = [int(master_seed)] + [int(key) for key in keys]
    if any(value < 0 for value in entropy):
        raise ValueError(f"Seed keys must be non-negative, got {entropy}")
    return np.random.SeedSequence(entropy)


def replication_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Generator for one replication, keyed by (master seed, *keys)."""
    return np.random.default_rng(seed_sequence(master_seed, *keys))


class ReplicationPool:
    """Maps a replication function over indices, optionally across processes."""

    def __init__(self, workers: int = 1, chunk_size: int = 64):
        self.workers = max(1, int(workers))
        self.chunk_size = chunk_size

    def map(self, fn: Callable[[int], T], indices: Iterable[int]) -> List[T]:
        indices = list(indices)
        if self.workers == 1 or len(indices) < 2 * self.chunk_size:
            return [fn(index) for index in indices]
        logger.debug(f"⚙️ Running {len(indices)} replications on {self.workers} workers")
        with ProcessPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(fn, indices, chunksize=self.chunk_size))


def mean_and_std_error(values: Sequence[float]):
    """Sample mean and its standard error (0 for a single value)."""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        return 0.0, 0.0
    mean = float(data.mean())
    if data.size == 1:
        return mean, 0.0
    return mean, float(data.std(ddof=1) / np.sqrt(data.size))
