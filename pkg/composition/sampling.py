"""
Index Sampling
Deterministic index batches drawn from named, non-overlapping random streams
"""

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from composition.exceptions import SamplingError

logger = logging.getLogger(__name__)


class SamplingMode(str, Enum):
    WITH_REPLACEMENT = "with_replacement"
    WITHOUT_REPLACEMENT = "without_replacement"
    COVER = "cover"


# Stream roles; each role gets its own spawn-key branch under the master seed.
ROLE_D1 = "D1"
ROLE_D2 = "D2"
ROLE_A = "A"
ROLE_PAIR = "pair"
ROLE_OUTPUT = "output"


def _role_id(name: str) -> int:
    digest = hashlib.sha256(name.encode("ascii")).digest()
    return int.from_bytes(digest[:4], "big", signed=False)


@dataclass
class IndexStream:
    """A generator owned by one logical consumer, with a draw counter"""

    generator: np.random.Generator
    position: int = 0

    def integers(self, n: int, size: int) -> np.ndarray:
        self.position += size
        return self.generator.integers(0, n, size=size)

    def permutation_prefix(self, n: int, size: int) -> np.ndarray:
        self.position += size
        return self.generator.choice(n, size=size, replace=False)

    def uniform(self) -> float:
        self.position += 1
        return float(self.generator.random())


@dataclass
class IndexBatch:
    """Indices in [0, n) drawn under one mode"""

    indices: np.ndarray
    mode: SamplingMode
    source_seed_position: int = 0

    def __len__(self) -> int:
        return len(self.indices)

    def covers(self, n: int) -> bool:
        """True when every index in [0, n) appears exactly once"""
        return len(self.indices) == n and np.array_equal(
            np.sort(self.indices), np.arange(n)
        )


def cover_batch(n: int) -> IndexBatch:
    return IndexBatch(np.arange(n), SamplingMode.COVER, 0)


def sample(n: int, size: int, mode: SamplingMode, stream: IndexStream) -> IndexBatch:
    """Draw one batch of `size` indices from [0, n)"""
    mode = SamplingMode(mode)
    if n < 1:
        raise SamplingError(f"population size must be positive, got {n}")
    if size < 1:
        raise SamplingError(f"batch size must be positive, got {size}")
    position = stream.position
    if mode == SamplingMode.COVER:
        if size != n:
            raise SamplingError(f"a cover of [{n}] has size {n}, not {size}")
        return IndexBatch(np.arange(n), mode, position)
    if mode == SamplingMode.WITHOUT_REPLACEMENT:
        if size > n:
            raise SamplingError(
                f"cannot draw {size} distinct indices from a population of {n}"
            )
        return IndexBatch(stream.permutation_prefix(n, size), mode, position)
    return IndexBatch(stream.integers(n, size), mode, position)


def draw_batch(n: int, size: int, mode: SamplingMode, stream: IndexStream,
               full_cover: bool = True) -> IndexBatch:
    """sample(), except that size >= n becomes an exact cover when full_cover is set"""
    if full_cover and size >= n:
        return cover_batch(n)
    return sample(n, size, mode, stream)


@dataclass
class StreamManager:
    """Derives one reproducible stream per (role, key...) from a master seed"""

    master_seed: int
    _cache: Dict[Tuple[int, ...], IndexStream] = field(
        default_factory=dict, init=False, repr=False
    )

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise SamplingError("master seed must be an unsigned 64-bit integer")
        self.master_seed = int(self.master_seed)

    def child_key(self, role: str, *key: int) -> Tuple[int, ...]:
        return (_role_id(role),) + tuple(int(k) for k in key)

    def fresh(self, role: str, *key: int) -> IndexStream:
        """A new stream for (role, key); identical arguments replay identically"""
        seq = np.random.SeedSequence(self.master_seed,
                                     spawn_key=self.child_key(role, *key))
        return IndexStream(np.random.Generator(np.random.PCG64(seq)))

    def stream(self, role: str, *key: int) -> IndexStream:
        """Persistent stream for (role, key), advanced by successive calls"""
        child = self.child_key(role, *key)
        if child not in self._cache:
            self._cache[child] = self.fresh(role, *key)
        return self._cache[child]


class ReservoirSampler:
    """Single-slot reservoir: keeps one item chosen uniformly over all offers"""

    def __init__(self, stream: IndexStream):
        self.stream = stream
        self.count = 0
        self.item = None
        self.tag: Optional[Tuple[int, int]] = None

    def offer(self, item, tag: Optional[Tuple[int, int]] = None):
        self.count += 1
        if self.count == 1 or self.stream.uniform() < 1.0 / self.count:
            self.item = item
            self.tag = tag
