"""Counter-based random streams and the shared candidate clock.

Every random stream is a Philox generator keyed by ``(root_seed, *key)`` through
``numpy.random.SeedSequence``; keys are tuples such as ``(replica, purpose)``.
Two runs with the same key consume exactly the same numbers, which is how
ensembles stay reproducible under any worker count.
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

from config.settings import get_settings


class StreamPurpose(IntEnum):
    """Sub-stream tags, so one replica's streams never overlap."""

    SPIKES = 0
    AUX = 1
    INIT = 2
    MARKS = 3
    COUPLING = 4
    BURN_IN = 5


def spawn_generator(root_seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for the given key path."""
    seq = np.random.SeedSequence(entropy=int(root_seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


class SpikeClock:
    """Candidate events of the superposed per-neuron Poisson measures.

    Each neuron i carries a Poisson measure on time x [0, lambda_star] of unit
    intensity; neuron i spikes at a point (t, z) iff z <= lambda(U_i(t-)). The
    superposition over neurons is a rate ``n * lambda_star`` clock whose points
    carry a uniform neuron index and a uniform mark on [0, lambda_star]. Systems
    that read the same clock therefore share every per-neuron measure exactly.

    Draws are buffered in fixed-size blocks, so the sequence of candidates is a
    deterministic function of the generator state.
    """

    def __init__(self, rng: np.random.Generator, n: int, lambda_star: float, buffer_size: int | None = None):
        self.rng = rng
        self.n = n
        self.lambda_star = lambda_star
        self.total = n * lambda_star
        self.buffer_size = buffer_size or get_settings().clock_buffer_size
        self._gaps = np.empty(0)
        self._neurons = np.empty(0, dtype=np.int64)
        self._marks = np.empty(0)
        self._pos = 0
        self.drawn = 0

    def _refill(self) -> None:
        size = self.buffer_size
        self._gaps = self.rng.standard_exponential(size) / self.total
        self._neurons = self.rng.integers(0, self.n, size=size)
        self._marks = self.rng.random(size) * self.lambda_star
        self._pos = 0

    def next(self) -> tuple[float, int, float]:
        """Return (gap, neuron, mark) of the next candidate."""
        if self._pos >= len(self._gaps):
            self._refill()
        pos = self._pos
        self._pos += 1
        self.drawn += 1
        return float(self._gaps[pos]), int(self._neurons[pos]), float(self._marks[pos])


class UniformStream:
    """Buffered uniforms on [0, 1) for acceptance tests outside the clock."""

    def __init__(self, rng: np.random.Generator, buffer_size: int | None = None):
        self.rng = rng
        self.buffer_size = buffer_size or get_settings().clock_buffer_size
        self._values = np.empty(0)
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._values):
            self._values = self.rng.random(self.buffer_size)
            self._pos = 0
        value = self._values[self._pos]
        self._pos += 1
        return float(value)

    def exponential(self) -> float:
        """Exp(1) by inversion of the next uniform."""
        return float(-np.log1p(-self.next()))
