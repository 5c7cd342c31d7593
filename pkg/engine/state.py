"""Value types shared by the simulators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from model.params import ModelParams
from services.errors import ArgumentError


def validate_potentials(u, params: ModelParams) -> np.ndarray:
    """Copy of ``u`` as a float vector, checked against the system size."""
    arr = np.array(u, dtype=float).reshape(-1)
    if arr.size != params.n:
        raise ArgumentError(f"expected {params.n} potentials, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ArgumentError("potentials must be finite")
    if np.any(arr < 0):
        raise ArgumentError("potentials must be non-negative")
    return arr


@dataclass(frozen=True, eq=False)
class SystemState:
    """Time, potentials and cached total rate of the finite system."""

    t: float
    u: np.ndarray
    total_rate: float

    @classmethod
    def from_potentials(cls, u, params: ModelParams, t: float = 0.0) -> SystemState:
        arr = validate_potentials(u, params)
        return cls(t=float(t), u=arr, total_rate=float(np.sum(params.rate.values(arr))))

    @property
    def n(self) -> int:
        return int(self.u.size)

    @property
    def lambda_bar(self) -> float:
        return self.total_rate / self.n

    @property
    def mean_potential(self) -> float:
        return float(np.mean(self.u))


@dataclass(frozen=True)
class SpikeEvent:
    """A spike of ``neuron`` (0-based) at time ``t``."""

    t: float
    neuron: int


@dataclass
class EventLog:
    """Append-only spike log kept as two parallel lists."""

    times: list[float] = field(default_factory=list)
    neurons: list[int] = field(default_factory=list)

    def append(self, t: float, neuron: int) -> None:
        self.times.append(t)
        self.neurons.append(neuron)

    def __len__(self) -> int:
        return len(self.times)

    def events(self) -> list[SpikeEvent]:
        return [SpikeEvent(t, i) for t, i in zip(self.times, self.neurons, strict=True)]

    def rows(self) -> list[tuple[float, int]]:
        """CSV rows ``(t, neuron)`` with 1-based neuron numbers."""
        return [(t, i + 1) for t, i in zip(self.times, self.neurons, strict=True)]


@dataclass(frozen=True)
class Trajectory:
    """Observations of the mean rate and mean potential on a time grid."""

    times: np.ndarray
    lambda_bar: np.ndarray
    mean_potential: np.ndarray

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.times.tolist(), self.lambda_bar.tolist(), self.mean_potential.tolist(), strict=True))
