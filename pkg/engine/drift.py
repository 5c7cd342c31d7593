"""Deterministic mean-rate paths t -> z_t driving the limit particles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from services.errors import ArgumentError


@dataclass(frozen=True, eq=False)
class RatePath:
    """Step function equal to ``values[k]`` on [times[k], times[k+1]); the last value extends forever."""

    times: np.ndarray
    values: np.ndarray
    experimental: bool = False
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size == 0 or times.shape != values.shape:
            raise ArgumentError("rate path needs matching, non-empty 1-D times and values")
        if np.any(np.diff(times) <= 0):
            raise ArgumentError("rate path times must be strictly increasing")
        if np.any(values < 0):
            raise ArgumentError("rate path values must be non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float, horizon: float, label: str = "constant") -> RatePath:
        return cls(np.array([0.0, max(horizon, 1e-12)]), np.array([value, value]), label=label)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def value(self, t):
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 1)
        return self.values[idx]

    def _node_convolution(self, alpha: float) -> np.ndarray:
        """Y at the nodes, Y(t) = int_0^t exp(-alpha (t - v)) z_v dv."""
        cached = self._cache.get(alpha)
        if cached is None:
            dt = np.diff(self.times)
            decay = np.exp(-alpha * dt)
            gain = self.values[:-1] * (-np.expm1(-alpha * dt)) / alpha
            y = np.empty(self.times.size)
            y[0] = 0.0
            for k in range(dt.size):
                y[k + 1] = decay[k] * y[k] + gain[k]
            self._cache[alpha] = y
            cached = y
        return cached

    def convolution(self, t, alpha: float):
        """Y(t) for a scalar or array t >= times[0]."""
        y = self._node_convolution(alpha)
        t_arr = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t_arr, side="right") - 1, 0, self.times.size - 1)
        elapsed = t_arr - self.times[idx]
        out = y[idx] * np.exp(-alpha * elapsed) + self.values[idx] * (-np.expm1(-alpha * elapsed)) / alpha
        return float(out) if out.ndim == 0 else out


class LimitParticles:
    """Independent copies of the limit particle driven by a common rate path.

    Particle i obeys dU = (-alpha U + h z_t) dt between its own spikes and resets
    to 0 when it spikes. It is stored as U_i(t) = exp(-alpha (t - s_i)) w_i + h Y(t),
    with s_i its reference time, which makes every evaluation O(1).
    """

    def __init__(self, u0: np.ndarray, alpha: float, h: float, path: RatePath, t0: float = 0.0):
        self.alpha = alpha
        self.h = h
        self.path = path
        y0 = path.convolution(t0, alpha)
        self.ref_time = np.full(np.size(u0), float(t0))
        self.w = np.array(u0, dtype=float) - h * y0

    def value(self, i: int, t: float) -> float:
        v = math.exp(-self.alpha * (t - self.ref_time[i])) * self.w[i] + self.h * self.path.convolution(t, self.alpha)
        return v if v > 0.0 else 0.0

    def values_at(self, t: float) -> np.ndarray:
        drive = self.h * self.path.convolution(t, self.alpha)
        return np.maximum(np.exp(-self.alpha * (t - self.ref_time)) * self.w + drive, 0.0)

    def values_at_times(self, t: np.ndarray) -> np.ndarray:
        """Per-particle values at per-particle times."""
        drive = self.h * self.path.convolution(t, self.alpha)
        return np.maximum(np.exp(-self.alpha * (t - self.ref_time)) * self.w + drive, 0.0)

    def reset(self, i, t) -> None:
        """Spike of particle(s) i at time(s) t."""
        self.ref_time[i] = t
        self.w[i] = -self.h * self.path.convolution(t, self.alpha)
