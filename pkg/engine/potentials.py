"""Storage of the N potentials between events.

``RawPotentials`` keeps the actual values and applies the leak to the whole
vector at every accepted spike. ``RescaledPotentials`` stores
u_j(t) = D(t) * (w_j + K) with D(t) = exp(-alpha (t - t_base)), so a spike only
touches K and w_i; the reference time is moved forward once D falls below the
rebase threshold.
"""

from __future__ import annotations

import math

import numpy as np


class RawPotentials:
    """Potentials valid at ``self.t``; decay applied in O(N) per event."""

    lazy = False

    def __init__(self, u0: np.ndarray, alpha: float, kick: float, t0: float = 0.0):
        self.u = np.array(u0, dtype=float)
        self.alpha = alpha
        self.kick = kick
        self.t = t0

    def value(self, i: int, t: float) -> float:
        return float(self.u[i]) * math.exp(-self.alpha * (t - self.t))

    def values_at(self, t: float) -> np.ndarray:
        return self.u * math.exp(-self.alpha * (t - self.t))

    def advance(self, t: float) -> None:
        if t > self.t:
            self.u *= math.exp(-self.alpha * (t - self.t))
            self.t = t

    def spike(self, i: int, t: float) -> None:
        self.advance(t)
        self.u += self.kick
        self.u[i] = 0.0


class RescaledPotentials:
    """Potentials as D(t) * (w + K); O(1) per event."""

    lazy = True

    def __init__(self, u0: np.ndarray, alpha: float, kick: float, t0: float = 0.0, rebase_threshold: float = 1e-150):
        self.w = np.array(u0, dtype=float)
        self.offset = 0.0
        self.alpha = alpha
        self.kick = kick
        self.t_base = t0
        self.t = t0
        self.rebase_threshold = rebase_threshold
        self.rebases = 0

    def _scale(self, t: float) -> float:
        return math.exp(-self.alpha * (t - self.t_base))

    def value(self, i: int, t: float) -> float:
        v = self._scale(t) * (float(self.w[i]) + self.offset)
        return v if v > 0.0 else 0.0

    def values_at(self, t: float) -> np.ndarray:
        return np.maximum(self._scale(t) * (self.w + self.offset), 0.0)

    def rebase(self, t: float) -> None:
        self.w = self.values_at(t)
        self.offset = 0.0
        self.t_base = t
        self.rebases += 1

    def advance(self, t: float) -> None:
        if t > self.t:
            self.t = t
        if self._scale(self.t) < self.rebase_threshold:
            self.rebase(self.t)

    def spike(self, i: int, t: float) -> None:
        self.advance(t)
        self.offset += self.kick / self._scale(t)
        self.w[i] = -self.offset
