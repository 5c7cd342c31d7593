"""The one-dimensional process dominated by the mean spiking rate.

Z jumps at rate N*z to min(z_N, m_N(z)) and decays at rate r between jumps:

    m_N(z) = z + (kh/N) * (1 - z / lambda(u* - h/N) - 1/N)_+ - lambda_star/N
    z_N    = (1 - lambda_star/(kh) - 1/N) * lambda(u* - h/N) - lambda_star/N
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from config.settings import get_settings
from engine.streams import UniformStream
from model.params import ModelParams
from services.errors import ArgumentError, ConstructionError

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-12


@dataclass(frozen=True)
class AuxParams:
    """Ceiling, jump map and decay rate of Z for one system size."""

    n: int
    z_n: float
    r: float
    z_inf: float
    shifted_rate: float
    kh: float
    lambda_star: float

    @classmethod
    def build(cls, params: ModelParams) -> AuxParams:
        """Derive the constants and run the validity checks.

        Raises:
            ConstructionError: If u* <= h/N, z_N <= 0 or m_N decreases on [0, z_N]
        """
        n = params.n
        shifted = params.u_star - params.h / n
        if shifted <= 0:
            raise ConstructionError(f"N={n} too small: need N > h/u* = {params.h / params.u_star:g}")
        shifted_rate = params.rate.value(shifted)
        kh = params.kh
        lambda_star = params.lambda_star
        z_n = (1.0 - lambda_star / kh - 1.0 / n) * shifted_rate - lambda_star / n
        z_inf = (1.0 - lambda_star / kh) * params.rate_at_u_star
        aux = cls(
            n=n,
            z_n=z_n,
            r=params.r,
            z_inf=z_inf,
            shifted_rate=shifted_rate,
            kh=kh,
            lambda_star=lambda_star,
        )
        if z_n <= 0:
            raise ConstructionError(f"N={n}: ceiling z_N={z_n:.6g} is not positive")
        aux.check_monotone()
        return aux

    def m(self, z: float) -> float:
        gain = 1.0 - z / self.shifted_rate - 1.0 / self.n
        return z + (self.kh / self.n) * (gain if gain > 0 else 0.0) - self.lambda_star / self.n

    def jump(self, z: float) -> float:
        """Post-jump value min(z_N, m_N(z)), floored at 0."""
        target = self.m(z)
        if target > self.z_n:
            target = self.z_n
        return target if target > 0 else 0.0

    def check_monotone(self, points: int = 1001) -> None:
        """m_N must be non-decreasing on [0, z_N]; a flat stretch is accepted."""
        grid = np.linspace(0.0, self.z_n, points)
        values = np.array([self.m(float(z)) for z in grid])
        drops = np.diff(values)
        if np.any(drops < -MONOTONE_TOL * max(1.0, float(np.max(np.abs(values))))):
            raise ConstructionError(
                f"N={self.n}: m_N decreases on [0, z_N] (need N*lambda(u*-h/N) >= kh); increase N"
            )


@dataclass
class AuxPath:
    """Piecewise-exponential path of Z: values right after each jump time."""

    times: np.ndarray
    values: np.ndarray
    r: float
    horizon: float
    exit_time: float | None = None
    truncated: bool = False

    @property
    def n_jumps(self) -> int:
        return int(self.times.size - 1)

    def value_at(self, t):
        """Z at time(s) t, evaluated from the last jump before t."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.times, t_arr, side="right") - 1
        idx = np.clip(idx, 0, self.times.size - 1)
        out = self.values[idx] * np.exp(-self.r * (t_arr - self.times[idx]))
        return out if np.ndim(t) else float(out[0])


def simulate_aux(
    params: ModelParams,
    aux: AuxParams,
    z0: float,
    horizon: float,
    rng: np.random.Generator,
    *,
    stop_below: float | None = None,
    cap: int | None = None,
) -> AuxPath:
    """Exact path of Z on [0, horizon].

    With ``stop_below`` = eta the run also stops at the first time Z <= eta,
    recorded as ``exit_time``. Below eta the clamped process of rate
    max(eta, min(z, z_inf)) and Z have identical paths up to that time, so the
    same call samples the eta-exit time of either.
    """
    if not 0.0 <= z0 <= aux.z_n * (1.0 + 1e-12):
        raise ArgumentError(f"z0={z0} must lie in [0, z_N={aux.z_n:.6g}]")
    if aux.n != params.n:
        raise ArgumentError("AuxParams were built for another N")
    cap = cap if cap is not None else get_settings().aux_jump_cap
    stream = UniformStream(rng)
    n = aux.n
    r = aux.r
    times = [0.0]
    values = [min(z0, aux.z_n)]
    t = 0.0
    z = values[0]
    exit_time: float | None = None
    truncated = False
    if stop_below is not None and z <= stop_below:
        return AuxPath(np.array(times), np.array(values), r, horizon, exit_time=0.0)
    while True:
        # integrated jump rate over [t, t+s] is N*z*(1 - exp(-r s))/r
        mark = stream.exponential()
        total = n * z / r
        gap = math.inf if mark >= total else -math.log1p(-mark / total) / r
        if stop_below is not None:
            crossing = math.log(z / stop_below) / r
            if crossing <= gap and t + crossing <= horizon:
                exit_time = t + crossing
                break
        if t + gap > horizon:
            break
        if len(times) - 1 >= cap:
            logger.warning(f"auxiliary path hit the jump cap {cap} at t={t:.6g}")
            truncated = True
            break
        t += gap
        z = aux.jump(z * math.exp(-r * gap))
        times.append(t)
        values.append(z)
        if stop_below is not None and z <= stop_below:
            exit_time = t
            break
    return AuxPath(np.array(times), np.array(values), r, horizon, exit_time=exit_time, truncated=truncated)
