"""Shared-noise couplings of the finite system.

All three couplings read one candidate clock, so every process involved sees
the same per-neuron Poisson measures.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from engine.auxiliary import AuxParams
from engine.drift import LimitParticles, RatePath
from engine.state import validate_potentials
from engine.streams import SpikeClock, UniformStream
from engine.system import NeuronSystem
from model.params import ModelParams
from services.errors import ArgumentError

logger = logging.getLogger(__name__)

# Z is dominated when Z <= Lambda/N; rounding in Lambda is absorbed by this slack
DOMINATION_RTOL = 1e-12
DOMINATION_ATOL = 1e-15


@dataclass
class CouplingDiagnostics:
    """Discrepancy path, coalescence time and domination count of a coupled run."""

    kind: str
    times: np.ndarray
    discrepancy: np.ndarray
    coalescence_time: float | None = None
    domination_violations: int = 0
    bound: np.ndarray | None = None
    extras: dict[str, np.ndarray | float | int | None] = field(default_factory=dict)

    @property
    def bound_violated(self) -> bool:
        if self.bound is None:
            return False
        return bool(np.any(self.discrepancy > self.bound))

    def rows(self) -> list[tuple]:
        bound = self.bound if self.bound is not None else np.full(self.times.size, np.nan)
        return list(zip(self.times.tolist(), self.discrepancy.tolist(), bound.tolist(), strict=True))


def _clock_for(params: ModelParams, rng: np.random.Generator) -> SpikeClock:
    return SpikeClock(rng, params.n, params.lambda_star)


def _grid(horizon: float, step: float | None, points: int = 101) -> np.ndarray:
    if horizon <= 0:
        return np.array([0.0])
    step = step if step is not None else horizon / (points - 1)
    count = int(math.floor(horizon / step + 1e-9)) + 1
    grid = step * np.arange(count)
    if grid[-1] < horizon:
        grid = np.append(grid, horizon)
    return grid


def couple_U_Z(
    init,
    params: ModelParams,
    horizon: float,
    rng: np.random.Generator,
    *,
    z0: float | None = None,
    aux: AuxParams | None = None,
) -> CouplingDiagnostics:
    """Run the system and Z together so that Z <= Lambda/N at all times.

    At a system spike at time t, Z jumps with probability N Z(t-)/Lambda(t-);
    otherwise it keeps decaying. The discrepancy path is Lambda/N - Z at the
    events; the violation count compares Z to Lambda/N after every event.
    """
    aux = aux or AuxParams.build(params)
    clock_rng, accept_rng = rng.spawn(2)
    system = NeuronSystem(params, init, _clock_for(params, clock_rng), record_events=False)
    n = params.n
    lam0 = system.total_rate()
    ceiling = min(lam0 / n, aux.z_n)
    if z0 is None:
        z0 = ceiling
    if z0 < 0 or z0 > ceiling * (1.0 + DOMINATION_RTOL) + DOMINATION_ATOL:
        raise ArgumentError(f"z0={z0} must lie in [0, min(Lambda(0)/N, z_N)] = [0, {ceiling:.6g}]")
    accept = UniformStream(accept_rng)
    r = aux.r
    z = z0
    t_z = 0.0
    violations = 0
    last_z_jump = 0.0
    times = [0.0]
    gaps = [lam0 / n - z0]
    z_trace = [z0]
    while True:
        t_c, i, mark = system.next_candidate()
        if t_c > horizon:
            break
        system.take_candidate()
        if not mark < params.rate.value(system.potential(i, t_c)):
            system.offer(t_c, i, mark)
            continue
        lam_minus = system.total_rate(t_c)
        z_minus = z * math.exp(-r * (t_c - t_z))
        ratio = n * z_minus / lam_minus
        if ratio >= 1.0 or accept.next() < ratio:
            z = aux.jump(z_minus)
            last_z_jump = t_c
        else:
            z = z_minus
        t_z = t_c
        system.offer(t_c, i, mark)
        lam_plus = system.total_rate()
        if z > lam_plus / n * (1.0 + DOMINATION_RTOL) + DOMINATION_ATOL:
            violations += 1
            logger.error(f"domination violated at t={t_c:.9g}: Z={z!r} > Lambda/N={lam_plus / n!r}")
        times.append(t_c)
        gaps.append(lam_plus / n - z)
        z_trace.append(z)
    system.advance_to(horizon)
    last_spike = times[-1] if len(times) > 1 else 0.0
    return CouplingDiagnostics(
        kind="u_z",
        times=np.array(times),
        discrepancy=np.array(gaps),
        domination_violations=violations,
        extras={
            "z": np.array(z_trace),
            "last_z_jump": last_z_jump,
            "last_spike": last_spike,
            "z_n": aux.z_n,
        },
    )


def chaos_bound(params: ModelParams, t: float) -> float:
    """h (sqrt(lambda_star t) + 2 t lambda_star) exp((alpha + hk + lambda_star) t) sqrt(N)."""
    lam = params.lambda_star
    return (
        params.h
        * (math.sqrt(lam * t) + 2.0 * t * lam)
        * math.exp((params.alpha + params.kh + lam) * t)
        * math.sqrt(params.n)
    )


def chaos_rate_bound(params: ModelParams, t: float) -> float:
    """Bound on E|z_t - Lambda(t)/N| for the same coupling."""
    lam = params.lambda_star
    return (
        lam
        + params.kh * (math.sqrt(lam * t) + 2.0 * t * lam) * math.exp((params.alpha + params.kh + lam) * t)
    ) / math.sqrt(params.n)


def couple_chaos(
    nu,
    params: ModelParams,
    horizon: float,
    rng: np.random.Generator,
    *,
    drift: RatePath | None,
    observe_step: float | None = None,
) -> CouplingDiagnostics:
    """The system next to N independent limit particles sharing its noise.

    Both start from the potentials ``nu``; the limit particles feel the
    deterministic drift h z_t of ``drift`` instead of the kicks.
    """
    if drift is None:
        raise ArgumentError("couple_chaos needs a mean-rate path z_t (picard_z or a particle surrogate)")
    if drift.horizon < horizon:
        logger.warning(f"rate path ends at {drift.horizon:g} < horizon {horizon:g}; its last value is extended")
    u0 = validate_potentials(nu, params)
    system = NeuronSystem(params, u0, _clock_for(params, rng), record_events=False)
    limit = LimitParticles(u0, params.alpha, params.h, drift)
    rate = params.rate.value
    grid = _grid(horizon, observe_step)
    discrepancy = np.empty(grid.size)
    rate_gap = np.empty(grid.size)
    for k, t_obs in enumerate(grid):
        while True:
            t_c, i, mark = system.next_candidate()
            if t_c > t_obs:
                break
            system.take_candidate()
            limit_value = limit.value(i, t_c)
            system.offer(t_c, i, mark)
            if mark < rate(limit_value):
                limit.reset(i, t_c)
        system.advance_to(float(t_obs))
        u = system.potentials()
        discrepancy[k] = float(np.sum(np.abs(u - limit.values_at(float(t_obs)))))
        rate_gap[k] = abs(float(drift.value(t_obs)) - float(np.mean(params.rate.values(u))))
    bound = np.array([chaos_bound(params, float(t)) for t in grid])
    return CouplingDiagnostics(
        kind="chaos",
        times=grid,
        discrepancy=discrepancy,
        bound=bound,
        extras={
            "rate_gap": rate_gap,
            "rate_gap_bound": np.array([chaos_rate_bound(params, float(t)) for t in grid]),
        },
    )


class SynchronousPair:
    """Two copies of the system driven by the same noise.

    Both systems are moved to every candidate either of them accepts, so equal
    coordinates see identical floating-point operations and coalescence is an
    exact equality test. Once the full states coincide they never separate.
    """

    def __init__(self, params: ModelParams, u0, u0_tilde, rng: np.random.Generator):
        first = validate_potentials(u0, params)
        second = validate_potentials(u0_tilde, params)
        self.params = params
        self.first = NeuronSystem(params, first, record_events=False)
        self.second = NeuronSystem(params, second, record_events=False)
        self.clock = _clock_for(params, rng)
        self.t = 0.0
        self._clock_time = 0.0
        self._pending: tuple[float, int, float] | None = None
        self.synchronous = 0
        self.coalescence_time: float | None = 0.0 if np.array_equal(first, second) else None

    @property
    def coalesced(self) -> bool:
        return self.coalescence_time is not None

    def run_to(self, t_obs: float, *, stop_at_coalescence: bool = False) -> None:
        rate = self.params.rate.value
        while True:
            if self._pending is None:
                gap, i, mark = self.clock.next()
                self._clock_time += gap
                self._pending = (self._clock_time, i, mark)
            t_c, i, mark = self._pending
            if t_c > t_obs:
                break
            self._pending = None
            fires_first = mark < rate(self.first.potential(i, t_c))
            fires_second = mark < rate(self.second.potential(i, t_c))
            if not (fires_first or fires_second):
                continue
            for system in (self.first, self.second):
                system.advance_to(t_c)
                system.offer(t_c, i, mark)
            if fires_first and fires_second:
                self.synchronous += 1
                if self.coalescence_time is None and np.array_equal(self.first.store.u, self.second.store.u):
                    self.coalescence_time = t_c
                    if stop_at_coalescence:
                        self.t = t_c
                        return
        self.first.advance_to(t_obs)
        self.second.advance_to(t_obs)
        self.t = t_obs

    def rate_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        """lambda(U_i) of both systems at the current time."""
        values = self.params.rate.values
        return values(self.first.potentials()), values(self.second.potentials())


def couple_synchronous(
    u0,
    u0_tilde,
    params: ModelParams,
    horizon: float,
    rng: np.random.Generator,
    *,
    observe_step: float | None = None,
) -> CouplingDiagnostics:
    """Synchronous coupling observed on a grid until the two states coincide.

    The discrepancy is sum_i |lambda(U_i) - lambda(U~_i)|; it stays 0 from the
    coalescence time on.
    """
    if np.size(u0) != np.size(u0_tilde):
        raise ArgumentError(f"initial states have different sizes ({np.size(u0)} and {np.size(u0_tilde)})")
    pair = SynchronousPair(params, u0, u0_tilde, rng)
    grid = _grid(horizon, observe_step)
    discrepancy = np.zeros(grid.size)
    for k, t_obs in enumerate(grid):
        if pair.coalesced:
            break
        pair.run_to(float(t_obs), stop_at_coalescence=True)
        if pair.coalesced:
            break
        lam_first, lam_second = pair.rate_marginals()
        discrepancy[k] = float(np.sum(np.abs(lam_first - lam_second)))
    return CouplingDiagnostics(
        kind="synchronous",
        times=grid,
        discrepancy=discrepancy,
        coalescence_time=pair.coalescence_time,
        extras={"synchronous_spikes": pair.synchronous},
    )
