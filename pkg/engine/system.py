"""Exact event-driven simulation of the N-neuron system."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from config.settings import get_settings
from engine.integrated_rate import invert_integrated_rate, total_residual_rate
from engine.potentials import RawPotentials, RescaledPotentials
from engine.state import EventLog, SpikeEvent, SystemState, Trajectory, validate_potentials
from engine.streams import SpikeClock, UniformStream
from model.params import ModelParams
from services.errors import ArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunOutcome:
    """How a bounded run ended."""

    accepted: int
    candidates: int
    truncated: bool


class NeuronSystem:
    """The finite system driven by a shared candidate clock.

    Candidates come from ``clock`` (or are offered by a coupling loop through
    ``offer``); a candidate (t, i, z) is a spike of neuron i iff z < lambda(U_i(t-)).
    """

    def __init__(
        self,
        params: ModelParams,
        u0,
        clock: SpikeClock | None = None,
        *,
        t0: float = 0.0,
        lazy: bool = False,
        record_events: bool = True,
        rebase_threshold: float | None = None,
    ):
        self.params = params
        u = validate_potentials(u0, params)
        kick = params.h / params.n
        if lazy:
            threshold = rebase_threshold if rebase_threshold is not None else get_settings().rebase_threshold
            self.store: RawPotentials | RescaledPotentials = RescaledPotentials(
                u, params.alpha, kick, t0, rebase_threshold=threshold
            )
        else:
            self.store = RawPotentials(u, params.alpha, kick, t0)
        self._rate = params.rate.value
        self.clock = clock
        self.t = float(t0)
        self._clock_time = float(t0)
        self._pending: tuple[float, int, float] | None = None
        self.log = EventLog()
        self.record_events = record_events
        self.accepted = 0
        self.candidates = 0

    # -- observation ---------------------------------------------------

    def potential(self, i: int, t: float | None = None) -> float:
        return self.store.value(i, self.t if t is None else t)

    def potentials(self, t: float | None = None) -> np.ndarray:
        return self.store.values_at(self.t if t is None else t)

    def total_rate(self, t: float | None = None) -> float:
        return float(np.sum(self.params.rate.values(self.potentials(t))))

    def lambda_bar(self, t: float | None = None) -> float:
        return self.total_rate(t) / self.params.n

    def state(self) -> SystemState:
        u = self.potentials()
        return SystemState(t=self.t, u=u, total_rate=float(np.sum(self.params.rate.values(u))))

    # -- dynamics ------------------------------------------------------

    def advance_to(self, t: float) -> None:
        """Flow every potential up to time t without any spike."""
        if t < self.t:
            raise ArgumentError(f"cannot move back in time from {self.t} to {t}")
        self.t = t
        self.store.advance(t)

    def offer(self, t_c: float, i: int, mark: float) -> bool:
        """Apply candidate (t_c, i, mark); return True if neuron i spiked."""
        if t_c < self.t:
            raise ArgumentError(f"candidate at {t_c} precedes current time {self.t}")
        self.t = t_c
        self.candidates += 1
        if mark < self._rate(self.store.value(i, t_c)):
            self.store.spike(i, t_c)
            self.accepted += 1
            if self.record_events:
                self.log.append(t_c, i)
            return True
        return False

    def _peek(self) -> tuple[float, int, float]:
        if self._pending is None:
            if self.clock is None:
                raise ArgumentError("this system has no clock; candidates must be offered")
            gap, i, mark = self.clock.next()
            self._clock_time += gap
            self._pending = (self._clock_time, i, mark)
        return self._pending

    def next_candidate(self) -> tuple[float, int, float]:
        """The next clock candidate (t, neuron, mark), not yet consumed."""
        return self._peek()

    def take_candidate(self) -> tuple[float, int, float]:
        candidate = self._peek()
        self._pending = None
        return candidate

    def step(self, horizon: float = math.inf) -> SpikeEvent | None:
        """Advance to the next accepted spike, or to ``horizon`` if none occurs before it.

        A state with zero total rate stays silent forever: the call then moves to a
        finite ``horizon`` (or stays put) and returns ``None``.
        """
        rejected = 0
        while True:
            t_c, i, mark = self._peek()
            if t_c > horizon:
                self.t = max(self.t, horizon)
                return None
            self._pending = None
            if self.offer(t_c, i, mark):
                return SpikeEvent(t_c, i)
            # zero total rate is absorbing; checked once per n rejections
            if rejected % self.params.n == 0 and self.total_rate() == 0.0:
                if math.isfinite(horizon):
                    self.t = max(self.t, horizon)
                return None
            rejected += 1

    def run(
        self,
        horizon: float,
        *,
        cap: int | None = None,
        on_event: Callable[[SpikeEvent], bool | None] | None = None,
    ) -> RunOutcome:
        """Run to ``horizon``; ``on_event`` may return True to stop early."""
        start = self.accepted
        while True:
            if cap is not None and self.accepted - start >= cap:
                logger.warning(f"event cap {cap} reached at t={self.t:.6g}")
                return RunOutcome(self.accepted - start, self.candidates, truncated=True)
            event = self.step(horizon)
            if event is None:
                return RunOutcome(self.accepted - start, self.candidates, truncated=False)
            if on_event is not None and on_event(event):
                return RunOutcome(self.accepted - start, self.candidates, truncated=False)

    def run_observed(self, horizon: float, observe_step: float, cap: int | None = None) -> tuple[Trajectory, bool]:
        """Run to ``horizon`` recording mean rate and mean potential on a grid."""
        if observe_step <= 0:
            raise ArgumentError(f"observe_step must be positive, got {observe_step}")
        count = int(math.floor((horizon - self.t) / observe_step + 1e-9)) + 1
        grid = self.t + observe_step * np.arange(count)
        lam = np.empty(count)
        mean_u = np.empty(count)
        truncated = False
        budget = cap
        for k, t_obs in enumerate(grid):
            outcome = self.run(float(t_obs), cap=budget)
            if budget is not None:
                budget -= outcome.accepted
            u = self.potentials(float(t_obs))
            lam[k] = float(np.mean(self.params.rate.values(u)))
            mean_u[k] = float(np.mean(u))
            if outcome.truncated:
                truncated = True
                grid, lam, mean_u = grid[: k + 1], lam[: k + 1], mean_u[: k + 1]
                break
        return Trajectory(times=grid, lambda_bar=lam, mean_potential=mean_u), truncated


def flow(state: SystemState, dt: float, params: ModelParams) -> SystemState:
    """Leak every potential for a duration dt."""
    if dt < 0:
        raise ArgumentError(f"dt must be non-negative, got {dt}")
    u = state.u * math.exp(-params.alpha * dt)
    return SystemState(t=state.t + dt, u=u, total_rate=float(np.sum(params.rate.values(u))))


def apply_spike(state: SystemState, neuron: int, params: ModelParams) -> SystemState:
    """Reset ``neuron`` and kick every other neuron by h/N."""
    u = state.u + params.h / params.n
    u[neuron] = 0.0
    return SystemState(t=state.t, u=u, total_rate=float(np.sum(params.rate.values(u))))


def step_thinning(
    state: SystemState,
    params: ModelParams,
    clock: SpikeClock,
    horizon: float = math.inf,
) -> tuple[SystemState, SpikeEvent | None]:
    """One accepted event by thinning against the rate N*lambda_star clock.

    Returns the state at the event, or at ``horizon`` with ``None`` when the
    horizon is exhausted first.
    """
    system = NeuronSystem(params, state.u, clock, t0=state.t, record_events=False)
    event = system.step(horizon)
    return system.state(), event


def next_spike_by_inversion(
    state: SystemState,
    params: ModelParams,
    stream: UniformStream,
) -> tuple[SystemState, SpikeEvent | None]:
    """One event by inverting the integrated total rate against an Exp(1) mark.

    Returns ``(state, None)`` when the mark exceeds the total residual rate,
    i.e. the system never spikes again.
    """
    params.require_piecewise_linear("next_spike_by_inversion")
    mark = stream.exponential()
    if mark >= total_residual_rate(state.u, params):
        return state, None
    tau = invert_integrated_rate(state.u, mark, params)
    decayed = flow(state, tau, params)
    neuron = choose_neuron(decayed.u, params, stream)
    return apply_spike(decayed, neuron, params), SpikeEvent(decayed.t, neuron)


def choose_neuron(u: np.ndarray, params: ModelParams, stream: UniformStream) -> int:
    """Index drawn with probability proportional to lambda(u_i)."""
    cumulative = np.cumsum(params.rate.values(u))
    level = stream.next() * cumulative[-1]
    index = int(np.searchsorted(cumulative, level, side="right"))
    return min(index, u.size - 1)
