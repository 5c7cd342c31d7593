"""Exact sampler of the last spiking time.

After every spike an Exp(1) mark is drawn. When it exceeds the total integrated
rate the potentials could still produce, the system is silent forever and the
current spike is the last one; otherwise the next spike time inverts the
integrated rate at the mark.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from config.settings import get_settings
from engine.integrated_rate import invert_integrated_rate, total_residual_rate
from engine.state import EventLog, validate_potentials
from engine.streams import UniformStream
from engine.system import choose_neuron
from model.params import ModelParams

logger = logging.getLogger(__name__)


@dataclass
class ExtinctionResult:
    """Last spike time and the spike log that led to it."""

    last_spike: float
    log: EventLog
    truncated: bool
    n_events: int = 0

    def to_dict(self) -> dict:
        return {"last_spike": self.last_spike, "n_events": self.n_events, "truncated": self.truncated}


def simulate_until_extinction(
    init,
    params: ModelParams,
    rng: np.random.Generator,
    cap: int | None = None,
    record_events: bool = True,
) -> ExtinctionResult:
    """Sample the last spike time L from the initial potentials ``init``.

    With a truncated result, ``last_spike`` is the time of the last simulated spike
    and only a lower bound of L.
    """
    params.require_piecewise_linear("simulate_until_extinction")
    cap = cap if cap is not None else get_settings().extinction_event_cap
    u = validate_potentials(init, params)
    stream = UniformStream(rng)
    log = EventLog()
    kick = params.h / params.n
    t = 0.0
    n_events = 0
    while True:
        mark = stream.exponential()
        if mark >= total_residual_rate(u, params):
            return ExtinctionResult(last_spike=t, log=log, truncated=False, n_events=n_events)
        if n_events >= cap:
            logger.warning(f"extinction sampler hit the event cap {cap} at t={t:.6g}")
            return ExtinctionResult(last_spike=t, log=log, truncated=True, n_events=n_events)
        tau = invert_integrated_rate(u, mark, params)
        u *= math.exp(-params.alpha * tau)
        neuron = choose_neuron(u, params, stream)
        u += kick
        u[neuron] = 0.0
        t += tau
        n_events += 1
        if record_events:
            log.append(t, neuron)
