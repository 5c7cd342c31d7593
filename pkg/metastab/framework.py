"""Empirical estimates of the constants of the exponential-exit framework.

The framework bounds, over a trap K inside a domain D,

    eps1 = sup_{x in K} P_x(tau_exit <= s1),
    eps2 = sup_{x in D} P_x(tau_exit ^ tau_K > s2),
    eps3 = 2 eps1 + eps4, eps4 bounding the probability that two coupled
           copies started in K still differ after s1.

Suprema are replaced by maxima over an explicit design of initial states.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from config.settings import get_settings
from engine.coupling import couple_synchronous
from engine.state import validate_potentials
from engine.streams import SpikeClock, StreamPurpose, spawn_generator
from engine.system import NeuronSystem
from metastab.domains import DomainSpec, Region
from metastab.exit_times import exit_time, run_passage
from metastab.statistics import BetaCalibration, ProbabilityEstimate, calibrate_beta_from_samples, wilson_interval
from model.params import ModelParams
from services.errors import ArgumentError
from services.parallel import parallel_map

logger = logging.getLogger(__name__)


def combine_eps3(eps1: float, eps4: float) -> float:
    return 2.0 * eps1 + eps4


@dataclass
class EpsReport:
    eps1: ProbabilityEstimate
    eps2: ProbabilityEstimate
    eps4: ProbabilityEstimate
    s1: float
    s2: float
    design: dict
    beta: BetaCalibration | None = None
    partial: bool = False
    per_state: dict = field(default_factory=dict)

    @property
    def eps3(self) -> float:
        return combine_eps3(self.eps1.value, self.eps4.value)

    @property
    def eps3_upper(self) -> float:
        return min(1.0, combine_eps3(self.eps1.high, self.eps4.high))

    def to_dict(self) -> dict:
        return {
            "eps1": self.eps1.to_dict(),
            "eps2": self.eps2.to_dict(),
            "eps3": self.eps3,
            "eps3_upper": self.eps3_upper,
            "eps4": self.eps4.to_dict(),
            "s1": self.s1,
            "s2": self.s2,
            "beta": self.beta.to_dict() if self.beta is not None else None,
            "design": self.design,
            "partial": self.partial,
        }


def _worst(estimates: list[ProbabilityEstimate]) -> ProbabilityEstimate:
    return max(estimates, key=lambda e: (e.value, e.high))


def _degenerate_trap(trap: Region, domain: Region) -> bool:
    return trap == domain


def _passage_task(task: tuple) -> tuple[str, float]:
    params, init, domain, target, horizon, root_seed, key, cap = task
    rng = spawn_generator(root_seed, *key)
    system = NeuronSystem(params, init, SpikeClock(rng, params.n, params.lambda_star), record_events=False)
    passage = run_passage(system, domain, target, horizon=horizon, cap=cap)
    return passage.kind, passage.time


def _coupling_task(task: tuple) -> bool:
    params, first, second, s1, root_seed, key = task
    rng = spawn_generator(root_seed, *key)
    diagnostics = couple_synchronous(first, second, params, s1, rng, observe_step=s1 / 100.0)
    coalesced = diagnostics.coalescence_time
    return coalesced is None or coalesced > s1


def estimate_eps(
    domain: DomainSpec,
    trap: Region | None,
    s1: float,
    s2: float,
    init_design: list,
    coupling_pairs: list,
    params: ModelParams,
    replicas: int,
    rng: np.random.Generator,
    *,
    threads: int = 1,
    cap: int | None = None,
    confidence: float = 0.95,
) -> EpsReport:
    """eps1, eps2 and eps4 as maxima over the design, each with a Wilson interval.

    A ``trap`` of None, or equal to the domain region, is degenerate: every
    design state then counts as trapped and eps2 estimates P(tau_exit > s2).
    Otherwise design states inside the trap feed eps1 and all of them feed eps2.
    """
    if not s1 >= s2 > 0:
        raise ArgumentError(f"need s1 >= s2 > 0, got s1={s1}, s2={s2}")
    if not init_design:
        raise ArgumentError("init_design must not be empty")
    if not coupling_pairs:
        raise ArgumentError("coupling_pairs must not be empty")
    if replicas < 1:
        raise ArgumentError(f"replicas must be at least 1, got {replicas}")
    region = domain.domain
    trap_region = region if trap is None else trap
    degenerate = _degenerate_trap(trap_region, region)
    cap = cap if cap is not None else get_settings().exit_event_cap
    root_seed = int(rng.integers(2**63))

    states = [validate_potentials(u, params) for u in init_design]
    rates = [float(np.mean(params.rate.values(u))) for u in states]
    for idx, lam in enumerate(rates):
        if not region.contains(lam):
            raise ArgumentError(f"design state {idx} has mean rate {lam:.6g} outside the domain")
    in_trap = [idx for idx, lam in enumerate(rates) if trap_region.contains(lam)]
    if not in_trap:
        raise ArgumentError("no design state lies in the trap")

    tasks = []
    for idx in in_trap:
        tasks += [
            (params, states[idx], region, None, s1, root_seed, (idx, rep, StreamPurpose.SPIKES), cap)
            for rep in range(replicas)
        ]
    target = None if degenerate else trap_region
    for idx in range(len(states)):
        tasks += [
            (params, states[idx], region, target, s2, root_seed, (idx, rep, StreamPurpose.BURN_IN), cap)
            for rep in range(replicas)
        ]
    outcomes = parallel_map(_passage_task, tasks, threads)
    partial = any(kind == "cap" for kind, _ in outcomes)
    first_part = outcomes[: len(in_trap) * replicas]
    second_part = outcomes[len(in_trap) * replicas :]

    eps1_states = []
    for j, idx in enumerate(in_trap):
        chunk = first_part[j * replicas : (j + 1) * replicas]
        eps1_states.append(wilson_interval(sum(1 for kind, _ in chunk if kind == "exit"), replicas, confidence))
    eps2_states = []
    for idx in range(len(states)):
        chunk = second_part[idx * replicas : (idx + 1) * replicas]
        eps2_states.append(wilson_interval(sum(1 for kind, _ in chunk if kind == "horizon"), replicas, confidence))

    pair_tasks = []
    for p, (first, second) in enumerate(coupling_pairs):
        first_u = validate_potentials(first, params)
        second_u = validate_potentials(second, params)
        pair_tasks += [
            (params, first_u, second_u, s1, root_seed, (p, rep, StreamPurpose.COUPLING)) for rep in range(replicas)
        ]
    apart = parallel_map(_coupling_task, pair_tasks, threads)
    eps4_pairs = [
        wilson_interval(sum(apart[p * replicas : (p + 1) * replicas]), replicas, confidence)
        for p in range(len(coupling_pairs))
    ]

    report = EpsReport(
        eps1=_worst(eps1_states),
        eps2=_worst(eps2_states),
        eps4=_worst(eps4_pairs),
        s1=s1,
        s2=s2,
        design={
            "domain": domain.describe(),
            "trap": trap_region.to_dict(),
            "degenerate_trap": degenerate,
            "states": len(states),
            "states_in_trap": len(in_trap),
            "coupling_pairs": len(coupling_pairs),
            "replicas": replicas,
        },
        partial=partial,
        per_state={
            "eps1": [e.value for e in eps1_states],
            "eps2": [e.value for e in eps2_states],
            "eps4": [e.value for e in eps4_pairs],
        },
    )
    logger.info(f"eps1={report.eps1.value:.4g} eps2={report.eps2.value:.4g} eps4={report.eps4.value:.4g}")
    return report


def calibrate_beta(
    x0,
    domain: DomainSpec,
    params: ModelParams,
    replicas: int,
    rng: np.random.Generator,
    *,
    horizon: float = math.inf,
    cap: int | None = None,
) -> BetaCalibration:
    """beta with P_{x0}(tau_exit > beta) in [0.3, 0.7], from ``replicas`` exit times.

    Raises:
        ArgumentError: If x0 is not in the trap
        CalibrationError: If the survival curve never enters the bracket
    """
    u0 = validate_potentials(x0, params)
    lam = float(np.mean(params.rate.values(u0)))
    if not domain.trap.contains(lam):
        raise ArgumentError(f"x0 has mean rate {lam:.6g}, outside the trap")
    samples = [
        exit_time(domain, u0, params, stream, cap, horizon=horizon, seed=k).tau
        for k, stream in enumerate(rng.spawn(replicas))
    ]
    return calibrate_beta_from_samples(samples)
