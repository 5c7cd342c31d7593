"""Exit times of the mean rate from a domain, and ensembles of them.

Between spikes every potential decays, so lambda_bar decreases continuously
and can only cross a level from above; it moves up only at spikes. A passage
run therefore checks the domain after each spike and, between spikes, solves
for the time the decaying lambda_bar reaches the next relevant level below it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from config.settings import get_settings
from engine.state import validate_potentials
from engine.streams import SpikeClock, StreamPurpose, spawn_generator
from engine.system import NeuronSystem
from metastab.domains import DomainSpec, Region
from metastab.statistics import ks_exponential
from model.params import ModelParams
from services.errors import ArgumentError
from services.parallel import parallel_map

logger = logging.getLogger(__name__)

MIN_REPLICAS = 100
CDF_GRID = np.linspace(0.0, 5.0, 101)


def decay_crossing_time(u: np.ndarray, t: float, level: float, params: ModelParams) -> float:
    """Absolute time at which lambda_bar of potentials ``u`` at time ``t``, left to decay, reaches ``level``."""
    rate = params.rate.values
    alpha = params.alpha

    def excess(s: float) -> float:
        return float(np.mean(rate(u * math.exp(-alpha * s)))) - level

    if excess(0.0) <= 0:
        return t
    if level <= 0:
        return math.inf
    hi = 1.0 / alpha
    while excess(hi) > 0:
        hi *= 2.0
    s = optimize.brentq(excess, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return t + s


@dataclass(frozen=True)
class Passage:
    """End of a passage run: ``kind`` is exit, enter, horizon or cap."""

    time: float
    kind: str
    lambda_bar: float
    events: int


def _screen_time(params: ModelParams, t: float, lambda_bar: float, level: float) -> float:
    # a concave rate gives lambda_bar(t + s) >= exp(-alpha s) lambda_bar(t)
    if not params.is_piecewise_linear or level <= 0:
        return t
    return t + math.log(lambda_bar / level) / params.alpha


def run_passage(
    system: NeuronSystem,
    domain: Region,
    target: Region | None = None,
    *,
    horizon: float = math.inf,
    cap: int | None = None,
) -> Passage:
    """Run until lambda_bar leaves ``domain``, enters ``target``, or time reaches ``horizon``."""
    params = system.params
    n_events = 0
    lam = system.lambda_bar()

    def level_below(value: float) -> float:
        levels = [domain.low]
        if target is not None and target.high < value:
            levels.append(target.high)
        below = [lv for lv in levels if lv < value]
        return max(below) if below else -math.inf

    def settled(value: float) -> str | None:
        if not domain.contains(value):
            return "exit"
        if target is not None and target.contains(value):
            return "enter"
        return None

    kind = settled(lam)
    if kind is not None:
        return Passage(system.t, kind, lam, 0)
    level = level_below(lam)
    screen = _screen_time(params, system.t, lam, level)
    hit: float | None = None
    while True:
        t_c, i, mark = system.next_candidate()
        if level > 0 and min(t_c, horizon) >= screen:
            if hit is None:
                hit = decay_crossing_time(system.potentials(), system.t, level, params)
            if hit <= min(t_c, horizon):
                system.advance_to(hit)
                return Passage(hit, "exit" if level == domain.low else "enter", level, n_events)
        if t_c > horizon:
            system.advance_to(horizon)
            return Passage(horizon, "horizon", system.lambda_bar(), n_events)
        system.take_candidate()
        if not system.offer(t_c, i, mark):
            continue
        n_events += 1
        lam = system.lambda_bar()
        kind = settled(lam)
        if kind is not None:
            return Passage(t_c, kind, lam, n_events)
        if cap is not None and n_events >= cap:
            logger.warning(f"passage run hit the event cap {cap} at t={t_c:.6g}")
            return Passage(t_c, "cap", lam, n_events)
        level = level_below(lam)
        screen = _screen_time(params, t_c, lam, level)
        hit = None


@dataclass(frozen=True)
class ExitSample:
    """One exit time; ``lambda_bar`` is the mean rate at exit."""

    tau: float
    seed: int
    lambda_bar: float
    init_id: int = 0
    truncated: bool = False
    censored: bool = False


def exit_time(
    domain: DomainSpec,
    init,
    params: ModelParams,
    rng: np.random.Generator,
    cap: int | None = None,
    *,
    horizon: float = math.inf,
    seed: int = 0,
    init_id: int = 0,
) -> ExitSample:
    """First time lambda_bar leaves the domain, started from the potentials ``init``.

    A run stopped by ``cap`` is flagged truncated; one stopped by ``horizon`` is
    flagged censored. In both cases ``tau`` is a lower bound.

    Raises:
        ArgumentError: If init is not in the domain
    """
    u0 = validate_potentials(init, params)
    system = NeuronSystem(params, u0, SpikeClock(rng, params.n, params.lambda_star), record_events=False)
    region = domain.domain
    start = system.lambda_bar()
    if not region.contains(start):
        raise ArgumentError(f"initial mean rate {start:.6g} is outside [{region.low:g}, {region.high:g}]")
    cap = cap if cap is not None else get_settings().exit_event_cap
    passage = run_passage(system, region, horizon=horizon, cap=cap)
    return ExitSample(
        tau=passage.time,
        seed=seed,
        lambda_bar=passage.lambda_bar,
        init_id=init_id,
        truncated=passage.kind == "cap",
        censored=passage.kind == "horizon",
    )


def _exit_task(task: tuple) -> ExitSample:
    domain, init, params, root_seed, init_id, replica, cap, horizon = task
    rng = spawn_generator(root_seed, init_id, replica, StreamPurpose.SPIKES)
    return exit_time(domain, init, params, rng, cap, horizon=horizon, seed=replica, init_id=init_id)


@dataclass
class ExitEnsembleReport:
    """Per-initial-state means and the exponentiality diagnostics of rescaled exit times."""

    samples: list[ExitSample]
    means: np.ndarray
    standard_errors: np.ndarray
    mean: float
    se: float
    ks: float
    ks_leave_one_out: float
    cdf_times: np.ndarray
    cdf_error: np.ndarray
    ratio_matrix: np.ndarray
    partial: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def max_ratio_minus_1(self) -> float:
        return float(np.max(np.abs(self.ratio_matrix - 1.0)))

    @property
    def sup_cdf_error(self) -> float:
        return float(np.max(self.cdf_error))

    def rows(self) -> list[tuple[int, int, float]]:
        """CSV rows ``replica,init_id,tau``."""
        return [(s.seed, s.init_id, s.tau) for s in self.samples]

    def summary(self) -> dict:
        return {
            "mean": self.mean,
            "se": self.se,
            "ks": self.ks,
            "ks_leave_one_out": self.ks_leave_one_out,
            "sup_cdf_error": self.sup_cdf_error,
            "max_ratio_minus_1": self.max_ratio_minus_1,
            "means": self.means.tolist(),
            "standard_errors": self.standard_errors.tolist(),
            "partial": self.partial,
        }


def summarize_exit_samples(samples: list[ExitSample]) -> ExitEnsembleReport:
    """Reduce exit samples grouped by ``init_id``.

    Each group is rescaled by its own mean; the leave-one-out variant divides
    every sample by the mean of the others in its group.
    """
    if not samples:
        raise ArgumentError("no exit samples to summarize")
    ids = sorted({s.init_id for s in samples})
    groups = [np.array([s.tau for s in samples if s.init_id == k]) for k in ids]
    means = np.array([g.mean() for g in groups])
    if np.any(means <= 0):
        raise ArgumentError("every initial state needs a positive mean exit time")
    ses = np.array([g.std(ddof=1) / math.sqrt(g.size) if g.size > 1 else math.nan for g in groups])
    rescaled = np.concatenate([g / m for g, m in zip(groups, means, strict=True)])
    loo_parts = []
    for g in groups:
        if g.size > 1:
            others = (g.sum() - g) / (g.size - 1)
            loo_parts.append(g / np.where(others > 0, others, math.nan))
    loo = np.concatenate(loo_parts) if loo_parts else np.array([])
    loo = loo[np.isfinite(loo)]
    cdf_error = np.zeros(CDF_GRID.size)
    for g, m in zip(groups, means, strict=True):
        scaled = np.sort(g / m)
        survival = 1.0 - np.searchsorted(scaled, CDF_GRID, side="left") / scaled.size
        cdf_error = np.maximum(cdf_error, np.abs(survival - np.exp(-CDF_GRID)))
    pooled = np.concatenate(groups)
    return ExitEnsembleReport(
        samples=list(samples),
        means=means,
        standard_errors=ses,
        mean=float(pooled.mean()),
        se=float(pooled.std(ddof=1) / math.sqrt(pooled.size)) if pooled.size > 1 else math.nan,
        ks=ks_exponential(rescaled),
        ks_leave_one_out=ks_exponential(loo) if loo.size else math.nan,
        cdf_times=CDF_GRID.copy(),
        cdf_error=cdf_error,
        ratio_matrix=means[:, None] / means[None, :],
        partial=any(s.truncated or s.censored for s in samples),
    )


def exit_ensemble(
    domain: DomainSpec,
    inits: list,
    params: ModelParams,
    replicas: int,
    rng: np.random.Generator,
    *,
    threads: int = 1,
    cap: int | None = None,
    horizon: float = math.inf,
    min_replicas: int = MIN_REPLICAS,
) -> ExitEnsembleReport:
    """``replicas`` exit times from each initial state, reduced by ``summarize_exit_samples``."""
    if replicas < min_replicas:
        raise ArgumentError(f"replicas must be at least {min_replicas}, got {replicas}")
    if not inits:
        raise ArgumentError("exit_ensemble needs at least one initial state")
    root_seed = int(rng.integers(2**63))
    cap = cap if cap is not None else get_settings().exit_event_cap
    tasks = [
        (domain, np.asarray(init, dtype=float), params, root_seed, init_id, replica, cap, horizon)
        for init_id, init in enumerate(inits)
        for replica in range(replicas)
    ]
    samples = parallel_map(_exit_task, tasks, threads)
    report = summarize_exit_samples(samples)
    if report.partial:
        logger.warning("exit ensemble has truncated or censored samples")
    logger.info(f"exit ensemble: mean {report.mean:.6g}, KS {report.ks:.4f}, max |ratio-1| {report.max_ratio_minus_1:.4f}")
    return report
