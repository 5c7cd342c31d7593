"""Desk-scale experiments checking the qualitative behaviour of the limit process."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from engine.coupling import SynchronousPair
from engine.drift import RatePath
from engine.streams import SpikeClock
from engine.system import NeuronSystem
from meanfield.bounds import instability_level
from meanfield.invariant import DensityTable
from meanfield.limit_ode import LimitOdeConfig, limit_ode
from meanfield.picard import PicardResult, initial_potentials, picard_z
from meanfield.wasserstein import w1_empirical
from model.params import ModelParams
from model.regime import classify_regime
from services.errors import ArgumentError, GuardViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EquilibriumCheck:
    p_star: float
    time_average: float
    standard_error: float
    n: int
    horizon: float
    batches: int

    @property
    def z_score(self) -> float:
        if self.standard_error == 0:
            return 0.0 if self.time_average == self.p_star else math.inf
        return (self.time_average - self.p_star) / self.standard_error

    @property
    def consistent(self) -> bool:
        return abs(self.z_score) <= 3.0


def equilibrium_consistency(
    table: DensityTable,
    params: ModelParams,
    rng: np.random.Generator,
    *,
    horizon: float = 50.0,
    observe_step: float = 0.05,
    batches: int = 20,
) -> EquilibriumCheck:
    """Time average of the mean rate of a system started i.i.d. from the invariant density.

    The standard error comes from batch means over ``batches`` equal time blocks.
    """
    if batches < 2:
        raise ArgumentError(f"batches must be at least 2, got {batches}")
    init_rng, clock_rng = rng.spawn(2)
    u0 = table.sample(params.n, init_rng)
    system = NeuronSystem(params, u0, SpikeClock(clock_rng, params.n, params.lambda_star), lazy=True, record_events=False)
    trajectory, truncated = system.run_observed(horizon, observe_step)
    if truncated:
        raise GuardViolation("equilibrium run was truncated")
    block_means = np.array([block.mean() for block in np.array_split(trajectory.lambda_bar, batches)])
    check = EquilibriumCheck(
        p_star=table.p_star,
        time_average=float(np.mean(trajectory.lambda_bar)),
        standard_error=float(np.std(block_means, ddof=1) / math.sqrt(batches)),
        n=params.n,
        horizon=horizon,
        batches=batches,
    )
    logger.info(f"equilibrium: time average {check.time_average:.6g} vs p* {check.p_star:.6g} (z={check.z_score:.2f})")
    return check


@dataclass(frozen=True)
class ContractionCheck:
    w1_start: float
    w1_end: float
    horizon: float
    coalescence_time: float | None

    @property
    def ratio(self) -> float:
        return self.w1_end / self.w1_start if self.w1_start > 0 else math.inf

    @property
    def contracted(self) -> bool:
        return self.w1_end <= 0.5 * self.w1_start


def contraction_witness(
    u0,
    u0_tilde,
    params: ModelParams,
    rng: np.random.Generator,
    *,
    horizon: float = 10.0,
    gamma: float = 0.3,
) -> ContractionCheck:
    """W1 between the lambda-marginals of two synchronously coupled systems, at 0 and at ``horizon``.

    Raises:
        GuardViolation: If the parameters violate the contraction condition
        ArgumentError: If an initial mean rate is below ``gamma``
    """
    if not classify_regime(params).contraction_condition:
        raise GuardViolation(f"(a, b) = ({params.a:.4g}, {params.b:.4g}) violates the contraction condition")
    pair = SynchronousPair(params, u0, u0_tilde, rng)
    lam_first, lam_second = pair.rate_marginals()
    for lam in (lam_first, lam_second):
        if lam.mean() < gamma:
            raise ArgumentError(f"initial mean rate {lam.mean():.4g} is below gamma={gamma:g}")
    start = w1_empirical(lam_first, lam_second)
    pair.run_to(horizon)
    end = w1_empirical(*pair.rate_marginals())
    return ContractionCheck(w1_start=start, w1_end=end, horizon=horizon, coalescence_time=pair.coalescence_time)


@dataclass(frozen=True)
class StabilityCheck:
    """Replica mean of the mean potential against exp(-(alpha - kh) t) times its initial value."""

    times: np.ndarray
    mean: np.ndarray
    standard_error: np.ndarray
    bound: np.ndarray
    saturated: bool

    @property
    def stable(self) -> bool:
        return bool(np.all(self.mean <= self.bound))


def stability_witness(
    mu0,
    params: ModelParams,
    rng: np.random.Generator,
    *,
    times=(1.0, 2.0, 4.0),
    replicas: int = 20,
) -> StabilityCheck:
    """Decay of the mean potential when kh < alpha.

    The bound at time t is exp(-(alpha - kh) t) E[mean potential at 0] inflated
    by three relative standard errors.
    """
    if params.kh >= params.alpha:
        raise GuardViolation(f"stability of the silent state needs kh < alpha (kh={params.kh:g})")
    if replicas < 2:
        raise ArgumentError(f"replicas must be at least 2, got {replicas}")
    grid = np.concatenate([[0.0], np.sort(np.asarray(times, dtype=float))])
    samples = np.empty((replicas, grid.size))
    saturated = False
    for j, stream in enumerate(rng.spawn(replicas)):
        init_rng, clock_rng = stream.spawn(2)
        u0 = initial_potentials(mu0, params.n, init_rng)
        system = NeuronSystem(params, u0, SpikeClock(clock_rng, params.n, params.lambda_star), record_events=False)
        for k, t in enumerate(grid):
            if t > 0:
                system.run(float(t))
            u = system.potentials(float(t))
            saturated = saturated or bool(np.any(u > params.u_star))
            samples[j, k] = float(np.mean(u))
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(replicas)
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = np.where(mean > 0, se / mean, 0.0)
    bound = np.exp(-(params.alpha - params.kh) * grid) * mean[0] * (1.0 + 3.0 * relative)
    if saturated:
        logger.warning("some potential exceeded u*; the linear-rate bound may not apply")
    return StabilityCheck(times=grid[1:], mean=mean[1:], standard_error=se[1:], bound=bound[1:], saturated=saturated)


@dataclass(frozen=True)
class InstabilityCheck:
    level: float
    entry_time: float | None
    path: RatePath

    @property
    def escaped(self) -> bool:
        return self.entry_time is not None


def _potential_for_rate(params: ModelParams, z0: float) -> float:
    if not 0 < z0 < params.rate_at_u_star:
        raise ArgumentError(f"z0 must lie in (0, lambda(u*)={params.rate_at_u_star:g}), got {z0}")
    return optimize.brentq(lambda u: params.rate.value(u) - z0, 0.0, params.u_star, xtol=1e-14)


def _entry_time(path: RatePath, level: float) -> float | None:
    """First grid time after which the path stays above ``level``."""
    below = np.flatnonzero(path.values <= level)
    if below.size == 0:
        return float(path.times[0])
    if below[-1] == path.values.size - 1:
        return None
    return float(path.times[below[-1] + 1])


def instability_witness(
    params: ModelParams,
    rng: np.random.Generator,
    *,
    z0: float = 0.01,
    horizon: float = 30.0,
    grid_step: float | None = None,
    mc_replicas: int = 2000,
) -> InstabilityCheck:
    """Picard path from the point mass at rate z0 and the time it settles above x_inf/2.

    Outside the supercritical range the level is the instability level instead.
    """
    if params.kh <= params.alpha:
        raise GuardViolation(f"the silent state is unstable only when kh > alpha (kh={params.kh:g})")
    config = LimitOdeConfig.from_params(params)
    level = config.x_inf / 2.0 if config.supercritical else instability_level(params)
    step = grid_step or 0.01 / (params.kh + params.lambda_star)
    result = picard_z(_potential_for_rate(params, z0), params, horizon, step, mc_replicas, rng)
    return InstabilityCheck(level=level, entry_time=_entry_time(result.path, level), path=result.path)


@dataclass(frozen=True)
class ComparisonCheck:
    """Mean-rate path against the solution x_t of the limit ODE started at min(z_0, z_inf)."""

    times: np.ndarray
    rate: np.ndarray
    lower: np.ndarray
    tolerance: float

    @property
    def min_margin(self) -> float:
        return float(np.min(self.rate - self.lower))

    @property
    def dominated(self) -> bool:
        return self.min_margin >= -self.tolerance


def comparison_witness(path: PicardResult | RatePath, params: ModelParams, *, tolerance: float = 0.05) -> ComparisonCheck:
    if params.kh <= params.lambda_star + params.alpha:
        raise GuardViolation(f"the comparison needs kh > lambda_star + alpha (kh={params.kh:g})")
    rate_path = path.path if isinstance(path, PicardResult) else path
    config = LimitOdeConfig.from_params(params)
    x0 = min(float(rate_path.values[0]), config.z_inf)
    ode = limit_ode(x0, rate_path.horizon, config, t_eval=rate_path.times)
    return ComparisonCheck(times=rate_path.times, rate=rate_path.values, lower=ode.values, tolerance=tolerance)
