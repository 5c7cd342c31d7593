"""Picard iteration for the mean rate of the non-linear process.

The non-linear particle follows dU = (-alpha U + h z_t) dt between spikes,
with z_t = E lambda(U(t)). Given a guess for z, a cloud of independent
particles is simulated exactly and its empirical mean rate becomes the next
guess. The horizon is cut into windows of length about 1/(kh + lambda_star)
and iterated window by window; inside a window every iteration reuses the
same random numbers, so successive iterates differ only through z.

The scheme has no convergence proof and paths are flagged experimental; the
particle system itself (``particle_rate_path``) is the reference surrogate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from config.settings import get_settings
from engine.drift import RatePath
from engine.streams import SpikeClock, StreamPurpose, spawn_generator
from engine.system import NeuronSystem
from meanfield.invariant import DensityTable
from model.params import ModelParams
from services.errors import ArgumentError, ConvergenceError

logger = logging.getLogger(__name__)

# Largest grid step, as a fraction of 1/(kh + lambda_star)
MAX_STEP_FRACTION = 0.01
TOLERANCE_FLOOR = 1e-3


def initial_potentials(mu0, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` potentials drawn from a density table, a sample array or a point mass."""
    if isinstance(mu0, DensityTable):
        u = mu0.sample(size, rng)
    elif np.ndim(mu0) == 0:
        u = np.full(size, float(mu0))
    else:
        samples = np.asarray(mu0, dtype=float).reshape(-1)
        if samples.size == 0:
            raise ArgumentError("initial sample is empty")
        u = samples.copy() if samples.size == size else rng.choice(samples, size=size, replace=True)
    if not np.all(np.isfinite(u)) or np.any(u < 0):
        raise ArgumentError("initial potentials must be finite and non-negative")
    return u


@dataclass
class PicardResult:
    """Converged mean-rate path with the per-iteration sup distances."""

    path: RatePath
    iterations: int
    windows: int
    history: list[float] = field(default_factory=list)
    standard_error: np.ndarray | None = None


def _step_cell(
    u: np.ndarray,
    t0: float,
    t1: float,
    drive: float,
    next_candidate: np.ndarray,
    marks: np.ndarray,
    rng: np.random.Generator,
    params: ModelParams,
) -> np.ndarray:
    """Exact particle update over [t0, t1] under the constant drive h z.

    Each particle owns a rate-lambda_star candidate clock; a candidate at s
    is a spike iff its mark is below lambda(U(s-)). The number of draws only
    depends on candidate times, never on the drive.
    """
    alpha = params.alpha
    lambda_star = params.lambda_star
    ref_u = u.copy()
    ref_t = np.full(u.size, t0)
    due = np.flatnonzero(next_candidate <= t1)
    while due.size:
        s = next_candidate[due]
        gain = -np.expm1(-alpha * (s - ref_t[due]))
        u_s = (1.0 - gain) * ref_u[due] + drive * gain / alpha
        fired = marks[due] < params.rate.values(u_s)
        ref_u[due] = np.where(fired, 0.0, u_s)
        ref_t[due] = s
        next_candidate[due] = s + rng.standard_exponential(due.size) / lambda_star
        marks[due] = rng.random(due.size) * lambda_star
        due = due[next_candidate[due] <= t1]
    gain = -np.expm1(-alpha * (t1 - ref_t))
    return (1.0 - gain) * ref_u + drive * gain / alpha


def picard_z(
    mu0,
    params: ModelParams,
    horizon: float,
    grid_step: float,
    mc_replicas: int,
    rng: np.random.Generator,
    *,
    max_iterations: int | None = None,
    window: float | None = None,
) -> PicardResult:
    """Mean-rate path z on a grid of step ``grid_step`` over [0, horizon].

    A window is accepted once the sup distance between two iterates is at most
    max(2 Monte Carlo standard errors, 1e-3).

    Raises:
        ArgumentError: If the grid step exceeds 0.01/(kh + lambda_star)
        ConvergenceError: If a window needs more than ``max_iterations`` iterations
    """
    speed = params.kh + params.lambda_star
    if not 0 < grid_step <= MAX_STEP_FRACTION / speed * (1.0 + 1e-12):
        raise ArgumentError(f"grid_step must lie in (0, {MAX_STEP_FRACTION / speed:.6g}], got {grid_step}")
    if horizon <= 0:
        raise ArgumentError(f"horizon must be positive, got {horizon}")
    if mc_replicas < 2:
        raise ArgumentError(f"mc_replicas must be at least 2, got {mc_replicas}")
    max_iterations = max_iterations or get_settings().picard_max_iterations
    window = window or 1.0 / speed
    cells_per_window = max(1, int(round(window / grid_step)))

    n_cells = int(math.ceil(horizon / grid_step - 1e-9))
    times = grid_step * np.arange(n_cells + 1)
    times[-1] = horizon

    base_seed = int(rng.integers(2**63))
    u = initial_potentials(mu0, mc_replicas, spawn_generator(base_seed, StreamPurpose.INIT))
    clock_rng = spawn_generator(base_seed, StreamPurpose.SPIKES)
    next_candidate = clock_rng.standard_exponential(mc_replicas) / params.lambda_star
    marks = clock_rng.random(mc_replicas) * params.lambda_star

    z = np.empty(times.size)
    se = np.empty(times.size)
    lam = params.rate.values(u)
    z[0] = float(np.mean(lam))
    se[0] = float(np.std(lam, ddof=1)) / math.sqrt(mc_replicas)

    history: list[float] = []
    most_iterations = 0
    n_windows = 0
    for n_windows, start in enumerate(range(0, n_cells, cells_per_window), start=1):
        stop = min(start + cells_per_window, n_cells)
        guess = np.full(stop - start + 1, z[start])
        for iteration in range(1, max_iterations + 1):
            window_rng = spawn_generator(base_seed, StreamPurpose.MARKS, n_windows)
            candidates = next_candidate.copy()
            window_marks = marks.copy()
            cloud = u
            nodes = np.empty(stop - start)
            node_se = np.empty(stop - start)
            for j, cell in enumerate(range(start, stop)):
                cloud = _step_cell(
                    cloud,
                    float(times[cell]),
                    float(times[cell + 1]),
                    params.h * guess[j],
                    candidates,
                    window_marks,
                    window_rng,
                    params,
                )
                lam = params.rate.values(cloud)
                nodes[j] = float(np.mean(lam))
                node_se[j] = float(np.std(lam, ddof=1)) / math.sqrt(mc_replicas)
            update = np.concatenate([[z[start]], nodes])
            distance = float(np.max(np.abs(update - guess)))
            history.append(distance)
            guess = update
            if distance <= max(2.0 * float(np.max(node_se)), TOLERANCE_FLOOR):
                break
        else:
            raise ConvergenceError(
                f"Picard window [{times[start]:.6g}, {times[stop]:.6g}] did not settle in {max_iterations} iterations",
                history=history,
            )
        most_iterations = max(most_iterations, iteration)
        z[start + 1 : stop + 1] = nodes
        se[start + 1 : stop + 1] = node_se
        u, next_candidate, marks = cloud, candidates, window_marks
        if n_windows % 100 == 0:
            logger.info(f"picard: t={times[stop]:.4g}/{horizon:g}, z={z[stop]:.6g}")

    logger.info(f"picard: {n_windows} windows, at most {most_iterations} iterations, z({horizon:g}) = {z[-1]:.6g}")
    return PicardResult(
        path=RatePath(times, z, experimental=True, label="picard"),
        iterations=most_iterations,
        windows=n_windows,
        history=history,
        standard_error=se,
    )


def particle_rate_path(
    mu0,
    params: ModelParams,
    horizon: float,
    observe_step: float,
    rng: np.random.Generator,
) -> RatePath:
    """Mean rate of one large particle system, observed on a grid, as a drift surrogate."""
    init_rng, clock_rng = rng.spawn(2)
    u0 = initial_potentials(mu0, params.n, init_rng)
    system = NeuronSystem(params, u0, SpikeClock(clock_rng, params.n, params.lambda_star), lazy=True, record_events=False)
    trajectory, truncated = system.run_observed(horizon, observe_step, cap=get_settings().exit_event_cap)
    if truncated:
        logger.warning(f"particle surrogate truncated at t={trajectory.times[-1]:.6g}")
    return RatePath(trajectory.times, trajectory.lambda_bar, label="particles")
