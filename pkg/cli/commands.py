"""Experiment commands.

Each ``cmd_*`` runs one experiment from a validated ``RunConfig``, writes its
CSV files through a single ``ArtifactWriter`` and finishes with summary.json.
Random streams are keyed off the run seed, so a config and a seed fix every
byte of the CSV output.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np

from cli.run_config import InitSection, RunConfig
from engine.coupling import couple_chaos, couple_synchronous, couple_U_Z
from engine.extinction import simulate_until_extinction
from engine.streams import SpikeClock, StreamPurpose, spawn_generator
from engine.system import NeuronSystem
from ldp.quasi_potential import PathSample, action_of_path, quasi_potential_bounds, w_zero
from ldp.rate_function import LdpConfig
from ldp.scaling import extinction_scaling
from meanfield.bounds import contraction_rate
from meanfield.invariant import DensityTable, solve_pstar
from meanfield.limit_ode import LimitOdeConfig, limit_ode
from meanfield.picard import MAX_STEP_FRACTION, particle_rate_path, picard_z
from metastab.domains import Band, DomainSpec, LevelSet
from metastab.exit_times import exit_ensemble
from metastab.framework import estimate_eps
from metastab.statistics import calibrate_beta_from_samples
from model.params import ModelParams
from model.regime import b_max, classify_ab, classify_regime, contraction_boundary
from services.artifacts import ArtifactWriter, SummaryEnvelope
from services.errors import ArgumentError, CalibrationError, GuardViolation, UnsupportedRateError
from services.parallel import parallel_map
from utils.timing import Stopwatch

logger = logging.getLogger(__name__)

TIME = "model time units"
RATE = "events per model time unit"
POTENTIAL = "potential units"
COUNT = "count"
RATIO = "dimensionless"
FLAG = "true or false"


@dataclass
class CommandResult:
    experiment: str
    files: list[Path]
    partial: bool = False
    payload: dict = field(default_factory=dict)


class ExperimentRun:
    """Parameters, seeded streams, writer and stopwatch of one command."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.params: ModelParams = config.model.to_params()
        self.writer = ArtifactWriter(config.out, canonical=config.canonical)
        self.stopwatch = Stopwatch()
        logger.info(f"{config.experiment}: seed {config.seed}, N={self.params.n}, out {config.out}")

    def rng(self, *key: int) -> np.random.Generator:
        return spawn_generator(self.config.seed, *key)

    @cached_property
    def density(self) -> DensityTable:
        section = self.config.meanfield
        return solve_pstar(self.params, method=section.method, table_points=section.table_points)

    def initial_state(self, init: InitSection, key: int, params: ModelParams | None = None) -> np.ndarray:
        params = params or self.params
        rng = self.rng(StreamPurpose.INIT, key)
        if init.kind == "uniform":
            return rng.uniform(init.low, init.high, size=params.n)
        if init.kind == "constant":
            return np.full(params.n, init.value)
        return self.density.sample(params.n, rng)

    def finish(self, payload: dict, units: dict[str, str], partial: bool = False) -> CommandResult:
        config = self.config
        envelope = SummaryEnvelope(
            experiment=config.experiment,
            seed=config.seed,
            config=config.echo(),
            started_at=self.stopwatch.started_at.isoformat(),
            wall_clock_seconds=self.stopwatch.elapsed,
            payload=payload,
            units=units,
            partial=partial,
            files=[path.name for path in self.writer.written] + ["summary.json"],
        )
        self.writer.write_json("summary.json", envelope.to_dict())
        logger.info(f"{config.experiment}: done in {self.stopwatch.elapsed:.2f}s, partial={partial}")
        return CommandResult(config.experiment, list(self.writer.written), partial, payload)


def _regime(params: ModelParams) -> dict | None:
    if not params.is_piecewise_linear:
        return None
    return classify_regime(params).to_dict()


def cmd_simulate(config: RunConfig) -> CommandResult:
    run = ExperimentRun(config)
    params = run.params
    section = config.simulate
    u0 = run.initial_state(section.init, 0)
    clock = SpikeClock(run.rng(StreamPurpose.SPIKES, 0), params.n, params.lambda_star)
    system = NeuronSystem(params, u0, clock, lazy=section.lazy)
    trajectory, truncated = system.run_observed(section.horizon, section.observe_step)
    run.writer.write_csv("events.csv", ["t", "neuron"], system.log.rows())
    run.writer.write_csv("trajectory.csv", ["t", "lambda_bar", "mean_potential"], trajectory.rows())
    payload = {
        "events": len(system.log),
        "candidates": system.candidates,
        "horizon": section.horizon,
        "lambda_bar_start": float(trajectory.lambda_bar[0]),
        "lambda_bar_end": float(trajectory.lambda_bar[-1]),
        "lambda_bar_max": float(np.max(trajectory.lambda_bar)),
        "mean_potential_end": float(trajectory.mean_potential[-1]),
        "regime": _regime(params),
    }
    units = {
        "events": COUNT,
        "candidates": COUNT,
        "horizon": TIME,
        "lambda_bar_start": RATE,
        "lambda_bar_end": RATE,
        "lambda_bar_max": RATE,
        "mean_potential_end": POTENTIAL,
    }
    return run.finish(payload, units, partial=truncated)


def _extinction_task(task: tuple) -> tuple[int, float, int, bool]:
    params, u0, seed, replica, cap = task
    rng = spawn_generator(seed, replica, StreamPurpose.SPIKES)
    result = simulate_until_extinction(u0, params, rng, cap, record_events=False)
    return replica, result.last_spike, result.n_events, result.truncated


def cmd_extinction(config: RunConfig) -> CommandResult:
    run = ExperimentRun(config)
    params = run.params
    section = config.extinction
    params.require_piecewise_linear("cmd_extinction")
    u0 = run.initial_state(section.init, 0)
    tasks = [(params, u0, config.seed, replica, section.cap) for replica in range(section.replicas)]
    rows = parallel_map(_extinction_task, tasks, config.threads)
    run.writer.write_csv("extinction.csv", ["replica", "last_spike", "n_events", "truncated"], rows)
    last = np.array([row[1] for row in rows])
    truncated = sum(1 for row in rows if row[3])
    payload = {
        "replicas": section.replicas,
        "mean": float(last.mean()),
        "median": float(np.median(last)),
        "se": float(last.std(ddof=1) / math.sqrt(last.size)) if last.size > 1 else None,
        "max": float(last.max()),
        "truncated": truncated,
        "regime": _regime(params),
    }
    units = {"replicas": COUNT, "mean": TIME, "median": TIME, "se": TIME, "max": TIME, "truncated": COUNT}
    return run.finish(payload, units, partial=truncated > 0)


def build_domain(run: ExperimentRun) -> DomainSpec:
    """The exit domain of the exit_times section.

    A level set without gamma uses 0.2 lambda_star (1 - a - b), which needs the
    piecewise-linear rate and a + b < 1. A band without p_star is centred at the
    equilibrium rate of the invariant density.
    """
    section = run.config.exit_times
    params = run.params
    if section.domain == "level_set":
        gamma = section.gamma
        if gamma is None:
            if not params.is_piecewise_linear or params.a + params.b >= 1.0:
                raise ArgumentError("exit_times.gamma is required unless the rate is piecewise linear with a + b < 1")
            gamma = 0.2 * params.lambda_star * (1.0 - params.a - params.b)
        return LevelSet(gamma, section.delta)
    if section.delta is None:
        raise ArgumentError("band domains need exit_times.delta")
    p_star = section.p_star if section.p_star is not None else run.density.p_star
    return Band(p_star, section.delta, section.gamma)


def _burn_in(run: ExperimentRun, u0: np.ndarray, duration: float, key: int) -> np.ndarray:
    params = run.params
    clock = SpikeClock(run.rng(StreamPurpose.BURN_IN, key), params.n, params.lambda_star)
    system = NeuronSystem(params, u0, clock, record_events=False)
    system.run(duration)
    system.advance_to(duration)
    return system.potentials()


def cmd_exit_times(config: RunConfig) -> CommandResult:
    run = ExperimentRun(config)
    params = run.params
    section = config.exit_times
    domain = build_domain(run)
    inits = [run.initial_state(init, idx) for idx, init in enumerate(section.inits)]
    if section.burn_in > 0:
        inits = [_burn_in(run, u0, section.burn_in, idx) for idx, u0 in enumerate(inits)]
    for idx, u0 in enumerate(inits):
        lam = float(np.mean(params.rate.values(u0)))
        if not domain.domain.contains(lam):
            raise ArgumentError(f"initial state {idx} has mean rate {lam:.6g}, outside the exit domain")

    report = exit_ensemble(
        domain,
        inits,
        params,
        section.replicas,
        run.rng(StreamPurpose.SPIKES),
        threads=config.threads,
        horizon=section.horizon if section.horizon is not None else math.inf,
    )
    run.writer.write_csv("exit_times.csv", ["replica", "init_id", "tau"], report.rows())

    try:
        beta = calibrate_beta_from_samples([s.tau for s in report.samples if s.init_id == 0]).to_dict()
    except CalibrationError as exc:
        logger.warning(f"beta calibration failed: {exc}")
        beta = None

    eps = None
    partial = report.partial
    if section.eps is not None:
        trap = domain.trap
        trapped = [u0 for u0 in inits if trap.contains(float(np.mean(params.rate.values(u0))))]
        pairs = list(combinations(trapped, 2))
        if not pairs and trapped:
            pairs = [(trapped[0], trapped[0])]
        eps_report = estimate_eps(
            domain,
            trap,
            section.eps.s1,
            section.eps.s2,
            inits,
            pairs,
            params,
            section.eps.replicas,
            run.rng(StreamPurpose.COUPLING),
            threads=config.threads,
        )
        eps = eps_report.to_dict()
        partial = partial or eps_report.partial

    payload = {
        **report.summary(),
        "domain": domain.describe(),
        "replicas": section.replicas,
        "beta": beta,
        "eps": eps,
    }
    units = {
        "mean": TIME,
        "se": TIME,
        "ks": RATIO,
        "ks_leave_one_out": RATIO,
        "sup_cdf_error": RATIO,
        "max_ratio_minus_1": RATIO,
        "replicas": COUNT,
        "beta": TIME,
        "eps": "probabilities; s1 and s2 in model time units",
        "means": TIME,
        "standard_errors": TIME,
        "partial": FLAG,
    }
    return run.finish(payload, units, partial=partial)


def cmd_meanfield(config: RunConfig) -> CommandResult:
    run = ExperimentRun(config)
    params = run.params
    section = config.meanfield
    table = run.density
    run.writer.write_csv("density.csv", ["x", "g", "cdf"], table.rows())
    run.writer.write_json("density.json", table.sidecar())

    ode = LimitOdeConfig.from_params(params)
    path = limit_ode(section.ode_x0, section.ode_horizon, ode)
    run.writer.write_csv("limit_ode.csv", ["t", "x"], zip(path.times.tolist(), path.values.tolist(), strict=True))

    try:
        contraction = contraction_rate(params).to_dict()
    except (GuardViolation, UnsupportedRateError) as exc:
        logger.info(f"no contraction constants: {exc}")
        contraction = None

    picard = None
    if section.picard:
        grid_step = section.grid_step or MAX_STEP_FRACTION / (params.kh + params.lambda_star)
        result = picard_z(
            table, params, section.picard_horizon, grid_step, section.mc_replicas, run.rng(StreamPurpose.MARKS)
        )
        se = result.standard_error if result.standard_error is not None else np.full(result.path.times.size, np.nan)
        run.writer.write_csv(
            "picard.csv",
            ["t", "z", "se"],
            zip(result.path.times.tolist(), result.path.values.tolist(), se.tolist(), strict=True),
        )
        picard = {"iterations": result.iterations, "windows": result.windows, "z_end": float(result.path.values[-1])}

    payload = {
        "p_star": table.p_star,
        "a_star": table.a_star,
        "residual": table.residual,
        "mass": table.mass,
        "mean_rate": table.mean_rate,
        "roots": table.roots,
        "unique": table.unique,
        "x_inf": ode.x_inf,
        "z_inf": ode.z_inf,
        "ode_end": float(path.values[-1]),
        "contraction": contraction,
        "picard": picard,
        "regime": _regime(params),
    }
    units = {
        "p_star": RATE,
        "a_star": POTENTIAL,
        "residual": POTENTIAL,
        "mass": RATIO,
        "mean_rate": RATE,
        "roots": POTENTIAL,
        "unique": FLAG,
        "x_inf": RATE,
        "z_inf": RATE,
        "ode_end": RATE,
        "contraction": "t0 in model time units, nu0 in events per model time unit, kappa per model time unit",
        "picard": "z_end in events per model time unit",
    }
    return run.finish(payload, units)


def _axis(upper: float, resolution: int) -> list[float]:
    return [upper * k / resolution for k in range(1, resolution + 1)]


def cmd_phase(config: RunConfig) -> CommandResult:
    """Regime flags on a grid of the (a, b) plane, plus the contraction boundary."""
    run = ExperimentRun(config)
    section = config.phase
    rows = []
    for a in _axis(section.a_max, section.resolution):
        for b in _axis(section.b_max, section.resolution):
            report = classify_ab(a, b)
            rows.append(
                (
                    a,
                    b,
                    report.delta0_unique_attractive,
                    report.delta0_unstable,
                    report.exponential_extinction,
                    report.contraction_condition,
                    report.exit_condition,
                )
            )
    run.writer.write_csv(
        "phase.csv",
        [
            "a",
            "b",
            "flag_extinction_attractive",
            "flag_unstable",
            "flag_exp_extinction",
            "flag_contraction",
            "flag_exit",
        ],
        rows,
    )
    top = b_max()
    boundary = [(b, contraction_boundary(b)) for b in _axis(top, section.boundary_points)]
    run.writer.write_csv("boundary.csv", ["b", "a"], boundary)
    payload = {
        "points": len(rows),
        "contraction_points": sum(1 for row in rows if row[5]),
        "exit_points": sum(1 for row in rows if row[6]),
        "b_max": top,
    }
    units = {"points": COUNT, "contraction_points": COUNT, "exit_points": COUNT, "b_max": RATIO}
    return run.finish(payload, units)


def _decay_path(config: LdpConfig, step: float) -> PathSample:
    duration = math.log(config.x_inf / config.eta) / config.r
    times = np.arange(0.0, duration, step)
    times = np.append(times, duration) if duration - times[-1] > step * 1e-6 else times
    return PathSample(times, config.x_inf * np.exp(-config.r * times))


def cmd_ldp(config: RunConfig) -> CommandResult:
    run = ExperimentRun(config)
    params = run.params
    section = config.ldp
    ode = LimitOdeConfig.from_params(params)
    eta = section.eta if section.eta is not None else max(ode.x_inf, 0.0) / 2.0
    ldp = LdpConfig.from_params(params, eta)
    bounds = quasi_potential_bounds(ldp, params)
    w0 = w_zero(params)

    decay = _decay_path(ldp, section.path_step)
    relaxation = limit_ode(eta, decay.times[-1], ode, t_eval=decay.times)
    decay_action = action_of_path(decay, ldp)
    relaxation_action = action_of_path(PathSample(relaxation.times, relaxation.values), ldp)

    payload = {
        "eta": eta,
        "x_inf": ldp.x_inf,
        "z_inf": ldp.z_inf,
        "drain_time": ldp.drain_time,
        "lower": bounds.lower,
        "upper": bounds.upper,
        "lower_closed_form": bounds.lower_closed_form,
        "w_zero": w0,
        "decay_path_action": decay_action,
        "relaxation_path_action": relaxation_action,
        "scaling": None,
    }
    partial = False
    if section.ns:
        report = extinction_scaling(
            params, eta, section.ns, section.replicas, run.rng(StreamPurpose.AUX), threads=config.threads
        )
        run.writer.write_csv("scaling.csv", ["N", "median", "mean", "log_mean_over_N", "feasible"], report.table())
        run.writer.write_csv(
            "scaling_samples.csv", ["N", "replica", "exit_time", "extinction_lower_bound"], report.sample_rows()
        )
        run.writer.write_json("scaling.json", report.summary())
        payload["scaling"] = report.summary()
        partial = report.partial
    units = {
        "eta": RATE,
        "x_inf": RATE,
        "z_inf": RATE,
        "drain_time": TIME,
        "lower": RATIO,
        "upper": RATIO,
        "lower_closed_form": RATIO,
        "w_zero": RATIO,
        "decay_path_action": RATIO,
        "relaxation_path_action": RATIO,
        "scaling": "eta in events per model time unit; bounds and log_mean_over_N dimensionless",
    }
    return run.finish(payload, units, partial=partial)


def cmd_couple(config: RunConfig) -> CommandResult:
    run = ExperimentRun(config)
    params = run.params
    section = config.couple
    step = section.observe_step or (section.horizon / 100.0 if section.horizon > 0 else 1.0)
    u0 = run.initial_state(section.init, 0)
    paths = []
    per_run = []
    payload: dict = {"kind": section.kind, "runs": section.runs, "horizon": section.horizon}
    units = {"runs": COUNT, "horizon": TIME}

    if section.kind == "u_z":
        for k in range(section.runs):
            diag = couple_U_Z(u0, params, section.horizon, run.rng(StreamPurpose.COUPLING, k))
            paths += [(k, t, gap) for t, gap in zip(diag.times.tolist(), diag.discrepancy.tolist(), strict=True)]
            per_run.append((k, diag.domination_violations, diag.extras["last_z_jump"], diag.extras["last_spike"]))
        run.writer.write_csv("coupling.csv", ["run", "t", "lambda_bar_minus_z"], paths)
        run.writer.write_csv("runs.csv", ["run", "domination_violations", "last_z_jump", "last_spike"], per_run)
        payload["domination_violations"] = sum(row[1] for row in per_run)
        units["domination_violations"] = COUNT

    elif section.kind == "chaos":
        drift_params = params.with_n(section.drift_n)
        sample = run.initial_state(section.init, 1, drift_params)
        drift = particle_rate_path(sample, drift_params, section.horizon, step, run.rng(StreamPurpose.AUX))
        worst = 0.0
        for k in range(section.runs):
            rng = run.rng(StreamPurpose.COUPLING, k)
            diag = couple_chaos(u0, params, section.horizon, rng, drift=drift, observe_step=step)
            rows = zip(
                diag.times.tolist(),
                diag.discrepancy.tolist(),
                diag.bound.tolist(),
                diag.extras["rate_gap"].tolist(),
                diag.extras["rate_gap_bound"].tolist(),
                strict=True,
            )
            paths += [(k, *row) for row in rows]
            positive = diag.bound > 0
            if np.any(positive):
                worst = max(worst, float(np.max(diag.discrepancy[positive] / diag.bound[positive])))
            per_run.append((k, diag.bound_violated))
        run.writer.write_csv("coupling.csv", ["run", "t", "discrepancy", "bound", "rate_gap", "rate_gap_bound"], paths)
        payload["bound_violations"] = sum(1 for _, violated in per_run if violated)
        payload["max_discrepancy_over_bound"] = worst
        units.update({"bound_violations": COUNT, "max_discrepancy_over_bound": RATIO})

    else:
        u0_tilde = run.initial_state(section.init_tilde, 1)
        coalesced = []
        for k in range(section.runs):
            diag = couple_synchronous(
                u0, u0_tilde, params, section.horizon, run.rng(StreamPurpose.COUPLING, k), observe_step=step
            )
            paths += [(k, t, gap) for t, gap in zip(diag.times.tolist(), diag.discrepancy.tolist(), strict=True)]
            per_run.append((k, diag.coalescence_time, diag.extras["synchronous_spikes"]))
            if diag.coalescence_time is not None:
                coalesced.append(diag.coalescence_time)
        run.writer.write_csv("coupling.csv", ["run", "t", "discrepancy"], paths)
        run.writer.write_csv("runs.csv", ["run", "coalescence_time", "synchronous_spikes"], per_run)
        payload["coalesced"] = len(coalesced)
        payload["mean_coalescence_time"] = float(np.mean(coalesced)) if coalesced else None
        units.update({"coalesced": COUNT, "mean_coalescence_time": TIME})

    return run.finish(payload, units)


COMMANDS: dict[str, Callable[[RunConfig], CommandResult]] = {
    "simulate": cmd_simulate,
    "extinction": cmd_extinction,
    "exit-times": cmd_exit_times,
    "meanfield": cmd_meanfield,
    "phase": cmd_phase,
    "ldp": cmd_ldp,
    "couple": cmd_couple,
}


def run_experiment(config: RunConfig) -> CommandResult:
    return COMMANDS[config.experiment](config)
