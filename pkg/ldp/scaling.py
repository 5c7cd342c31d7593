"""Growth of the eta-exit time of the dominated process with N."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from config.settings import get_settings
from engine.auxiliary import AuxParams, simulate_aux
from engine.streams import StreamPurpose, spawn_generator
from ldp.quasi_potential import QuasiPotentialBounds, quasi_potential_bounds
from ldp.rate_function import LdpConfig
from model.params import ModelParams
from services.errors import ArgumentError, ConstructionError, GuardViolation
from services.parallel import parallel_map

logger = logging.getLogger(__name__)

DEFAULT_SLACK = 0.5


@dataclass(frozen=True)
class ScalingRow:
    n: int
    median: float
    mean: float
    log_mean_over_n: float
    truncated: int
    samples: np.ndarray = field(repr=False)
    feasible: bool = True

    @classmethod
    def infeasible(cls, n: int) -> ScalingRow:
        """A size whose ceiling z_N does not reach above eta; no samples."""
        return cls(
            n=n,
            median=math.nan,
            mean=math.nan,
            log_mean_over_n=math.nan,
            truncated=0,
            samples=np.empty(0),
            feasible=False,
        )


@dataclass
class ScalingReport:
    """Exit-time statistics per N, compared against the quasi-potential bounds."""

    eta: float
    drain_time: float
    bounds: QuasiPotentialBounds
    slack: float
    rows: list[ScalingRow]

    @property
    def feasible_rows(self) -> list[ScalingRow]:
        return [row for row in self.rows if row.feasible]

    @property
    def infeasible_ns(self) -> list[int]:
        return [row.n for row in self.rows if not row.feasible]

    @property
    def medians_increasing(self) -> bool:
        medians = [row.median for row in self.feasible_rows]
        return all(b > a for a, b in zip(medians[:-1], medians[1:], strict=False))

    @property
    def log_median_growth(self) -> list[float]:
        """ln(median) ratios between successive N; nan when the smaller median is at most 1."""
        logs = [math.log(row.median) if row.median > 0 else -math.inf for row in self.feasible_rows]
        return [b / a if a > 0 else math.nan for a, b in zip(logs[:-1], logs[1:], strict=False)]

    @property
    def within_bounds(self) -> bool:
        rows = self.feasible_rows
        if not rows:
            return False
        largest = rows[-1].log_mean_over_n
        return self.bounds.lower * (1.0 - self.slack) <= largest <= self.bounds.upper * (1.0 + self.slack)

    @property
    def partial(self) -> bool:
        return bool(self.infeasible_ns) or any(row.truncated for row in self.rows)

    @property
    def verdict(self) -> str:
        if self.partial:
            return "partial"
        return "consistent" if self.medians_increasing and self.within_bounds else "inconsistent"

    def table(self) -> list[tuple]:
        """Rows ``N,median,mean,log_mean_over_N,feasible``; infeasible sizes leave the statistics empty."""
        return [
            (row.n, row.median, row.mean, row.log_mean_over_n, True) if row.feasible else (row.n, None, None, None, False)
            for row in self.rows
        ]

    def sample_rows(self) -> list[tuple]:
        """Rows ``N,replica,exit_time,extinction_lower_bound``; the last spike is at least L_eta - S."""
        out = []
        for row in self.rows:
            for replica, tau in enumerate(row.samples.tolist()):
                out.append((row.n, replica, tau, max(tau - self.drain_time, 0.0)))
        return out

    def summary(self) -> dict:
        return {
            "eta": self.eta,
            "lower": self.bounds.lower,
            "upper": self.bounds.upper,
            "slack": self.slack,
            "drain_time": self.drain_time,
            "medians_increasing": self.medians_increasing,
            "log_median_growth": self.log_median_growth,
            "infeasible_ns": self.infeasible_ns,
            "verdict": self.verdict,
        }


def _exit_task(task: tuple) -> tuple[float, bool]:
    params, aux, z0, eta, seed, n, replica, cap = task
    rng = spawn_generator(seed, n, replica, StreamPurpose.AUX)
    path = simulate_aux(params, aux, z0, math.inf, rng, stop_below=eta, cap=cap)
    if path.exit_time is None:
        return path.times[-1], True
    return path.exit_time, path.truncated


def extinction_scaling(
    params: ModelParams,
    eta: float,
    ns: list[int],
    replicas: int,
    rng: np.random.Generator,
    *,
    slack: float = DEFAULT_SLACK,
    threads: int = 1,
    cap: int | None = None,
) -> ScalingReport:
    """Monte Carlo eta-exit times of Z for each N, started at min(x_inf, z_N).

    A size whose ceiling z_N is not above eta (or too small for Z to exist) is
    kept as an infeasible row and marks the report partial.

    Raises:
        GuardViolation: If a + b >= 1
        ArgumentError: If replicas < 1, ns is empty or no N is feasible
    """
    if params.a + params.b >= 1.0:
        raise GuardViolation(f"extinction scaling needs a + b < 1 (got {params.a + params.b:.6g})")
    if replicas < 1:
        raise ArgumentError(f"replicas must be at least 1, got {replicas}")
    if not ns:
        raise ArgumentError("ns must not be empty")
    config = LdpConfig.from_params(params, eta)
    bounds = quasi_potential_bounds(config, params)
    cap = cap or get_settings().aux_jump_cap
    seed = int(rng.integers(2**63))

    rows = []
    for n in sorted(set(ns)):
        sized = params.with_n(n)
        try:
            aux = AuxParams.build(sized)
        except ConstructionError as exc:
            logger.warning(f"N={n}: skipped, {exc}")
            rows.append(ScalingRow.infeasible(n))
            continue
        z0 = min(config.x_inf, aux.z_n)
        if z0 <= eta:
            logger.warning(f"N={n}: skipped, start min(x_inf, z_N)={z0:.6g} is not above eta={eta:g}")
            rows.append(ScalingRow.infeasible(n))
            continue
        tasks = [(sized, aux, z0, eta, seed, n, replica, cap) for replica in range(replicas)]
        results = parallel_map(_exit_task, tasks, threads)
        samples = np.array([tau for tau, _ in results])
        truncated = sum(1 for _, cut in results if cut)
        if truncated:
            logger.warning(f"N={n}: {truncated} of {replicas} exit times truncated")
        mean = float(np.mean(samples))
        rows.append(
            ScalingRow(
                n=n,
                median=float(np.median(samples)),
                mean=mean,
                log_mean_over_n=math.log(mean) / n if mean > 0 else -math.inf,
                truncated=truncated,
                samples=samples,
            )
        )
        logger.info(f"N={n}: median {rows[-1].median:.6g}, (1/N) ln mean {rows[-1].log_mean_over_n:.6g}")
    if not any(row.feasible for row in rows):
        raise ArgumentError(f"no N in {sorted(set(ns))} has a ceiling z_N above eta={eta:g}; increase N")
    return ScalingReport(eta=eta, drain_time=config.drain_time, bounds=bounds, slack=slack, rows=rows)
