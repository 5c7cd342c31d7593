"""Statistics for exit-time samples: KS against Exp(1), Wilson intervals, beta calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from services.errors import ArgumentError, CalibrationError

BETA_BRACKET = (0.3, 0.7)


def ks_exponential(samples) -> float:
    """Exact Kolmogorov-Smirnov distance between the sample law and Exp(1).

    For sorted t_(1..n): max_i max(|i/n - F(t_(i))|, |(i-1)/n - F(t_(i))|), F(t) = 1 - exp(-t).
    """
    t = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if t.size == 0:
        raise ArgumentError("ks_exponential needs a non-empty sample")
    if np.any(t < 0):
        raise ArgumentError("exit times must be non-negative")
    cdf = -np.expm1(-t)
    n = t.size
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(upper - cdf)), np.max(np.abs(lower - cdf))))


@dataclass(frozen=True)
class ProbabilityEstimate:
    """Empirical proportion with its Wilson interval."""

    value: float
    low: float
    high: float
    successes: int
    trials: int

    def to_dict(self) -> dict:
        return {"value": self.value, "low": self.low, "high": self.high, "k": self.successes, "n": self.trials}


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> ProbabilityEstimate:
    if trials < 1:
        raise ArgumentError(f"trials must be at least 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ArgumentError(f"successes must lie in [0, {trials}], got {successes}")
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return ProbabilityEstimate(
        value=successes / trials,
        low=float(ci.low),
        high=float(ci.high),
        successes=successes,
        trials=trials,
    )


@dataclass(frozen=True)
class BetaCalibration:
    """Time beta whose empirical survival lies inside the calibration bracket."""

    beta: float
    survival: ProbabilityEstimate

    def to_dict(self) -> dict:
        return {"beta": self.beta, "survival": self.survival.to_dict()}


def calibrate_beta_from_samples(
    samples,
    bracket: tuple[float, float] = BETA_BRACKET,
    confidence: float = 0.95,
) -> BetaCalibration:
    """Empirical time t with P(tau > t) in ``bracket``, chosen closest to 1/2.

    Raises:
        CalibrationError: If the empirical survival never enters the bracket
    """
    tau = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if tau.size == 0:
        raise ArgumentError("calibration needs a non-empty sample")
    n = tau.size
    candidates = np.unique(tau)
    # survival just after each candidate time
    survivors = n - np.searchsorted(tau, candidates, side="right")
    survival = survivors / n
    inside = (survival >= bracket[0]) & (survival <= bracket[1])
    if not np.any(inside):
        raise CalibrationError(
            f"empirical survival never enters [{bracket[0]}, {bracket[1]}] over {n} samples"
        )
    idx = np.flatnonzero(inside)
    best = idx[np.argmin(np.abs(survival[idx] - 0.5))]
    return BetaCalibration(
        beta=float(candidates[best]),
        survival=wilson_interval(int(survivors[best]), n, confidence),
    )
