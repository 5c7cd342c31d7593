"""Bounds on the cost of reaching eta from x_inf, the value W0, and path actions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from config.settings import get_settings
from ldp.rate_function import LdpConfig, drift_G, entropy_q, rate_l
from meanfield.limit_ode import LimitOdeConfig
from model.params import ModelParams
from services.errors import ArgumentError, ConsistencyError, DomainError

logger = logging.getLogger(__name__)

W0_CHECK_TOL = 1e-8


@dataclass(frozen=True)
class QuasiPotentialBounds:
    eta: float
    lower: float
    upper: float
    lower_closed_form: float

    def to_dict(self) -> dict:
        return {"eta": self.eta, "lower": self.lower, "upper": self.upper, "lower_closed_form": self.lower_closed_form}


def _log_integral(w: float) -> float:
    """F(w) = w - ln w - ln(w)^2 / 2, an antiderivative of Q(1/w)."""
    log_w = math.log(w)
    return w - log_w - 0.5 * log_w * log_w


def lower_bound_closed_form(eta: float, params: ModelParams, r: float | None = None) -> float:
    """(1/r) int_eta^{x_inf} Q(r / G(z)) dz = (lambda(u*)/kh) (F(G(eta)/r) - F(1)), G being affine there."""
    r = params.r if r is None else r
    return params.rate_at_u_star / params.kh * (_log_integral(float(drift_G(eta, params)) / r) - 1.0)


def _entropy_integral(lo: float, hi: float, params: ModelParams, r: float, quad_tol: float) -> float:
    value, _ = integrate.quad(
        lambda z: entropy_q(r / float(drift_G(z, params))),
        lo,
        hi,
        epsabs=quad_tol,
        epsrel=quad_tol,
        limit=200,
    )
    return value / r


def quasi_potential_bounds(
    config: LdpConfig, params: ModelParams, quad_tol: float | None = None
) -> QuasiPotentialBounds:
    """(x_inf - eta)/r >= V >= (1/r) int_eta^{x_inf} Q(r/G(z)) dz.

    Raises:
        DomainError: If eta >= x_inf
        ConsistencyError: If the quadrature lower bound is not in (0, upper]
    """
    quad_tol = quad_tol or get_settings().quad_tol
    x_inf = config.x_inf
    if config.eta >= x_inf:
        raise DomainError(f"eta={config.eta:g} must be below x_inf={x_inf:.6g}")
    upper = (x_inf - config.eta) / config.r
    lower = _entropy_integral(config.eta, x_inf, params, config.r, quad_tol)
    if not 0.0 < lower <= upper:
        raise ConsistencyError(f"quasi-potential bounds out of order: lower={lower!r}, upper={upper!r}")
    return QuasiPotentialBounds(
        eta=config.eta,
        lower=lower,
        upper=upper,
        lower_closed_form=lower_bound_closed_form(config.eta, params, config.r),
    )


def w_zero(params: ModelParams, quad_tol: float | None = None) -> float:
    """W0 = (lambda(u*)/kh) (w - 1 - ln w - ln(w)^2/2) with w = (kh - lambda_star)/r.

    Raises:
        DomainError: If kh <= lambda_star + r
        ConsistencyError: If the value and its integral form differ by more than 1e-8
    """
    r = params.r
    if params.kh <= params.lambda_star + r:
        raise DomainError(
            f"W0 needs kh > lambda_star + r (kh={params.kh:g}, lambda_star + r={params.lambda_star + r:g})"
        )
    ratio = (params.kh - params.lambda_star) / r
    value = params.rate_at_u_star / params.kh * (_log_integral(ratio) - 1.0)
    if not value > 0:
        raise ConsistencyError(f"W0 must be positive, got {value!r}")
    x_inf = LimitOdeConfig.from_params(params).x_inf
    check = _entropy_integral(0.0, x_inf, params, r, quad_tol or get_settings().quad_tol)
    if abs(check - value) > W0_CHECK_TOL:
        raise ConsistencyError(f"W0 closed form {value!r} disagrees with quadrature {check!r}")
    return value


@dataclass(frozen=True)
class PathSample:
    """Rate path on a grid; velocities by central differences, one-sided at the ends."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ArgumentError("path times and values must be 1-D arrays of equal length")
        if np.any(np.diff(times) <= 0):
            raise ArgumentError("path times must be strictly increasing")
        if np.any(values < 0):
            raise ArgumentError("path values must be non-negative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def step(self) -> float:
        """Largest grid step."""
        return float(np.max(np.diff(self.times))) if self.times.size > 1 else 0.0

    def derivative(self) -> np.ndarray:
        return np.gradient(self.values, self.times)


def action_of_path(path: PathSample, config: LdpConfig) -> float:
    """Trapezoidal int L(x_s, x'_s) ds over the path; +inf if any node costs +inf.

    Finite differences of a pure-decay stretch land slightly below -r x; a
    velocity within r|x| * r * dt of that floor is taken as the floor itself.
    """
    if path.times.size < 3:
        raise ArgumentError(f"action_of_path needs at least 3 nodes, got {path.times.size}")
    x = path.values
    q = path.derivative()
    steps = np.diff(path.times)
    local_step = np.maximum(np.concatenate([[steps[0]], steps]), np.concatenate([steps, [steps[-1]]]))
    floor = -config.r * x
    slack = config.r * np.abs(x) * config.r * local_step
    q = np.where((q < floor) & (q >= floor - slack), floor, q)
    cost = rate_l(x, q, config)
    if not np.all(np.isfinite(cost)):
        logger.debug(f"infinite cost at t={path.times[np.argmax(~np.isfinite(cost))]:.6g}")
        return math.inf
    return float(integrate.trapezoid(cost, path.times))
