"""Limit ODE of the dominated process: x' = -r x + G(x) f(x)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from model.params import ModelParams
from services.errors import ArgumentError, ConvergenceError

logger = logging.getLogger(__name__)

ODE_RTOL = 1e-10
ODE_ATOL = 1e-12


@dataclass(frozen=True)
class LimitOdeConfig:
    """Drift ingredients of the limit equation for one parameter set."""

    r: float
    eta: float
    kh: float
    lambda_star: float
    rate_at_u_star: float

    @classmethod
    def from_params(cls, params: ModelParams, eta: float = 0.0) -> LimitOdeConfig:
        if eta < 0:
            raise ArgumentError(f"eta must be non-negative, got {eta}")
        return cls(
            r=params.r,
            eta=eta,
            kh=params.kh,
            lambda_star=params.lambda_star,
            rate_at_u_star=params.rate_at_u_star,
        )

    @property
    def z_inf(self) -> float:
        return (1.0 - self.lambda_star / self.kh) * self.rate_at_u_star

    @property
    def x_inf(self) -> float:
        """Stable equilibrium lambda(u*) (1 - (lambda_star + r)/(kh)); not positive outside the supercritical regime."""
        return self.rate_at_u_star * (1.0 - (self.lambda_star + self.r) / self.kh)

    @property
    def supercritical(self) -> bool:
        return self.kh > self.lambda_star + self.r

    def G(self, x):
        return np.maximum(self.kh * (1.0 - np.asarray(x, dtype=float) / self.rate_at_u_star) - self.lambda_star, 0.0)

    def f(self, x):
        return np.maximum(self.eta, np.minimum(np.asarray(x, dtype=float), self.z_inf))

    def drift(self, x):
        return -self.r * np.asarray(x, dtype=float) + self.G(x) * self.f(x)


@dataclass(frozen=True)
class LimitPath:
    """Sampled solution of the limit ODE with its dense interpolant."""

    times: np.ndarray
    values: np.ndarray
    solution: object | None = None

    def at(self, t):
        if self.solution is None:
            return np.interp(t, self.times, self.values)
        return self.solution.sol(t)[0]


def limit_ode(
    x0: float,
    horizon: float,
    config: LimitOdeConfig,
    t_eval: np.ndarray | None = None,
    points: int = 2001,
) -> LimitPath:
    """Integrate the limit ODE with RK45 at relative tolerance 1e-10."""
    if x0 < 0:
        raise ArgumentError(f"x0 must be non-negative, got {x0}")
    if horizon < 0:
        raise ArgumentError(f"horizon must be non-negative, got {horizon}")
    if t_eval is None:
        t_eval = np.linspace(0.0, horizon, points)
    if horizon == 0:
        return LimitPath(times=np.array([0.0]), values=np.array([x0]))
    result = integrate.solve_ivp(
        lambda _t, y: config.drift(y),
        (0.0, horizon),
        [x0],
        method="RK45",
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
        t_eval=t_eval,
        dense_output=True,
    )
    if not result.success:
        raise ConvergenceError(f"limit ODE integration failed: {result.message}")
    logger.debug(f"limit ODE: {result.nfev} evaluations, x({horizon:g}) = {result.y[0, -1]:.12g}")
    return LimitPath(times=result.t, values=result.y[0], solution=result)
