"""Hamiltonian and rate function of the clamped dominated process.

The clamped process jumps at rate N f(x) by G(x)/N and decays at rate r, so

    H(x, p) = f(x) (exp(G(x) p) - 1) - r x p,
    L(x, q) = f(x) Q((q + r x) / (G(x) f(x))),   Q(u) = u ln u - u + 1,

with L = +inf when q < -r x, and L(x, q) = 0 iff q = -r x once G(x) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from meanfield.limit_ode import LimitOdeConfig
from model.params import ModelParams
from services.errors import DomainError


def entropy_q(u):
    """Q(u) = u ln u - u + 1, with 0 ln 0 = 0."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise DomainError("Q is defined on u >= 0 only")
    value = special.xlogy(u_arr, u_arr) - u_arr + 1.0
    return float(value) if value.ndim == 0 else value


def drift_G(x, params: ModelParams):
    """G(x) = (kh (1 - x / lambda(u*)) - lambda_star)_+."""
    value = np.maximum(params.kh * (1.0 - np.asarray(x, dtype=float) / params.rate_at_u_star) - params.lambda_star, 0.0)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class LdpConfig:
    """Exit level eta together with the drift ingredients of the limit equation."""

    eta: float
    ode: LimitOdeConfig

    @classmethod
    def from_params(cls, params: ModelParams, eta: float) -> LdpConfig:
        """Raises DomainError unless 0 < eta < x_inf."""
        ode = LimitOdeConfig.from_params(params, eta=eta)
        if not ode.supercritical:
            raise DomainError(
                f"no positive equilibrium: need kh > lambda_star + r "
                f"(kh={ode.kh:g}, lambda_star + r={ode.lambda_star + ode.r:g})"
            )
        if not 0.0 < eta < ode.x_inf:
            raise DomainError(f"eta must lie in (0, x_inf={ode.x_inf:.6g}), got {eta}")
        return cls(eta=eta, ode=ode)

    @property
    def r(self) -> float:
        return self.ode.r

    @property
    def z_inf(self) -> float:
        return self.ode.z_inf

    @property
    def x_inf(self) -> float:
        return self.ode.x_inf

    @property
    def drain_time(self) -> float:
        return drain_time(self)

    def f(self, x):
        return self.ode.f(x)

    def G(self, x):
        return self.ode.G(x)


def drain_time(config: LdpConfig) -> float:
    """S = (ln z_inf - ln eta) / r, the longest time the clamped process needs to decay from z_inf to eta."""
    return (math.log(config.z_inf) - math.log(config.eta)) / config.r


def hamiltonian(x, p, config: LdpConfig):
    x_arr = np.asarray(x, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    value = config.f(x_arr) * np.expm1(config.G(x_arr) * p_arr) - config.r * x_arr * p_arr
    return float(value) if value.ndim == 0 else value


def rate_l(x, q, config: LdpConfig):
    """L(x, q); +inf outside the reachable velocities."""
    x_arr, q_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(q, dtype=float))
    if np.any(x_arr < 0):
        raise DomainError("L is defined for x >= 0 only")
    floor = -config.r * x_arr
    jump_speed = config.G(x_arr) * config.f(x_arr)
    out = np.full(x_arr.shape, math.inf)
    frozen = jump_speed <= 0
    out[frozen & (q_arr == floor)] = 0.0
    active = ~frozen & (q_arr >= floor)
    if np.any(active):
        fx = config.f(x_arr[active])
        out[active] = fx * entropy_q((q_arr[active] - floor[active]) / jump_speed[active])
    return float(out) if out.ndim == 0 else out
