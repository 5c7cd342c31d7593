"""Explicit constants attached to the limit process."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from engine.coupling import chaos_bound, chaos_rate_bound
from model.params import ModelParams
from services.errors import GuardViolation


@dataclass(frozen=True)
class ContractionRate:
    """Synchronous-coupling contraction over one period t0."""

    t0: float
    nu0: float
    kappa: float

    @property
    def contracting(self) -> bool:
        return self.kappa < 1.0

    def to_dict(self) -> dict:
        return {**asdict(self), "contracting": self.contracting}


def contraction_rate(params: ModelParams) -> ContractionRate:
    """t0 = ln(1 + a/(1-2a-b))/alpha, nu0 = kh lambda_star t0 + lambda_star, kappa = (nu0 t0 e^{nu0 t0})^{1/t0}.

    Raises:
        GuardViolation: If 2a + b >= 1
    """
    params.require_piecewise_linear("contraction_rate")
    a, b = params.a, params.b
    gap = 1.0 - 2.0 * a - b
    if gap <= 0:
        raise GuardViolation(f"contraction constants need 2a + b < 1 (got {2 * a + b:.6g})")
    t0 = math.log1p(a / gap) / params.alpha
    nu0 = params.kh * params.lambda_star * t0 + params.lambda_star
    product = nu0 * t0 * math.exp(nu0 * t0)
    return ContractionRate(t0=t0, nu0=nu0, kappa=product ** (1.0 / t0))


def instability_level(params: ModelParams) -> float:
    """Level gamma = (alpha/h) min(u*, (kh - alpha)/(2 Lip)) that the mean rate eventually exceeds from near 0.

    Raises:
        GuardViolation: If kh <= alpha
    """
    if params.kh <= params.alpha:
        raise GuardViolation(f"instability needs kh > alpha (kh={params.kh:g}, alpha={params.alpha:g})")
    return params.alpha / params.h * min(params.u_star, (params.kh - params.alpha) / (2.0 * params.lip))


@dataclass(frozen=True)
class ChaosBounds:
    """Right-hand sides of the two propagation-of-chaos estimates at time t."""

    t: float
    potentials: float
    mean_rate: float


def chaos_bounds(params: ModelParams, t: float) -> ChaosBounds:
    return ChaosBounds(t=t, potentials=chaos_bound(params, t), mean_rate=chaos_rate_bound(params, t))
