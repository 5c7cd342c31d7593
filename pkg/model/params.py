"""Physical parameters of the N-neuron system."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any

from model.rates import (
    GenericLipschitzRate,
    PiecewiseLinearRate,
    RateSpec,
    build_generic_rate,
    is_piecewise_linear,
)
from services.errors import ArgumentError, UnsupportedRateError


@dataclass(frozen=True)
class ModelParams:
    """Neuron count, leak rate, synaptic weight and spiking rate."""

    n: int
    alpha: float
    h: float
    rate: RateSpec

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ArgumentError(f"n must be an integer >= 1, got {self.n!r}")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ArgumentError(f"alpha must be positive and finite, got {self.alpha}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ArgumentError(f"h must be positive and finite, got {self.h}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ArgumentError("derived a and b must be finite")

    @classmethod
    def piecewise_linear(cls, n: int, alpha: float, h: float, k: float, lambda_star: float) -> ModelParams:
        return cls(n=n, alpha=alpha, h=h, rate=PiecewiseLinearRate(k=k, lambda_star=lambda_star))

    @classmethod
    def from_ab(cls, a: float, b: float, n: int, alpha: float = 1.0, k: float = 1.0) -> ModelParams:
        """Piecewise-linear parameters with prescribed a = alpha/(kh) and b = lambda_star/(kh)."""
        if a <= 0 or b <= 0:
            raise ArgumentError(f"a and b must be positive, got a={a}, b={b}")
        h = alpha / (k * a)
        return cls.piecewise_linear(n=n, alpha=alpha, h=h, k=k, lambda_star=b * k * h)

    @property
    def k(self) -> float:
        return self.rate.k

    @property
    def lambda_star(self) -> float:
        return self.rate.lambda_star

    @property
    def u_star(self) -> float:
        return self.rate.u_star

    @property
    def lip(self) -> float:
        return self.rate.lip

    @property
    def r(self) -> float:
        """Decay rate of the dominated process; equals alpha for the piecewise-linear rate."""
        if isinstance(self.rate, PiecewiseLinearRate):
            return self.alpha
        return self.rate.r

    @property
    def kh(self) -> float:
        return self.k * self.h

    @property
    def a(self) -> float:
        return self.alpha / self.kh

    @property
    def b(self) -> float:
        return self.lambda_star / self.kh

    @property
    def rate_at_u_star(self) -> float:
        """lambda(u*), the saturation level seen by the dominated process."""
        return self.rate.value(self.u_star)

    @property
    def is_piecewise_linear(self) -> bool:
        return is_piecewise_linear(self.rate)

    def require_piecewise_linear(self, operation: str) -> PiecewiseLinearRate:
        if not isinstance(self.rate, PiecewiseLinearRate):
            raise UnsupportedRateError(f"{operation} requires the piecewise-linear rate, got '{self.rate.kind}'")
        return self.rate

    def with_n(self, n: int) -> ModelParams:
        return replace(self, n=n)

    def with_h(self, h: float) -> ModelParams:
        return replace(self, h=h)

    def to_flat(self) -> dict[str, Any]:
        """Flat key-value form used by config files and summary echoes."""
        flat: dict[str, Any] = {
            "n": self.n,
            "alpha": self.alpha,
            "h": self.h,
            "rate.kind": self.rate.kind,
        }
        if isinstance(self.rate, PiecewiseLinearRate):
            flat["rate.k"] = self.rate.k
            flat["rate.lambda_star"] = self.rate.lambda_star
        else:
            flat.update(
                {
                    "rate.function": self.rate.name,
                    "rate.scale": self.rate.scale,
                    "rate.k": self.rate.k,
                    "rate.lambda_star": self.rate.lambda_star,
                    "rate.lip": self.rate.lip,
                    "rate.u_star": self.rate.u_star,
                    "rate.r": self.rate.r,
                }
            )
        return flat

    @classmethod
    def from_flat(cls, flat: dict[str, Any]) -> ModelParams:
        known = {
            "n",
            "alpha",
            "h",
            "rate.kind",
            "rate.k",
            "rate.lambda_star",
            "rate.function",
            "rate.scale",
            "rate.lip",
            "rate.u_star",
            "rate.r",
        }
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ArgumentError(f"Unknown model keys: {', '.join(unknown)}")
        try:
            kind = flat.get("rate.kind", "piecewise_linear")
            if kind == "piecewise_linear":
                rate: RateSpec = PiecewiseLinearRate(k=float(flat["rate.k"]), lambda_star=float(flat["rate.lambda_star"]))
            elif kind == "generic":
                rate = _generic_from_flat(flat)
            else:
                raise ArgumentError(f"Unknown rate.kind '{kind}'")
            return cls(n=int(flat["n"]), alpha=float(flat["alpha"]), h=float(flat["h"]), rate=rate)
        except KeyError as exc:
            raise ArgumentError(f"Missing model key: {exc.args[0]}") from exc


def _generic_from_flat(flat: dict[str, Any]) -> GenericLipschitzRate:
    scale = flat.get("rate.scale")
    lambda_star = float(flat["rate.lambda_star"])
    if scale is None:
        raise ArgumentError("generic rates need rate.scale (the family slope)")
    return build_generic_rate(
        str(flat["rate.function"]),
        k=float(scale),
        lambda_star=lambda_star,
        lip=float(flat["rate.lip"]) if "rate.lip" in flat else None,
        lower_k=float(flat["rate.k"]) if "rate.k" in flat else None,
        u_star=float(flat["rate.u_star"]) if "rate.u_star" in flat else None,
        r=float(flat["rate.r"]),
    )
