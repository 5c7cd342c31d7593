"""Spiking-rate functions and the registry of named generic rates."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from services.errors import ArgumentError, ConstructionError, DomainError


@dataclass(frozen=True)
class PiecewiseLinearRate:
    """The rate u -> min(k*u, lambda_star)."""

    k: float
    lambda_star: float
    kind: str = field(default="piecewise_linear", init=False)

    def __post_init__(self) -> None:
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ConstructionError(f"rate.k must be positive and finite, got {self.k}")
        if not (self.lambda_star > 0 and math.isfinite(self.lambda_star)):
            raise ConstructionError(f"rate.lambda_star must be positive and finite, got {self.lambda_star}")

    @property
    def u_star(self) -> float:
        """Potential where the rate saturates."""
        return self.lambda_star / self.k

    @property
    def lip(self) -> float:
        return self.k

    def value(self, u: float) -> float:
        ku = self.k * u
        return ku if ku < self.lambda_star else self.lambda_star

    def values(self, u: np.ndarray) -> np.ndarray:
        return np.minimum(self.k * u, self.lambda_star)


@dataclass(frozen=True)
class GenericLipschitzRate:
    """A black-box rate with user-asserted constants.

    The constants (lambda_star, lip, k, u_star, r) are assertions about ``func``;
    only the sampled checks in ``validate`` are performed.
    """

    func: Callable[[float], float]
    lambda_star: float
    lip: float
    k: float
    u_star: float
    r: float
    name: str = "custom"
    scale: float | None = None
    kind: str = field(default="generic", init=False)

    def __post_init__(self) -> None:
        for attr in ("lambda_star", "lip", "k", "u_star", "r"):
            value = getattr(self, attr)
            if not (value > 0 and math.isfinite(value)):
                raise ConstructionError(f"rate.{attr} must be positive and finite, got {value}")
        if self.k > self.lip:
            raise ConstructionError(f"rate.k ({self.k}) cannot exceed rate.lip ({self.lip})")
        self.validate()

    def validate(self, upper: float | None = None, points: int = 2001) -> None:
        """Sampled check of lambda(0)=0, monotonicity and the lambda_star bound."""
        if abs(self.func(0.0)) > 1e-14:
            raise ConstructionError(f"generic rate '{self.name}' must vanish at 0")
        upper = upper if upper is not None else 20.0 * max(self.u_star, self.lambda_star / self.lip)
        grid = np.linspace(0.0, upper, points)
        samples = np.array([self.func(float(u)) for u in grid])
        if np.any(np.diff(samples) < -1e-12):
            raise ConstructionError(f"generic rate '{self.name}' is not non-decreasing on [0, {upper}]")
        if np.any(samples > self.lambda_star * (1 + 1e-12)):
            raise ConstructionError(f"generic rate '{self.name}' exceeds lambda_star={self.lambda_star}")
        slopes = np.diff(samples) / np.diff(grid)
        if np.any(slopes > self.lip * (1 + 1e-6)):
            raise ConstructionError(f"generic rate '{self.name}' is steeper than lip={self.lip}")

    def value(self, u: float) -> float:
        return float(self.func(u))

    def values(self, u: np.ndarray) -> np.ndarray:
        return np.fromiter((self.func(float(x)) for x in np.ravel(u)), dtype=float, count=np.size(u)).reshape(
            np.shape(u)
        )


RateSpec = PiecewiseLinearRate | GenericLipschitzRate


def rate_eval(spec: RateSpec, u: float) -> float:
    """Return lambda(u) for a non-negative potential."""
    if u < 0:
        raise DomainError(f"potential must be non-negative, got {u}")
    return spec.value(u)


def is_piecewise_linear(spec: RateSpec) -> bool:
    return isinstance(spec, PiecewiseLinearRate)


# Named generic rates, so config files can refer to them
_registry: dict[str, Callable[[float, float], Callable[[float], float]]] = {}


def register_rate_function(name: str, factory: Callable[[float, float], Callable[[float], float]]) -> None:
    """Register a rate family.

    Args:
        name: Identifier used as ``rate.function`` in config files
        factory: Maps (k, lambda_star) to a callable u -> rate
    """
    _registry[name.lower()] = factory


def get_rate_function(name: str, k: float, lambda_star: float) -> Callable[[float], float]:
    """Instantiate a registered rate family.

    Raises:
        ArgumentError: If the name is unknown
    """
    factory = _registry.get(name.lower())
    if factory is None:
        available = ", ".join(sorted(_registry))
        raise ArgumentError(f"Unknown rate function '{name}'. Available: {available}")
    return factory(k, lambda_star)


def list_rate_functions() -> list[str]:
    return sorted(_registry)


def _tanh(u: float, k: float, lambda_star: float) -> float:
    return lambda_star * math.tanh(k * u / lambda_star)


def _rational(u: float, k: float, lambda_star: float) -> float:
    return lambda_star * k * u / (lambda_star + k * u)


# partials of module-level functions stay picklable for worker processes
def _tanh_rate(k: float, lambda_star: float) -> Callable[[float], float]:
    return partial(_tanh, k=k, lambda_star=lambda_star)


def _rational_rate(k: float, lambda_star: float) -> Callable[[float], float]:
    return partial(_rational, k=k, lambda_star=lambda_star)


register_rate_function("tanh", _tanh_rate)
register_rate_function("rational", _rational_rate)


def build_generic_rate(
    name: str,
    *,
    k: float,
    lambda_star: float,
    lip: float | None = None,
    lower_k: float | None = None,
    u_star: float | None = None,
    r: float,
) -> GenericLipschitzRate:
    """Build a registered generic rate with its asserted constants.

    ``k`` and ``lambda_star`` parametrize the family; ``lower_k`` and ``u_star``
    default to the slope bound k/2 on [0, lambda_star/(3k)], which holds for both
    built-in families.
    """
    func = get_rate_function(name, k, lambda_star)
    return GenericLipschitzRate(
        func=func,
        lambda_star=lambda_star,
        lip=lip if lip is not None else k,
        k=lower_k if lower_k is not None else k / 2.0,
        u_star=u_star if u_star is not None else lambda_star / (3.0 * k),
        r=r,
        name=name,
        scale=k,
    )
