"""Sets of states described through the mean rate lambda_bar."""

from __future__ import annotations

import math
from dataclasses import dataclass

from services.errors import ArgumentError


@dataclass(frozen=True)
class Region:
    """Closed interval [low, high] of mean rates."""

    low: float = 0.0
    high: float = math.inf

    def __post_init__(self) -> None:
        if not 0.0 <= self.low <= self.high:
            raise ArgumentError(f"region needs 0 <= low <= high, got [{self.low}, {self.high}]")

    def contains(self, lambda_bar: float) -> bool:
        return self.low <= lambda_bar <= self.high

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high if math.isfinite(self.high) else None}


@dataclass(frozen=True)
class LevelSet:
    """D = {lambda_bar >= gamma}, with trap K = {lambda_bar >= delta}."""

    gamma: float
    delta: float | None = None

    kind = "level_set"

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise ArgumentError(f"gamma must be positive, got {self.gamma}")
        if self.delta is not None and not self.gamma < self.delta:
            raise ArgumentError(f"level set needs gamma < delta, got gamma={self.gamma}, delta={self.delta}")

    @property
    def domain(self) -> Region:
        return Region(self.gamma)

    @property
    def trap(self) -> Region:
        return Region(self.delta) if self.delta is not None else self.domain

    def describe(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "delta": self.delta}


@dataclass(frozen=True)
class Band:
    """D = {|lambda_bar - p_star| <= delta}, with trap K = {|lambda_bar - p_star| <= gamma}."""

    p_star: float
    delta: float
    gamma: float | None = None

    kind = "band"

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < self.p_star:
            raise ArgumentError(f"band needs 0 < delta < p_star, got delta={self.delta}, p_star={self.p_star}")
        if self.gamma is not None and not 0.0 < self.gamma < self.delta:
            raise ArgumentError(f"band needs 0 < gamma < delta, got gamma={self.gamma}, delta={self.delta}")

    @property
    def domain(self) -> Region:
        return Region(self.p_star - self.delta, self.p_star + self.delta)

    @property
    def trap(self) -> Region:
        if self.gamma is None:
            return self.domain
        return Region(self.p_star - self.gamma, self.p_star + self.gamma)

    def describe(self) -> dict:
        return {"kind": self.kind, "p_star": self.p_star, "delta": self.delta, "gamma": self.gamma}


DomainSpec = LevelSet | Band
