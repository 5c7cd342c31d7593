"""Experiment definitions: strict TOML sections with dotted command-line overrides."""

from __future__ import annotations

import tomllib
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config.settings import get_settings
from model.params import ModelParams
from services.errors import ArgumentError

Experiment = Literal["simulate", "extinction", "exit-times", "meanfield", "phase", "ldp", "couple"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(StrictModel):
    """Parameters of the finite system."""

    n: int = Field(default=100, ge=1)
    alpha: float = Field(default=1.0, gt=0)
    h: float = Field(default=10.0, gt=0)
    k: float = Field(default=1.0, gt=0)
    lambda_star: float = Field(default=1.0, gt=0)
    rate: Literal["piecewise_linear", "tanh", "rational"] = "piecewise_linear"
    lip: float | None = Field(default=None, gt=0)
    u_star: float | None = Field(default=None, gt=0)
    r: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def check_generic(self) -> ModelSection:
        if self.rate != "piecewise_linear" and self.r is None:
            raise ValueError("generic rates need model.r (decay rate of the dominated process)")
        return self

    def to_params(self) -> ModelParams:
        if self.rate == "piecewise_linear":
            return ModelParams.piecewise_linear(
                n=self.n, alpha=self.alpha, h=self.h, k=self.k, lambda_star=self.lambda_star
            )
        flat: dict[str, Any] = {
            "n": self.n,
            "alpha": self.alpha,
            "h": self.h,
            "rate.kind": "generic",
            "rate.function": self.rate,
            "rate.scale": self.k,
            "rate.lambda_star": self.lambda_star,
            "rate.r": self.r,
        }
        if self.lip is not None:
            flat["rate.lip"] = self.lip
        if self.u_star is not None:
            flat["rate.u_star"] = self.u_star
        return ModelParams.from_flat(flat)


class InitSection(StrictModel):
    """Initial potentials: i.i.d. uniform on [low, high], constant, or drawn from the invariant density."""

    kind: Literal["uniform", "constant", "density"] = "uniform"
    low: float = Field(default=0.0, ge=0)
    high: float = Field(default=2.0, ge=0)
    value: float = Field(default=1.0, ge=0)

    @model_validator(mode="after")
    def check_range(self) -> InitSection:
        if self.kind == "uniform" and self.high < self.low:
            raise ValueError("init.high must be >= init.low")
        return self


class SimulateSection(StrictModel):
    horizon: float = Field(default=10.0, ge=0)
    observe_step: float = Field(default=0.1, gt=0)
    lazy: bool = False
    init: InitSection = Field(default_factory=InitSection)


class ExtinctionSection(StrictModel):
    replicas: int = Field(default=100, ge=1)
    cap: int | None = Field(default=None, ge=1)
    init: InitSection = Field(default_factory=InitSection)


class EpsSection(StrictModel):
    s1: float = Field(gt=0)
    s2: float = Field(gt=0)
    replicas: int = Field(default=100, ge=1)


class ExitTimesSection(StrictModel):
    """Exit domain and ensemble.

    ``level_set`` is {lambda_bar >= gamma} with trap level ``delta``; ``band`` is
    |lambda_bar - p_star| <= delta with trap half-width ``gamma``.
    """

    domain: Literal["level_set", "band"] = "level_set"
    gamma: float | None = Field(default=None, gt=0)
    delta: float | None = Field(default=None, gt=0)
    p_star: float | None = Field(default=None, gt=0)
    replicas: int = Field(default=100, ge=100)
    horizon: float | None = Field(default=None, gt=0)
    burn_in: float = Field(default=0.0, ge=0)
    inits: list[InitSection] = Field(
        default_factory=lambda: [InitSection(), InitSection(kind="constant", value=1.0)], min_length=1
    )
    eps: EpsSection | None = None


class MeanfieldSection(StrictModel):
    method: Literal["split", "weighted", "closed"] = "split"
    table_points: int = Field(default=2001, ge=16)
    ode_x0: float = Field(default=0.01, ge=0)
    ode_horizon: float = Field(default=20.0, gt=0)
    picard: bool = False
    picard_horizon: float = Field(default=5.0, gt=0)
    grid_step: float | None = Field(default=None, gt=0)
    mc_replicas: int = Field(default=2000, ge=2)


class PhaseSection(StrictModel):
    resolution: int = Field(default=101, ge=2)
    a_max: float = Field(default=1.5, gt=0)
    b_max: float = Field(default=1.0, gt=0)
    boundary_points: int = Field(default=200, ge=2)


class LdpSection(StrictModel):
    eta: float | None = Field(default=None, gt=0)
    ns: list[int] = Field(default_factory=list)
    replicas: int = Field(default=200, ge=1)
    path_step: float = Field(default=1e-4, gt=0)


class CoupleSection(StrictModel):
    kind: Literal["u_z", "chaos", "synchronous"] = "u_z"
    horizon: float = Field(default=50.0, ge=0)
    runs: int = Field(default=1, ge=1)
    observe_step: float | None = Field(default=None, gt=0)
    init: InitSection = Field(default_factory=InitSection)
    init_tilde: InitSection = Field(default_factory=lambda: InitSection(kind="constant", value=1.0))
    drift_n: int = Field(default=5000, ge=1)


class RunConfig(StrictModel):
    """One experiment; ``seed`` is echoed into every summary."""

    experiment: Experiment
    seed: int = Field(default_factory=lambda: get_settings().default_seed, ge=0, lt=2**64)
    threads: int = Field(default_factory=lambda: get_settings().threads, ge=1)
    out: Path = Field(default_factory=lambda: get_settings().output_dir)
    canonical: bool = False
    model: ModelSection = Field(default_factory=ModelSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    extinction: ExtinctionSection = Field(default_factory=ExtinctionSection)
    exit_times: ExitTimesSection = Field(default_factory=ExitTimesSection)
    meanfield: MeanfieldSection = Field(default_factory=MeanfieldSection)
    phase: PhaseSection = Field(default_factory=PhaseSection)
    ldp: LdpSection = Field(default_factory=LdpSection)
    couple: CoupleSection = Field(default_factory=CoupleSection)

    def echo(self) -> dict:
        return self.model_dump(mode="json")


def parse_override(item: str) -> tuple[list[str], Any]:
    """``section.key=value`` (leading dashes allowed); the value is read as a TOML literal, else as a string."""
    text = item.lstrip("-")
    if "=" not in text:
        raise ArgumentError(f"override '{item}' must look like --section.key=value")
    key, raw = text.split("=", 1)
    path = [part.replace("-", "_") for part in key.split(".") if part]
    if not path:
        raise ArgumentError(f"override '{item}' has an empty key")
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw
    return path, value


def _apply(data: dict, path: list[str], value: Any) -> None:
    node = data
    for part in path[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ArgumentError(f"override path '{'.'.join(path)}' crosses the scalar '{part}'")
        node = child
    node[path[-1]] = value


def load_run_config(
    path: Path | None,
    overrides: list[str] | None = None,
    **values: Any,
) -> RunConfig:
    """File sections, then ``values`` (global flags), then dotted overrides.

    Raises:
        ArgumentError: On unreadable files, unknown keys or invalid values
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ArgumentError(f"cannot read config file {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ArgumentError(f"config file {path} is not valid TOML: {exc}") from exc
    for key, value in values.items():
        if value is not None:
            data[key] = value
    for item in overrides or []:
        _apply(data, *parse_override(item))
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ArgumentError(f"invalid run config: {exc}") from exc
