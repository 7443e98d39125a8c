"""Run configuration: a single JSON document validated by pydantic models.

Field names mirror the engine's domain types so a config is traceable to the
objects it builds. Unknown keys are rejected and validation errors carry
field paths.
"""

from __future__ import annotations

import json
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigError
from .model import (
    Butterfly,
    Call,
    CallSpread,
    Curve,
    MarketModel,
    Payoff,
    Put,
    SmoothedDigital,
    TabulatedCurve,
    VolatilityBand,
)
from .pde import DEFAULT_SLICE_CAP, PdeGrid
from .scenario import (
    ConstantControl,
    TableControl,
    ThresholdControl,
    TimeGrid,
    VolatilityControl,
    default_control_family,
)


class StrictBase(BaseModel):
    model_config = ConfigDict(extra="forbid")


CurveSpec = Union[float, List[Tuple[float, float]]]


class ModelSection(StrictBase):
    r: CurveSpec
    eta: CurveSpec
    mu: CurveSpec
    sigma: CurveSpec
    T: float = Field(gt=0)


class BandSection(StrictBase):
    v_low: float = Field(gt=0)
    v_high: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if self.v_high < self.v_low:
            raise ValueError("v_high must be >= v_low")
        return self


class CallPayoffCfg(StrictBase):
    kind: Literal["call"]
    strike: float = Field(gt=0)


class PutPayoffCfg(StrictBase):
    kind: Literal["put"]
    strike: float = Field(gt=0)


class CallSpreadCfg(StrictBase):
    kind: Literal["call_spread"]
    k_low: float = Field(gt=0)
    k_high: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.k_low < self.k_high:
            raise ValueError("need k_low < k_high")
        return self


class ButterflyCfg(StrictBase):
    kind: Literal["butterfly"]
    k_low: float = Field(gt=0)
    k_mid: float = Field(gt=0)
    k_high: float = Field(gt=0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.k_low < self.k_mid < self.k_high:
            raise ValueError("need k_low < k_mid < k_high")
        return self


class SmoothedDigitalCfg(StrictBase):
    kind: Literal["smoothed_digital"]
    strike: float = Field(gt=0)
    width: float = Field(gt=0)


class TabulatedCfg(StrictBase):
    kind: Literal["tabulated"]
    points: List[Tuple[float, float]] = Field(min_length=2)

    @model_validator(mode="after")
    def _increasing(self):
        xs = [x for x, _ in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("points must have strictly increasing abscissae")
        return self


PayoffCfg = Annotated[
    Union[CallPayoffCfg, PutPayoffCfg, CallSpreadCfg, ButterflyCfg, SmoothedDigitalCfg, TabulatedCfg],
    Field(discriminator="kind"),
]


class GridSection(StrictBase):
    n_x: int = Field(400, ge=16)
    n_t: Optional[int] = Field(None, ge=1)
    x_mode: Literal["log", "arithmetic"] = "log"
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    anchor_spot: Optional[float] = Field(None, gt=0)
    slice_cap: int = Field(DEFAULT_SLICE_CAP, ge=2)


class ConstantControlCfg(StrictBase):
    kind: Literal["constant"]
    v: float = Field(gt=0)


class ThresholdControlCfg(StrictBase):
    kind: Literal["threshold"]
    level: float = Field(gt=0)
    v_below: float = Field(gt=0)
    v_above: float = Field(gt=0)


class TableControlCfg(StrictBase):
    kind: Literal["table"]
    values: List[float] = Field(min_length=1)


ControlCfg = Annotated[
    Union[ConstantControlCfg, ThresholdControlCfg, TableControlCfg],
    Field(discriminator="kind"),
]


class McSection(StrictBase):
    n_paths: int = Field(100_000, ge=2)
    n_steps: int = Field(512, ge=1)
    seed: int = Field(1, ge=0)
    family: Optional[List[ControlCfg]] = None


class QuerySection(StrictBase):
    tau: float = Field(0.0, ge=0)
    spot: float = Field(gt=0)


class HedgeSection(StrictBase):
    side: Literal["super", "sub"] = "super"
    initial: Union[Literal["super", "sub"], float] = "super"
    margin: float = 0.0
    control: Optional[ControlCfg] = None  # None -> constant v_high (worst case)
    n_paths: int = Field(20_000, ge=2)


class ValidationSection(StrictBase):
    n_paths: int = Field(1000, ge=2)
    seed: int = Field(7, ge=0)
    sde_n_steps: int = Field(64, ge=1)
    drift_shift: float = 1.0
    initial_shift: float = 1.0
    ord_tol: Optional[float] = None
    qv_n_steps: int = Field(256, ge=2)
    refinement_levels: int = Field(3, ge=3)
    refinement_base_n_x: int = Field(100, ge=16)


class ConvergenceSection(StrictBase):
    levels: int = Field(4, ge=3)
    base_n_x: int = Field(100, ge=16)
    side: Literal["super", "sub"] = "super"


class SurfaceSection(StrictBase):
    side: Literal["super", "sub"] = "super"
    slice_stride: int = Field(1, ge=1)


class RunConfig(StrictBase):
    model: ModelSection
    band: BandSection
    payoff: PayoffCfg
    query: QuerySection
    grid: GridSection = GridSection()
    mc: McSection = McSection()
    hedge: HedgeSection = HedgeSection()
    validation: ValidationSection = ValidationSection()
    convergence: ConvergenceSection = ConvergenceSection()
    surface: SurfaceSection = SurfaceSection()
    threads: int = Field(1, ge=1)


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return RunConfig.model_validate(raw)


# ---------------------------------------------------------------------------
# Builders from config sections to engine objects
# ---------------------------------------------------------------------------


def build_model(cfg: RunConfig) -> MarketModel:
    m = cfg.model
    return MarketModel(
        r=Curve.from_spec(m.r),
        eta=Curve.from_spec(m.eta),
        mu=Curve.from_spec(m.mu),
        sigma=Curve.from_spec(m.sigma),
        T=m.T,
    )


def build_band(cfg: RunConfig) -> VolatilityBand:
    return VolatilityBand(v_low=cfg.band.v_low, v_high=cfg.band.v_high)


def build_payoff(cfg: RunConfig) -> Payoff:
    p = cfg.payoff
    if isinstance(p, CallPayoffCfg):
        return Call(p.strike)
    if isinstance(p, PutPayoffCfg):
        return Put(p.strike)
    if isinstance(p, CallSpreadCfg):
        return CallSpread(p.k_low, p.k_high)
    if isinstance(p, ButterflyCfg):
        return Butterfly(p.k_low, p.k_mid, p.k_high)
    if isinstance(p, SmoothedDigitalCfg):
        return SmoothedDigital(p.strike, p.width)
    xs = tuple(float(x) for x, _ in p.points)
    ys = tuple(float(y) for _, y in p.points)
    return TabulatedCurve(xs, ys)


def build_grid(cfg: RunConfig) -> PdeGrid:
    g = cfg.grid
    anchor = g.anchor_spot if g.anchor_spot is not None else cfg.query.spot
    return PdeGrid(
        anchor_spot=anchor,
        n_x=g.n_x,
        x_mode=g.x_mode,
        x_min=g.x_min,
        x_max=g.x_max,
        n_t=g.n_t,
        slice_cap=g.slice_cap,
    )


def build_time_grid(cfg: RunConfig) -> TimeGrid:
    return TimeGrid(0.0, cfg.model.T, cfg.mc.n_steps)


def build_control(spec: Union[ConstantControlCfg, ThresholdControlCfg, TableControlCfg]) -> VolatilityControl:
    if isinstance(spec, ConstantControlCfg):
        return ConstantControl(spec.v)
    if isinstance(spec, ThresholdControlCfg):
        return ThresholdControl(spec.level, spec.v_below, spec.v_above)
    return TableControl(tuple(spec.values))


def build_family(cfg: RunConfig, band: VolatilityBand) -> tuple[VolatilityControl, ...]:
    if cfg.mc.family is None:
        return default_control_family(band, cfg.query.spot)
    return tuple(build_control(c) for c in cfg.mc.family)


def build_hedge_control(cfg: RunConfig, band: VolatilityBand) -> VolatilityControl:
    if cfg.hedge.control is None:
        return ConstantControl(band.v_high)
    return build_control(cfg.hedge.control)
