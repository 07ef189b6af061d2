"""Run configuration: a single JSON document validated against a strict schema.

Unknown keys are rejected at every level. Field and vector specs are tagged
unions selected by ``kind``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .chart_sde import FrameState, orthonormal_frame_at
from .errors import ConfigError
from .fields import (AmbientConstant, AmbientRotation, ChartConstantTensor, ChartConstantVector, IdentityTensor,
                     ScaledIdentity, ZeroTensor, ZeroVector)
from .geometry.models import KINDS, ChartPoint, ManifoldModel, make_model
from .integrator import EventSwitch, GridSwitch, NoSwitch, StepScheme

MIN_FLOW_PATHS = 1000
SUITES = ("invariants", "generator", "flow", "exit", "laplacian", "transition", "all")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSpec(_Strict):
    kind: Literal[KINDS]  # type: ignore[valid-type]
    d: int = Field(2, ge=1)
    r: float = Field(0.9, gt=0.0, lt=1.0)
    K: float | None = Field(None, ge=1.0)


class IdentitySpec(_Strict):
    kind: Literal["identity"] = "identity"


class ScaledIdentitySpec(_Strict):
    kind: Literal["scaled_identity"]
    scale: float = 1.0
    amplitude: float = Field(0.0, gt=-1.0, lt=1.0)
    axis: int = Field(0, ge=0)


class ChartConstantTensorSpec(_Strict):
    kind: Literal["chart_constant"]
    matrix: list[list[float]]


class ZeroTensorSpec(_Strict):
    kind: Literal["zero"]


ASpec = Annotated[Union[IdentitySpec, ScaledIdentitySpec, ChartConstantTensorSpec, ZeroTensorSpec],
                  Field(discriminator="kind")]


class ZeroVectorSpec(_Strict):
    kind: Literal["zero"] = "zero"


class ConstantVectorSpec(_Strict):
    kind: Literal["constant"]
    vector: list[float]


class RotationSpec(_Strict):
    kind: Literal["rotation"]
    omega: float = 1.0
    plane: tuple[int, int] = (0, 1)


class ChartConstantVectorSpec(_Strict):
    kind: Literal["chart_constant"]
    vector: list[float]


BSpec = Annotated[Union[ZeroVectorSpec, ConstantVectorSpec, RotationSpec, ChartConstantVectorSpec],
                  Field(discriminator="kind")]


class FieldsSpec(_Strict):
    a_field: ASpec = IdentitySpec()
    b_field: BSpec = ZeroVectorSpec()


class EventSpec(_Strict):
    kind: Literal["event"] = "event"
    threshold: float | None = Field(None, gt=0.0, lt=1.0)


class GridSpec(_Strict):
    kind: Literal["grid"]
    m: int | None = Field(None, ge=1)


class NoSwitchSpec(_Strict):
    kind: Literal["none"]


SwitchSpec = Annotated[Union[EventSpec, GridSpec, NoSwitchSpec], Field(discriminator="kind")]


class SimSpec(_Strict):
    T: float = Field(1.0, gt=0.0)
    h: float = Field(1e-3, gt=0.0)
    scheme: StepScheme = StepScheme.STRAT_HEUN
    switch: SwitchSpec = EventSpec()
    n_paths: int = Field(1, ge=1)
    save_stride: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _step_fits(self):
        if self.h > self.T:
            raise ValueError("h must satisfy 0 < h <= T")
        n = self.T / self.h
        if abs(n - round(n)) > 1e-9 * n:
            raise ValueError("T must be an integer multiple of h")
        return self


class InitSpec(_Strict):
    chart: int = 0
    xi: list[float] | None = None
    frame: Literal["auto"] | list[list[float]] = "auto"


class RunConfig(_Strict):
    model: ModelSpec
    fields: FieldsSpec = FieldsSpec()
    sim: SimSpec = SimSpec()
    init: InitSpec = InitSpec()
    seed: int = Field(0, ge=0, lt=2 ** 64)
    output_dir: str = "out"

    @model_validator(mode="after")
    def _dimensions(self):
        d = self.model.d
        if self.init.xi is not None and len(self.init.xi) != d:
            raise ValueError(f"init.xi must have length d = {d}")
        if self.init.frame != "auto" and (len(self.init.frame) != d or any(len(r) != d for r in self.init.frame)):
            raise ValueError(f"init.frame must be {d} x {d}")
        a = self.fields.a_field
        if isinstance(a, ChartConstantTensorSpec) and np.shape(a.matrix) != (d, d):
            raise ValueError(f"fields.a_field.matrix must be {d} x {d}")
        b = self.fields.b_field
        if isinstance(b, ChartConstantVectorSpec) and len(b.vector) != d:
            raise ValueError(f"fields.b_field.vector must have length d = {d}")
        return self

    # -- builders ----------------------------------------------------------

    def build_model(self) -> ManifoldModel:
        m = self.model
        try:
            return make_model(m.kind, d=m.d, r=m.r, K=m.K)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None

    def build_a(self, model: ManifoldModel):
        a = self.fields.a_field
        if isinstance(a, IdentitySpec):
            return IdentityTensor()
        if isinstance(a, ScaledIdentitySpec):
            if a.axis >= model.ambient_dim:
                raise ConfigError(f"fields.a_field.axis must be below the ambient dimension {model.ambient_dim}")
            return ScaledIdentity(a.scale, a.amplitude, a.axis)
        if isinstance(a, ChartConstantTensorSpec):
            return ChartConstantTensor(tuple(map(tuple, a.matrix)))
        return ZeroTensor()

    def build_b(self, model: ManifoldModel):
        b = self.fields.b_field
        if isinstance(b, ConstantVectorSpec):
            if len(b.vector) != model.ambient_dim:
                raise ConfigError(f"fields.b_field.vector must have ambient length {model.ambient_dim}")
            return AmbientConstant(tuple(b.vector))
        if isinstance(b, RotationSpec):
            if max(b.plane) >= model.ambient_dim or b.plane[0] == b.plane[1]:
                raise ConfigError("fields.b_field.plane must name two distinct ambient axes")
            return AmbientRotation(b.omega, tuple(b.plane))
        if isinstance(b, ChartConstantVectorSpec):
            return ChartConstantVector(tuple(b.vector))
        return ZeroVector()

    def build_policy(self):
        s = self.sim.switch
        if isinstance(s, GridSpec):
            return GridSwitch(s.m)
        if isinstance(s, NoSwitchSpec):
            return NoSwitch()
        return EventSwitch(s.threshold)

    def build_init(self, model: ManifoldModel) -> FrameState:
        xi = np.zeros(model.d) if self.init.xi is None else np.asarray(self.init.xi, dtype=float)
        try:
            model.validate_chart(self.init.chart)
            if self.init.frame == "auto":
                return orthonormal_frame_at(model, ChartPoint(self.init.chart, xi))
            if np.linalg.norm(xi) >= 1.0:
                raise ValueError("init.xi lies outside the unit ball")
            return FrameState(self.init.chart, xi, np.asarray(self.init.frame, dtype=float))
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"init: {exc}") from exc


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file.

    Raises ConfigError on malformed JSON (with line/column) or schema violations
    (with the dotted key path). Missing or unreadable files raise OSError.
    """
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data)


def check_suite(config: RunConfig, suite: str) -> None:
    """Suite-specific preconditions checked before any computation."""
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if suite in ("flow", "all") and config.sim.n_paths < MIN_FLOW_PATHS:
        raise ConfigError(f"sim.n_paths = {config.sim.n_paths} is below the flow-study minimum "
                          f"of {MIN_FLOW_PATHS}; raise sim.n_paths to at least {MIN_FLOW_PATHS}")
