"""Run configuration: one strictly validated JSON document."""

from __future__ import annotations

import json
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .integrands import EXTREMALS, INTEGRANDS

SCHEMA_VERSION = 1

CHECK_NAMES = (
    "weak_EL",
    "second_variation",
    "qc_interior",
    "qc_boundary",
    "hessian_qc",
    "growth",
    "excess",
    "cover",
    "spatially_local",
    "necessity",
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HalfSpaceSpec(_Strict):
    m: list[float]
    b: float


class DomainSpec(_Strict):
    """A registry domain by name, or explicit convex pieces ``m . x <= b``."""

    name: Optional[str] = None
    pieces: Optional[list[list[HalfSpaceSpec]]] = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.name is None) == (self.pieces is None):
            raise ValueError("give exactly one of 'name' or 'pieces'")
        return self


class NamedSpec(_Strict):
    name: str
    params: dict = Field(default_factory=dict)


class MeshSpec(_Strict):
    domain_h: float = Field(0.25, gt=0)
    ball_h: float = Field(0.3, gt=0)
    region_h: float = Field(0.3, gt=0)


class SolverSpec(_Strict):
    restarts: int = Field(8, ge=1)
    amplitudes: list[float] = Field(default_factory=lambda: [1e-2, 1e-1, 1.0])
    maxiter: int = Field(3000, ge=1)
    box: float = Field(1.0, gt=0)


class CheckSpec(_Strict):
    """One requested check.  Fields that do not apply to a check are ignored."""

    name: Literal[CHECK_NAMES]
    label: Optional[str] = None
    x0: Optional[list[float]] = None
    points: Optional[list[list[float]]] = None
    kinds: list[str] = Field(default_factory=lambda: ["G_a", "G_c"])
    samples: Optional[int] = Field(None, ge=1)
    cube: Optional[int] = None
    chart: Optional[NamedSpec] = None
    epsilons: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    profile: list[float] = Field(default_factory=lambda: [1.0])


class RunConfig(_Strict):
    schema_version: Literal[SCHEMA_VERSION] = SCHEMA_VERSION
    domain: DomainSpec
    dirichlet_faces: list[int] = Field(default_factory=list)
    neumann_faces: Optional[list[int]] = None
    integrand: NamedSpec
    extremal: NamedSpec = Field(default_factory=lambda: NamedSpec(name="zero"))
    p: Optional[float] = None
    c0: float = 0.5
    C: Union[float, Literal["fit"]] = 0.0
    delta: float = Field(0.1, gt=0)
    R: float = Field(10.0, gt=0)
    mesh: MeshSpec = Field(default_factory=MeshSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    checks: list[CheckSpec] = Field(default_factory=list)
    seed: int = 0
    threads: int = Field(1, ge=1)

    @field_validator("integrand")
    @classmethod
    def _known_integrand(cls, v):
        if v.name not in INTEGRANDS:
            raise ValueError(f"unknown integrand {v.name!r}; known: {sorted(INTEGRANDS)}")
        return v

    @field_validator("extremal")
    @classmethod
    def _known_extremal(cls, v):
        if v.name not in EXTREMALS:
            raise ValueError(f"unknown extremal {v.name!r}; known: {sorted(EXTREMALS)}")
        return v


def _line_col(text, pos):
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def parse_config(text):
    """Parse and validate a JSON config string.

    Raises
    ------
    ConfigError
        With ``(location, message)`` diagnostics: ``line:col`` for JSON
        syntax errors, dotted field paths for schema errors.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        line, col = _line_col(text, exc.pos)
        raise ConfigError("config is not valid JSON", [(f"line {line}, column {col}", exc.msg)]) from None
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        diags = [(".".join(str(p) for p in e["loc"]) or "<root>", e["msg"]) for e in exc.errors()]
        raise ConfigError("config failed validation", diags) from None


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}", [(str(path), exc.strerror or str(exc))]) from None
    return parse_config(text)
