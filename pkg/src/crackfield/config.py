"""Experiment configuration: JSON schema, validation and model construction.

Every block is optional; each subcommand checks that the blocks it needs are
present.  Unknown keys are rejected everywhere.  Defaults are listed in the
field declarations below and in README.md.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

BOLTZMANN_SI = 1.380649e-23


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _theta_ok(v):
    if v is not None and not 0.0 < v < 1.0:
        raise ValueError(f"theta must lie in (0,1), got {v}")
    return v


class Units(_Block):
    system: Literal["dimensionless", "SI"] = "dimensionless"
    k_B: Optional[float] = Field(default=None, gt=0)

    @property
    def boltzmann(self) -> float:
        if self.k_B is not None:
            return self.k_B
        return BOLTZMANN_SI if self.system == "SI" else 1.0


class Shear(_Block):
    c0: float = Field(ge=0)
    c1: float = Field(gt=0)
    H: float = Field(ge=0)
    U: float = Field(ge=0)
    theta: float
    v0: float = Field(gt=0)
    beta: Optional[float] = Field(default=None, gt=0)
    T: Optional[float] = Field(default=None, gt=0)
    alpha: Optional[float] = Field(default=None, gt=0)
    sigma: float = Field(default=0.0, ge=0)

    @field_validator("theta")
    @classmethod
    def _theta(cls, v):
        return _theta_ok(v)

    @model_validator(mode="after")
    def _one_temperature(self):
        if self.beta is not None and self.T is not None:
            raise ValueError("give either beta or T, not both")
        return self


class Family(_Block):
    normal: Optional[List[float]] = None
    euler: Optional[List[float]] = None
    euler_convention: str = "ZXZ"
    c0: float = Field(ge=0)
    c1: float = Field(ge=0)
    U: float = 0.0
    radius: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _orientation(self):
        if (self.normal is None) == (self.euler is None):
            raise ValueError("give exactly one of 'normal' or 'euler'")
        if self.normal is not None:
            if len(self.normal) != 3:
                raise ValueError("crack normal needs three components")
            n = float(np.linalg.norm(self.normal))
            if not math.isfinite(n) or n < 1e-12:
                raise ValueError("crack normal must have nonzero length")
        if self.euler is not None and len(self.euler) != 3:
            raise ValueError("Euler angles need three components")
        return self


class Material(_Block):
    E: float = Field(gt=0)
    nu: float = Field(gt=-1, lt=0.5)
    full_isotropic_energy: bool = False
    a: float = Field(default=1.0, gt=0)
    r: Optional[float] = Field(default=None, gt=0)
    theta: Optional[float] = None
    v0: float = Field(gt=0)
    H: float = Field(ge=0)
    gamma: float = Field(default=0.0, ge=0)
    rho: float = Field(default=1.0, gt=0)
    cp: float = Field(default=1.0, gt=0)
    G: float = 0.0
    families: List[Family] = Field(min_length=1)

    @field_validator("theta")
    @classmethod
    def _theta(cls, v):
        return _theta_ok(v)

    @model_validator(mode="after")
    def _size(self):
        if (self.r is None) == (self.theta is None):
            raise ValueError("give exactly one of 'r' or 'theta'")
        if self.r is not None:
            th = 4 * math.pi * self.r**3 / (3 * self.a**3)
            _theta_ok(th)
        return self


class Load(_Block):
    mode: Literal["stress", "strain"]
    times: List[float] = Field(min_length=1)
    components: List[List[float]]

    @model_validator(mode="after")
    def _shape(self):
        if len(self.components) != len(self.times):
            raise ValueError("load needs one tensor (6 components) per time")
        if any(len(c) != 6 for c in self.components):
            raise ValueError("load tensors are given as 6 components (11, 22, 33, 12, 23, 31)")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("load times must be strictly increasing")
        return self


class Initial(_Block):
    T: float = Field(default=1.0, gt=0)
    sigma: List[float] = Field(default_factory=lambda: [0.0] * 6)
    p: Optional[List[float]] = None

    @field_validator("sigma")
    @classmethod
    def _six(cls, v):
        if len(v) != 6:
            raise ValueError("initial stress needs 6 components")
        return v

    @field_validator("p")
    @classmethod
    def _density(cls, v):
        if v is not None and (min(v) < 0 or sum(v) > 1):
            raise ValueError("initial densities must be nonnegative with sum at most 1")
        return v


class Solver(_Block):
    t_end: float = Field(gt=0)
    rtol: float = Field(default=1e-7, gt=0)
    atol: float = Field(default=1e-9, gt=0)
    n_output: int = Field(default=101, ge=2)


class Stochastic(_Block):
    N: int = Field(ge=1)
    K: int = Field(default=2, ge=1)
    seed: int = Field(default=0, ge=0)
    replicas: int = Field(default=1, ge=1)
    t_end: float = Field(gt=0)
    n_samples: int = Field(default=101, ge=2)
    rates: Literal["shear", "constant"] = "shear"
    birth: Optional[List[float]] = None
    heal: Optional[List[float]] = None
    export_events: bool = True

    @model_validator(mode="after")
    def _rates(self):
        if self.rates == "constant":
            if self.birth is None or self.heal is None:
                raise ValueError("constant rates need 'birth' and 'heal' lists")
            if len(self.birth) != self.K or len(self.heal) != self.K:
                raise ValueError("constant rates need one birth and one heal value per family")
        return self


class Stationary(_Block):
    N: List[int] = Field(default_factory=lambda: [100, 400, 1600])
    rates: Literal["shear", "constant"] = "shear"
    birth: Optional[float] = Field(default=None, gt=0)
    heal: Optional[float] = Field(default=None, gt=0)


class Phase(_Block):
    betas: List[float] = Field(min_length=1)
    n_points: int = Field(default=400, ge=10)
    relative: bool = Field(default=False, description="betas are multiples of the critical beta")


class Maxwell(_Block):
    betas: List[float] = Field(min_length=1)
    relative: bool = False


class Emission(_Block):
    N: int = Field(default=10_000, ge=10)
    mass: float = Field(default=0.90, gt=0, lt=1)
    thetas: Optional[List[float]] = None

    @field_validator("thetas")
    @classmethod
    def _thetas(cls, v):
        for t in v or []:
            _theta_ok(t)
        return v


class Range(_Block):
    start: float
    stop: float
    num: int = Field(ge=2)

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


class Zhurkov(_Block):
    sigma: Union[Range, List[float]]
    T: List[float] = Field(min_length=1)
    p0: float = Field(default=0.2, gt=0, lt=1)
    threshold: float = Field(default=0.01, gt=0)

    @field_validator("T")
    @classmethod
    def _positive(cls, v):
        if min(v) <= 0:
            raise ValueError("temperatures must be positive")
        return v

    def sigma_values(self) -> np.ndarray:
        return self.sigma.values() if isinstance(self.sigma, Range) else np.asarray(self.sigma, dtype=float)


class Config(_Block):
    units: Units = Field(default_factory=Units)
    shear: Optional[Shear] = None
    material: Optional[Material] = None
    load: Optional[Load] = None
    initial: Initial = Field(default_factory=Initial)
    solver: Optional[Solver] = None
    stochastic: Optional[Stochastic] = None
    stationary: Optional[Stationary] = None
    phase: Optional[Phase] = None
    maxwell: Optional[Maxwell] = None
    emission: Optional[Emission] = None
    zhurkov: Optional[Zhurkov] = None
    output_dir: str = "out"

    @model_validator(mode="after")
    def _families_match(self):
        if self.material is not None and self.initial.p is not None:
            if len(self.initial.p) != len(self.material.families):
                raise ValueError("initial.p needs one density per crack family")
        return self

    # -------------------------------------------------------- builders

    @property
    def k_B(self) -> float:
        return self.units.boltzmann

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"config is missing required block(s): {', '.join(missing)}")

    def shear_params(self, theta: Optional[float] = None):
        from .phase import ShearModelParams

        self.require("shear")
        s = self.shear
        beta = s.beta if s.beta is not None else (1.0 / (self.k_B * s.T) if s.T is not None else 1.0)
        return ShearModelParams(c0=s.c0, c1=s.c1, H=s.H, U=s.U, theta=s.theta if theta is None else theta,
                                v0=s.v0, beta=beta, alpha=s.alpha)

    def model_params(self):
        from .cracks import CrackFamily, CrackGeometry, IsotropicElastic
        from .kinetics import ModelParams
        from .tensor import Rotation

        self.require("material")
        m = self.material
        geom = CrackGeometry(m.a, m.r, m.v0) if m.r is not None else CrackGeometry.from_theta(m.theta, m.v0, m.a)
        fams = []
        for k, f in enumerate(m.families):
            frame = (Rotation.from_normal(f.normal) if f.normal is not None
                     else Rotation.from_euler(f.euler, f.euler_convention))
            fams.append(CrackFamily(frame, f.c0, f.c1, f.U, radius=f.radius, index=k))
        return ModelParams(tuple(fams), geom, IsotropicElastic(m.E, m.nu, m.full_isotropic_energy), H=m.H,
                           gamma=m.gamma, rho=m.rho, cp=m.cp, G=m.G, k_B=self.k_B)

    def load_program(self):
        from .kinetics import LoadProgram

        self.require("load")
        return LoadProgram.from_components(self.load.mode, self.load.times, self.load.components)


def _format_validation(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        msg = e["msg"].removeprefix("Value error, ")
        parts.append(f"{loc}: {msg}")
    return "; ".join(parts)


def parse_config(data: dict) -> Config:
    try:
        return Config.model_validate(data)
    except ValidationError as err:
        raise ConfigError(f"invalid config: {_format_validation(err)}") from None


def load_config(path) -> Config:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data)


def config_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
