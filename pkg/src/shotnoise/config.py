"""Run configuration: a YAML file validated against a versioned schema.

Unknown keys are errors at every level. The seed is mandatory; nothing is
seeded from the clock.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .kernels import kernel_from_spec, time_function_from_spec
from .sde import drift_from_spec
from .stochastic import jump_law_from_spec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _spec_check(builder, value, what):
    try:
        builder(value)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid {what} spec: {exc}") from exc
    return value


def parse_grid(spec: str):
    """``"lo:hi:count"`` to ``count`` evenly spaced values."""
    parts = str(spec).split(":")
    if len(parts) != 3:
        raise ValueError(f"grid spec {spec!r} must look like lo:hi:count")
    lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1 or (count > 1 and not hi > lo):
        raise ValueError(f"grid spec {spec!r} needs count >= 1 and hi > lo")
    return np.linspace(lo, hi, count)


class Truncation(_Strict):
    horizon: Optional[float] = Field(default=None, gt=0)
    epsilon: float = Field(default=1e-6, gt=0)
    centering: Literal["none", "compensate"] = "none"


class SimulateSection(_Strict):
    n: int = Field(default=10_000, ge=1)
    mode: Literal["full", "truncated"] = "full"
    t: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _t_for_truncated(self):
        if self.mode == "truncated" and self.t is None:
            raise ValueError("simulate.t is required when mode is 'truncated'")
        return self


class CharfnSection(_Strict):
    grid: str = "-20:20:41"
    tol: float = Field(default=1e-6, gt=0)

    @field_validator("grid")
    @classmethod
    def _grid(cls, v):
        parse_grid(v)
        return v


class DensitySection(_Strict):
    u_max: float = Field(default=200.0, gt=0)
    u_step: float = Field(default=0.01, gt=0)
    x_grid: str = "-5:5:201"
    method: Literal["gil-pelaez", "fft-grid"] = "gil-pelaez"
    tol: float = Field(default=1e-6, gt=0)

    @field_validator("x_grid")
    @classmethod
    def _grid(cls, v):
        parse_grid(v)
        return v


class TvSection(_Strict):
    file_a: Optional[str] = None
    file_b: Optional[str] = None
    binning: Union[Literal["auto"], list[float]] = "auto"
    kde: bool = False


class CheckSection(_Strict):
    condition: Literal["l2", "centering", "tderiv", "xjac", "davydov", "convpow"] = "l2"
    tol: float = Field(default=1e-6, gt=0)
    t_range: tuple[float, float] = (0.0, 1.0)
    n: int = Field(default=10_000, ge=1)
    eps: float = Field(default=1e-8, gt=0)
    threshold: float = Field(default=1e-3, gt=0, lt=1)
    p: int = Field(default=1, ge=1)
    t: float = Field(default=1.0, gt=0)
    g: Optional[dict] = None
    g_seq: Optional[list[dict]] = None
    interval: tuple[float, float] = (0.0, 1.0)

    @field_validator("g")
    @classmethod
    def _g(cls, v):
        return None if v is None else _spec_check(time_function_from_spec, v, "time function")

    @field_validator("g_seq")
    @classmethod
    def _gs(cls, v):
        if v is not None:
            for item in v:
                _spec_check(time_function_from_spec, item, "time function")
        return v

    @model_validator(mode="after")
    def _davydov_needs_functions(self):
        if self.condition == "davydov" and (self.g is None or not self.g_seq):
            raise ValueError("check.g and check.g_seq are required for the davydov condition")
        return self


class Sequence(_Strict):
    kind: Literal["scale", "time_rate", "constant"] = "scale"
    c: float = 1.0


class ConvergeSection(_Strict):
    sequence: Sequence = Sequence()
    n_list: list[int] = [2, 4, 8, 16, 32, 64]
    t: float = Field(default=1.0, gt=0)
    samples: int = Field(default=100_000, ge=10)
    mode: Literal["full", "truncated"] = "full"

    @field_validator("n_list")
    @classmethod
    def _ns(cls, v):
        if not v or any(n < 1 for n in v) or sorted(set(v)) != list(v):
            raise ValueError("n_list must be strictly increasing positive integers")
        return v


class SdeSection(_Strict):
    drift: dict = {"family": "linear", "lam": 1.0}
    x0: float = 1.0
    rate: float = Field(default=10.0, gt=0)
    t_end: float = Field(default=1.0, gt=0)
    ode_tol: float = Field(default=1e-10, gt=0)
    mode: Literal["path", "deriv-check", "converge"] = "path"
    configurations: int = Field(default=20, ge=1)
    fd_step: float = Field(default=1e-5, gt=0)
    n: int = Field(default=100_000, ge=10)
    indices: list[int] = [2, 8, 32]
    drift_scale: float = 1.0
    x0_shift: float = 1.0

    @field_validator("drift")
    @classmethod
    def _drift(cls, v):
        return _spec_check(drift_from_spec, v, "drift")


class CondlawSection(_Strict):
    count: int = Field(default=1, ge=0)
    t: float = Field(default=1.0, gt=0)
    n: int = Field(default=20_000, ge=10)


class RunConfig(_Strict):
    schema_version: Literal[1]
    seed: int = Field(ge=0, lt=2**64)
    kernel: Optional[dict] = None
    sigma: Optional[dict] = None
    rate: float = Field(default=1.0, gt=0)
    truncation: Truncation = Truncation()
    threads: int = Field(default=1, ge=1)
    out: Optional[str] = None
    simulate: SimulateSection = SimulateSection()
    charfn: CharfnSection = CharfnSection()
    density: DensitySection = DensitySection()
    tv: TvSection = TvSection()
    check: CheckSection = CheckSection()
    converge: ConvergeSection = ConvergeSection()
    sde: SdeSection = SdeSection()
    condlaw: CondlawSection = CondlawSection()

    @field_validator("kernel")
    @classmethod
    def _kernel(cls, v):
        return None if v is None else _spec_check(kernel_from_spec, v, "kernel")

    @field_validator("sigma")
    @classmethod
    def _sigma(cls, v):
        return None if v is None else _spec_check(jump_law_from_spec, v, "sigma")

    def build_kernel(self):
        if self.kernel is None:
            raise ConfigError("this command needs a 'kernel' section")
        return kernel_from_spec(self.kernel)

    def build_sigma(self):
        if self.sigma is None:
            raise ConfigError("this command needs a 'sigma' section")
        return jump_law_from_spec(self.sigma)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: the top level must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: schema error\n{exc}") from exc
