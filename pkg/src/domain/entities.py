from typing import Annotated, Literal

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)

from src.config import settings


def to_complex(v):
    """Accepts a number, a [re, im] pair, a {"re": .., "im": ..} object or a literal like "1+2j"."""
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError(f"complex pair must have 2 entries, got {len(v)}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    return complex(v)


def complex_to_pair(v: complex) -> list[float]:
    return [v.real, v.imag]


ComplexValue = Annotated[
    complex,
    BeforeValidator(to_complex),
    PlainSerializer(complex_to_pair, return_type=list[float], when_used="json"),
]


class Occupation(BaseModel):
    """Bath occupation: a flat m_k for every mode, or Bose-Einstein at `temperature` (units of omega_m)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["flat", "bose"] = "flat"
    m_k: float = 100.0
    temperature: float | None = None


class PhysicalParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    omega_m: float = 1.0
    delta_c: float | None = None
    delta_eff_target: float = 1.0
    g0: float = 5e-4
    drive_E: float = 388.0
    eta: float = 1e-5
    omega_l: float = 5.0
    s_exponent: float = 1.0
    occupation: Occupation = Field(default_factory=Occupation)
    n0: float = 0.0
    m0: float | None = 100.0
    c1: ComplexValue = 0j
    c2: ComplexValue = 0j
    alpha0: ComplexValue = 100 + 0j
    beta0: ComplexValue = 100 + 0j


class KappaSchedule(BaseModel):
    """Piecewise-constant cavity decay, right-continuous at each start time."""

    model_config = ConfigDict(frozen=True)

    segments: tuple[tuple[float, float], ...] = ((0.0, 0.05),)

    @field_validator("segments")
    @classmethod
    def merge_equal_neighbours(
        cls, v: tuple[tuple[float, float], ...]
    ) -> tuple[tuple[float, float], ...]:
        merged: list[tuple[float, float]] = []
        for start, kappa in v:
            if merged and merged[-1][1] == kappa:
                continue
            merged.append((float(start), float(kappa)))
        return tuple(merged)

    @property
    def base(self) -> float:
        return self.segments[0][1]

    @classmethod
    def constant(cls, kappa: float) -> "KappaSchedule":
        return cls(segments=((0.0, kappa),))

    @classmethod
    def qswitch(cls, kappa_base: float, t_switch: float, kappa_hi: float) -> "KappaSchedule":
        return cls(segments=((0.0, kappa_base), (t_switch, kappa_hi)))


class TimeGrid(BaseModel):
    """Uniform grid t_j = j*dt, j = 0..n_steps. Accepts `t_max` in place of `n_steps`."""

    model_config = ConfigDict(frozen=True)

    dt: float = 0.002
    n_steps: int = 35000

    @model_validator(mode="before")
    @classmethod
    def steps_from_t_max(cls, data):
        if isinstance(data, dict) and "t_max" in data:
            data = dict(data)
            t_max = float(data.pop("t_max"))
            dt = float(data.get("dt", cls.model_fields["dt"].default))
            if "n_steps" not in data and dt > 0:
                data["n_steps"] = int(round(t_max / dt))
        return data

    @property
    def t_max(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index_of(self, t: float) -> int:
        """Grid index of `t`; off-grid or out-of-range times raise IndexError."""
        j = int(round(t / self.dt))
        if j < 0 or j > self.n_steps or abs(j * self.dt - t) > 1e-9 * max(self.dt, abs(t)):
            raise IndexError(f"t={t} is not a point of the grid (dt={self.dt}, n_steps={self.n_steps})")
        return j

    def stride_for(self, every: float) -> int:
        """Number of grid steps between output samples spaced by `every`."""
        return max(1, int(round(every / self.dt)))

    def with_t_max(self, t_max: float) -> "TimeGrid":
        return TimeGrid(dt=self.dt, n_steps=int(round(t_max / self.dt)))


class OutputSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    directory: str = Field(default_factory=lambda: settings.COOLSIM_OUTPUT_DIR)
    every: float = 0.25
    omega_m_hz: float | None = None


class AnalysisSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    window: tuple[float, float] = (5.0, 40.0)
    nu_i_convention: Literal["a", "b"] = "a"
    refine_min: bool = True


class ScanSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    c1_values: tuple[ComplexValue, ...] = (0j, 50 + 0j, 100 + 0j)
    c2_values: tuple[ComplexValue, ...] = (0j,)


class QSwitchSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_switch: float = 17.15
    kappa_hi: float = 1.0


class OracleSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    modes: int = 600
    omega_max_factor: float = 40.0
    tolerance: float = 0.02
    t_compare: float = 30.0
    positivity_samples: int = 10


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Literal["run", "ncl", "scan", "qswitch", "oracle-compare"] = "run"
    params: PhysicalParams = Field(default_factory=PhysicalParams)
    schedule: KappaSchedule = Field(default_factory=KappaSchedule)
    grid: TimeGrid = Field(default_factory=TimeGrid)
    output: OutputSpec = Field(default_factory=OutputSpec)
    analysis: AnalysisSpec = Field(default_factory=AnalysisSpec)
    scan: ScanSpec = Field(default_factory=ScanSpec)
    qswitch: QSwitchSpec = Field(default_factory=QSwitchSpec)
    oracle: OracleSpec = Field(default_factory=OracleSpec)
    workers: int | None = None

    @field_validator("workers")
    @classmethod
    def positive_workers(cls, v: int | None) -> int | None:
        if v is not None and v < 1:
            raise ValueError("workers must be >= 1")
        return v
