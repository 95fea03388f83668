"""Pydantic models for WaveLab configurations and reports."""

import math
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from wavelab.settings import FD_STEP, GAP_FLOOR, OUT_DIR

ExperimentKind = Literal["symbol_check", "moyal_d1", "diag_sweep", "rays", "mourre", "pde_trap", "pde_disperse"]
EXPERIMENT_KINDS: Tuple[str, ...] = ExperimentKind.__args__  # type: ignore[attr-defined]


class PhasePoint(BaseModel):
    """Point (x, xi) of the phase space R^2 x R^2."""

    x1: float
    x2: float
    xi1: float
    xi2: float

    model_config = {
        "frozen": True,
        "allow_inf_nan": False,
        "json_schema_extra": {"example": {"x1": 0.0, "x2": 1.0, "xi1": 1.0, "xi2": 0.0}},
    }

    @classmethod
    def of(cls, x1: float, x2: float, xi1: float, xi2: float) -> "PhasePoint":
        return cls(x1=float(x1), x2=float(x2), xi1=float(xi1), xi2=float(xi2))

    @classmethod
    def from_array(cls, values) -> "PhasePoint":
        x1, x2, xi1, xi2 = (float(v) for v in values)
        return cls(x1=x1, x2=x2, xi1=xi1, xi2=xi2)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.xi1, self.xi2])

    @property
    def xi_squared(self) -> float:
        return self.xi1 * self.xi1 + self.xi2 * self.xi2


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


class ProfileSpec(BaseModel):
    """Coriolis profile b(x2) = b0 + beta*x2 (+ alpha*arctan(gamma*x2) for monotone)."""

    kind: Literal["betaplane", "monotone"] = "betaplane"
    beta: float = 1.0
    alpha: float = Field(0.0, ge=0.0)
    gamma: float = Field(1.0, gt=0.0)
    b0: float = 0.0

    model_config = {"json_schema_extra": {"example": {"kind": "monotone", "beta": 1.0, "alpha": 0.3, "gamma": 2.0}}}


class FlowSpec(BaseModel):
    """Background flow: none, or the perpendicular gradient of a compact bump."""

    kind: Literal["none", "bump"] = "none"
    amplitude: float = 0.0
    support_radius: float = Field(2.0, gt=0.0)
    center: Tuple[float, float] = (0.0, 0.0)


class GridSpec(BaseModel):
    """Periodic box [-L1, L1) x [-L2, L2) with n1 x n2 points."""

    n1: int = 32
    n2: int = 32
    L1: float = Field(8.0, gt=0.0)
    L2: float = Field(8.0, gt=0.0)

    @field_validator("n1", "n2")
    @classmethod
    def _fft_size(cls, value: int) -> int:
        odd = value // (value & -value) if value > 0 else 0
        if value < 8 or odd not in (1, 3):
            raise ValueError("grid size must be a power of two, or three times one, and at least 8")
        return value


class ToleranceSpec(BaseModel):
    gap_floor: float = Field(GAP_FLOOR, gt=0.0)
    fd_step: float = Field(FD_STEP, gt=0.0)
    edge_mass: float = Field(1e-4, gt=0.0)
    coarse_threshold: float = Field(0.5, gt=0.0)
    energy_drift: float = Field(1e-6, gt=0.0)


class ExperimentConfig(BaseModel):
    """One experiment run, as read from a TOML file."""

    kind: ExperimentKind
    seed: int = Field(0, ge=0)
    eps: List[float] = Field(default_factory=lambda: [0.1], min_length=1)
    out_dir: str = OUT_DIR
    profile: ProfileSpec = Field(default_factory=ProfileSpec)
    flow: FlowSpec = Field(default_factory=FlowSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    tolerances: ToleranceSpec = Field(default_factory=ToleranceSpec)
    params: Dict[str, Any] = Field(default_factory=dict)

    model_config = {
        "json_schema_extra": {
            "example": {
                "kind": "diag_sweep",
                "seed": 7,
                "eps": [0.2, 0.1, 0.05, 0.025],
                "profile": {"kind": "betaplane", "beta": 0.25, "b0": 3.0},
                "grid": {"n1": 32, "n2": 32, "L1": 8.0, "L2": 8.0},
            }
        }
    }

    @field_validator("eps")
    @classmethod
    def _eps_range(cls, values: List[float]) -> List[float]:
        for value in values:
            if not 0.0 < value <= 0.5:
                raise ValueError("eps must be in (0, 0.5]")
        return values

    @model_validator(mode="after")
    def _flow_inside_box(self) -> "ExperimentConfig":
        if self.flow.kind == "bump":
            c1, c2 = self.flow.center
            r = self.flow.support_radius
            if abs(c1) + r >= self.grid.L1 or abs(c2) + r >= self.grid.L2:
                raise ValueError("flow support must lie strictly inside the box")
        return self


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class TrappingReport(BaseModel):
    """Confinement diagnostics of one trajectory."""

    x2_sup: float
    x2_inf: float
    x1_drift_rate: float
    H_drift: float
    xi1_drift: float


class MourreReport(BaseModel):
    """Positivity constant and propagation decay samples."""

    theta_est: float
    theta_prime: float
    decay_samples: List[Tuple[float, float]]
    fitted_exponent: float
    window: Tuple[float, float]

    @field_validator("decay_samples")
    @classmethod
    def _increasing_times(cls, samples: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
        times = [t for t, _ in samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("decay sample times must be strictly increasing")
        return samples


class RegionDiagnostics(BaseModel):
    """Mass fractions of a wave state in the confinement regions."""

    compact_set: Tuple[float, float, float, float]
    latitude_band: Tuple[float, float]
    mass_in_compact: float = Field(ge=0.0, le=1.0)
    mass_outside_band: float = Field(ge=0.0, le=1.0)
    edge_mass: float = Field(ge=0.0, le=1.0)


class GateResult(BaseModel):
    """Outcome of one acceptance gate."""

    name: str
    value: float
    threshold: float
    comparison: Literal["<=", ">="]
    passed: bool
    criterion: Optional[int] = None

    @classmethod
    def check(cls, name: str, value: float, threshold: float, comparison: str, criterion: Optional[int] = None):
        value = float(value)
        if math.isnan(value):
            passed = False
        elif comparison == "<=":
            passed = value <= threshold
        else:
            passed = value >= threshold
        return cls(
            name=name,
            value=value,
            threshold=float(threshold),
            comparison=comparison,
            passed=passed,
            criterion=criterion,
        )


class Summary(BaseModel):
    """Content of summary.json."""

    kind: str
    seed: int
    config: Dict[str, Any]
    gates: List[GateResult] = Field(default_factory=list)
    metrics: Dict[str, Any] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(gate.passed for gate in self.gates)
