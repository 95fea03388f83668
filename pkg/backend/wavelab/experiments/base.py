"""Shared plumbing for the experiment runners: output paths, gates and artifacts."""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from wavelab.models import ExperimentConfig, GateResult, Summary
from wavelab.services.symbol_core import BackgroundFlow, CoriolisProfile
from wavelab.services.weyl_quant import DiscreteOperator, SpatialGrid
from wavelab.utils.io import write_csv, write_operator_dump, write_plot_data, write_state_dump
from wavelab.utils.rng import StageStreams

logger = logging.getLogger(__name__)


class RunnerParams(BaseModel):
    """Base for the kind-specific ``[params]`` table; unknown keys are rejected."""

    model_config = {"extra": "forbid"}


@dataclass
class RunContext:
    config: ExperimentConfig
    params: Any
    out_dir: Path
    streams: StageStreams
    gates: List[GateResult] = field(default_factory=list)
    metrics: Dict[str, Any] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)

    @cached_property
    def profile(self) -> CoriolisProfile:
        return CoriolisProfile.from_spec(self.config.profile)

    @cached_property
    def flow(self) -> BackgroundFlow:
        return BackgroundFlow.from_spec(self.config.flow)

    @cached_property
    def grid(self) -> SpatialGrid:
        return SpatialGrid.from_spec(self.config.grid)

    @property
    def gap_floor(self) -> float:
        return self.config.tolerances.gap_floor

    def gate(
        self, name: str, value: float, threshold: float, comparison: str, criterion: Optional[int] = None
    ) -> GateResult:
        result = GateResult.check(name, value, threshold, comparison, criterion)
        self.gates.append(result)
        mark = "✅" if result.passed else "❌"
        logger.info(f"{mark} {name}: {result.value:.6g} {comparison} {threshold:g}")
        return result

    def _record(self, path: Path) -> Path:
        self.artifacts.append(path.relative_to(self.out_dir).as_posix())
        return path

    def csv(self, name: str, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
        return self._record(write_csv(self.out_dir / name, columns, rows))

    def plot(self, name: str, xs: Sequence[float], ys: Sequence[float]) -> Path:
        return self._record(write_plot_data(self.out_dir / name, xs, ys))

    def state_dump(self, name: str, values: np.ndarray, eps: float, t: float) -> Path:
        return self._record(write_state_dump(self.out_dir / name, values, eps, t))

    def operator_dump(self, name: str, operator: DiscreteOperator) -> Path:
        grid = operator.grid
        return self._record(write_operator_dump(self.out_dir / name, operator.matrix, grid.n1, grid.n2, operator.eps))

    def summary(self) -> Summary:
        return Summary(
            kind=self.config.kind,
            seed=self.config.seed,
            config=self.config.model_dump(mode="json"),
            gates=list(self.gates),
            metrics=dict(self.metrics),
            artifacts=sorted(self.artifacts),
        )


def sample_phase_points(
    rng: np.random.Generator,
    x_box: Sequence[float],
    profile: CoriolisProfile,
    count: int,
    xi_range: float,
    min_gap: float,
) -> np.ndarray:
    """``count`` uniform points of [-L1, L1] x [-L2, L2] x [-xi_range, xi_range]^2 with gap >= min_gap.

    Rejection sampling in batches; rows are (x1, x2, xi1, xi2) in draw order.
    """
    L1, L2 = x_box
    low = np.array([-L1, -L2, -xi_range, -xi_range])
    accepted: List[np.ndarray] = []
    found = 0
    while found < count:
        batch = rng.uniform(low, -low, size=(max(count, 64), 4))
        gap = batch[:, 2] ** 2 + batch[:, 3] ** 2 + profile.b(batch[:, 1]) ** 2
        keep = batch[gap >= min_gap]
        accepted.append(keep)
        found += len(keep)
    return np.concatenate(accepted)[:count]
