"""First diagonal correction D1 against the closed-form Rossby Hamiltonian."""

import logging

import numpy as np
from pydantic import Field

from wavelab.experiments.base import RunContext, RunnerParams, sample_phase_points
from wavelab.models import PhasePoint
from wavelab.services.moyal import d1_arrays, d1_sweep

logger = logging.getLogger(__name__)

STAGES = ("points",)

COLUMNS = ["x1", "x2", "xi1", "xi2", "d1_minus", "d1_rossby", "d1_plus", "rossby_symbol", "abs_error"]


class Params(RunnerParams):
    points: int = Field(100, ge=1)
    xi_range: float = Field(2.0, gt=0.0)
    min_gap: float = Field(0.25, gt=0.0)
    tolerance: float = Field(1e-8, gt=0.0)
    hermitian_tolerance: float = Field(1e-10, gt=0.0)


def run(ctx: RunContext):
    params: Params = ctx.params
    rng = ctx.streams.generator("points")
    min_gap = max(params.min_gap, 4.0 * ctx.gap_floor)
    samples = sample_phase_points(rng, (ctx.grid.L1, ctx.grid.L2), ctx.profile, params.points, params.xi_range, min_gap)
    points = [PhasePoint.from_array(row) for row in samples]

    rows = d1_sweep(points, ctx.profile, ctx.flow, ctx.gap_floor)
    ctx.csv("d1_sweep.csv", COLUMNS, rows)
    ctx.plot("d1_vs_rossby.dat", [row["rossby_symbol"] for row in rows], [row["d1_rossby"] for row in rows])

    # the broadcasting path used for whole-grid quantization must agree with the pointwise one
    parts = d1_arrays(*samples.T, ctx.profile, ctx.flow)
    grid_d1 = np.real(np.diagonal(parts["corrected"], axis1=-2, axis2=-1))
    pointwise = np.array([[row["d1_minus"], row["d1_rossby"], row["d1_plus"]] for row in rows])
    i1 = parts["i1"]
    hermitian_defect = float(np.max(np.abs(i1 - np.conj(np.swapaxes(i1, -1, -2)))))

    ctx.metrics["points"] = len(rows)
    ctx.metrics["array_vs_pointwise"] = float(np.max(np.abs(grid_d1 - pointwise)))
    ctx.metrics["max_abs_d1_plus"] = float(np.max(np.abs(pointwise[:, 2])))
    ctx.metrics["max_abs_d1_minus"] = float(np.max(np.abs(pointwise[:, 0])))

    ctx.gate("d1_rossby_vs_symbol", max(row["abs_error"] for row in rows), params.tolerance, "<=", criterion=2)
    ctx.gate("i1_hermitian_defect", hermitian_defect, params.hermitian_tolerance, "<=")
