"""Time series of region masses for a single evolved wave packet."""

import logging
from typing import Dict, List, Tuple

import numpy as np
from pydantic import Field

from wavelab.experiments.base import RunContext, RunnerParams
from wavelab.models import PhasePoint
from wavelab.services.diagonalizer import symbol_projector
from wavelab.services.pde_solver import (
    Propagator,
    Rectangle,
    evolve,
    gaussian_wavepacket,
    region_diagnostics,
)
from wavelab.services.weyl_quant import grid_norm

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ["t", "s", "mass_in_compact", "mass_outside_band", "rossby_fraction", "norm", "edge_mass", "trusted"]


class WaveParams(RunnerParams):
    launch: Tuple[float, float, float, float]
    horizon: float = Field(gt=0.0)
    samples: int = Field(11, ge=2)
    compact_half_side: float = Field(1.0, gt=0.0)
    band_inflation: float = Field(3.0, ge=0.0)
    prepare: bool = True
    mass_tolerance: float = Field(1e-2, gt=0.0)
    dumps: bool = True
    scheme_dt: float = Field(0.05, gt=0.0)
    norm_drift_tolerance: float = Field(1e-8, gt=0.0)


def run_series(
    ctx: RunContext,
    eps: float,
    branch: str,
    band: Tuple[float, float],
    slow_horizon: float,
) -> List[Dict[str, float]]:
    """Evolve one branch packet to ``slow_horizon`` and sample its region masses.

    With ``prepare`` the packet is first filtered through Op(u_k u_k*) so the other
    branches start at O(eps) amplitude.
    """
    params: WaveParams = ctx.params
    grid, profile, flow = ctx.grid, ctx.profile, ctx.flow
    center = PhasePoint.from_array(params.launch)
    xi_max = float(np.hypot(center.xi1, center.xi2)) + 2.0 * np.sqrt(eps)
    propagator = Propagator.build(grid, profile, flow, eps, xi_max=xi_max, scheme_dt=params.scheme_dt)

    state = gaussian_wavepacket(center, eps, grid, branch, profile, gap_floor=ctx.gap_floor)
    if params.prepare:
        filtered = symbol_projector(branch, eps, grid, profile, dense=False).apply(state.field)
        state = state.with_field(filtered / grid_norm(filtered, grid))
    rossby = symbol_projector("rossby", eps, grid, profile, dense=False)
    compact = Rectangle.around(center.x1, center.x2, params.compact_half_side)
    tag = f"eps{eps:g}"
    if params.dumps:
        ctx.state_dump(f"state_{tag}_initial.bin", state.field, eps, state.t)

    rows = []
    step = slow_horizon / (params.samples - 1)
    for i in range(params.samples):
        if i:
            state = evolve(state, step, propagator, edge_tol=ctx.config.tolerances.edge_mass)
        diagnostics = region_diagnostics(state, compact, band)
        projected = rossby.apply(state.field)
        rows.append(
            {
                "t": state.t,
                "s": state.t / eps,
                "mass_in_compact": diagnostics.mass_in_compact,
                "mass_outside_band": diagnostics.mass_outside_band,
                "rossby_fraction": (grid_norm(projected, grid) / state.norm) ** 2,
                "norm": state.norm,
                "edge_mass": diagnostics.edge_mass,
                "trusted": state.trusted,
            }
        )
        logger.debug(f"eps={eps} t={state.t:.4g}: {rows[-1]}")
    if params.dumps:
        ctx.state_dump(f"state_{tag}_final.bin", state.field, eps, state.t)
    ctx.csv(f"series_{tag}.csv", SERIES_COLUMNS, rows)
    if flow.is_zero:
        drift = max(abs(row["norm"] - rows[0]["norm"]) for row in rows) / max(slow_horizon, 1.0)
        ctx.gate(f"norm_drift_{tag}", drift, params.norm_drift_tolerance, "<=")
    ctx.metrics[f"compact_set_{tag}"] = list(compact.as_tuple())
    ctx.metrics[f"latitude_band_{tag}"] = list(band)
    if not all(row["trusted"] for row in rows):
        logger.warning(f"⚠️ eps={eps}: wave mass reached the x2 seam; later samples are untrusted")
    return rows


def ratio(smaller_eps_value: float, larger_eps_value: float) -> float:
    """value at the smallest eps over value at the largest; 0 when both vanish."""
    if larger_eps_value > 0.0:
        return smaller_eps_value / larger_eps_value
    return 0.0 if smaller_eps_value <= 0.0 else float("inf")


def leak_constant(rows: List[Dict[str, float]], eps: float) -> float:
    """Smallest c with rossby_fraction >= 1 - c eps (1 + t) at every sample."""
    return max(max(0.0, 1.0 - row["rossby_fraction"]) / (eps * (1.0 + row["t"])) for row in rows)


def post_transit_rise(rows: List[Dict[str, float]], key: str, s_start: float) -> float:
    """Largest rise of ``key`` between consecutive samples with s >= s_start, relative to its first value there."""
    values = np.array([row[key] for row in rows if row["s"] >= s_start])
    if values.size < 2 or values[0] <= 0.0:
        return 0.0
    return float(max(0.0, np.max(np.diff(values))) / values[0])
