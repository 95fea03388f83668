"""Poincaré packets leave every fixed compact set.

The horizon is given in fast units s = t / eps, the scale on which Poincaré packets
travel an O(1) distance.
"""

import logging
from typing import Literal, Tuple

import numpy as np
from pydantic import Field

from wavelab.experiments.base import RunContext
from wavelab.experiments.wave_series import WaveParams, post_transit_rise, ratio, run_series
from wavelab.models import PhasePoint
from wavelab.services.ray_tracer import group_velocity

logger = logging.getLogger(__name__)

STAGES: Tuple[str, ...] = ()


class Params(WaveParams):
    launch: Tuple[float, float, float, float] = (0.0, 0.0, 1.0, 0.0)
    horizon: float = Field(2.0, gt=0.0)
    branch: Literal["plus", "minus"] = "plus"
    rise_tolerance: float = Field(0.1, ge=0.0)


def _transit_time(ctx: RunContext):
    """Fast time for the launch ray to cross the compact half side, None if it does not move."""
    params: Params = ctx.params
    launch = PhasePoint.from_array(params.launch)
    kind = "poincare_plus" if params.branch == "plus" else "poincare_minus"
    speed = float(np.hypot(*group_velocity(kind, launch, ctx.profile, ctx.flow)))
    if speed == 0.0:
        logger.warning("⚠️ the launch ray is at rest; mass in the compact set is not gated after transit")
        return None
    return params.compact_half_side / speed


def run(ctx: RunContext):
    params: Params = ctx.params
    band = (-ctx.grid.L2, ctx.grid.L2)
    transit = _transit_time(ctx)
    final = {}
    for eps in ctx.config.eps:
        rows = run_series(ctx, eps, params.branch, band, params.horizon * eps)
        final[eps] = rows[-1]["mass_in_compact"]
        ctx.plot(
            f"mass_in_compact_eps{eps:g}.dat", [row["s"] for row in rows], [row["mass_in_compact"] for row in rows]
        )
        logger.info(f"eps={eps}: mass in compact set at s={params.horizon} is {final[eps]:.3e}")
        if transit is not None:
            rise = post_transit_rise(rows, "mass_in_compact", transit)
            ctx.gate(f"post_transit_rise_eps{eps:g}", rise, params.rise_tolerance, "<=", criterion=9)
    ordered = sorted(final)
    ctx.metrics["final_mass_in_compact"] = {f"{eps:g}": final[eps] for eps in ordered}

    ctx.gate("final_mass_in_compact", final[ordered[0]], params.mass_tolerance, "<=", criterion=9)
    if len(ordered) > 1:
        ctx.gate("mass_in_compact_ratio", ratio(final[ordered[0]], final[ordered[-1]]), 1.0, "<=", criterion=9)
