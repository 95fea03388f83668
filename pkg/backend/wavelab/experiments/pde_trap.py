"""Rossby packets stay in the latitude band predicted by their rays."""

import logging
from typing import Tuple

import numpy as np
from pydantic import Field

from wavelab.experiments.base import RunContext
from wavelab.experiments.wave_series import WaveParams, leak_constant, ratio, run_series
from wavelab.models import PhasePoint
from wavelab.services.ray_tracer import integrate, trapping_band, trapping_diagnostic

logger = logging.getLogger(__name__)

STAGES: Tuple[str, ...] = ()


class Params(WaveParams):
    launch: Tuple[float, float, float, float] = (0.0, 0.6, 1.0, 0.0)
    horizon: float = Field(5.0, gt=0.0)


def ray_band(ctx: RunContext, horizon: float) -> Tuple[float, float]:
    """x2-range of the Rossby ray from the launch point: closed form on a betaplane, traced otherwise."""
    center = PhasePoint.from_array(ctx.params.launch)
    profile = ctx.profile
    if profile.kind == "betaplane" and profile.beta != 0.0 and ctx.flow.is_zero:
        return trapping_band(center, profile)
    report = trapping_diagnostic(integrate("rossby", center, horizon, profile, ctx.flow, gap_floor=ctx.gap_floor))
    return report.x2_inf, report.x2_sup


def run(ctx: RunContext):
    params: Params = ctx.params
    lo, hi = ray_band(ctx, params.horizon)
    ctx.metrics["ray_band"] = [lo, hi]
    worst = {}
    for eps in ctx.config.eps:
        inflation = params.band_inflation * np.sqrt(eps)
        rows = run_series(ctx, eps, "rossby", (lo - inflation, hi + inflation), params.horizon)
        worst[eps] = max(row["mass_outside_band"] for row in rows)
        ctx.metrics[f"min_rossby_fraction_eps{eps:g}"] = min(row["rossby_fraction"] for row in rows)
        ctx.metrics[f"leak_constant_eps{eps:g}"] = leak_constant(rows, eps)
        logger.info(f"eps={eps}: max mass outside band {worst[eps]:.3e}")
    ordered = sorted(worst)
    ctx.plot("mass_outside_band_vs_eps.dat", ordered, [worst[eps] for eps in ordered])
    ctx.metrics["max_mass_outside_band"] = {f"{eps:g}": worst[eps] for eps in ordered}

    ctx.gate("mass_outside_band", worst[ordered[0]], params.mass_tolerance, "<=", criterion=8)
    if len(ordered) > 1:
        ctx.gate("mass_outside_band_ratio", ratio(worst[ordered[0]], worst[ordered[-1]]), 1.0, "<=", criterion=8)
