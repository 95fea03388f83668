"""Rossby trapping and Poincaré escape along bicharacteristics."""

import logging
from typing import Tuple

import numpy as np
from pydantic import Field

from wavelab.errors import GapViolation
from wavelab.experiments.base import RunContext, RunnerParams
from wavelab.models import PhasePoint
from wavelab.services.ray_tracer import (
    coordinate_observable,
    escape_backtrack,
    integrate,
    poisson_bracket_scalar,
    trapping_band,
    trapping_diagnostic,
)

logger = logging.getLogger(__name__)

STAGES: Tuple[str, ...] = ()

Start = Tuple[float, float, float, float]


class Params(RunnerParams):
    rossby_start: Start = (0.0, 0.5, 1.0, 0.0)
    poincare_start: Start = (0.0, 0.0, 1.0, 0.0)
    steps: int = Field(10_000, ge=1)
    rossby_dt: float = Field(1e-2, gt=0.0)
    poincare_dt: float = Field(1e-3, gt=0.0)
    sample_every: int = Field(10, ge=1)
    bound_tolerance: float = Field(1e-6, gt=0.0)
    xi1_tolerance: float = Field(1e-10, gt=0.0)
    rate_tolerance: float = Field(1e-6, gt=0.0)
    reversal_steps: int = Field(1000, ge=1)
    reversal_tolerance: float = Field(1e-8, gt=0.0)
    escape_xi1_min: float = Field(0.5, ge=0.0)


def _rossby(ctx: RunContext):
    params: Params = ctx.params
    start = PhasePoint.from_array(params.rossby_start)
    T = params.steps * params.rossby_dt
    try:
        traj = integrate(
            "rossby", start, T, ctx.profile, ctx.flow, params.rossby_dt, ctx.gap_floor, sample_every=params.sample_every
        )
    except GapViolation as e:
        partial = getattr(e, "trajectory", None)
        if partial is not None and len(partial):
            ctx.csv("ray_rossby.csv", list(partial.rows()[0]), partial.rows())
        raise
    ctx.csv("ray_rossby.csv", list(traj.rows()[0]), traj.rows())
    ctx.plot("ray_rossby_x2.dat", traj.times, traj.states[:, 1])
    report = trapping_diagnostic(traj)
    ctx.metrics["rossby"] = report.model_dump()

    exact_band = ctx.profile.kind == "betaplane" and ctx.profile.beta != 0.0 and ctx.flow.is_zero
    if exact_band:
        lo, hi = trapping_band(start, ctx.profile)
        overshoot = max(report.x2_sup - hi, lo - report.x2_inf, 0.0)
        ctx.metrics["rossby_band"] = [lo, hi]
        ctx.gate("rossby_band_overshoot", overshoot, params.bound_tolerance, "<=", criterion=4)
    else:
        ctx.metrics["rossby_band"] = [report.x2_inf, report.x2_sup]
        logger.info(f"Empirical Rossby band [{report.x2_inf:.4f}, {report.x2_sup:.4f}]")
    ctx.gate("rossby_energy_drift", report.H_drift, ctx.config.tolerances.energy_drift, "<=", criterion=4)
    if ctx.flow.is_zero:
        ctx.gate("rossby_xi1_drift", report.xi1_drift, params.xi1_tolerance, "<=", criterion=4)

    forward = integrate(
        "rossby", start, params.reversal_steps * params.rossby_dt, ctx.profile, ctx.flow,
        params.rossby_dt, ctx.gap_floor,
    )
    returned = integrate(
        "rossby", forward.final, params.reversal_steps * params.rossby_dt, ctx.profile, ctx.flow,
        params.rossby_dt, ctx.gap_floor, backward=True,
    )
    reversal = float(np.max(np.abs(returned.final.as_array() - start.as_array())))
    ctx.metrics["rossby_time_reversal"] = reversal
    ctx.gate("rossby_time_reversal", reversal, params.reversal_tolerance, "<=", criterion=4)


def _poincare(ctx: RunContext, kind: str):
    params: Params = ctx.params
    start = PhasePoint.from_array(params.poincare_start)
    T = params.steps * params.poincare_dt
    traj = integrate(kind, start, T, ctx.profile, ctx.flow, params.poincare_dt, ctx.gap_floor,
                     sample_every=params.sample_every)
    ctx.csv(f"ray_{kind}.csv", list(traj.rows()[0]), traj.rows())
    ctx.plot(f"ray_{kind}_x1.dat", traj.times, traj.states[:, 0])

    report = trapping_diagnostic(traj)
    bracket = poisson_bracket_scalar(kind, coordinate_observable("x1"), start, ctx.profile, ctx.flow, ctx.gap_floor)
    times = np.asarray(traj.times)
    linear = start.x1 + bracket * times
    deviation = float(np.max(np.abs(traj.states[:, 0] - linear)))
    ctx.metrics[kind] = {**report.model_dump(), "bracket_x1": bracket, "linear_deviation": deviation}

    if ctx.flow.is_zero and start.xi2 == 0.0 and ctx.profile.b(start.x2) == 0.0:
        # on the equator with xi2 = 0 the ray stays there and x1 moves at exactly xi1 / tau
        ctx.gate(f"{kind}_rate_vs_bracket", abs(report.x1_drift_rate - bracket), params.rate_tolerance, "<=",
                 criterion=5)
        ctx.gate(f"{kind}_linear_deviation", deviation, params.rate_tolerance, "<=", criterion=5)
    if ctx.flow.is_zero and abs(start.xi1) >= params.escape_xi1_min:
        # x1' = xi1 / tau with xi1 conserved
        direction = float(np.sign(start.xi1 / traj.energies[0]))
        ctx.metrics[kind]["x1_backtrack"] = escape_backtrack(traj, direction)
        ctx.gate(f"{kind}_x1_monotone", ctx.metrics[kind]["x1_backtrack"], 0.0, "<=", criterion=5)
    ctx.gate(f"{kind}_energy_drift", report.H_drift, ctx.config.tolerances.energy_drift, "<=")


def run(ctx: RunContext):
    _rossby(ctx)
    for kind in ("poincare_plus", "poincare_minus"):
        _poincare(ctx, kind)
