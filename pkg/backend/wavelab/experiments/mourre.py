"""Positive commutator and propagation decay on the line.

The x2 direction is reduced away: the canonical pair is H = Op(xi), A = x, and the
Poincaré case freezes xi2^2 + b^2 into a transverse mass m, H = Op(sqrt(xi^2 + m^2)).
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import Field, model_validator

from wavelab.experiments.base import RunContext, RunnerParams
from wavelab.services.mourre import (
    SpectralDecomposition,
    WindowFunction,
    commutator_defect,
    filtered_packets,
    frequency_cutoff,
    positivity_check,
    position_commutator,
    propagation_decay,
    spectral_window,
)
from wavelab.services.weyl_quant import line_operator, line_points
from wavelab.utils.fitting import geometric_times

logger = logging.getLogger(__name__)

STAGES: Tuple[str, ...] = ()


class Params(RunnerParams):
    n: int = Field(512, ge=16)
    L: float = Field(32.0, gt=0.0)
    window: Tuple[float, float] = (0.1, 2.0)
    g_support: Tuple[float, float] = (0.2, 1.8)
    theta_prime: float = Field(0.05, gt=0.0)
    control_factor: float = Field(2.0, gt=1.0)
    t_start: float = Field(10.0, gt=0.0)
    t_stop: float = Field(100.0, gt=0.0)
    samples: int = Field(8, ge=2)
    theta_tolerance: float = Field(1e-12, gt=0.0)
    exponent_min: float = 2.0
    control_norm_min: float = 0.1
    transverse_mass: float = Field(1.0, gt=0.0)
    xi_min: float = Field(0.3, gt=0.0)
    tau_max: float = Field(1.8, gt=0.0)
    commutator_tolerance: float = Field(1e-8, gt=0.0)
    packet_width: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _ordered(self) -> "Params":
        if not self.window[0] < self.g_support[0] < self.g_support[1] < self.window[1]:
            raise ValueError("g_support must lie strictly inside window")
        if not self.t_start < self.t_stop:
            raise ValueError("t_start must be below t_stop")
        if not self.tau_max > self.transverse_mass:
            raise ValueError("tau_max must exceed transverse_mass")
        return self


def _commutator_agreement(ctx: RunContext, name: str, H, A, commutator, decomposition, g, wavenumber: float,
                          criterion: int):
    """Closed-form commutator against the matrix one on filtered packets at -L/4, 0 and L/4."""
    params: Params = ctx.params
    L = params.L
    width = params.packet_width if params.packet_width is not None else 0.1 * L
    centers = (-0.25 * L, 0.0, 0.25 * L)
    packets = filtered_packets(decomposition, g, line_points(params.n, L), centers, width, wavenumber)
    defect = commutator_defect(H, A, commutator, packets)
    ctx.metrics[f"{name}_commutator_defect"] = defect
    ctx.gate(f"{name}_commutator_agreement", defect, params.commutator_tolerance, "<=", criterion=criterion)


def _decay_rows(report, control=None):
    rows = []
    for i, (t, norm) in enumerate(report.decay_samples):
        row = {"t": t, "norm": norm}
        if control is not None:
            row["control_norm"] = control.decay_samples[i][1]
        rows.append(row)
    return rows


def _canonical(ctx: RunContext, eps: float):
    params: Params = ctx.params
    n, L = params.n, params.L
    H = line_operator(lambda x, xi: xi, eps, n, L)
    A = np.diag(line_points(n, L)).astype(complex)
    commutator = position_commutator(lambda x, xi: np.ones_like(xi), eps, n, L)
    decomposition = SpectralDecomposition.of(H)
    window = spectral_window(decomposition, *params.window)
    theta = positivity_check(H, A, window, commutator)
    ctx.metrics["canonical_theta_est"] = theta
    ctx.metrics["canonical_window_rank"] = window.rank
    ctx.gate("canonical_theta_vs_eps", abs(theta - eps), params.theta_tolerance, "<=", criterion=6)
    g = WindowFunction(*params.g_support)
    middle = 0.5 * (params.window[0] + params.window[1])
    _commutator_agreement(ctx, "canonical", H, A, commutator, decomposition, g, middle / eps, 6)

    times = geometric_times(params.t_start, params.t_stop, params.samples)
    a = -0.5 * L
    report = propagation_decay(H, A, g, a, params.theta_prime, times, window, theta_est=theta, span=0.5 * L)
    control = propagation_decay(
        H, A, g, a, params.control_factor * eps, times, window, theta_est=theta, span=0.5 * L
    )
    ctx.csv("decay_canonical.csv", ["t", "norm", "control_norm"], _decay_rows(report, control))
    ctx.plot("decay_canonical.dat", times, [norm for _, norm in report.decay_samples])
    ctx.plot("decay_control.dat", times, [norm for _, norm in control.decay_samples])
    ctx.metrics["canonical"] = report.model_dump()
    ctx.metrics["control"] = control.model_dump()

    ctx.gate("canonical_decay_exponent", report.fitted_exponent, params.exponent_min, ">=", criterion=6)
    ctx.gate(
        "control_min_norm", min(norm for _, norm in control.decay_samples), params.control_norm_min, ">=", criterion=6
    )


def _tau_plus(ctx: RunContext, eps: float):
    params: Params = ctx.params
    n, L, m = params.n, params.L, params.transverse_mass
    H = line_operator(lambda x, xi: np.sqrt(xi * xi + m * m), eps, n, L)
    A = np.diag(line_points(n, L)).astype(complex)
    commutator = position_commutator(lambda x, xi: xi / np.sqrt(xi * xi + m * m), eps, n, L)
    decomposition = SpectralDecomposition.of(H)
    restriction = frequency_cutoff(n, L, eps, params.xi_min)
    window = spectral_window(decomposition, m, params.tau_max, restriction=restriction)
    theta = positivity_check(H, A, window, commutator)

    xi = eps * 2.0 * np.pi * np.fft.fftfreq(n, 2.0 * L / n)
    tau = np.sqrt(xi * xi + m * m)
    inside = (xi >= params.xi_min) & (tau > m) & (tau < params.tau_max)
    symbol_min = float(np.min(xi[inside] / tau[inside]))
    ctx.metrics["tau_plus_theta_est"] = theta
    ctx.metrics["tau_plus_symbol_min"] = symbol_min
    ctx.metrics["tau_plus_window_rank"] = window.rank
    ctx.gate("tau_plus_theta_positive", theta, params.theta_tolerance, ">=", criterion=7)
    ctx.gate("tau_plus_theta_vs_symbol", abs(theta / eps - symbol_min), eps, "<=", criterion=7)

    margin = 0.1 * (params.tau_max - m)
    tau_c = 0.5 * (m + params.tau_max)
    g = WindowFunction(m + margin, params.tau_max - margin)
    wavenumber = np.sqrt(tau_c * tau_c - m * m) / eps
    _commutator_agreement(ctx, "tau_plus", H, A, commutator, decomposition, g, wavenumber, 7)


def run(ctx: RunContext):
    eps = ctx.config.eps[0]
    if len(ctx.config.eps) > 1:
        logger.info(f"mourre uses the first eps only ({eps})")
    _canonical(ctx, eps)
    _tau_plus(ctx, eps)
