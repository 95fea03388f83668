"""Unit tests for the operator-level block diagonalization."""

import numpy as np
import pytest
from wavelab.errors import GapViolation
from wavelab.services.diagonalizer import (
    BRANCHES,
    branch_projectors,
    build_intertwiner,
    check_gap_on_grid,
    diagonal_operator,
    first_order_correction,
    offdiag_residual,
    packet_ensemble,
    sweep_residuals,
    symbol_projector,
    unitarity_defect,
)
from wavelab.services.symbol_core import ZERO_FLOW, CoriolisProfile
from wavelab.services.weyl_quant import SpatialGrid
from wavelab.utils.fitting import loglog_slope

EPS = 0.1

# xi1 * width = 0.33 keeps the packets' own frequency spread from bending the slopes
SWEEP_EPS = [0.2, 0.1, 0.05]
SWEEP_GRID = SpatialGrid(n1=48, n2=24, L1=6.0, L2=6.0)
SWEEP_OPTIONS = {"packets": 6, "width": 1.0, "xi0": (0.33, 0.0), "spread": 0.02}


def _rng(seed=3):
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# Gap pre-check
# ---------------------------------------------------------------------------


class TestGapCheck:
    def test_equatorial_betaplane_has_no_grid_gap(self, betaplane, small_grid):
        with pytest.raises(GapViolation) as excinfo:
            check_gap_on_grid(EPS, small_grid, betaplane)
        assert excinfo.value.gap == pytest.approx(0.0)
        assert excinfo.value.point.x2 == pytest.approx(0.0)

    def test_offset_profile_is_gapped(self, offset_profile, small_grid):
        check_gap_on_grid(EPS, small_grid, offset_profile)

    def test_intertwiner_refuses_ungapped_grid(self, betaplane, small_grid):
        with pytest.raises(GapViolation):
            build_intertwiner(EPS, small_grid, betaplane)


# ---------------------------------------------------------------------------
# Constant coefficients: every operator is a Fourier multiplier
# ---------------------------------------------------------------------------


class TestConstantCoefficients:
    def test_intertwiner_is_unitary(self, constant_profile, small_grid):
        U = build_intertwiner(EPS, small_grid, constant_profile)
        assert unitarity_defect(U) <= 1e-10

    def test_projectors_are_complete_and_orthogonal(self, constant_profile, small_grid):
        projectors = branch_projectors(EPS, small_grid, constant_profile)
        assert projectors.completeness_defect() <= 1e-10
        assert projectors.cross_defect() <= 1e-10
        assert projectors.idempotency_defect() <= 1e-10

    @pytest.mark.parametrize("branch", BRANCHES)
    def test_symbol_projector_matches_frame_projector(self, constant_profile, small_grid, branch):
        projectors = branch_projectors(EPS, small_grid, constant_profile)
        expected = projectors.as_tuple()[BRANCHES.index(branch)]
        assert np.allclose(symbol_projector(branch, EPS, small_grid, constant_profile).matrix, expected.matrix,
                           atol=1e-10)

    def test_residual_is_rounding_only(self, constant_profile, zero_flow, small_grid):
        residual = offdiag_residual(EPS, small_grid, constant_profile, zero_flow, _rng(), packets=3)
        assert residual <= 1e-10

    def test_first_order_correction_vanishes(self, constant_profile, zero_flow, small_grid):
        # no x-dependence: every Poisson bracket, hence I1 and K, is zero
        V = first_order_correction(EPS, small_grid, constant_profile, zero_flow)
        U = build_intertwiner(EPS, small_grid, constant_profile)
        assert np.allclose(V.matrix, U.matrix, atol=1e-10)

    def test_diagonal_operator_carries_branch_frequencies(self, constant_profile, zero_flow, small_grid):
        D = diagonal_operator(EPS, small_grid, constant_profile, zero_flow)
        state = np.zeros((3, small_grid.n1, small_grid.n2), dtype=complex)
        state[2] = 1.0
        # the zero mode of the + branch has frequency b0
        assert np.allclose(D.apply(state), 2.0 * state, atol=1e-10)

    def test_sweep_returns_one_residual_per_eps(self, constant_profile, zero_flow, small_grid):
        residuals = sweep_residuals(
            [0.2, 0.1], small_grid, constant_profile, zero_flow, np.random.SeedSequence(5), packets=2
        )
        assert len(residuals) == 2
        assert max(residuals) <= 1e-10


# ---------------------------------------------------------------------------
# Symbol projectors on the equatorial betaplane
# ---------------------------------------------------------------------------


class TestSymbolProjectors:
    def test_branches_sum_to_identity(self, betaplane, tiny_grid):
        total = sum(symbol_projector(branch, EPS, tiny_grid, betaplane).matrix for branch in BRANCHES)
        assert np.allclose(total, np.eye(3 * tiny_grid.size), atol=1e-10)

    def test_projector_is_self_adjoint(self, betaplane, tiny_grid):
        P = symbol_projector("rossby", EPS, tiny_grid, betaplane).matrix
        assert np.allclose(P, P.conj().T, atol=1e-12)

    def test_matrix_free_form(self, betaplane, tiny_grid):
        dense = symbol_projector("plus", EPS, tiny_grid, betaplane, dense=True)
        free = symbol_projector("plus", EPS, tiny_grid, betaplane, dense=False)
        state = np.ones((3, tiny_grid.n1, tiny_grid.n2), dtype=complex)
        assert np.allclose(free.apply(state), dense.apply(state), atol=1e-10)


# ---------------------------------------------------------------------------
# Packets and residuals
# ---------------------------------------------------------------------------


class TestPackets:
    def test_ensemble_is_reproducible(self, small_grid):
        first = packet_ensemble(small_grid, EPS, _rng(), count=4)
        second = packet_ensemble(small_grid, EPS, _rng(), count=4)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_each_packet_lives_on_one_branch(self, small_grid):
        for state in packet_ensemble(small_grid, EPS, _rng(), count=6):
            occupied = [k for k in range(3) if np.any(state[k])]
            assert len(occupied) == 1

    def test_spread_controls_centers(self, small_grid):
        (state,) = packet_ensemble(small_grid, EPS, _rng(), count=1, spread=0.0)
        branch = next(k for k in range(3) if np.any(state[k]))
        peak = np.unravel_index(int(np.argmax(np.abs(state[branch]))), state[branch].shape)
        assert peak == (small_grid.n1 // 2, small_grid.n2 // 2)

    @pytest.mark.parametrize("spread", [-0.1, 1.5])
    def test_spread_outside_box_raises(self, small_grid, spread):
        with pytest.raises(ValueError):
            packet_ensemble(small_grid, EPS, _rng(), count=1, spread=spread)

    def test_ungapped_residual_raises(self, betaplane, zero_flow, small_grid):
        with pytest.raises(GapViolation):
            offdiag_residual(EPS, small_grid, betaplane, zero_flow, _rng(), packets=1)

    def test_first_order_construction_beats_leading_order(self, offset_profile, zero_flow):
        # packets keep many widths away from the seam, where b jumps
        grid = SpatialGrid(n1=32, n2=32, L1=6.0, L2=6.0)
        corrected = offdiag_residual(EPS, grid, offset_profile, zero_flow, _rng(), packets=3, width=0.6)
        leading = offdiag_residual(
            EPS, grid, offset_profile, zero_flow, _rng(), packets=3, width=0.6, include_d1=False, corrected=False
        )
        assert corrected < leading


# ---------------------------------------------------------------------------
# eps sweeps
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_profile():
    """b(x2) = 2 + x2/4: gapped on the sweep box, with D1 of order beta xi1 / b^2."""
    return CoriolisProfile(kind="betaplane", beta=0.25, b0=2.0)


@pytest.fixture(scope="module")
def sweeps(sweep_profile):
    seeds = np.random.SeedSequence(11)
    return {
        include_d1: sweep_residuals(
            SWEEP_EPS, SWEEP_GRID, sweep_profile, ZERO_FLOW, seeds, include_d1=include_d1, **SWEEP_OPTIONS
        )
        for include_d1 in (True, False)
    }


class TestEpsScaling:
    def test_first_order_construction_is_second_order(self, sweeps):
        assert loglog_slope(SWEEP_EPS, sweeps[True]) >= 1.8

    def test_without_d1_residual_is_first_order(self, sweeps):
        assert loglog_slope(SWEEP_EPS, sweeps[False]) <= 1.2

    def test_unitarity_defect_on_packets_is_first_order(self, sweep_profile):
        defects = []
        for eps in SWEEP_EPS:
            U = build_intertwiner(eps, SWEEP_GRID, sweep_profile)
            states = packet_ensemble(
                SWEEP_GRID, eps, _rng(11), SWEEP_OPTIONS["packets"], SWEEP_OPTIONS["width"], SWEEP_OPTIONS["xi0"],
                SWEEP_OPTIONS["spread"],
            )
            defects.append(unitarity_defect(U, states))
        assert 0.8 <= loglog_slope(SWEEP_EPS, defects) <= 1.2

    def test_packet_defect_is_bounded_by_operator_norm(self, offset_profile, small_grid):
        U = build_intertwiner(EPS, small_grid, offset_profile)
        states = packet_ensemble(small_grid, EPS, _rng(), count=3)
        assert unitarity_defect(U, states) <= unitarity_defect(U) + 1e-12
