"""Unit tests for the direct shallow-water evolution and region diagnostics."""

import numpy as np
import pytest
from wavelab.errors import BoxTooSmall, EdgeMassExceeded, GapViolation, GridMismatch, GridTooCoarse
from wavelab.models import PhasePoint, RegionDiagnostics
from wavelab.services.diagonalizer import branch_projectors
from wavelab.services.pde_solver import (
    BandComplement,
    Propagator,
    Rectangle,
    WaveState,
    branch_fractions,
    build_generator,
    check_resolution,
    edge_mass,
    evolve,
    gaussian_wavepacket,
    plane_wave_frequencies,
    region_diagnostics,
    region_mass,
    split_waves,
)
from wavelab.services.symbol_core import eigenframe_arrays
from wavelab.services.weyl_quant import SpatialGrid

EPS = 0.2
CENTER = PhasePoint.of(0.0, 0.5, 1.0, 0.0)


@pytest.fixture
def propagator(small_grid, betaplane, zero_flow):
    return Propagator.build(small_grid, betaplane, zero_flow, EPS, xi_max=1.0)


@pytest.fixture
def packet(small_grid, betaplane):
    return gaussian_wavepacket(CENTER, EPS, small_grid, "rossby", betaplane)


# ---------------------------------------------------------------------------
# WaveState
# ---------------------------------------------------------------------------


class TestWaveState:
    def test_shape_must_match_grid(self, small_grid):
        with pytest.raises(GridMismatch):
            WaveState(field=np.zeros((3, 8, 8), dtype=complex), grid=small_grid, eps=EPS)

    def test_non_finite_entries(self, small_grid):
        field = np.zeros((3, 16, 16), dtype=complex)
        field[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            WaveState(field=field, grid=small_grid, eps=EPS)

    def test_components(self, packet):
        assert packet.eta.shape == (16, 16)
        assert packet.norm == pytest.approx(1.0)
        assert (packet + packet).norm == pytest.approx(2.0)


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


class TestGenerator:
    def test_coarse_grid_is_rejected(self, small_grid):
        with pytest.raises(GridTooCoarse):
            check_resolution(small_grid, 0.01, 1.0)

    def test_generator_is_hermitian_without_flow(self, tiny_grid, betaplane, zero_flow):
        A = build_generator(tiny_grid, betaplane, zero_flow, EPS).matrix
        assert np.allclose(A, A.conj().T, atol=1e-12)

    def test_constant_coefficients_give_plane_wave_frequencies(self, tiny_grid, constant_profile, zero_flow):
        A = build_generator(tiny_grid, constant_profile, zero_flow, 0.1).matrix
        expected = np.sort(plane_wave_frequencies(tiny_grid, 0.1, 2.0).ravel())
        assert np.allclose(np.linalg.eigvalsh(A), expected, atol=1e-9)

    def test_matrix_free_agrees_with_dense(self, betaplane, bump_flow):
        grid = SpatialGrid(n1=8, n2=8, L1=3.0, L2=3.0)
        dense = build_generator(grid, betaplane, bump_flow, EPS, dense=True)
        free = build_generator(grid, betaplane, bump_flow, EPS, dense=False)
        rng = np.random.Generator(np.random.Philox(1))
        field = rng.standard_normal((3, 8, 8)) + 1j * rng.standard_normal((3, 8, 8))
        assert np.allclose(free.apply(field), dense.apply(field), atol=1e-10)
        assert np.allclose(free.apply_adjoint(field), dense.apply_adjoint(field), atol=1e-10)


# ---------------------------------------------------------------------------
# Packets
# ---------------------------------------------------------------------------


class TestWavepacket:
    def test_packet_carries_branch_vector(self, packet, betaplane):
        u0 = eigenframe_arrays(CENTER.x2, CENTER.xi1, CENTER.xi2, betaplane)[1][:, 1]
        peak = np.unravel_index(np.argmax(np.abs(packet.eta)), packet.eta.shape)
        values = packet.field[(slice(None),) + peak]
        assert abs(np.vdot(u0, values)) / np.linalg.norm(values) == pytest.approx(1.0)

    def test_packet_must_fit_box(self, small_grid, betaplane):
        with pytest.raises(BoxTooSmall):
            gaussian_wavepacket(PhasePoint.of(0.0, 3.5, 1.0, 0.0), EPS, small_grid, "plus", betaplane)

    def test_packet_needs_gap(self, small_grid, betaplane):
        with pytest.raises(GapViolation):
            gaussian_wavepacket(PhasePoint.of(0.0, 0.0, 0.0, 0.0), EPS, small_grid, "plus", betaplane)

    @pytest.mark.parametrize("branch", ["-", "minus", "0", "rossby", "+", "plus", 2])
    def test_branch_names(self, small_grid, betaplane, branch):
        assert gaussian_wavepacket(CENTER, EPS, small_grid, branch, betaplane).norm == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------


class TestEvolve:
    def test_norm_is_conserved(self, packet, propagator):
        evolved = evolve(packet, 0.5, propagator)
        assert evolved.norm == pytest.approx(1.0, abs=1e-10)
        assert evolved.t == pytest.approx(0.5)

    def test_backward_evolution_undoes_forward(self, packet, propagator):
        there = evolve(packet, 0.3, propagator)
        back = evolve(there, -0.3, propagator)
        assert np.allclose(back.field, packet.field, atol=1e-9)

    def test_zero_time_is_identity(self, packet, propagator):
        assert np.array_equal(evolve(packet, 0.0, propagator).field, packet.field)

    def test_mismatched_eps(self, small_grid, betaplane, propagator):
        other = gaussian_wavepacket(CENTER, 0.1, small_grid, "rossby", betaplane)
        with pytest.raises(GridMismatch):
            evolve(other, 0.1, propagator)

    def test_strict_edge_check_raises(self, packet, propagator):
        with pytest.raises(EdgeMassExceeded):
            evolve(packet, 0.1, propagator, edge_tol=1e-300, strict=True)

    def test_lenient_edge_check_flags_state(self, packet, propagator):
        evolved = evolve(packet, 0.1, propagator, edge_tol=1e-300)
        assert not evolved.trusted


# ---------------------------------------------------------------------------
# Regions and splitting
# ---------------------------------------------------------------------------


class TestRegions:
    def test_uniform_state_masses(self, small_grid):
        state = WaveState(field=np.ones((3, 16, 16), dtype=complex), grid=small_grid, eps=EPS)
        box = Rectangle(-4.0, -0.5, -4.0, 3.5)
        assert region_mass(state, box) == pytest.approx(0.5)
        assert region_mass(state, BandComplement(-1.0, 1.0)) == pytest.approx(11.0 / 16.0)

    def test_rectangle_around(self):
        assert Rectangle.around(1.0, -1.0, 0.5).as_tuple() == (0.5, 1.5, -1.5, -0.5)

    def test_edge_mass(self, small_grid, packet):
        field = np.zeros((3, 16, 16), dtype=complex)
        field[:, :, 0] = 1.0
        assert edge_mass(WaveState(field=field, grid=small_grid, eps=EPS)) == pytest.approx(1.0)
        assert edge_mass(packet) < 1e-6

    def test_diagnostics(self, packet):
        report = region_diagnostics(packet, Rectangle.around(0.0, 0.5, 1.0), (-1.0, 2.0))
        assert isinstance(report, RegionDiagnostics)
        assert report.mass_in_compact > 0.99
        assert report.mass_outside_band < 1e-6
        assert report.latitude_band == (-1.0, 2.0)


class TestSplit:
    def test_parts_add_up(self, small_grid, constant_profile):
        projectors = branch_projectors(EPS, small_grid, constant_profile)
        state = gaussian_wavepacket(CENTER, EPS, small_grid, "plus", constant_profile)
        split = split_waves(state, projectors)
        assert split.reconstruction_defect(state) <= 1e-10
        fractions = branch_fractions(state, projectors)
        assert sum(fractions.values()) == pytest.approx(1.0, abs=1e-10)
        assert fractions["poincare_plus"] > fractions["rossby"]

    def test_projectors_must_match_state(self, small_grid, constant_profile):
        projectors = branch_projectors(0.1, small_grid, constant_profile)
        state = gaussian_wavepacket(CENTER, EPS, small_grid, "plus", constant_profile)
        with pytest.raises(GridMismatch):
            split_waves(state, projectors)
