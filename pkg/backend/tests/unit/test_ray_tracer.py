"""Unit tests for bicharacteristic integration and trapping diagnostics."""

import numpy as np
import pytest
from wavelab.errors import GapViolation, StepRejected
from wavelab.models import PhasePoint
from wavelab.services.ray_tracer import (
    RayHamiltonian,
    Trajectory,
    canonical_kind,
    coordinate_observable,
    escape_backtrack,
    group_velocity,
    integrate,
    poisson_bracket_scalar,
    trapping_band,
    trapping_diagnostic,
)

EQUATOR = PhasePoint.of(0.0, 0.0, 1.0, 0.0)
ROSSBY_START = PhasePoint.of(0.0, 0.5, 1.0, 0.0)


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------


class TestRayHamiltonian:
    @pytest.mark.parametrize(
        "alias, expected",
        [("+", "poincare_plus"), ("minus", "poincare_minus"), ("rossby", "rossby"), ("poincare_plus", "poincare_plus")],
    )
    def test_aliases(self, alias, expected):
        assert canonical_kind(alias) == expected

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            canonical_kind("kelvin")

    @pytest.mark.parametrize("kind", ["poincare_plus", "poincare_minus", "rossby"])
    def test_gradient_matches_differences(self, bent_profile, bump_flow, kind):
        hamiltonian = RayHamiltonian(kind, bent_profile, bump_flow)
        z = np.array([0.5, 0.4, 0.7, -0.3])
        step = 1e-6
        numeric = []
        for axis in range(4):
            shift = np.zeros(4)
            shift[axis] = step
            numeric.append((hamiltonian.value(z + shift) - hamiltonian.value(z - shift)) / (2.0 * step))
        assert np.allclose(hamiltonian.gradient(z), numeric, atol=1e-7)

    def test_group_velocity_on_equator(self, betaplane):
        assert group_velocity("poincare_plus", EQUATOR, betaplane) == pytest.approx((1.0, 0.0))
        assert group_velocity("poincare_minus", EQUATOR, betaplane) == pytest.approx((-1.0, 0.0))

    def test_rossby_value_needs_gap(self, betaplane):
        with pytest.raises(GapViolation):
            RayHamiltonian("rossby", betaplane).value([0.0, 0.0, 1e-4, 0.0])


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


class TestIntegrate:
    def test_poincare_ray_runs_along_equator(self, betaplane):
        traj = integrate("poincare_plus", EQUATOR, 1.0, betaplane, dt=1e-3, sample_every=100)
        final = traj.final
        assert final.x1 == pytest.approx(1.0, abs=1e-9)
        assert final.x2 == pytest.approx(0.0, abs=1e-12)
        assert len(traj) == 11
        assert traj.times[-1] == pytest.approx(1.0)

    def test_minus_branch_runs_westward(self, betaplane):
        traj = integrate("-", EQUATOR, 0.5, betaplane, dt=1e-3)
        assert traj.final.x1 == pytest.approx(-0.5, abs=1e-9)

    def test_rossby_ray_stays_in_band(self, betaplane):
        traj = integrate("rossby", ROSSBY_START, 20.0, betaplane, dt=1e-2, sample_every=5)
        report = trapping_diagnostic(traj)
        lo, hi = trapping_band(ROSSBY_START, betaplane)
        assert (lo, hi) == pytest.approx((-0.5, 0.5))
        assert report.x2_sup <= hi + 1e-8
        assert report.x2_inf >= lo - 1e-8
        assert report.H_drift <= 1e-8
        assert report.xi1_drift == 0.0

    def test_rossby_ray_visits_both_hemispheres(self, betaplane):
        traj = integrate("rossby", ROSSBY_START, 20.0, betaplane, dt=1e-2)
        x2 = traj.states[:, 1]
        assert x2.min() < -0.4 and x2.max() > 0.4

    def test_time_reversal(self, bent_profile, bump_flow):
        start = PhasePoint.of(0.5, 0.5, 1.0, 0.2)
        forward = integrate("rossby", start, 2.0, bent_profile, bump_flow, dt=1e-2)
        back = integrate("rossby", forward.final, 2.0, bent_profile, bump_flow, dt=1e-2, backward=True)
        assert np.allclose(back.final.as_array(), start.as_array(), atol=1e-8)

    def test_flow_breaks_xi1_conservation_flag(self, betaplane, bump_flow):
        traj = integrate("rossby", ROSSBY_START, 0.1, betaplane, bump_flow, dt=1e-2)
        assert not traj.xi1_conserved
        assert all(row["xi1_conserved_flag"] == 0 for row in traj.rows())

    @pytest.mark.parametrize("dt, T", [(0.0, 1.0), (-1e-3, 1.0), (1e-3, -1.0)])
    def test_invalid_steps(self, betaplane, dt, T):
        with pytest.raises(ValueError):
            integrate("poincare_plus", EQUATOR, T, betaplane, dt=dt)

    def test_rossby_ray_at_gap_raises(self, betaplane):
        with pytest.raises(GapViolation):
            integrate("rossby", PhasePoint.of(0.0, 0.0, 1e-4, 0.0), 1.0, betaplane)

    def test_unconverged_step_is_rejected(self, betaplane):
        with pytest.raises(StepRejected) as excinfo:
            integrate("rossby", ROSSBY_START, 1.0, betaplane, dt=1e-2, max_iter=1)
        assert len(excinfo.value.trajectory) == 1


# ---------------------------------------------------------------------------
# Trajectory and diagnostics
# ---------------------------------------------------------------------------


class TestTrajectory:
    def test_times_must_increase(self):
        traj = Trajectory(kind="rossby", dt=0.1)
        traj.append(0.0, np.zeros(4), 0.0)
        with pytest.raises(ValueError):
            traj.append(0.0, np.zeros(4), 0.0)

    def test_rows_and_samples(self, betaplane):
        traj = integrate("poincare_plus", EQUATOR, 0.01, betaplane, dt=1e-3)
        rows = traj.rows()
        assert list(rows[0]) == ["t", "x1", "x2", "xi1", "xi2", "H", "xi1_conserved_flag"]
        assert traj.samples()[-1].t == pytest.approx(0.01)

    def test_empty_trajectory_has_no_diagnostic(self):
        with pytest.raises(ValueError):
            trapping_diagnostic(Trajectory(kind="rossby", dt=0.1))

    def test_drift_rate_of_equatorial_ray(self, betaplane):
        traj = integrate("poincare_plus", EQUATOR, 1.0, betaplane, dt=1e-3, sample_every=10)
        assert trapping_diagnostic(traj).x1_drift_rate == pytest.approx(1.0, abs=1e-9)

    def test_escape_backtrack(self):
        traj = Trajectory(kind="poincare_plus", dt=0.1)
        for t, x1 in enumerate([0.0, 0.5, 0.4, 1.0]):
            traj.append(float(t), np.array([x1, 0.0, 1.0, 0.0]), 1.0)
        assert escape_backtrack(traj, 1.0) == pytest.approx(0.1)
        assert escape_backtrack(traj, -1.0) == pytest.approx(0.6)

    def test_off_equator_fast_ray_never_turns_back(self, betaplane):
        start = PhasePoint.of(0.0, 0.8, -0.7, 0.4)
        for kind, direction in (("poincare_plus", -1.0), ("poincare_minus", 1.0)):
            traj = integrate(kind, start, 5.0, betaplane, dt=1e-3, sample_every=10)
            assert escape_backtrack(traj, direction) == 0.0
            assert escape_backtrack(traj, -direction) > 0.0

    def test_band_needs_betaplane(self, bent_profile):
        with pytest.raises(ValueError):
            trapping_band(ROSSBY_START, bent_profile)


class TestPoissonBracket:
    def test_x1_rate_on_equator(self, betaplane):
        rate = poisson_bracket_scalar("poincare_plus", coordinate_observable("x1"), EQUATOR, betaplane)
        assert rate == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("kind", ["poincare_plus", "rossby"])
    def test_bracket_with_itself_vanishes(self, betaplane, kind):
        assert poisson_bracket_scalar(kind, kind, ROSSBY_START, betaplane) == pytest.approx(0.0, abs=1e-14)

    def test_xi1_is_conserved_without_flow(self, betaplane):
        bracket = poisson_bracket_scalar("rossby", coordinate_observable("xi1"), ROSSBY_START, betaplane)
        assert bracket == pytest.approx(0.0, abs=1e-9)
