"""Unit tests for the first-order Moyal calculus and the D1 correction."""

import numpy as np
import pytest
from wavelab.errors import DerivativeUnavailable, GapViolation
from wavelab.models import PhasePoint
from wavelab.services.moyal import (
    FirstOrderSymbol,
    MatrixSymbolFn,
    compose,
    d1_arrays,
    d1_components,
    d1_sweep,
    d1_symbol,
    frame_symbol,
    i1_symbol,
    moyal1,
    poisson_bracket,
    propagator_symbol,
)
from wavelab.services.symbol_core import ZERO_FLOW, CoriolisProfile, rossby_symbol
from wavelab.services.weyl_quant import SpatialGrid, gaussian_envelope, grid_norm, quantize
from wavelab.utils.fitting import loglog_slope

POINTS = [
    PhasePoint.of(0.0, 0.5, 1.0, 0.0),
    PhasePoint.of(0.3, 0.4, 0.7, -0.3),
    PhasePoint.of(-1.0, -1.2, -0.4, 0.9),
    PhasePoint.of(0.8, 0.1, 0.2, 1.5),
]


def _bump(x1, x2, center):
    return np.exp(-((x1 - center[0]) ** 2 + (x2 - center[1]) ** 2) / 4.0)


def _bump_momentum(center):
    """The 1x1 symbol g(x) xi1 with g a unit Gaussian bump at ``center``."""

    def evaluate(x1, x2, xi1, xi2):
        x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        return (_bump(x1, x2, center) * xi1)[..., None, None].astype(complex)

    def partials(x1, x2, xi1, xi2):
        x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        g = _bump(x1, x2, center)
        parts = [-0.5 * (x1 - center[0]) * g * xi1, -0.5 * (x2 - center[1]) * g * xi1, g, np.zeros_like(g)]
        return np.stack(parts)[..., None, None].astype(complex)

    return MatrixSymbolFn(evaluate, partials, name=f"bump{center}*xi1")


# ---------------------------------------------------------------------------
# MatrixSymbolFn
# ---------------------------------------------------------------------------


class TestMatrixSymbolFn:
    def test_constant_has_zero_partials(self):
        symbol = MatrixSymbolFn.constant(np.diag([1.0, 2.0, 3.0]))
        p = POINTS[1]
        assert np.array_equal(symbol(p), np.diag([1.0, 2.0, 3.0]))
        assert not np.any(symbol.partials_at(p))

    def test_bracket_of_coordinates(self):
        xi1 = MatrixSymbolFn.coordinate("xi1")
        x1 = MatrixSymbolFn.coordinate("x1")
        assert np.allclose(poisson_bracket(xi1, x1, POINTS[0]), np.eye(3))
        assert np.allclose(poisson_bracket(x1, xi1, POINTS[0]), -np.eye(3))

    def test_finite_differences_match_closed_form(self, bent_profile):
        closed = frame_symbol(bent_profile)
        numeric = MatrixSymbolFn(closed.evaluate, name="U_fd")
        p = POINTS[1]
        assert np.allclose(numeric.partials_at(p), closed.partials_at(p), atol=1e-7)

    def test_failing_evaluator_is_wrapped(self):
        def evaluate(x1, x2, xi1, xi2):
            raise RuntimeError("boom")

        with pytest.raises(DerivativeUnavailable, match="boom"):
            MatrixSymbolFn(evaluate, name="broken").partials_at(POINTS[0])

    def test_guard_runs_first(self, betaplane):
        U = frame_symbol(betaplane)
        with pytest.raises(GapViolation):
            U.partials_at(PhasePoint.of(0.0, 0.0, 0.0, 0.0))

    def test_adjoint(self, betaplane):
        U = frame_symbol(betaplane)
        p = POINTS[2]
        assert np.allclose(U.adjoint()(p), U(p).conj().T)
        assert np.allclose(U.adjoint().partials_at(p), np.conj(np.swapaxes(U.partials_at(p), -1, -2)))


# ---------------------------------------------------------------------------
# Products
# ---------------------------------------------------------------------------


class TestProducts:
    def test_position_times_momentum(self):
        x1 = FirstOrderSymbol(MatrixSymbolFn.coordinate("x1"))
        xi1 = FirstOrderSymbol(MatrixSymbolFn.coordinate("xi1"))
        p = PhasePoint.of(2.0, 0.0, 3.0, 0.0)
        product = moyal1(x1, xi1, p)
        assert np.allclose(product.order0, 6.0 * np.eye(3))
        assert np.allclose(product.order1, 0.5j * np.eye(3))

    def test_compose_leading_order_is_matrix_product(self, betaplane, zero_flow):
        A = propagator_symbol(betaplane, zero_flow)
        U = FirstOrderSymbol(frame_symbol(betaplane))
        p = POINTS[1]
        composed = compose(A, U)
        assert np.allclose(composed.order0(p), A.order0(p) @ U.order0(p))
        assert np.allclose(composed.order1(p), moyal1(A, U, p).order1)

    def test_at_eps_adds_first_order(self, betaplane, bump_flow):
        A = propagator_symbol(betaplane, bump_flow)
        p = PhasePoint.of(1.0, 0.5, 0.4, 0.2)
        value = A.at_eps(0.1)(p.x1, p.x2, p.xi1, p.xi2)
        assert np.allclose(value, A.order0(p) + 0.1 * A.order1(p))

    def test_truncated_product_is_associative(self, bent_profile, bump_flow, generic_point):
        A = propagator_symbol(bent_profile, bump_flow)
        U = FirstOrderSymbol(frame_symbol(bent_profile))
        Ustar = FirstOrderSymbol(frame_symbol(bent_profile).adjoint())
        left = moyal1(A, compose(U, Ustar), generic_point)
        right = moyal1(compose(A, U), Ustar, generic_point)
        assert np.allclose(left.order0, right.order0, atol=1e-10)
        assert np.allclose(left.order1, right.order1, atol=1e-10)

    def test_associativity_with_scalar_factors(self, generic_point):
        s = FirstOrderSymbol(_bump_momentum((0.0, 0.0)), MatrixSymbolFn.coordinate("x2", size=1))
        t = FirstOrderSymbol(_bump_momentum((1.0, 0.0)))
        r = FirstOrderSymbol(MatrixSymbolFn.coordinate("xi2", size=1))
        left = moyal1(s, compose(t, r), generic_point)
        right = moyal1(compose(s, t), r, generic_point)
        assert np.allclose(left.order0, right.order0, atol=1e-12)
        assert np.allclose(left.order1, right.order1, atol=1e-12)


# ---------------------------------------------------------------------------
# D1
# ---------------------------------------------------------------------------


class TestD1:
    @pytest.mark.parametrize("p", POINTS)
    def test_i1_is_hermitian(self, bent_profile, p):
        i1 = i1_symbol(frame_symbol(bent_profile), p)
        assert np.allclose(i1, i1.conj().T, atol=1e-10)

    @pytest.mark.parametrize("p", POINTS)
    def test_rossby_entry_matches_hamiltonian_on_betaplane(self, betaplane, zero_flow, p):
        d1 = d1_symbol(p, betaplane, zero_flow)
        assert d1[1] == pytest.approx(rossby_symbol(p, betaplane, zero_flow), abs=1e-8)

    @pytest.mark.parametrize("p", POINTS)
    def test_rossby_entry_matches_hamiltonian_with_flow(self, bent_profile, bump_flow, p):
        d1 = d1_symbol(p, bent_profile, bump_flow)
        assert d1[1] == pytest.approx(rossby_symbol(p, bent_profile, bump_flow), abs=1e-8)

    def test_broadcasting_path_agrees_with_pointwise(self, bent_profile, bump_flow):
        coords = np.array([p.as_array() for p in POINTS]).T
        arrays = d1_arrays(*coords, bent_profile, bump_flow)
        for i, p in enumerate(POINTS):
            pointwise = d1_components(p, bent_profile, bump_flow)
            assert np.allclose(arrays["corrected"][i], pointwise["corrected"], atol=1e-8)
            assert np.allclose(arrays["i1"][i], pointwise["i1"], atol=1e-8)

    def test_eigenvalue_matrix(self, betaplane, zero_flow):
        p = POINTS[0]
        D = d1_components(p, betaplane, zero_flow)["D"]
        radius = np.sqrt(p.xi_squared + p.x2**2)
        assert np.allclose(D, np.diag([-radius, 0.0, radius]))

    def test_d1_needs_gap(self, betaplane, zero_flow):
        with pytest.raises(GapViolation):
            d1_symbol(PhasePoint.of(0.0, 0.0, 0.0, 0.0), betaplane, zero_flow)

    def test_sweep_rows(self, betaplane, zero_flow):
        rows = d1_sweep(POINTS[:2], betaplane, zero_flow)
        assert len(rows) == 2
        assert set(rows[0]) == {
            "x1", "x2", "xi1", "xi2", "d1_minus", "d1_rossby", "d1_plus", "rossby_symbol", "abs_error"
        }
        assert all(row["abs_error"] <= 1e-8 for row in rows)


# ---------------------------------------------------------------------------
# Products of quantized operators
# ---------------------------------------------------------------------------

# packets of width 1 stay 5.5 widths from the seam and 6 widths below Nyquist
LAW_EPS = [0.2, 0.1, 0.05]
LAW_GRID = SpatialGrid(n1=48, n2=24, L1=6.0, L2=6.0)
LAW_X0 = (-0.5, 0.0)
LAW_XI0 = (0.33, 0.0)


def _composition_defect(s, t, product, eps, packet):
    S = quantize(s, eps, LAW_GRID, dense=False)
    T = quantize(t, eps, LAW_GRID, dense=False)
    P = quantize(product, eps, LAW_GRID, dense=False)
    return grid_norm(S.apply(T.apply(packet)) - P.apply(packet), LAW_GRID)


def _vector_packet(eps):
    envelope = gaussian_envelope(LAW_GRID, (0.1, -0.1), LAW_XI0, eps, 1.0)
    return np.stack([envelope, 0.5 * envelope, -envelope]) / 1.5


@pytest.fixture(scope="module")
def scalar_law():
    a = FirstOrderSymbol(_bump_momentum((0.0, 0.0)))
    b = FirstOrderSymbol(_bump_momentum((1.0, 0.0)))
    X1, X2 = LAW_GRID.mesh()
    # a#b - (ab + eps/2i {a, b}) = eps^2/4 d1g d1h, a pure multiplication
    remainder = 0.25 * X1 * (X1 - 1.0) * _bump(X1, X2, (0.0, 0.0)) * _bump(X1, X2, (1.0, 0.0))
    rows = []
    for eps in LAW_EPS:
        packet = gaussian_envelope(LAW_GRID, LAW_X0, LAW_XI0, eps, 1.0)[None]
        rows.append(
            {
                "defect": _composition_defect(a, b, compose(a, b), eps, packet),
                "expected": eps * eps / 4.0 * grid_norm(remainder * packet[0], LAW_GRID),
            }
        )
    return rows


@pytest.fixture(scope="module")
def frame_law():
    """Defects of Op(A)Op(U) against Op(A#U) and against Op(AU) alone."""
    profile = CoriolisProfile(kind="betaplane", beta=0.25, b0=2.0)
    A = propagator_symbol(profile, ZERO_FLOW)
    U = FirstOrderSymbol(frame_symbol(profile))
    composed = compose(A, U)
    leading = FirstOrderSymbol(composed.order0)
    rows = []
    for eps in LAW_EPS:
        packet = _vector_packet(eps)
        rows.append(
            {
                "full": _composition_defect(A, U, composed, eps, packet),
                "leading": _composition_defect(A, U, leading, eps, packet),
            }
        )
    return rows


class TestCompositionLaw:
    def test_scalar_defect_is_second_order(self, scalar_law):
        defects = [row["defect"] for row in scalar_law]
        assert loglog_slope(LAW_EPS, defects) >= 1.8

    def test_scalar_defect_matches_next_moyal_term(self, scalar_law):
        for row in scalar_law:
            assert row["defect"] == pytest.approx(row["expected"], rel=0.05)

    def test_frame_product_is_exact_for_affine_leading_symbol(self, frame_law):
        for row in frame_law:
            assert row["full"] <= 1e-2 * row["leading"]

    def test_dropping_the_bracket_leaves_first_order_defect(self, frame_law):
        leading = [row["leading"] for row in frame_law]
        assert 0.8 <= loglog_slope(LAW_EPS, leading) <= 1.2
