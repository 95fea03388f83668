"""First-order Moyal calculus on matrix symbols.

Symbols are functions of (x1, x2, xi1, xi2) with values in square matrices. The
product kept here is a#b = ab + (eps/2i){a, b} with the matrix Poisson bracket
{a, b} = sum_j (d_xi_j a d_x_j b - d_x_j a d_xi_j b), products in the written order.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from wavelab.errors import DerivativeUnavailable, LabError
from wavelab.models import PhasePoint
from wavelab.services.symbol_core import (
    BackgroundFlow,
    CoriolisProfile,
    eigenframe_arrays,
    eigenframe_partials,
    full_symbol_array,
    leading_symbol_array,
    leading_symbol_partials,
    require_gap,
    rossby_symbol,
)
from wavelab.settings import FD_STEP, GAP_FLOOR

logger = logging.getLogger(__name__)

AXES = ("x1", "x2", "xi1", "xi2")

Evaluator = Callable[..., np.ndarray]


class MatrixSymbolFn:
    """Matrix-valued symbol with closed-form or finite-difference partial derivatives.

    ``evaluate(x1, x2, xi1, xi2)`` broadcasts and returns (..., m, m).
    ``partials(x1, x2, xi1, xi2)`` returns (4, ..., m, m) in the order of AXES; when it
    is absent, centered differences with one Richardson extrapolation are used.
    ``guard(p)`` runs before every pointwise evaluation (gap checks).
    """

    def __init__(
        self,
        evaluate: Evaluator,
        partials: Optional[Evaluator] = None,
        fd_step: float = FD_STEP,
        name: str = "symbol",
        guard: Optional[Callable[[PhasePoint], object]] = None,
    ):
        self.evaluate = evaluate
        self.partials = partials
        self.fd_step = fd_step
        self.name = name
        self.guard = guard

    def __repr__(self) -> str:
        return f"MatrixSymbolFn({self.name})"

    @classmethod
    def constant(cls, matrix, name: str = "constant") -> "MatrixSymbolFn":
        matrix = np.asarray(matrix, dtype=complex)

        def evaluate(x1, x2, xi1, xi2):
            shape = np.broadcast_shapes(np.shape(x1), np.shape(x2), np.shape(xi1), np.shape(xi2))
            return np.broadcast_to(matrix, shape + matrix.shape).copy()

        def partials(x1, x2, xi1, xi2):
            return np.zeros((4,) + evaluate(x1, x2, xi1, xi2).shape, dtype=complex)

        return cls(evaluate, partials, name=name)

    @classmethod
    def coordinate(cls, axis: str, size: int = 3) -> "MatrixSymbolFn":
        """The symbol (coordinate) * Id, e.g. ``coordinate("xi1")``."""
        index = AXES.index(axis)
        eye = np.eye(size, dtype=complex)

        def evaluate(*coords):
            coords = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in coords))
            return coords[index][..., None, None] * eye

        def partials(*coords):
            shape = np.broadcast_shapes(*(np.shape(c) for c in coords))
            out = np.zeros((4,) + shape + (size, size), dtype=complex)
            out[index] = eye
            return out

        return cls(evaluate, partials, name=f"{axis}*Id")

    def __call__(self, p: PhasePoint) -> np.ndarray:
        if self.guard is not None:
            self.guard(p)
        return np.asarray(self.evaluate(p.x1, p.x2, p.xi1, p.xi2))

    def partials_at(self, p: PhasePoint) -> np.ndarray:
        if self.guard is not None:
            self.guard(p)
        try:
            if self.partials is not None:
                return np.asarray(self.partials(p.x1, p.x2, p.xi1, p.xi2))
            return self._finite_difference(p)
        except LabError:
            raise
        except Exception as e:
            raise DerivativeUnavailable(f"derivatives of {self.name} failed at {p}: {e}") from e

    def _centered(self, base: np.ndarray, axis: int, step: float) -> np.ndarray:
        shift = np.zeros(4)
        shift[axis] = step
        plus = np.asarray(self.evaluate(*(base + shift)))
        minus = np.asarray(self.evaluate(*(base - shift)))
        return (plus - minus) / (2.0 * step)

    def _finite_difference(self, p: PhasePoint) -> np.ndarray:
        base = p.as_array()
        h = self.fd_step
        out = []
        for axis in range(4):
            coarse = self._centered(base, axis, h)
            fine = self._centered(base, axis, h / 2.0)
            out.append((4.0 * fine - coarse) / 3.0)
        return np.stack(out)

    def adjoint(self) -> "MatrixSymbolFn":
        """Pointwise conjugate transpose, with conjugate-transposed partials."""

        def evaluate(*coords):
            return np.conj(np.swapaxes(self.evaluate(*coords), -1, -2))

        partials = None
        if self.partials is not None:

            def partials(*coords):
                return np.conj(np.swapaxes(self.partials(*coords), -1, -2))

        adj = MatrixSymbolFn(evaluate, partials, self.fd_step, f"{self.name}*", self.guard)
        return adj


@dataclass
class FirstOrderSymbol:
    """order0 + eps * order1."""

    order0: MatrixSymbolFn
    order1: Optional[MatrixSymbolFn] = None

    def at_eps(self, eps: float) -> Evaluator:
        """Array evaluator of the truncated symbol at a fixed eps."""

        def evaluate(x1, x2, xi1, xi2):
            value = np.asarray(self.order0.evaluate(x1, x2, xi1, xi2), dtype=complex)
            if self.order1 is not None:
                value = value + eps * np.asarray(self.order1.evaluate(x1, x2, xi1, xi2))
            return value

        return evaluate

    def value(self, p: PhasePoint) -> "SymbolValue":
        zero = self.order0(p)
        one = self.order1(p) if self.order1 is not None else np.zeros_like(zero)
        return SymbolValue(zero, one)


@dataclass
class SymbolValue:
    order0: np.ndarray
    order1: np.ndarray


def poisson_bracket(a: MatrixSymbolFn, b: MatrixSymbolFn, p: PhasePoint) -> np.ndarray:
    da = a.partials_at(p)
    db = b.partials_at(p)
    bracket = np.zeros(np.broadcast_shapes(da.shape[1:], db.shape[1:]), dtype=complex)
    for j in range(2):
        bracket += da[2 + j] @ db[j] - da[j] @ db[2 + j]
    return bracket


def moyal1(s: FirstOrderSymbol, t: FirstOrderSymbol, p: PhasePoint) -> SymbolValue:
    sv = s.value(p)
    tv = t.value(p)
    order1 = sv.order0 @ tv.order1 + sv.order1 @ tv.order0 + poisson_bracket(s.order0, t.order0, p) / 2j
    return SymbolValue(sv.order0 @ tv.order0, order1)


def _pointwise(fn: Callable[[PhasePoint], np.ndarray]) -> Evaluator:
    """Lift a PhasePoint function to a broadcasting array evaluator."""

    def evaluate(x1, x2, xi1, xi2):
        coords = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        if coords[0].ndim == 0:
            return fn(PhasePoint.of(*coords))
        first = fn(PhasePoint.of(*(c.flat[0] for c in coords)))
        out = np.empty(coords[0].shape + first.shape, dtype=complex)
        for index in np.ndindex(coords[0].shape):
            out[index] = fn(PhasePoint.of(*(c[index] for c in coords)))
        return out

    return evaluate


def compose(s: FirstOrderSymbol, t: FirstOrderSymbol) -> FirstOrderSymbol:
    """Symbol of the truncated product s#t as a FirstOrderSymbol.

    The order-eps part broadcasts over arrays when both leading parts carry closed-form
    partials, so the product can be quantized directly; otherwise it is evaluated point by point.
    """

    def evaluate0(*coords):
        return np.asarray(s.order0.evaluate(*coords)) @ np.asarray(t.order0.evaluate(*coords))

    partials0 = None
    if s.order0.partials is not None and t.order0.partials is not None:

        def partials0(*coords):
            a = np.asarray(s.order0.evaluate(*coords))
            b = np.asarray(t.order0.evaluate(*coords))
            return np.asarray(s.order0.partials(*coords)) @ b + a @ np.asarray(t.order0.partials(*coords))

    guard = s.order0.guard or t.order0.guard
    name = f"{s.order0.name}#{t.order0.name}"
    order0 = MatrixSymbolFn(evaluate0, partials0, s.order0.fd_step, name, guard)
    if partials0 is None:
        evaluate1 = _pointwise(lambda p: moyal1(s, t, p).order1)
    else:

        def evaluate1(*coords):
            a = np.asarray(s.order0.evaluate(*coords))
            b = np.asarray(t.order0.evaluate(*coords))
            da = np.asarray(s.order0.partials(*coords))
            db = np.asarray(t.order0.partials(*coords))
            value = _bracket_arrays(da, db) / 2j
            if s.order1 is not None:
                value = value + np.asarray(s.order1.evaluate(*coords)) @ b
            if t.order1 is not None:
                value = value + a @ np.asarray(t.order1.evaluate(*coords))
            return value

    order1 = MatrixSymbolFn(evaluate1, None, s.order0.fd_step, name + "[1]", guard)
    return FirstOrderSymbol(order0, order1)


# ---------------------------------------------------------------------------
# Shallow-water symbols
# ---------------------------------------------------------------------------


def propagator_symbol(profile: CoriolisProfile, flow: BackgroundFlow) -> FirstOrderSymbol:
    """A0 and A1 = (u.xi) Id with closed-form partials."""

    def evaluate0(x1, x2, xi1, xi2):
        x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        return leading_symbol_array(x2, xi1, xi2, profile)

    def partials0(x1, x2, xi1, xi2):
        shape = np.broadcast_shapes(*(np.shape(c) for c in (x1, x2, xi1, xi2)))
        return leading_symbol_partials(np.broadcast_to(x2, shape), xi1, xi2, profile)

    def evaluate1(x1, x2, xi1, xi2):
        x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        u1, u2 = flow.velocity(x1, x2)
        return (u1 * xi1 + u2 * xi2)[..., None, None] * np.eye(3, dtype=complex)

    def partials1(x1, x2, xi1, xi2):
        x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        u1, u2 = flow.velocity(x1, x2)
        jac = flow.jacobian(x1, x2)
        eye = np.eye(3, dtype=complex)
        scalars = [
            jac[..., 0, 0] * xi1 + jac[..., 1, 0] * xi2,
            jac[..., 0, 1] * xi1 + jac[..., 1, 1] * xi2,
            u1,
            u2,
        ]
        return np.stack([np.asarray(c)[..., None, None] * eye for c in scalars])

    return FirstOrderSymbol(
        MatrixSymbolFn(evaluate0, partials0, name="A0"),
        MatrixSymbolFn(evaluate1, partials1, name="A1"),
    )


def full_symbol(profile: CoriolisProfile, flow: BackgroundFlow, eps: float) -> Evaluator:
    """Array evaluator of the full symbol, eps^2 shear block included."""

    def evaluate(x1, x2, xi1, xi2):
        return full_symbol_array(x1, x2, xi1, xi2, profile, flow, eps)

    return evaluate


def frame_symbol(profile: CoriolisProfile, gap_floor: float = GAP_FLOOR) -> MatrixSymbolFn:
    """The fixed-gauge diagonalizing frame U(x, xi) of A0."""

    def evaluate(x1, x2, xi1, xi2):
        x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        return eigenframe_arrays(x2, xi1, xi2, profile)[1]

    def partials(x1, x2, xi1, xi2):
        x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        return eigenframe_partials(x2, xi1, xi2, profile)

    return MatrixSymbolFn(evaluate, partials, name="U", guard=lambda p: require_gap(p, profile, gap_floor))


def branch_eigenvalues(profile: CoriolisProfile) -> Evaluator:
    """Diagonal matrix diag(-tau, 0, tau) as an array evaluator."""

    def evaluate(x1, x2, xi1, xi2):
        x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
        eigenvalues = eigenframe_arrays(x2, xi1, xi2, profile)[0]
        return eigenvalues[..., None] * np.eye(3)

    return evaluate


# ---------------------------------------------------------------------------
# Diagonalization corrections
# ---------------------------------------------------------------------------


def i1_symbol(U: MatrixSymbolFn, p: PhasePoint) -> np.ndarray:
    """Order-eps symbol of U*#U - Id."""
    return poisson_bracket(U.adjoint(), U, p) / 2j


def d1_components(
    p: PhasePoint, profile: CoriolisProfile, flow: BackgroundFlow, gap_floor: float = GAP_FLOOR
) -> Dict[str, np.ndarray]:
    """Delta1, I1, the eigenvalue matrix D and the off-diagonal remainder at p."""
    require_gap(p, profile, gap_floor)
    U = frame_symbol(profile, gap_floor)
    A = propagator_symbol(profile, flow)
    conjugated = moyal1(FirstOrderSymbol(U.adjoint()), compose(A, FirstOrderSymbol(U)), p)
    delta1 = conjugated.order1
    i1 = i1_symbol(U, p)
    D = np.real(np.diag(np.diag(conjugated.order0)))
    corrected = delta1 - (D @ i1 + i1 @ D) / 2.0
    return {"delta1": delta1, "i1": i1, "D": D, "corrected": corrected}


def d1_symbol(
    p: PhasePoint, profile: CoriolisProfile, flow: BackgroundFlow, gap_floor: float = GAP_FLOOR
) -> np.ndarray:
    """diag(Delta1 - (D I1 + I1 D)/2); the middle entry is the Rossby symbol."""
    corrected = d1_components(p, profile, flow, gap_floor)["corrected"]
    return np.real(np.diag(corrected)).copy()


def _bracket_arrays(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    return sum(da[2 + j] @ db[j] - da[j] @ db[2 + j] for j in range(2))


def d1_arrays(x1, x2, xi1, xi2, profile: CoriolisProfile, flow: BackgroundFlow) -> Dict[str, np.ndarray]:
    """Broadcasting form of d1_components, without gap checks.

    Used to sample D1 and the off-diagonal remainder on whole midpoint grids.
    """
    coords = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (x1, x2, xi1, xi2)))
    A = propagator_symbol(profile, flow)
    U = frame_symbol(profile)
    u = U.evaluate(*coords)
    du = U.partials(*coords)
    u_star = np.conj(np.swapaxes(u, -1, -2))
    du_star = np.conj(np.swapaxes(du, -1, -2))
    a0 = A.order0.evaluate(*coords)
    da0 = A.order0.partials(*coords)
    inner0_partials = da0 @ u + a0 @ du
    inner1 = A.order1.evaluate(*coords) @ u + _bracket_arrays(da0, du) / 2j
    delta1 = u_star @ inner1 + _bracket_arrays(du_star, inner0_partials) / 2j
    i1 = _bracket_arrays(du_star, du) / 2j
    D = eigenframe_arrays(coords[1], coords[2], coords[3], profile)[0][..., None] * np.eye(3)
    corrected = delta1 - (D @ i1 + i1 @ D) / 2.0
    return {"delta1": delta1, "i1": i1, "D": D, "corrected": corrected}


def d1_sweep(
    points: Iterable[PhasePoint], profile: CoriolisProfile, flow: BackgroundFlow, gap_floor: float = GAP_FLOOR
) -> List[Dict[str, float]]:
    """D1 entries, Rossby symbol and their disagreement on a list of phase points."""
    rows = []
    for p in points:
        d1 = d1_symbol(p, profile, flow, gap_floor)
        rossby = rossby_symbol(p, profile, flow, gap_floor)
        rows.append(
            {
                "x1": p.x1,
                "x2": p.x2,
                "xi1": p.xi1,
                "xi2": p.xi2,
                "d1_minus": float(d1[0]),
                "d1_rossby": float(d1[1]),
                "d1_plus": float(d1[2]),
                "rossby_symbol": rossby,
                "abs_error": abs(float(d1[1]) - rossby),
            }
        )
    logger.debug(f"D1 sweep over {len(rows)} points")
    return rows
