"""Direct evolution of the linear rotating shallow-water system.

The state v = (eta, u1, u2) solves eps^2 i d_t v + A v = 0, i.e. v(t) = exp(itA/eps^2) v(0),
with A the first-order differential operator

    (A v)_eta = -eps d1 u1 - eps d2 u2
    (A v)_u1  =  eps d1 eta - i b u2
    (A v)_u2  =  eps d2 eta + i b u1

plus -i eps^2 (u.grad + div(u .))/2 on every component and eps^2 i J on (u1, u2).
Derivatives are spectral on the periodic grid. Times are slow units t.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator

from wavelab.errors import BoxTooSmall, EdgeMassExceeded, GapViolation, GridMismatch, GridTooCoarse
from wavelab.models import PhasePoint, RegionDiagnostics
from wavelab.services.diagonalizer import BranchProjectors
from wavelab.services.symbol_core import BackgroundFlow, CoriolisProfile, eigenframe_arrays, gap_array
from wavelab.services.weyl_quant import DiscreteOperator, SpatialGrid, gaussian_envelope, grid_norm
from wavelab.settings import DENSE_LIMIT, GAP_FLOOR

logger = logging.getLogger(__name__)

BRANCH_INDEX = {"-": 0, "minus": 0, "0": 1, "rossby": 1, "+": 2, "plus": 2}

# triple-jump coefficients lifting a symmetric second-order step to fourth order
_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_W0 = 1.0 - 2.0 * _W1


@dataclass(frozen=True)
class WaveState:
    """(eta, u1, u2) on the grid at slow time t. ``trusted`` is cleared by edge contamination."""

    field: np.ndarray
    grid: SpatialGrid
    eps: float
    t: float = 0.0
    trusted: bool = True

    def __post_init__(self):
        if self.field.shape != (3, self.grid.n1, self.grid.n2):
            raise GridMismatch(
                f"field of shape {self.field.shape} does not live on the {self.grid.n1}x{self.grid.n2} grid"
            )
        if not np.all(np.isfinite(self.field)):
            raise ValueError("wave state has non-finite entries")

    @property
    def eta(self) -> np.ndarray:
        return self.field[0]

    @property
    def u1(self) -> np.ndarray:
        return self.field[1]

    @property
    def u2(self) -> np.ndarray:
        return self.field[2]

    @property
    def norm(self) -> float:
        return grid_norm(self.field, self.grid)

    def with_field(self, field: np.ndarray, **changes) -> "WaveState":
        return replace(self, field=np.asarray(field, dtype=complex), **changes)

    def __add__(self, other: "WaveState") -> "WaveState":
        return self.with_field(self.field + other.field)


@dataclass(frozen=True)
class SplitState:
    rossby: WaveState
    poincare_plus: WaveState
    poincare_minus: WaveState

    def total(self) -> WaveState:
        return self.rossby + self.poincare_plus + self.poincare_minus

    def reconstruction_defect(self, original: WaveState) -> float:
        """||sum of the parts - original|| / ||original||."""
        scale = original.norm
        return grid_norm(self.total().field - original.field, original.grid) / scale if scale else 0.0

    def rossby_fraction(self) -> float:
        total = sum(part.norm**2 for part in (self.rossby, self.poincare_plus, self.poincare_minus))
        return self.rossby.norm**2 / total if total else 0.0


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


class _SpectralCalculus:
    def __init__(self, grid: SpatialGrid):
        K1, K2 = grid.wavenumber_mesh()
        self.ik = (1j * K1, 1j * K2)

    def derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        return np.fft.ifft2(self.ik[axis] * np.fft.fft2(f, axes=(-2, -1)), axes=(-2, -1))


def _generator_action(grid: SpatialGrid, profile: CoriolisProfile, flow: BackgroundFlow, eps: float):
    X1, X2 = grid.mesh()
    b = profile.b(X2)
    calculus = _SpectralCalculus(grid)
    d = calculus.derivative
    moving = not flow.is_zero
    if moving:
        u1, u2 = flow.velocity(X1, X2)
        jac = flow.jacobian(X1, X2)

    def apply(v: np.ndarray) -> np.ndarray:
        eta, w1, w2 = v
        out = np.empty_like(v, dtype=complex)
        out[0] = -eps * (d(w1, 0) + d(w2, 1))
        out[1] = eps * d(eta, 0) - 1j * b * w2
        out[2] = eps * d(eta, 1) + 1j * b * w1
        if moving:
            transport = u1 * d(v, 0) + u2 * d(v, 1) + d(u1 * v, 0) + d(u2 * v, 1)
            out -= 0.5j * eps * eps * transport
            out[1:] += 1j * eps * eps * np.einsum("...ij,j...->i...", jac, v[1:])
        return out

    return apply


def check_resolution(grid: SpatialGrid, eps: float, xi_max: float):
    """Raise GridTooCoarse unless the grid Nyquist wavenumbers reach xi_max / eps."""
    k_max = xi_max / eps
    nyquist = min(grid.nyquist)
    if nyquist < k_max:
        raise GridTooCoarse(
            f"Nyquist wavenumber {nyquist:.3g} of the {grid.n1}x{grid.n2} grid is below "
            f"xi_max/eps = {k_max:.3g}; need n_j >= {2.0 * max(grid.L1, grid.L2) * k_max / np.pi:.0f}"
        )


def build_generator(
    grid: SpatialGrid,
    profile: CoriolisProfile,
    flow: BackgroundFlow,
    eps: float,
    xi_max: float = 0.5,
    dense: Optional[bool] = None,
) -> DiscreteOperator:
    """The propagator A(x, eps D, eps) as a DiscreteOperator on (3, n1, n2) fields."""
    check_resolution(grid, eps, xi_max)
    apply = _generator_action(grid, profile, flow, eps)
    shape = (3, grid.n1, grid.n2)
    size = 3 * grid.size

    def matvec(vec):
        return apply(np.asarray(vec).reshape(shape)).reshape(-1)

    if dense is None:
        dense = max(grid.n1, grid.n2) <= DENSE_LIMIT
    if dense:
        matrix = np.empty((size, size), dtype=complex)
        unit = np.zeros(size, dtype=complex)
        for column in range(size):
            unit[column] = 1.0
            matrix[:, column] = matvec(unit)
            unit[column] = 0.0
        return DiscreteOperator(grid, eps, 3, dense=matrix, label="A_pde")

    def rmatvec(vec):
        # A* differs from A only by the anti-Hermitian shear eps^2 i sym(J)
        field = np.asarray(vec).reshape(shape)
        out = apply(field)
        if not flow.is_zero:
            X1, X2 = grid.mesh()
            jac = flow.jacobian(X1, X2)
            doubled = jac + np.swapaxes(jac, -1, -2)
            out[1:] -= 1j * eps * eps * np.einsum("...ij,j...->i...", doubled, field[1:])
        return out.reshape(-1)

    linop = LinearOperator((size, size), matvec=matvec, rmatvec=rmatvec, dtype=complex)
    return DiscreteOperator(grid, eps, 3, linop=linop, label="A_pde")


def plane_wave_frequencies(grid: SpatialGrid, eps: float, b0: float) -> np.ndarray:
    """Eigenvalues (-tau, 0, tau), tau = sqrt(eps^2 |k|^2 + b0^2), on every grid mode; shape (3, n1, n2)."""
    K1, K2 = grid.wavenumber_mesh()
    tau = np.sqrt(eps * eps * (K1 * K1 + K2 * K2) + b0 * b0)
    return np.stack([-tau, np.zeros_like(tau), tau])


# ---------------------------------------------------------------------------
# Packets
# ---------------------------------------------------------------------------


def gaussian_wavepacket(
    center: PhasePoint,
    eps: float,
    grid: SpatialGrid,
    branch: Union[str, int],
    profile: CoriolisProfile,
    width: Optional[float] = None,
    gap_floor: float = GAP_FLOOR,
) -> WaveState:
    """u_branch(x0, xi0) exp(-|x - x0|^2 / (2 width^2)) exp(i xi0.x / eps), unit norm.

    ``width`` defaults to sqrt(eps). The center must keep 4 widths from the box edges.
    """
    index = branch if isinstance(branch, int) else BRANCH_INDEX[branch]
    gap = float(gap_array(center.x2, center.xi1, center.xi2, profile))
    if gap < 4.0 * gap_floor:
        raise GapViolation(f"packet center {center} has xi^2 + b^2 = {gap:.3e} < 4 * gap floor", point=center, gap=gap)
    width = np.sqrt(eps) if width is None else width
    margin = 4.0 * width
    if abs(center.x1) + margin > grid.L1 or abs(center.x2) + margin > grid.L2:
        raise BoxTooSmall(f"packet at ({center.x1}, {center.x2}) with width {width:.3g} needs {margin:.3g} of margin")
    frame = eigenframe_arrays(center.x2, center.xi1, center.xi2, profile)[1]
    envelope = gaussian_envelope(grid, (center.x1, center.x2), (center.xi1, center.xi2), eps, width)
    field = frame[:, index][:, None, None] * envelope[None]
    return WaveState(field=field / grid_norm(field, grid), grid=grid, eps=eps)


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------


class Propagator:
    """exp(itA/eps^2) for one (grid, profile, flow, eps).

    The Hermitian part of A is exponentiated exactly from its eigenpairs. The pointwise
    anti-Hermitian shear eps^2 i sym(J) is folded in by symmetric splitting, composed to
    fourth order.
    """

    def __init__(self, generator: DiscreteOperator, flow: BackgroundFlow, scheme_dt: float = 0.05):
        self.grid = generator.grid
        self.eps = generator.eps
        self.scheme_dt = scheme_dt
        matrix = generator.matrix
        self.eigenvalues, self.eigenvectors = scipy.linalg.eigh(0.5 * (matrix + matrix.conj().T))
        self._shear = None
        if not flow.is_zero:
            X1, X2 = self.grid.mesh()
            jac = flow.jacobian(X1, X2)
            self._shear = 0.5 * (jac + np.swapaxes(jac, -1, -2))
        logger.info(f"Propagator ready: {matrix.shape[0]} modes, eps={self.eps}")

    @classmethod
    def build(cls, grid: SpatialGrid, profile: CoriolisProfile, flow: BackgroundFlow, eps: float,
              xi_max: float = 0.5, scheme_dt: float = 0.05) -> "Propagator":
        return cls(build_generator(grid, profile, flow, eps, xi_max, dense=True), flow, scheme_dt)

    def _hermitian_flow(self, vec: np.ndarray, t: float) -> np.ndarray:
        coefficients = self.eigenvectors.conj().T @ vec
        return self.eigenvectors @ (np.exp(1j * t * self.eigenvalues / self.eps**2) * coefficients)

    def _shear_flow(self, field: np.ndarray, t: float) -> np.ndarray:
        factors = scipy.linalg.expm(-t * self._shear)
        out = field.copy()
        out[1:] = np.einsum("...ij,j...->i...", factors, field[1:])
        return out

    def _strang(self, field: np.ndarray, t: float) -> np.ndarray:
        field = self._shear_flow(field, 0.5 * t)
        field = self._hermitian_flow(field.reshape(-1), t).reshape(field.shape)
        return self._shear_flow(field, 0.5 * t)

    def advance(self, field: np.ndarray, T: float) -> np.ndarray:
        if T == 0.0:
            return field.copy()
        if self._shear is None:
            return self._hermitian_flow(field.reshape(-1), T).reshape(field.shape)
        steps = max(1, int(np.ceil(abs(T) / self.scheme_dt)))
        dt = T / steps
        for _ in range(steps):
            for weight in (_W1, _W0, _W1):
                field = self._strang(field, weight * dt)
        return field


def edge_mass(state: WaveState, band: Optional[float] = None) -> float:
    """Mass fraction within ``band`` (default 2 sqrt(eps)) of the x2 seam."""
    band = 2.0 * np.sqrt(state.eps) if band is None else band
    x2 = state.grid.x2
    near = (x2 < -state.grid.L2 + band) | (x2 >= state.grid.L2 - band)
    total = np.sum(np.abs(state.field) ** 2)
    return float(np.sum(np.abs(state.field[:, :, near]) ** 2) / total) if total else 0.0


def evolve(
    state: WaveState,
    T: float,
    propagator: Propagator,
    edge_tol: float = 1e-4,
    strict: bool = False,
) -> WaveState:
    """v(t + T) = exp(iTA/eps^2) v(t); edge contamination raises when strict, else flags the state."""
    if propagator.grid != state.grid or propagator.eps != state.eps:
        raise GridMismatch("propagator and state were built on different grids or eps")
    evolved = state.with_field(propagator.advance(state.field, T), t=state.t + T)
    contamination = edge_mass(evolved)
    if contamination > edge_tol:
        message = f"edge mass {contamination:.2e} exceeds {edge_tol:.1e} at t={evolved.t:.4g}"
        if strict:
            raise EdgeMassExceeded(message, {"edge_mass": contamination, "t": evolved.t})
        logger.warning(f"⚠️ {message}; result untrusted")
        evolved = replace(evolved, trusted=False)
    return evolved


# ---------------------------------------------------------------------------
# Splitting and regions
# ---------------------------------------------------------------------------


def split_waves(state: WaveState, projectors: BranchProjectors) -> SplitState:
    if projectors.grid != state.grid or projectors.eps != state.eps:
        raise GridMismatch("projectors and state were built on different grids or eps")
    parts = [state.with_field(P.apply(state.field)) for P in projectors.as_tuple()]
    return SplitState(rossby=parts[1], poincare_plus=parts[2], poincare_minus=parts[0])


@dataclass(frozen=True)
class Rectangle:
    x1_lo: float
    x1_hi: float
    x2_lo: float
    x2_hi: float

    @classmethod
    def around(cls, x1: float, x2: float, half_side: float) -> "Rectangle":
        return cls(x1 - half_side, x1 + half_side, x2 - half_side, x2 + half_side)

    def mask(self, grid: SpatialGrid) -> np.ndarray:
        X1, X2 = grid.mesh()
        return (X1 >= self.x1_lo) & (X1 <= self.x1_hi) & (X2 >= self.x2_lo) & (X2 <= self.x2_hi)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.x1_lo, self.x1_hi, self.x2_lo, self.x2_hi


@dataclass(frozen=True)
class BandComplement:
    """Everything outside the latitude band lo <= x2 <= hi."""

    lo: float
    hi: float

    def mask(self, grid: SpatialGrid) -> np.ndarray:
        _, X2 = grid.mesh()
        return (X2 < self.lo) | (X2 > self.hi)


Region = Union[Rectangle, BandComplement]


def region_mass(state: WaveState, region: Region) -> float:
    """Fraction of the L2 mass of the state inside the region."""
    density = np.sum(np.abs(state.field) ** 2, axis=0)
    total = float(np.sum(density))
    return float(np.sum(density[region.mask(state.grid)]) / total) if total else 0.0


def region_diagnostics(state: WaveState, compact_set: Rectangle, band: Tuple[float, float]) -> RegionDiagnostics:
    return RegionDiagnostics(
        compact_set=compact_set.as_tuple(),
        latitude_band=band,
        mass_in_compact=min(1.0, region_mass(state, compact_set)),
        mass_outside_band=min(1.0, region_mass(state, BandComplement(*band))),
        edge_mass=min(1.0, edge_mass(state)),
    )


def branch_fractions(state: WaveState, projectors: BranchProjectors) -> Dict[str, float]:
    split = split_waves(state, projectors)
    norm2 = state.norm**2
    return {
        "rossby": split.rossby.norm**2 / norm2,
        "poincare_plus": split.poincare_plus.norm**2 / norm2,
        "poincare_minus": split.poincare_minus.norm**2 / norm2,
    }
