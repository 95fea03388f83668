"""Bicharacteristic flows of the Poincaré and Rossby Hamiltonians.

Hamilton's equations x' = d_xi H, xi' = -d_x H are integrated with the implicit
midpoint rule (symplectic, second order, exact on quadratic first integrals). The
Rossby Hamiltonian is evolved without its global eps factor, so its times are in
slow units.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np

from wavelab.errors import GapViolation, StepRejected
from wavelab.models import PhasePoint, TrappingReport
from wavelab.services.symbol_core import ZERO_FLOW, BackgroundFlow, CoriolisProfile, gap_array
from wavelab.settings import FD_STEP, GAP_FLOOR

logger = logging.getLogger(__name__)

RayKind = Literal["poincare_plus", "poincare_minus", "rossby"]
RAY_KINDS: Tuple[str, ...] = ("poincare_plus", "poincare_minus", "rossby")

DEFAULT_DT = {"poincare_plus": 1e-3, "poincare_minus": 1e-3, "rossby": 1e-2}

_ALIASES = {"+": "poincare_plus", "-": "poincare_minus", "plus": "poincare_plus", "minus": "poincare_minus"}


def canonical_kind(kind: str) -> str:
    kind = _ALIASES.get(kind, kind)
    if kind not in RAY_KINDS:
        raise ValueError(f"unknown Hamiltonian kind {kind!r}, expected one of {RAY_KINDS}")
    return kind


class RayHamiltonian:
    """Closed-form value and gradient of one of the three scalar Hamiltonians.

    Phase points are arrays (..., 4) ordered (x1, x2, xi1, xi2).
    """

    def __init__(
        self,
        kind: str,
        profile: CoriolisProfile,
        flow: BackgroundFlow = ZERO_FLOW,
        gap_floor: float = GAP_FLOOR,
    ):
        self.kind = canonical_kind(kind)
        self.profile = profile
        self.flow = flow
        self.gap_floor = gap_floor

    @property
    def sign(self) -> int:
        return -1 if self.kind == "poincare_minus" else 1

    @property
    def x1_independent(self) -> bool:
        return self.kind != "rossby" or self.flow.is_zero

    def _gap(self, z: np.ndarray) -> np.ndarray:
        g = gap_array(z[..., 1], z[..., 2], z[..., 3], self.profile)
        if self.kind == "rossby" and np.min(g) < self.gap_floor:
            point = PhasePoint.from_array(np.reshape(z, (-1, 4))[int(np.argmin(g))])
            raise GapViolation(
                f"Rossby ray entered xi^2 + b^2 = {float(np.min(g)):.3e} < {self.gap_floor:.1e} at {point}",
                point=point,
                gap=float(np.min(g)),
            )
        return g

    def value(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        g = self._gap(z)
        if self.kind != "rossby":
            return self.sign * np.sqrt(g)
        x1, x2, xi1, xi2 = np.moveaxis(z, -1, 0)
        u1, u2 = self.flow.velocity(x1, x2)
        return xi1 * self.profile.db(x2) / g + u1 * xi1 + u2 * xi2

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        g = self._gap(z)
        x1, x2, xi1, xi2 = np.moveaxis(z, -1, 0)
        b = self.profile.b(x2)
        db = self.profile.db(x2)
        if self.kind != "rossby":
            tau = self.sign * np.sqrt(g)
            return np.stack([np.zeros_like(x1), b * db / tau, xi1 / tau, xi2 / tau], axis=-1)
        d2b = self.profile.d2b(x2)
        u1, u2 = self.flow.velocity(x1, x2)
        jac = self.flow.jacobian(x1, x2)
        g2 = g * g
        return np.stack(
            [
                jac[..., 0, 0] * xi1 + jac[..., 1, 0] * xi2,
                xi1 * (d2b * g - 2.0 * b * db * db) / g2 + jac[..., 0, 1] * xi1 + jac[..., 1, 1] * xi2,
                db / g - 2.0 * xi1 * xi1 * db / g2 + u1,
                -2.0 * xi1 * xi2 * db / g2 + u2,
            ],
            axis=-1,
        )

    def vector_field(self, z) -> np.ndarray:
        grad = self.gradient(z)
        return np.stack([grad[..., 2], grad[..., 3], -grad[..., 0], -grad[..., 1]], axis=-1)

    def characteristic_rate(self, z: np.ndarray, step: float = FD_STEP) -> float:
        """Largest column norm of the Jacobian of the vector field at z."""
        columns = []
        for axis in range(4):
            shift = np.zeros(4)
            shift[axis] = step
            columns.append((self.vector_field(z + shift) - self.vector_field(z - shift)) / (2.0 * step))
        return float(max(np.linalg.norm(c) for c in columns))


@dataclass(frozen=True)
class RayState:
    p: PhasePoint
    t: float


@dataclass
class Trajectory:
    """Samples of one ray. ``times`` are elapsed integration times, strictly increasing."""

    kind: str
    dt: float
    times: List[float] = field(default_factory=list)
    points: List[np.ndarray] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    xi1_conserved: bool = True

    def append(self, t: float, z: np.ndarray, energy: float):
        if self.times and t <= self.times[-1]:
            raise ValueError("trajectory times must be strictly increasing")
        self.times.append(float(t))
        self.points.append(np.array(z, dtype=float))
        self.energies.append(float(energy))

    def __len__(self) -> int:
        return len(self.times)

    @property
    def states(self) -> np.ndarray:
        return np.array(self.points).reshape(-1, 4)

    @property
    def final(self) -> PhasePoint:
        return PhasePoint.from_array(self.points[-1])

    def samples(self) -> List[RayState]:
        return [RayState(p=PhasePoint.from_array(z), t=t) for t, z in zip(self.times, self.points)]

    def rows(self) -> List[Dict[str, float]]:
        """Rows of the trajectory CSV."""
        return [
            {
                "t": t,
                "x1": z[0],
                "x2": z[1],
                "xi1": z[2],
                "xi2": z[3],
                "H": energy,
                "xi1_conserved_flag": int(self.xi1_conserved),
            }
            for t, z, energy in zip(self.times, self.points, self.energies)
        ]


def _midpoint_step(hamiltonian: RayHamiltonian, z: np.ndarray, dt: float, tol: float, max_iter: int):
    """One implicit midpoint step by fixed-point iteration; None if it does not converge."""
    guess = z + dt * hamiltonian.vector_field(z)
    for _ in range(max_iter):
        new = z + dt * hamiltonian.vector_field(0.5 * (z + guess))
        if np.max(np.abs(new - guess)) <= tol:
            return new
        guess = new
    return None


def integrate(
    kind: str,
    initial: PhasePoint,
    T: float,
    profile: CoriolisProfile,
    flow: BackgroundFlow = ZERO_FLOW,
    dt: Optional[float] = None,
    gap_floor: float = GAP_FLOOR,
    tol: float = 1e-12,
    max_iter: int = 50,
    sample_every: int = 1,
    backward: bool = False,
) -> Trajectory:
    """Integrate the ray of ``kind`` from ``initial`` for a duration T.

    ``backward`` runs the flow with negated time, for time-reversal checks. A Rossby ray
    that leaves the gap region raises GapViolation with the partial trajectory attached as
    ``trajectory``.
    """
    hamiltonian = RayHamiltonian(kind, profile, flow, gap_floor)
    dt = DEFAULT_DT[hamiltonian.kind] if dt is None else dt
    if dt <= 0.0 or T < 0.0:
        raise ValueError("dt must be positive and T non-negative")
    z = initial.as_array()
    traj = Trajectory(kind=hamiltonian.kind, dt=dt, xi1_conserved=hamiltonian.x1_independent)
    traj.append(0.0, z, float(hamiltonian.value(z)))

    rate = hamiltonian.characteristic_rate(z)
    if rate > 0.0 and dt > 0.01 * 2.0 * np.pi / rate:
        logger.warning(f"dt={dt} exceeds 1% of the characteristic period {2.0 * np.pi / rate:.3e} of the {kind} ray")

    steps = int(round(T / dt))
    signed = -dt if backward else dt
    for n in range(1, steps + 1):
        try:
            new = _midpoint_step(hamiltonian, z, signed, tol, max_iter)
        except GapViolation as e:
            e.trajectory = traj
            raise
        if new is None:
            raise StepRejected(f"implicit midpoint did not converge in {max_iter} iterations at t={n * dt:.6g}", traj)
        z = new
        if n % sample_every == 0 or n == steps:
            try:
                energy = float(hamiltonian.value(z))
            except GapViolation as e:
                e.trajectory = traj
                raise
            traj.append(n * dt, z, energy)
    logger.debug(f"{hamiltonian.kind} ray: {steps} steps of {dt}, {len(traj)} samples")
    return traj


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

Observable = Union[str, Callable[[PhasePoint], float]]


def coordinate_observable(axis: str) -> Callable[[PhasePoint], float]:
    return lambda p: float(getattr(p, axis))


def _observable_gradient(G: Callable[[PhasePoint], float], p: PhasePoint, step: float = FD_STEP) -> np.ndarray:
    base = p.as_array()
    grad = np.zeros(4)
    for axis in range(4):
        shift = np.zeros(4)

        def centered(h):
            shift[axis] = h
            plus = G(PhasePoint.from_array(base + shift))
            minus = G(PhasePoint.from_array(base - shift))
            return (plus - minus) / (2.0 * h)

        grad[axis] = (4.0 * centered(step / 2.0) - centered(step)) / 3.0
    return grad


def poisson_bracket_scalar(
    kind: str,
    G: Observable,
    p: PhasePoint,
    profile: CoriolisProfile,
    flow: BackgroundFlow = ZERO_FLOW,
    gap_floor: float = GAP_FLOOR,
) -> float:
    """{H, G}(p) = d_xi H . d_x G - d_x H . d_xi G.

    ``G`` is a callable observable or the name of one of the Hamiltonians.
    """
    hamiltonian = RayHamiltonian(kind, profile, flow, gap_floor)
    z = p.as_array()
    dH = hamiltonian.gradient(z)
    if isinstance(G, str):
        dG = RayHamiltonian(G, profile, flow, gap_floor).gradient(z)
    else:
        dG = _observable_gradient(G, p)
    return float(dH[2] * dG[0] + dH[3] * dG[1] - dH[0] * dG[2] - dH[1] * dG[3])


def group_velocity(
    kind: str, p: PhasePoint, profile: CoriolisProfile, flow: BackgroundFlow = ZERO_FLOW
) -> Tuple[float, float]:
    """d_xi H at p."""
    grad = RayHamiltonian(kind, profile, flow).gradient(p.as_array())
    return float(grad[2]), float(grad[3])


def trapping_diagnostic(traj: Trajectory) -> TrappingReport:
    if not len(traj):
        raise ValueError("empty trajectory")
    states = traj.states
    times = np.asarray(traj.times)
    energies = np.asarray(traj.energies)
    drift_rate = float(np.polyfit(times, states[:, 0], 1)[0]) if len(traj) > 1 else 0.0
    scale = abs(energies[0]) if energies[0] != 0.0 else 1.0
    return TrappingReport(
        x2_sup=float(np.max(states[:, 1])),
        x2_inf=float(np.min(states[:, 1])),
        x1_drift_rate=drift_rate,
        H_drift=float(np.max(np.abs(energies - energies[0])) / scale),
        xi1_drift=float(np.max(np.abs(states[:, 2] - states[0, 2]))),
    )


def escape_backtrack(traj: Trajectory, direction: float) -> float:
    """Largest sampled step of x1 against ``direction``; 0 when x1 runs monotonically that way."""
    steps = np.diff(traj.states[:, 0])
    if not steps.size:
        return 0.0
    return float(max(0.0, np.max(-np.sign(direction) * steps)))


def trapping_band(p: PhasePoint, profile: CoriolisProfile) -> Tuple[float, float]:
    """x2-interval of the invariant circle of a betaplane Rossby ray with zero flow.

    Conservation of H = beta xi1 / (xi^2 + b^2) and of xi1 gives
    xi2^2 + b(x2)^2 = beta xi1 / H - xi1^2 along the ray.
    """
    if profile.kind != "betaplane" or profile.beta == 0.0:
        raise ValueError("the closed-form trapping band needs a betaplane profile with beta != 0")
    radius2 = p.xi2**2 + float(profile.b(p.x2)) ** 2
    radius = np.sqrt(radius2)
    ends = sorted(((-radius - profile.b0) / profile.beta, (radius - profile.b0) / profile.beta))
    return float(ends[0]), float(ends[1])
