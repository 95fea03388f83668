"""Closed-form propagator symbol, branch decomposition and Rossby Hamiltonian.

Every array function broadcasts over its phase-space arguments and returns matrices
in the trailing two axes, ordered (eta, u1, u2). The PhasePoint wrappers evaluate a
single point and enforce the gap condition.

The leading symbol is written as A0 = i [w]_x with the coupling vector
w = (b(x2), -xi2, xi1). Its spectrum is {-|w|, 0, |w|} and its kernel is w/|w|.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from wavelab.errors import GapViolation
from wavelab.models import FlowSpec, PhasePoint, ProfileSpec
from wavelab.settings import GAP_FLOOR

logger = logging.getLogger(__name__)

# CROSS[k] @ v == e_k x v
CROSS = np.array(
    [
        [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    ]
)
IDENTITY = np.eye(3)
_UNIT = np.eye(3)
_SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# Coriolis profile and background flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoriolisProfile:
    """b(x2) = b0 + beta*x2, plus alpha*arctan(gamma*x2) for the monotone kind."""

    kind: str = "betaplane"
    beta: float = 1.0
    alpha: float = 0.0
    gamma: float = 1.0
    b0: float = 0.0

    @classmethod
    def from_spec(cls, spec: ProfileSpec) -> "CoriolisProfile":
        return cls(kind=spec.kind, beta=spec.beta, alpha=spec.alpha, gamma=spec.gamma, b0=spec.b0)

    @property
    def _bent(self) -> bool:
        return self.kind == "monotone" and self.alpha != 0.0

    def b(self, x2):
        x2 = np.asarray(x2, dtype=float)
        value = self.b0 + self.beta * x2
        if self._bent:
            value = value + self.alpha * np.arctan(self.gamma * x2)
        return value

    def db(self, x2):
        x2 = np.asarray(x2, dtype=float)
        value = np.full_like(x2, self.beta)
        if self._bent:
            value = value + self.alpha * self.gamma / (1.0 + (self.gamma * x2) ** 2)
        return value

    def d2b(self, x2):
        x2 = np.asarray(x2, dtype=float)
        if not self._bent:
            return np.zeros_like(x2)
        g = self.gamma
        return -2.0 * self.alpha * g**3 * x2 / (1.0 + (g * x2) ** 2) ** 2

    def check(self, x2_min: float, x2_max: float, samples: int = 2001, tol_crit: float = 1e-3,
              tol_nondegen: float = 1e-6) -> List[str]:
        """Return the admissibility problems found on sample points of [x2_min, x2_max]."""
        x2 = np.linspace(x2_min, x2_max, samples)
        slope = self.db(x2)
        problems = []
        outer = max(samples // 10, 1)
        if np.any(slope[:outer] <= 0.0) or np.any(slope[-outer:] <= 0.0):
            problems.append("b is not increasing near the ends of the domain")
        critical = np.abs(slope) < tol_crit
        if np.any(np.abs(self.d2b(x2[critical])) <= tol_nondegen):
            problems.append("b has a degenerate critical point")
        return problems


@dataclass(frozen=True)
class BackgroundFlow:
    """u = grad-perp psi, psi = amplitude * exp(-1/(1 - r^2/R^2)) inside the disk r < R."""

    kind: str = "none"
    amplitude: float = 0.0
    support_radius: float = 2.0
    center: Tuple[float, float] = (0.0, 0.0)

    @classmethod
    def from_spec(cls, spec: FlowSpec) -> "BackgroundFlow":
        return cls(
            kind=spec.kind,
            amplitude=spec.amplitude,
            support_radius=spec.support_radius,
            center=tuple(spec.center),
        )

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or self.amplitude == 0.0

    def _stream_derivatives(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        if self.is_zero:
            zero = np.zeros(x1.shape)
            return zero, zero, zero, zero, zero
        R2 = self.support_radius**2
        dx1 = x1 - self.center[0]
        dx2 = x2 - self.center[1]
        q = (dx1 * dx1 + dx2 * dx2) / R2
        inside = q < 1.0
        # exp(-1/s) underflows to 0 long before s reaches the clip
        s = np.where(inside, np.maximum(1.0 - q, 1e-3), 1.0)
        phi = np.where(inside, np.exp(-1.0 / s), 0.0)
        d1 = -phi / s**2
        d2 = phi * (1.0 / s**4 - 2.0 / s**3)
        q1 = 2.0 * dx1 / R2
        q2 = 2.0 * dx2 / R2
        a = self.amplitude
        psi1 = a * d1 * q1
        psi2 = a * d1 * q2
        psi11 = a * (d2 * q1 * q1 + d1 * 2.0 / R2)
        psi22 = a * (d2 * q2 * q2 + d1 * 2.0 / R2)
        psi12 = a * d2 * q1 * q2
        return psi1, psi2, psi11, psi12, psi22

    def velocity(self, x1, x2) -> Tuple[np.ndarray, np.ndarray]:
        psi1, psi2, _, _, _ = self._stream_derivatives(x1, x2)
        return -psi2, psi1

    def jacobian(self, x1, x2) -> np.ndarray:
        """J[..., j, i] = d_i u_j."""
        _, _, psi11, psi12, psi22 = self._stream_derivatives(x1, x2)
        return np.stack([np.stack([-psi12, -psi22], axis=-1), np.stack([psi11, psi12], axis=-1)], axis=-2)

    def divergence(self, x1, x2) -> np.ndarray:
        jac = self.jacobian(x1, x2)
        return jac[..., 0, 0] + jac[..., 1, 1]

    def check(self, x1, x2, tol: float = 1e-10) -> List[str]:
        problems = []
        if np.max(np.abs(self.divergence(x1, x2)), initial=0.0) > tol:
            problems.append("flow is not divergence free")
        r = np.hypot(np.asarray(x1) - self.center[0], np.asarray(x2) - self.center[1])
        u1, u2 = self.velocity(x1, x2)
        outside = r > self.support_radius
        if np.any(u1[outside] != 0.0) or np.any(u2[outside] != 0.0):
            problems.append("flow does not vanish outside its support radius")
        return problems


ZERO_FLOW = BackgroundFlow()


# ---------------------------------------------------------------------------
# Symbol
# ---------------------------------------------------------------------------


def coupling_vector(x2, xi1, xi2, profile: CoriolisProfile) -> np.ndarray:
    x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x2, xi1, xi2)))
    return np.stack([profile.b(x2), -xi2, xi1], axis=-1)


def leading_symbol_array(x2, xi1, xi2, profile: CoriolisProfile) -> np.ndarray:
    w = coupling_vector(x2, xi1, xi2, profile)
    return 1j * np.einsum("...k,kij->...ij", w, CROSS)


def full_symbol_array(x1, x2, xi1, xi2, profile: CoriolisProfile, flow: BackgroundFlow, eps: float) -> np.ndarray:
    """A0 + eps (u.xi) Id + eps^2 i J, J the flow Jacobian in the (u1, u2) block."""
    x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, xi1, xi2)))
    symbol = leading_symbol_array(x2, xi1, xi2, profile)
    if flow.is_zero or eps == 0.0:
        return symbol
    u1, u2 = flow.velocity(x1, x2)
    symbol = symbol + eps * (u1 * xi1 + u2 * xi2)[..., None, None] * IDENTITY
    symbol[..., 1:, 1:] += eps * eps * 1j * flow.jacobian(x1, x2)
    return symbol


def eval_symbol(p: PhasePoint, profile: CoriolisProfile, flow: BackgroundFlow, eps: float) -> np.ndarray:
    if eps < 0.0:
        raise ValueError("eps must be non-negative")
    return full_symbol_array(p.x1, p.x2, p.xi1, p.xi2, profile, flow, eps)


def gap_array(x2, xi1, xi2, profile: CoriolisProfile) -> np.ndarray:
    return np.asarray(xi1) ** 2 + np.asarray(xi2) ** 2 + profile.b(x2) ** 2


def require_gap(p: PhasePoint, profile: CoriolisProfile, gap_floor: float = GAP_FLOOR) -> float:
    gap = float(gap_array(p.x2, p.xi1, p.xi2, profile))
    if gap < gap_floor:
        raise GapViolation(f"xi^2 + b^2 = {gap:.3e} below gap floor {gap_floor:.1e} at {p}", point=p, gap=gap)
    return gap


# ---------------------------------------------------------------------------
# Eigenframe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenFrame:
    """Sorted eigenvalues of A0 and the fixed-gauge orthonormal eigenvectors."""

    lambda_minus: float
    lambda_zero: float
    lambda_plus: float
    u_minus: np.ndarray
    u_zero: np.ndarray
    u_plus: np.ndarray

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([self.lambda_minus, self.lambda_zero, self.lambda_plus])

    @property
    def matrix(self) -> np.ndarray:
        """The unitary U whose columns are (u_minus, u_zero, u_plus)."""
        return np.stack([self.u_minus, self.u_zero, self.u_plus], axis=-1)


def _normalize(v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(v, axis=-1)
    return v / np.where(norm > 0.0, norm, 1.0)[..., None], norm


def _frame(w: np.ndarray):
    """Unit kernel direction, transverse pair (e_a, e_b) and helper data for derivatives."""
    r = np.linalg.norm(w, axis=-1)
    degenerate = r == 0.0
    w_hat = np.where(degenerate[..., None], _UNIT[0], w / np.where(degenerate, 1.0, r)[..., None])
    # e_a is the normalized projection of e2 onto the plane orthogonal to w_hat;
    # e3 replaces e2 where w_hat is (anti)parallel to e2
    use_e3 = np.abs(w_hat[..., 1]) > 1.0 - 1e-12
    ref_index = np.where(use_e3, 2, 1)
    ref = _UNIT[ref_index]
    ref_comp = np.take_along_axis(w_hat, ref_index[..., None], axis=-1)
    n = ref - ref_comp * w_hat
    e_a, n_norm = _normalize(n)
    e_b = np.cross(w_hat, e_a)
    return r, w_hat, e_a, e_b, n_norm, ref_index, ref_comp


def eigenframe_arrays(x2, xi1, xi2, profile: CoriolisProfile) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (..., 3) ascending and unitary frames (..., 3, 3), columns (u-, u0, u+)."""
    w = coupling_vector(x2, xi1, xi2, profile)
    r, w_hat, e_a, e_b, _, _, _ = _frame(w)
    u_minus = (e_a - 1j * e_b) / _SQRT2
    u_plus = (e_a + 1j * e_b) / _SQRT2
    frames = np.stack([u_minus, w_hat.astype(complex), u_plus], axis=-1)
    eigenvalues = np.stack([-r, np.zeros_like(r), r], axis=-1)
    return eigenvalues, frames


def _frame_w_derivatives(w: np.ndarray) -> np.ndarray:
    """d U / d w_k for k = 0, 1, 2, shape (3, ..., 3, 3)."""
    r, w_hat, e_a, e_b, n_norm, ref_index, ref_comp = _frame(w)
    r_safe = np.where(r > 0.0, r, 1.0)[..., None]
    n_safe = np.where(n_norm > 0.0, n_norm, 1.0)[..., None]
    derivatives = []
    for k in range(3):
        d_hat = (_UNIT[k] - w_hat * w_hat[..., k : k + 1]) / r_safe
        d_ref = np.take_along_axis(d_hat, ref_index[..., None], axis=-1)
        d_n = -d_ref * w_hat - ref_comp * d_hat
        d_ea = (d_n - e_a * np.sum(e_a * d_n, axis=-1, keepdims=True)) / n_safe
        d_eb = np.cross(d_hat, e_a) + np.cross(w_hat, d_ea)
        derivatives.append(
            np.stack([(d_ea - 1j * d_eb) / _SQRT2, d_hat.astype(complex), (d_ea + 1j * d_eb) / _SQRT2], axis=-1)
        )
    return np.stack(derivatives)


def eigenframe_partials(x2, xi1, xi2, profile: CoriolisProfile) -> np.ndarray:
    """Partials of U in (x1, x2, xi1, xi2), shape (4, ..., 3, 3)."""
    w = coupling_vector(x2, xi1, xi2, profile)
    dw = _frame_w_derivatives(w)
    slope = profile.db(np.broadcast_to(np.asarray(x2, dtype=float), w.shape[:-1]))
    return np.stack([np.zeros_like(dw[0]), slope[..., None, None] * dw[0], dw[2], -dw[1]])


def leading_symbol_partials(x2, xi1, xi2, profile: CoriolisProfile) -> np.ndarray:
    """Partials of A0 in (x1, x2, xi1, xi2), shape (4, ..., 3, 3)."""
    shape = np.broadcast_shapes(np.shape(x2), np.shape(xi1), np.shape(xi2))
    slope = np.broadcast_to(profile.db(np.asarray(x2, dtype=float)), shape)
    ones = np.ones(shape)
    return np.stack(
        [
            np.zeros(shape + (3, 3), dtype=complex),
            1j * slope[..., None, None] * CROSS[0],
            1j * ones[..., None, None] * CROSS[2],
            -1j * ones[..., None, None] * CROSS[1],
        ]
    )


def leading_eigensystem(p: PhasePoint, profile: CoriolisProfile, gap_floor: float = GAP_FLOOR) -> EigenFrame:
    require_gap(p, profile, gap_floor)
    eigenvalues, frame = eigenframe_arrays(p.x2, p.xi1, p.xi2, profile)
    return EigenFrame(
        lambda_minus=float(eigenvalues[0]),
        lambda_zero=float(eigenvalues[1]),
        lambda_plus=float(eigenvalues[2]),
        u_minus=frame[:, 0],
        u_zero=frame[:, 1],
        u_plus=frame[:, 2],
    )


# ---------------------------------------------------------------------------
# Scalar Hamiltonians
# ---------------------------------------------------------------------------


def rossby_profile_array(x1, x2, xi1, xi2, profile: CoriolisProfile, flow: BackgroundFlow) -> np.ndarray:
    """xi1 b'(x2) / (xi^2 + b^2) + u(x).xi, the Rossby Hamiltonian without its eps factor."""
    x1, x2, xi1, xi2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, xi1, xi2)))
    value = xi1 * profile.db(x2) / gap_array(x2, xi1, xi2, profile)
    if not flow.is_zero:
        u1, u2 = flow.velocity(x1, x2)
        value = value + u1 * xi1 + u2 * xi2
    return value


def rossby_symbol(p: PhasePoint, profile: CoriolisProfile, flow: BackgroundFlow, gap_floor: float = GAP_FLOOR) -> float:
    require_gap(p, profile, gap_floor)
    return float(rossby_profile_array(p.x1, p.x2, p.xi1, p.xi2, profile, flow))


def _sign_value(sign: Union[int, str]) -> int:
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def tau_array(x2, xi1, xi2, profile: CoriolisProfile, sign: Union[int, str]) -> np.ndarray:
    return _sign_value(sign) * np.sqrt(gap_array(x2, xi1, xi2, profile))


def tau_pm(p: PhasePoint, profile: CoriolisProfile, sign: Union[int, str]) -> float:
    return float(tau_array(p.x2, p.xi1, p.xi2, profile, sign))


def oscillator_levels(beta: float, xi1: float, eps: float, count: int) -> np.ndarray:
    """Squared Poincaré levels under b = beta*x2 at fixed xi1: xi1^2 + eps|beta|(2n+1)."""
    n = np.arange(count)
    return xi1 * xi1 + eps * abs(beta) * (2 * n + 1)
