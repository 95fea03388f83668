"""Discrete Mourre estimate and propagation decay.

Functional calculus is exact: every Hamiltonian is fully diagonalized with
scipy.linalg.eigh, and spectral projectors, window functions and propagators are
built from the eigenpairs.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from wavelab.errors import EmptyWindow, NotSelfAdjoint, WindowMismatch
from wavelab.models import MourreReport
from wavelab.services.weyl_quant import DiscreteOperator, line_operator
from wavelab.utils.fitting import loglog_slope

logger = logging.getLogger(__name__)

OperatorLike = Union[DiscreteOperator, np.ndarray]


def _dense(op: OperatorLike) -> np.ndarray:
    return op.matrix if isinstance(op, DiscreteOperator) else np.asarray(op)


def require_self_adjoint(op: OperatorLike, name: str, tol: float = 1e-8) -> np.ndarray:
    matrix = _dense(op)
    defect = float(np.linalg.norm(matrix - matrix.conj().T, 2))
    if defect > tol:
        raise NotSelfAdjoint(f"{name} has adjoint defect {defect:.3e} > {tol:.1e}", {"defect": defect})
    return matrix


class SpectralDecomposition:
    """Eigenpairs of a self-adjoint matrix and the functional calculus they give."""

    def __init__(self, matrix: np.ndarray):
        self.eigenvalues, self.eigenvectors = scipy.linalg.eigh(0.5 * (matrix + matrix.conj().T))

    @classmethod
    def of(cls, H: OperatorLike, name: str = "H") -> "SpectralDecomposition":
        return cls(require_self_adjoint(H, name))

    def function(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """f(H) = V diag(f(lambda)) V*."""
        values = np.asarray(f(self.eigenvalues))
        return np.einsum("ij,j,kj->ik", self.eigenvectors, values, self.eigenvectors.conj())

    def propagator(self, t: float) -> np.ndarray:
        """exp(-i H t)."""
        return self.function(lambda lam: np.exp(-1j * t * lam))

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        coefficients = self.eigenvectors.conj().T @ psi
        return self.eigenvectors @ (np.exp(-1j * t * self.eigenvalues) * coefficients)


@dataclass
class SpectralWindow:
    """Open interval (lo, hi) with an orthonormal basis of the range of its projector."""

    lo: float
    hi: float
    basis: np.ndarray

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("spectral window needs lo < hi")

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def contains(self, lo: float, hi: float) -> bool:
        return self.lo <= lo and hi <= self.hi


def spectral_window(
    decomposition: SpectralDecomposition,
    lo: float,
    hi: float,
    restriction: Optional[np.ndarray] = None,
) -> SpectralWindow:
    """E_Delta for Delta = (lo, hi), optionally intersected with a commuting projector.

    ``restriction`` is an orthogonal projector commuting with H, e.g. a Fourier cutoff to
    xi1 >= c for an x1-translation invariant Hamiltonian.
    """
    inside = (decomposition.eigenvalues > lo) & (decomposition.eigenvalues < hi)
    basis = decomposition.eigenvectors[:, inside]
    if restriction is not None and basis.shape[1]:
        compressed = basis.conj().T @ restriction @ basis
        weights, vectors = scipy.linalg.eigh(0.5 * (compressed + compressed.conj().T))
        basis = basis @ vectors[:, weights > 0.5]
    if basis.shape[1] == 0:
        raise EmptyWindow(f"no eigenvalue of H in ({lo}, {hi})")
    return SpectralWindow(lo=lo, hi=hi, basis=basis)


def frequency_cutoff(n: int, L: float, eps: float, xi_min: float) -> np.ndarray:
    """Orthogonal projector onto the Fourier modes of [-L, L) with eps*k >= xi_min."""
    h = 2.0 * L / n
    keep = eps * 2.0 * np.pi * np.fft.fftfreq(n, h) >= xi_min
    F = np.fft.fft(np.eye(n), axis=0, norm="ortho")
    return F.conj().T @ (keep[:, None] * F)


def position_commutator(dxi1_symbol: Callable[[np.ndarray, np.ndarray], np.ndarray], eps: float, n: int,
                        L: float) -> np.ndarray:
    """i[Op(h), x] = eps Op(d_xi h) on the line, given d_xi h."""
    return eps * line_operator(dxi1_symbol, eps, n, L)


def filtered_packets(
    decomposition: SpectralDecomposition,
    g: Callable[[np.ndarray], np.ndarray],
    positions: np.ndarray,
    centers: Sequence[float],
    width: float,
    wavenumber: float,
) -> np.ndarray:
    """Unit columns g(H) phi_c, phi_c a Gaussian of the given width at c carrying exp(i k x)."""
    positions = np.asarray(positions, dtype=float)
    raw = np.stack(
        [np.exp(-((positions - c) ** 2) / (2.0 * width * width) + 1j * wavenumber * positions) for c in centers],
        axis=1,
    )
    V = decomposition.eigenvectors
    filtered = V @ (np.asarray(g(decomposition.eigenvalues))[:, None] * (V.conj().T @ raw))
    norms = np.linalg.norm(filtered, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("g(H) annihilates a packet; move the wavenumber inside the support of g")
    return filtered / norms


def commutator_defect(H: OperatorLike, A: OperatorLike, commutator: OperatorLike, vectors: np.ndarray) -> float:
    """max over the columns v of ||(i(HA - AH) - C) v|| / ||v||.

    On a periodic box x jumps at the seam, so the closed form C only matches the matrix
    commutator on vectors that stay away from it.
    """
    Hm = require_self_adjoint(H, "H")
    Am = require_self_adjoint(A, "A")
    V = np.asarray(vectors).reshape(Hm.shape[0], -1)
    residual = 1j * (Hm @ (Am @ V) - Am @ (Hm @ V)) - _dense(commutator) @ V
    return float(np.max(np.linalg.norm(residual, axis=0) / np.linalg.norm(V, axis=0)))


def positivity_check(
    H: OperatorLike,
    A: OperatorLike,
    window: SpectralWindow,
    commutator: Optional[OperatorLike] = None,
) -> float:
    """Smallest eigenvalue of E i[H, A] E on range(E).

    ``commutator`` replaces the matrix i(HA - AH) when it is known in closed form.
    """
    Hm = require_self_adjoint(H, "H")
    Am = require_self_adjoint(A, "A")
    C = 1j * (Hm @ Am - Am @ Hm) if commutator is None else _dense(commutator)
    compressed = window.basis.conj().T @ C @ window.basis
    theta = float(scipy.linalg.eigvalsh(0.5 * (compressed + compressed.conj().T))[0])
    logger.debug(f"theta_est={theta:.6g} on ({window.lo}, {window.hi}) of rank {window.rank}")
    return theta


@dataclass(frozen=True)
class WindowFunction:
    """C-infinity bump supported on [lo, hi]."""

    lo: float
    hi: float

    def __call__(self, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        s = (2.0 * lam - (self.lo + self.hi)) / (self.hi - self.lo)
        inside = np.abs(s) < 1.0
        return np.where(inside, np.exp(1.0 - 1.0 / np.where(inside, 1.0 - s * s, 1.0)), 0.0)


def _positions(A: OperatorLike) -> np.ndarray:
    matrix = _dense(A)
    diagonal = np.diag(matrix)
    if np.any(matrix - np.diag(diagonal)):
        raise ValueError("sharp cutoffs need a multiplication (diagonal) conjugate operator")
    return np.real(diagonal)


def decay_norm(
    decomposition: SpectralDecomposition,
    positions: np.ndarray,
    g: WindowFunction,
    a: float,
    theta_prime: float,
    t: float,
    span: float,
) -> float:
    """||chi_-(A - a - theta' t) exp(-iHt) g(H) chi_+(A - a)||.

    chi_+ keeps [a, a + span) and chi_- keeps positions below a + theta' t.
    """
    plus = (positions >= a) & (positions < a + span)
    minus = positions < a + theta_prime * t
    if not plus.any() or not minus.any():
        return 0.0
    evolved = decomposition.function(lambda lam: np.exp(-1j * t * lam) * g(lam))
    return float(np.linalg.norm(evolved[np.ix_(minus, plus)], 2))


def propagation_decay(
    H: OperatorLike,
    A: OperatorLike,
    g: WindowFunction,
    a: float,
    theta_prime: float,
    times: Sequence[float],
    window: SpectralWindow,
    theta_est: Optional[float] = None,
    span: Optional[float] = None,
) -> MourreReport:
    """Decay samples of the propagation estimate and their log-log exponent."""
    if not window.contains(g.lo, g.hi):
        raise WindowMismatch(f"support [{g.lo}, {g.hi}] of g is not inside ({window.lo}, {window.hi})")
    decomposition = SpectralDecomposition.of(H)
    positions = _positions(require_self_adjoint(A, "A"))
    if span is None:
        span = 0.25 * (positions.max() - positions.min())
    if theta_est is not None and not 0.0 < theta_prime < theta_est:
        logger.warning(f"theta'={theta_prime} outside (0, theta_est={theta_est:.4g}): decay is not expected")
    samples: List[Tuple[float, float]] = []
    for t in times:
        samples.append((float(t), decay_norm(decomposition, positions, g, a, theta_prime, t, span)))
        logger.debug(f"t={t:.4g}: norm {samples[-1][1]:.3e}")
    positive = [(t, value) for t, value in samples if t > 0.0]
    exponent = -loglog_slope([t for t, _ in positive], [value for _, value in positive]) if len(positive) > 1 else 0.0
    return MourreReport(
        theta_est=float(theta_est) if theta_est is not None else float("nan"),
        theta_prime=theta_prime,
        decay_samples=samples,
        fitted_exponent=exponent,
        window=(window.lo, window.hi),
    )
