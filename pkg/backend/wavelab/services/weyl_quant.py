"""Discrete Weyl quantization on a periodic grid.

The kernel of Op(sigma) between grid points a and b is

    K(a, b) = (1/N) sum_k sigma((x_a + x_b)/2, eps k) exp(i k (x_a - x_b)),

with k running over the FFT frequencies of the grid. Midpoints are evaluated
analytically, so for every midpoint index s = a + b the kernel row is one inverse FFT
of the symbol sampled at that midpoint. Vectors are laid out component-major:
index (component, i1, i2).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator

from wavelab.errors import GridMismatch, GridTooCoarse
from wavelab.models import GridSpec
from wavelab.services.moyal import FirstOrderSymbol, MatrixSymbolFn
from wavelab.settings import DENSE_LIMIT

logger = logging.getLogger(__name__)

SymbolLike = Union[FirstOrderSymbol, MatrixSymbolFn, Callable[..., np.ndarray]]


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic box [-L1, L1) x [-L2, L2) sampled with n1 x n2 points."""

    n1: int
    n2: int
    L1: float
    L2: float

    def __post_init__(self):
        if self.n1 < 8 or self.n2 < 8:
            raise ValueError("grid needs at least 8 points per axis")
        if self.L1 <= 0.0 or self.L2 <= 0.0:
            raise ValueError("box half-lengths must be positive")

    @classmethod
    def from_spec(cls, spec: GridSpec) -> "SpatialGrid":
        return cls(n1=spec.n1, n2=spec.n2, L1=spec.L1, L2=spec.L2)

    @property
    def h1(self) -> float:
        return 2.0 * self.L1 / self.n1

    @property
    def h2(self) -> float:
        return 2.0 * self.L2 / self.n2

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    @property
    def x1(self) -> np.ndarray:
        return -self.L1 + self.h1 * np.arange(self.n1)

    @property
    def x2(self) -> np.ndarray:
        return -self.L2 + self.h2 * np.arange(self.n2)

    @property
    def k1(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n1, self.h1)

    @property
    def k2(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n2, self.h2)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def wavenumber_mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.k1, self.k2, indexing="ij")

    @property
    def nyquist(self) -> Tuple[float, float]:
        return np.pi / self.h1, np.pi / self.h2


class DiscreteOperator:
    """Dense matrix or matrix-free applicator acting on (components, n1, n2) fields."""

    def __init__(
        self,
        grid: SpatialGrid,
        eps: float,
        components: int,
        dense: Optional[np.ndarray] = None,
        linop: Optional[LinearOperator] = None,
        label: str = "",
    ):
        if dense is None and linop is None:
            raise ValueError("operator needs a dense matrix or a linear operator")
        self.grid = grid
        self.eps = eps
        self.components = components
        self.dense = dense
        self._linop = linop
        self.label = label

    def __repr__(self) -> str:
        form = "dense" if self.dense is not None else "matrix-free"
        return f"DiscreteOperator({self.label or '?'}, {form}, {self.grid.n1}x{self.grid.n2}, eps={self.eps})"

    @property
    def dim(self) -> int:
        return self.components * self.grid.size

    @property
    def shape(self) -> Tuple[int, int]:
        return self.dim, self.dim

    @property
    def field_shape(self) -> Tuple[int, int, int]:
        return self.components, self.grid.n1, self.grid.n2

    @property
    def has_dense(self) -> bool:
        return self.dense is not None

    @property
    def matrix(self) -> np.ndarray:
        if self.dense is None:
            raise GridTooCoarse(f"{self!r} has no dense form at this grid size")
        return self.dense

    @property
    def linear_operator(self) -> LinearOperator:
        if self._linop is None:
            dense = self.dense
            self._linop = LinearOperator(
                self.shape, matvec=lambda v: dense @ v, rmatvec=lambda v: dense.conj().T @ v, dtype=complex
            )
        return self._linop

    def apply(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec)
        flat = vec.reshape(self.dim)
        out = self.dense @ flat if self.dense is not None else self.linear_operator.matvec(flat)
        return np.asarray(out).reshape(vec.shape)

    def apply_adjoint(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec)
        flat = vec.reshape(self.dim)
        if self.dense is not None:
            out = self.dense.conj().T @ flat
        else:
            out = self.linear_operator.rmatvec(flat)
        return np.asarray(out).reshape(vec.shape)

    def _check_compatible(self, other: "DiscreteOperator"):
        if other.grid != self.grid or other.eps != self.eps or other.components != self.components:
            raise GridMismatch(f"cannot combine {self!r} with {other!r}")

    def _like(self, dense: np.ndarray, label: str) -> "DiscreteOperator":
        return DiscreteOperator(self.grid, self.eps, self.components, dense=dense, label=label)

    def adjoint(self) -> "DiscreteOperator":
        return self._like(self.matrix.conj().T, f"{self.label}*")

    def __matmul__(self, other: "DiscreteOperator") -> "DiscreteOperator":
        self._check_compatible(other)
        label = f"{self.label}{other.label}"
        if self.has_dense and other.has_dense:
            return self._like(self.matrix @ other.matrix, label)
        product = self.linear_operator @ other.linear_operator
        return DiscreteOperator(self.grid, self.eps, self.components, linop=product, label=label)

    def __add__(self, other: "DiscreteOperator") -> "DiscreteOperator":
        self._check_compatible(other)
        return self._like(self.matrix + other.matrix, f"({self.label}+{other.label})")

    def __sub__(self, other: "DiscreteOperator") -> "DiscreteOperator":
        self._check_compatible(other)
        return self._like(self.matrix - other.matrix, f"({self.label}-{other.label})")

    def __rmul__(self, scalar: complex) -> "DiscreteOperator":
        return self._like(scalar * self.matrix, f"{scalar}*{self.label}")


def identity_operator(grid: SpatialGrid, eps: float, components: int = 3) -> DiscreteOperator:
    return DiscreteOperator(grid, eps, components, dense=np.eye(components * grid.size, dtype=complex), label="Id")


def grid_norm(field: np.ndarray, grid: SpatialGrid) -> float:
    """Discrete L2 norm, sum over all leading components."""
    return float(np.sqrt(grid.cell_area * np.sum(np.abs(field) ** 2)))


def gaussian_envelope(grid: SpatialGrid, x0: Tuple[float, float], xi0: Tuple[float, float], eps: float,
                      width: float) -> np.ndarray:
    """exp(-|x - x0|^2 / (2 width^2)) exp(i xi0.x / eps), unit discrete L2 norm."""
    X1, X2 = grid.mesh()
    envelope = np.exp(-((X1 - x0[0]) ** 2 + (X2 - x0[1]) ** 2) / (2.0 * width * width))
    field = envelope * np.exp(1j * (xi0[0] * X1 + xi0[1] * X2) / eps)
    return field / grid_norm(field, grid)


# ---------------------------------------------------------------------------
# Quantization
# ---------------------------------------------------------------------------


def _as_evaluator(symbol: SymbolLike, eps: float) -> Callable[..., np.ndarray]:
    if isinstance(symbol, FirstOrderSymbol):
        return symbol.at_eps(eps)
    if isinstance(symbol, MatrixSymbolFn):
        return symbol.evaluate
    return symbol


def _matrix_evaluator(evaluate: Callable[..., np.ndarray]) -> Tuple[Callable[..., np.ndarray], int]:
    """Normalize scalar symbols to 1x1 matrices and report the component count."""
    origin = np.asarray(evaluate(0.0, 0.0, 0.0, 0.0))
    scalar = origin.ndim == 0

    def broadcast(*coords):
        shape = np.broadcast_shapes(*(np.shape(c) for c in coords))
        value = np.asarray(evaluate(*coords))
        if scalar:
            return np.broadcast_to(value, shape)[..., None, None]
        return np.broadcast_to(value, shape + value.shape[-2:])

    return broadcast, 1 if scalar else origin.shape[-1]


def check_resolution(evaluate: Callable[..., np.ndarray], eps: float, grid: SpatialGrid, threshold: float = 0.5):
    """Raise GridTooCoarse when the symbol changes by more than ``threshold`` (relative) per cell."""
    X1, X2 = grid.mesh()
    k1 = eps * grid.k1[np.linspace(0, grid.n1 - 1, 5).astype(int)]
    k2 = eps * grid.k2[np.linspace(0, grid.n2 - 1, 5).astype(int)]
    XI1, XI2 = np.meshgrid(k1, k2, indexing="ij")
    values = np.asarray(evaluate(X1[:, :, None, None], X2[:, :, None, None], XI1, XI2))
    scale = np.max(np.abs(values))
    if scale == 0.0:
        return
    jump = max(np.max(np.abs(np.diff(values, axis=0))), np.max(np.abs(np.diff(values, axis=1))))
    variation = float(jump / scale)
    if variation > threshold:
        raise GridTooCoarse(
            f"symbol varies by {variation:.2f} of its size per cell (threshold {threshold}) "
            f"on the {grid.n1}x{grid.n2} grid",
            {"variation": variation},
        )


def _pair_indices(s: int, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index pairs (a, b) with a + b = s and their periodic offset d = a - b mod n."""
    a = np.arange(max(0, s - n + 1), min(s, n - 1) + 1)
    b = s - a
    return a, b, (a - b) % n


def _second_axis_maps(n2: int) -> Tuple[np.ndarray, np.ndarray]:
    a2 = np.arange(n2)
    return a2[:, None] + a2[None, :], (a2[:, None] - a2[None, :]) % n2


def _kernel_blocks(
    evaluate: Callable[..., np.ndarray], eps: float, grid: SpatialGrid
) -> Iterator[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (a1, b1, block) with block[p, a2, b2, i, j] = K[(i, a1[p], a2), (j, b1[p], b2)]."""
    n1, n2 = grid.n1, grid.n2
    XI1, XI2 = grid.wavenumber_mesh()
    XI1, XI2 = eps * XI1, eps * XI2
    c2 = -grid.L2 + 0.5 * grid.h2 * np.arange(2 * n2 - 1)
    S2, D2 = _second_axis_maps(n2)
    for s1 in range(2 * n1 - 1):
        c1 = -grid.L1 + 0.5 * grid.h1 * s1
        values = evaluate(c1, c2[:, None, None], XI1[None], XI2[None])
        F = np.fft.ifft2(values, axes=(1, 2))
        a1, b1, d1 = _pair_indices(s1, n1)
        yield a1, b1, F[S2[None], d1[:, None, None], D2[None]]


def _assemble_dense(evaluate: Callable[..., np.ndarray], eps: float, grid: SpatialGrid, m: int) -> np.ndarray:
    n1, n2 = grid.n1, grid.n2
    K = np.zeros((m, n1, n2, m, n1, n2), dtype=complex)
    for a1, b1, block in _kernel_blocks(evaluate, eps, grid):
        K[:, a1, :, :, b1, :] = block.transpose(0, 3, 1, 4, 2)
    return K.reshape(m * n1 * n2, m * n1 * n2)


def _matrix_free(evaluate: Callable[..., np.ndarray], eps: float, grid: SpatialGrid, m: int) -> LinearOperator:
    shape = (m, grid.n1, grid.n2)

    def matvec(vec):
        f = np.asarray(vec).reshape(shape)
        out = np.zeros(shape, dtype=complex)
        for a1, b1, block in _kernel_blocks(evaluate, eps, grid):
            out[:, a1, :] += np.einsum("puvij,jpv->ipu", block, f[:, b1, :])
        return out.reshape(-1)

    def rmatvec(vec):
        g = np.asarray(vec).reshape(shape)
        out = np.zeros(shape, dtype=complex)
        for a1, b1, block in _kernel_blocks(evaluate, eps, grid):
            out[:, b1, :] += np.einsum("puvij,ipu->jpv", block.conj(), g[:, a1, :])
        return out.reshape(-1)

    size = m * grid.size
    return LinearOperator((size, size), matvec=matvec, rmatvec=rmatvec, dtype=complex)


def quantize(
    symbol: SymbolLike,
    eps: float,
    grid: SpatialGrid,
    dense: Optional[bool] = None,
    check: bool = True,
    threshold: float = 0.5,
    label: str = "",
) -> DiscreteOperator:
    """Discrete Weyl operator of a scalar or matrix symbol at the given eps."""
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    evaluate, m = _matrix_evaluator(_as_evaluator(symbol, eps))
    if check:
        check_resolution(evaluate, eps, grid, threshold)
    if dense is None:
        dense = max(grid.n1, grid.n2) <= DENSE_LIMIT
    if dense:
        logger.debug(f"Assembling dense {m * grid.size}x{m * grid.size} Weyl operator {label}")
        return DiscreteOperator(grid, eps, m, dense=_assemble_dense(evaluate, eps, grid, m), label=label)
    return DiscreteOperator(grid, eps, m, linop=_matrix_free(evaluate, eps, grid, m), label=label)


def line_operator(symbol: Callable[[np.ndarray, np.ndarray], np.ndarray], eps: float, n: int, L: float) -> np.ndarray:
    """Dense Weyl quantization of a scalar symbol sigma(x, xi) on the periodic line [-L, L)."""
    h = 2.0 * L / n
    xi = eps * 2.0 * np.pi * np.fft.fftfreq(n, h)
    K = np.zeros((n, n), dtype=complex)
    for s in range(2 * n - 1):
        F = np.fft.ifft(np.broadcast_to(symbol(-L + 0.5 * h * s, xi), xi.shape))
        a, b, d = _pair_indices(s, n)
        K[a, b] = F[d]
    return K


def line_points(n: int, L: float) -> np.ndarray:
    return -L + (2.0 * L / n) * np.arange(n)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def adjoint_defect(op: DiscreteOperator, iterations: int = 60, seed: int = 0) -> float:
    """||Op - Op*||: exact for dense operators, power iteration otherwise."""
    if op.has_dense:
        skew = op.dense - op.dense.conj().T
        if not np.any(skew):
            return 0.0
        return float(np.max(np.abs(scipy.linalg.eigvalsh(1j * skew))))
    rng = np.random.Generator(np.random.Philox(seed))
    vec = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
    vec /= np.linalg.norm(vec)
    estimate = 0.0
    for _ in range(iterations):
        image = op.apply(vec) - op.apply_adjoint(vec)
        estimate = float(np.linalg.norm(image))
        if estimate == 0.0:
            return 0.0
        vec = image / estimate
    return estimate


@dataclass
class SymbolSamples:
    """Recovered symbol values[i1, i2, m1, m2, :, :] at (x_i, eps k_m); ``trusted`` marks the central half box."""

    grid: SpatialGrid
    eps: float
    values: np.ndarray
    trusted: np.ndarray

    def reference(self, symbol: SymbolLike) -> np.ndarray:
        """The given symbol sampled on the same points, for comparisons."""
        evaluate, _ = _matrix_evaluator(_as_evaluator(symbol, self.eps))
        X1, X2 = self.grid.mesh()
        K1, K2 = self.grid.wavenumber_mesh()
        return np.asarray(
            evaluate(
                X1[:, :, None, None],
                X2[:, :, None, None],
                self.eps * K1[None, None],
                self.eps * K2[None, None],
            )
        )

    def max_error(self, symbol: SymbolLike, trusted_only: bool = True) -> float:
        error = np.abs(self.values - self.reference(symbol))
        if trusted_only:
            error = error[self.trusted]
        return float(np.max(error))


def _interior_mask(n: int) -> np.ndarray:
    index = np.arange(n)
    return (index >= n // 4) & (index < 3 * n // 4)


def _blend(layers, index: int, count: int):
    """Layer at 2*index plus the mean of the available odd neighbours 2*index +- 1."""
    odd = [layers[s] for s in (2 * index - 1, 2 * index + 1) if 0 <= s < count]
    return layers[2 * index] + sum(odd) / len(odd)


def _short_offsets(offset: np.ndarray, n: int) -> np.ndarray:
    """Mask of offsets in (-n/2, n/2], one representative per class mod n."""
    return (2 * offset > -n) & (2 * offset <= n)


def symbol_roundtrip(op: DiscreteOperator) -> SymbolSamples:
    """Recover the discrete Weyl symbol of a dense operator on the grid points.

    Each midpoint index s only carries kernel offsets d of the parity of s, so one
    midpoint yields a frequency-aliased half of the symbol. The four parity classes are
    recombined at each grid point, odd classes averaged over the neighbouring half-grid
    midpoints; the result is exact for symbols affine in x on the central half box.
    An offset class mod n is read from the pair that is closest on the circle, so
    products of quantized operators are read from their local kernel.
    """
    grid = op.grid
    n1, n2, m = grid.n1, grid.n2, op.components
    K = op.matrix.reshape(m, n1, n2, m, n1, n2)
    a2, b2 = np.meshgrid(np.arange(n2), np.arange(n2), indexing="ij")
    near = _short_offsets(a2 - b2, n2)
    a2, b2 = a2[near], b2[near]
    s2, d2 = a2 + b2, (a2 - b2) % n2
    rows = []
    for s1 in range(2 * n1 - 1):
        a1, b1, d1 = _pair_indices(s1, n1)
        keep = _short_offsets(a1 - b1, n1)
        a1, b1, d1 = a1[keep], b1[keep], d1[keep]
        partial = np.zeros((2 * n2 - 1, n1, n2, m, m), dtype=complex)
        partial[s2[None, :], d1[:, None], d2[None, :]] = K[:, a1[:, None], a2[None, :], :, b1[:, None], b2[None, :]]
        layers = np.fft.fft2(partial, axes=(1, 2))
        rows.append(np.stack([_blend(layers, a2, 2 * n2 - 1) for a2 in range(n2)]))
    values = np.stack([_blend(rows, a1, 2 * n1 - 1) for a1 in range(n1)])
    trusted = _interior_mask(n1)[:, None] & _interior_mask(n2)[None, :]
    return SymbolSamples(grid=grid, eps=op.eps, values=values, trusted=trusted)
