"""Reduced density matrices of bosonic states on the grid.

Kernel convention: ``gamma(x; x') = h^{d(N-k)} sum_y psi(x, y) conj(psi(x', y))``,
so that the marginal of a product ``phi^{(x) N}`` is ``|phi><phi|`` with kernel
``phi(x) conj(phi(x'))``.  A kernel ``K`` acts as ``(K f)(x) = h^{dk} sum_y K(x, y) f(y)``;
the matrix ``h^{dk} K`` (rows ``x``, columns ``x'``) therefore has the operator's
eigenvalues, and it is this matrix that every spectral routine diagonalizes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import FieldState, TorusGrid, WaveFunction, check_alloc, fourier_multiplier

HERMITIAN_TOL = 1e-10
IMAG_RESIDUE_TOL = 1e-8


def _dim(grid: TorusGrid, k: int) -> int:
    return grid.M ** (grid.d * k)


@dataclass(frozen=True)
class DensityMatrix:
    """Kernel ``gamma(x_1..x_k; x'_1..x'_k)`` stored with shape ``(M,)*(2 d k)``."""

    grid: TorusGrid
    k: int
    kernel: np.ndarray

    def __post_init__(self):
        shape = (self.grid.M,) * (2 * self.grid.d * self.k)
        K = np.asarray(self.kernel, dtype=complex)
        if K.shape != shape:
            if K.size != np.prod(shape):
                raise ValueError(f"kernel of shape {K.shape} is not an order-{self.k} kernel on {self.grid}")
            K = K.reshape(shape)
        object.__setattr__(self, "kernel", K)

    @property
    def weight(self) -> float:
        return self.grid.h ** (self.grid.d * self.k)

    @property
    def dim(self) -> int:
        return _dim(self.grid, self.k)

    def matrix(self) -> np.ndarray:
        """Operator matrix ``h^{dk} K`` in the orthonormal grid basis."""
        return self.weight * self.kernel.reshape(self.dim, self.dim)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix()))

    def hermiticity_error(self) -> float:
        A = self.kernel.reshape(self.dim, self.dim)
        return float(np.max(np.abs(A - A.conj().T)))

    def eigenvalues(self) -> np.ndarray:
        A = self.matrix()
        return np.linalg.eigvalsh(0.5 * (A + A.conj().T))

    def is_positive(self, rel_tol: float = 1e-8) -> bool:
        ev = self.eigenvalues()
        return bool(ev[0] >= -rel_tol * max(abs(ev[-1]), 1e-300))

    def __sub__(self, other: "DensityMatrix") -> "DensityMatrix":
        _same(self, other)
        return DensityMatrix(self.grid, self.k, self.kernel - other.kernel)

    def scaled(self, c: complex) -> "DensityMatrix":
        return DensityMatrix(self.grid, self.k, c * self.kernel)


@dataclass(frozen=True)
class ObservableKernel:
    """A ``k``-particle observable kernel under the same convention (no positivity)."""

    grid: TorusGrid
    k: int
    kernel: np.ndarray

    def __post_init__(self):
        shape = (self.grid.M,) * (2 * self.grid.d * self.k)
        object.__setattr__(self, "kernel", np.asarray(self.kernel, dtype=complex).reshape(shape))

    @property
    def dim(self) -> int:
        return _dim(self.grid, self.k)

    def matrix(self) -> np.ndarray:
        return self.grid.h ** (self.grid.d * self.k) * self.kernel.reshape(self.dim, self.dim)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """``(J f)(x) = h^{dk} sum_y J(x, y) f(y)``."""
        out = self.matrix() @ np.asarray(f, dtype=complex).ravel()
        return out.reshape((self.grid.M,) * (self.grid.d * self.k))


@dataclass(frozen=True)
class LowRankDensity:
    """``sum_j w_j |psi_j><psi_j|`` with ``k``-particle vectors ``psi_j`` (never densified).

    Used where the full kernel would not fit in memory (order 2 in the plane).
    """

    grid: TorusGrid
    k: int
    weights: np.ndarray
    vectors: np.ndarray  # shape (rank, M, ..., M)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        v = np.asarray(self.vectors, dtype=complex)
        shape = (self.grid.M,) * (self.grid.d * self.k)
        if v.shape[1:] != shape or v.shape[0] != w.shape[0]:
            raise ValueError(f"vectors {v.shape} do not match rank {w.shape[0]} and shape {shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "vectors", v)

    @property
    def rank(self) -> int:
        return len(self.weights)

    def to_dense(self) -> DensityMatrix:
        check_alloc((_dim(self.grid, self.k),) * 2, what="dense density kernel")
        V = self.vectors.reshape(self.rank, -1)
        K = (V.T * self.weights) @ V.conj()
        return DensityMatrix(self.grid, self.k, K)

    def scaled(self, c: float) -> "LowRankDensity":
        return LowRankDensity(self.grid, self.k, c * self.weights, self.vectors)

    def trace(self) -> float:
        w = self.grid.h ** (self.grid.d * self.k)
        norms = w * np.sum(np.abs(self.vectors.reshape(self.rank, -1)) ** 2, axis=1)
        return float(np.dot(self.weights, norms))

    def sobolev_trace(self, s: float = 1.0) -> float:
        """``Tr prod_j (1 - Lap_j)^s gamma``."""
        w = self.grid.h ** (self.grid.d * self.k)
        total = 0.0
        for lam, v in zip(self.weights, self.vectors):
            wv = fourier_multiplier(v, self.grid, lambda *k: (1 + sum(ki**2 for ki in k)) ** s)
            total += lam * w * np.vdot(v, wv).real
        return float(total)


def _same(a, b) -> None:
    if a.grid != b.grid or a.k != b.k or a.kernel.shape != b.kernel.shape:
        raise ValueError(f"shape mismatch: order {a.k} on {a.grid} vs order {b.k} on {b.grid}")


def partial_trace(psi: WaveFunction, k: int) -> DensityMatrix:
    """``k``-particle marginal of ``|psi><psi|``."""
    if not 1 <= k <= psi.N:
        raise ValueError(f"k must lie in [1, N={psi.N}], got {k}")
    g = psi.grid
    Dk = _dim(g, k)
    check_alloc((Dk, Dk), what=f"order-{k} density kernel")
    A = psi.amplitudes.reshape(Dk, -1)
    K = g.h ** (g.d * (psi.N - k)) * (A @ A.conj().T)
    return DensityMatrix(g, k, K)


def trace_out_last(gamma: DensityMatrix) -> DensityMatrix:
    """Trace the last particle of an order-``k`` kernel."""
    if gamma.k < 2:
        raise ValueError("need k >= 2 to trace out a particle")
    g = gamma.grid
    Dl = _dim(g, gamma.k - 1)
    Dm = _dim(g, 1)
    K = gamma.kernel.reshape(Dl, Dm, Dl, Dm)
    return DensityMatrix(g, gamma.k - 1, g.h**g.d * np.einsum("aibi->ab", K))


def projector(phi: FieldState | np.ndarray, k: int = 1, grid: TorusGrid | None = None) -> DensityMatrix:
    """``|phi><phi|^{(x) k}`` for normalized ``phi``."""
    if isinstance(phi, FieldState):
        grid, v = phi.grid, phi.values
    else:
        v = np.asarray(phi, dtype=complex)
    v = v / np.sqrt(grid.h**grid.d * np.sum(np.abs(v) ** 2))
    check_alloc((_dim(grid, k),) * 2, what=f"order-{k} projector")
    vk = v
    for _ in range(k - 1):
        vk = np.multiply.outer(vk, v)
    vk = vk.ravel()
    return DensityMatrix(grid, k, np.outer(vk, vk.conj()))


def pure_state(grid: TorusGrid, vector: np.ndarray, k: int) -> DensityMatrix:
    """``|v><v|`` for a normalized ``k``-particle vector."""
    v = np.asarray(vector, dtype=complex).ravel()
    v = v / np.sqrt(grid.h ** (grid.d * k) * np.vdot(v, v).real)
    return DensityMatrix(grid, k, np.outer(v, v.conj()))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """``Tr |a - b|`` (sum of absolute eigenvalues of the Hermitian difference)."""
    _same(a, b)
    D = a.matrix() - b.matrix()
    D = 0.5 * (D + D.conj().T)
    return float(np.sum(np.abs(np.linalg.eigvalsh(D))))


def sobolev_trace(gamma: DensityMatrix, order: int | None = None, s: float = 1.0) -> float:
    """``Tr prod_{j <= order} (1 - Lap_j)^s gamma`` with the weight applied to the ``x`` side.

    Raises ``ValueError`` when the imaginary part exceeds the Hermiticity tolerance.
    """
    order = gamma.k if order is None else order
    if not 0 <= order <= gamma.k:
        raise ValueError(f"order must lie in [0, {gamma.k}]")
    g = gamma.grid
    K = gamma.kernel
    if order and s != 0:
        K = fourier_multiplier(K, g, lambda *k: (1 + sum(ki**2 for ki in k)) ** s, particles=range(order))
    D = gamma.dim
    val = gamma.weight * np.trace(K.reshape(D, D))
    scale = max(1.0, abs(val))
    if abs(val.imag) > IMAG_RESIDUE_TOL * scale:
        raise ValueError(f"imaginary residue {val.imag:.3e} in Sobolev trace: input is not Hermitian")
    return float(val.real)


def mode_matrix(J: ObservableKernel | DensityMatrix) -> np.ndarray:
    """Matrix elements ``<e_p, J e_p'>`` in the orthonormal plane-wave basis."""
    g = J.grid
    n = g.d * J.k
    A = J.matrix().reshape((g.M,) * (2 * n))
    A = np.fft.fftn(A, axes=range(n), norm="ortho")
    A = np.fft.ifftn(A, axes=range(n, 2 * n), norm="ortho")
    return A.reshape(J.dim, J.dim)


def _bracket_weight(grid: TorusGrid, k: int) -> np.ndarray:
    one = np.sqrt(1 + grid.ksq()).ravel()
    w = one
    for _ in range(k - 1):
        w = np.multiply.outer(w, one).ravel()
    return w


def observable_norm(J: ObservableKernel | DensityMatrix) -> float:
    """Discrete triple norm ``max_p' sum_p <p><p'> (|J(p; p')| + |J(p'; p)|)``.

    ``<p>`` is ``prod_j (1 + |p_j|^2)^{1/2}``; matrix elements are taken in the
    orthonormal plane-wave basis, so the sum carries no volume factor.
    """
    A = np.abs(mode_matrix(J))
    w = _bracket_weight(J.grid, J.k)
    W = np.outer(w, w)
    col = np.sum(W * A, axis=0)  # sum over p of |J(p; p')|
    row = np.sum(W * A, axis=1)  # sum over p of |J(p'; p)|
    return float(np.max(col + row))


def random_low_rank(grid: TorusGrid, k: int, rank: int, rng: np.random.Generator, decay: float = 1.0) -> LowRankDensity:
    """Random positive ``sum_j w_j |psi_j><psi_j|`` of unit trace.

    Each ``psi_j`` has independent complex Gaussian mode coefficients damped by
    ``exp(-decay |p|^2 / 2)`` on every particle, then is normalized; the weights
    are a normalized positive draw.
    """
    shape = (grid.M,) * (grid.d * k)
    damp1 = np.exp(-decay * grid.ksq() / 2)
    damp = damp1
    for _ in range(k - 1):
        damp = np.multiply.outer(damp, damp1)
    vecs = np.empty((rank,) + shape, dtype=complex)
    wvol = grid.h ** (grid.d * k)
    for j in range(rank):
        c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * damp
        v = np.fft.ifftn(c)
        vecs[j] = v / np.sqrt(wvol * np.vdot(v, v).real)
    lam = rng.random(rank) + 1e-3
    return LowRankDensity(grid, k, lam / lam.sum(), vecs)


def symmetrize_vector(v: np.ndarray, grid: TorusGrid, k: int) -> np.ndarray:
    """Bosonic symmetrization of a ``k``-particle array (``k <= 2``)."""
    if k == 1:
        return v
    if k != 2:
        raise ValueError("only k <= 2 supported")
    d = grid.d
    axes = list(range(d, 2 * d)) + list(range(d))
    return 0.5 * (v + np.transpose(v, axes))


def low_rank_from(grid: TorusGrid, k: int, weights: Sequence[float], vectors: Sequence[np.ndarray]) -> LowRankDensity:
    return LowRankDensity(grid, k, np.asarray(weights), np.stack(vectors))
