"""Torus grids, discrete Fourier analysis and inner products.

Every other module works on the periodic box ``[-L, L)^d`` sampled at ``M``
points per dimension.  An ``N``-particle tensor is stored dense and row-major
over ``(x_1, ..., x_N)``; particle ``j`` owns the ``d`` consecutive axes
``j*d .. j*d + d - 1``.

Transform convention: the mode coefficient of ``f`` is the unitary DFT scaled
by ``h**(1/2)`` per axis, so that ``h**n * sum |f|**2 == sum |c|**2`` holds
without extra factors (``n`` = number of transformed axes).  Coefficients are
taken relative to ``exp(i k (x + L))``; only moduli and diagonals are ever
compared across conventions.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_MEMORY_CAP = 4 * 2**30
_memory_cap = int(os.environ.get("GPHIER_MEMORY_CAP", DEFAULT_MEMORY_CAP))


class MemoryGuardError(MemoryError):
    """Raised instead of attempting an allocation above the configured cap."""


def set_memory_cap(nbytes: int) -> int:
    """Set the allocation cap in bytes; returns the previous value."""
    global _memory_cap
    old, _memory_cap = _memory_cap, int(nbytes)
    return old


def memory_cap() -> int:
    return _memory_cap


def check_alloc(shape: Sequence[int], itemsize: int = 16, what: str = "array") -> None:
    nbytes = itemsize * math.prod(int(s) for s in shape)
    if nbytes > _memory_cap:
        raise MemoryGuardError(
            f"{what} of shape {tuple(shape)} needs {nbytes / 2**30:.2f} GiB, "
            f"cap is {_memory_cap / 2**30:.2f} GiB"
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.flags.writeable:
        a = a.copy()
        a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on ``[-L, L)^d`` with ``M`` points per dimension."""

    d: int
    L: float
    M: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.M < 4 or self.M % 2:
            raise ValueError(f"M must be even and >= 4, got {self.M}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def volume(self) -> float:
        return (2.0 * self.L) ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @property
    def points(self) -> np.ndarray:
        """1D coordinates ``-L + h j``, ``j = 0..M-1``."""
        return -self.L + self.h * np.arange(self.M)

    @property
    def freqs(self) -> np.ndarray:
        """1D dual frequencies ``(pi/L) j`` in FFT order, ``j`` in ``[-M/2, M/2)``."""
        return 2.0 * np.pi * np.fft.fftfreq(self.M, d=self.h)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.points] * self.d), indexing="ij"))

    def kmesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.freqs] * self.d), indexing="ij"))

    def ksq(self) -> np.ndarray:
        """``|k|^2`` on the one-particle mode grid."""
        return sum(k**2 for k in self.kmesh())

    def kmax_sq(self) -> float:
        return self.d * (np.pi / self.L * (self.M // 2)) ** 2

    def mode_index(self, j: Sequence[int]) -> tuple[int, ...]:
        """FFT array index of the integer mode ``j`` (frequency ``pi j / L``)."""
        return tuple(int(ji) % self.M for ji in j)

    def plane_wave(self, j: Sequence[int], amplitude: complex = 1.0) -> np.ndarray:
        """``amplitude * exp(i k.x)`` with ``k = (pi/L) j`` sampled on the grid."""
        k = np.pi / self.L * np.asarray(j, dtype=float)
        phase = sum(ki * xi for ki, xi in zip(k, self.mesh()))
        return amplitude * np.exp(1j * phase)


def particle_axes(d: int, j: int) -> tuple[int, ...]:
    return tuple(range(j * d, (j + 1) * d))


def to_modes(a: np.ndarray, grid: TorusGrid, axes: Sequence[int] | None = None) -> np.ndarray:
    """Unitary mode coefficients along ``axes`` (default: all axes)."""
    axes = tuple(range(a.ndim)) if axes is None else tuple(axes)
    return np.fft.fftn(a, axes=axes, norm="ortho") * grid.h ** (len(axes) / 2)


def from_modes(c: np.ndarray, grid: TorusGrid, axes: Sequence[int] | None = None) -> np.ndarray:
    axes = tuple(range(c.ndim)) if axes is None else tuple(axes)
    return np.fft.ifftn(c, axes=axes, norm="ortho") * grid.h ** (-len(axes) / 2)


def evaluate_symbol(symbol, grid: TorusGrid) -> np.ndarray:
    """Evaluate a one-particle symbol on the mode grid and reject non-finite values."""
    if callable(symbol):
        values = np.asarray(symbol(*grid.kmesh()))
        values = np.broadcast_to(values, grid.shape)
    else:
        values = np.asarray(symbol)
        if values.shape != grid.shape:
            raise ValueError(f"symbol array shape {values.shape} != mode grid {grid.shape}")
    bad = ~np.isfinite(values)
    if bad.any():
        idx = tuple(int(i[0]) for i in np.nonzero(bad))
        k = tuple(float(grid.freqs[i]) for i in idx)
        raise ValueError(f"symbol is not finite at mode index {idx} (k = {k}): {values[idx]}")
    return values


def fourier_multiplier(
    f: np.ndarray,
    grid: TorusGrid,
    symbol: Callable[..., np.ndarray] | np.ndarray,
    particles: Sequence[int] | None = None,
) -> np.ndarray:
    """Apply ``symbol(k)`` to every listed particle's axes of ``f``.

    ``f`` is an array whose axes group into particles of ``grid.d`` axes each
    (a one-particle field is the case of a single particle).  With several
    particles the applied symbol is the product of the one-particle symbols,
    e.g. ``exp(-i t |k|^2)`` yields ``exp(-i t sum_j |k_j|^2)``.
    """
    f = np.asarray(f)
    d = grid.d
    if f.ndim % d:
        raise ValueError(f"array with {f.ndim} axes is not a tensor of {d}-dimensional particles")
    n = f.ndim // d
    particles = range(n) if particles is None else particles
    sym = evaluate_symbol(symbol, grid)
    axes: list[int] = []
    out = np.fft.fftn(f, axes=[a for j in particles for a in particle_axes(d, j)])
    for j in particles:
        ax = particle_axes(d, j)
        axes.extend(ax)
        shape = [1] * f.ndim
        for a in ax:
            shape[a] = grid.M
        out = out * sym.reshape(shape)
    return np.fft.ifftn(out, axes=axes)


def kinetic_symbol(grid: TorusGrid, n_particles: int) -> np.ndarray:
    """``sum_j |k_j|^2`` broadcast over an ``n_particles`` mode tensor."""
    k2 = grid.freqs**2
    ndim = grid.d * n_particles
    total = np.zeros((grid.M,) * ndim)
    for a in range(ndim):
        shape = [1] * ndim
        shape[a] = grid.M
        total = total + k2.reshape(shape)
    return total


def product_symbol(grid: TorusGrid, ndim: int, factor: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Dense array of ``prod_a factor(k_a)`` over ``ndim`` axes (for separable symbols)."""
    f1 = factor(grid.freqs)
    out = np.ones((1,) * ndim, dtype=np.result_type(f1, float))
    for a in range(ndim):
        shape = [1] * ndim
        shape[a] = grid.M
        out = out * f1.reshape(shape)
    return out


@dataclass(frozen=True)
class FieldState:
    """One-particle complex field on the grid at time ``time``."""

    grid: TorusGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", _frozen(v))

    def norm(self) -> float:
        return float(np.sqrt(self.mass()))

    def mass(self) -> float:
        return float(self.grid.h**self.grid.d * np.sum(np.abs(self.values) ** 2))

    def normalized(self) -> "FieldState":
        return FieldState(self.grid, self.values / self.norm(), self.time)


@dataclass(frozen=True)
class WaveFunction:
    """``N``-particle amplitudes on ``grid^N``; normalized on construction by default."""

    grid: TorusGrid
    N: int
    amplitudes: np.ndarray
    normalize: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        shape = (self.grid.M,) * (self.grid.d * self.N)
        check_alloc(shape, what=f"{self.N}-particle wavefunction")
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != shape:
            a = a.reshape(shape)
        if self.normalize:
            nrm = np.sqrt(self.grid.h ** (self.grid.d * self.N) * np.vdot(a, a).real)
            if nrm == 0:
                raise ValueError("cannot normalize the zero wavefunction")
            a = a / nrm
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def product(cls, phi: FieldState | np.ndarray, N: int, grid: TorusGrid | None = None) -> "WaveFunction":
        """The factorized state ``phi^{(x) N}`` (``phi`` normalized first)."""
        if isinstance(phi, FieldState):
            grid, values = phi.grid, phi.values
        else:
            values = np.asarray(phi, dtype=complex)
        values = values / np.sqrt(grid.h**grid.d * np.sum(np.abs(values) ** 2))
        check_alloc((grid.M,) * (grid.d * N), what=f"{N}-particle product state")
        out = values
        for _ in range(N - 1):
            out = np.multiply.outer(out, values)
        return cls(grid, N, out)

    @classmethod
    def product_of(cls, grid: TorusGrid, factors: Sequence[np.ndarray], normalize: bool = True) -> "WaveFunction":
        out = np.asarray(factors[0], dtype=complex)
        for f in factors[1:]:
            out = np.multiply.outer(out, f)
        return cls(grid, len(factors), out, normalize=normalize)

    @property
    def weight(self) -> float:
        return self.grid.h ** (self.grid.d * self.N)

    def norm(self) -> float:
        return float(np.sqrt(self.weight * np.vdot(self.amplitudes, self.amplitudes).real))

    def with_amplitudes(self, a: np.ndarray, normalize: bool = False) -> "WaveFunction":
        return WaveFunction(self.grid, self.N, a, normalize=normalize)

    def permuted(self, perm: Sequence[int]) -> np.ndarray:
        """Amplitudes with particle coordinates reordered by ``perm``."""
        d = self.grid.d
        axes = [a for j in perm for a in particle_axes(d, j)]
        return np.transpose(self.amplitudes, axes)

    def asymmetry(self, pairs: Sequence[tuple[int, int]] | None = None) -> float:
        """Max pointwise ``|psi - psi o (i j)|`` over the given transpositions."""
        if pairs is None:
            pairs = list(itertools.combinations(range(self.N), 2))
        worst = 0.0
        for i, j in pairs:
            perm = list(range(self.N))
            perm[i], perm[j] = j, i
            worst = max(worst, float(np.max(np.abs(self.amplitudes - self.permuted(perm)))))
        return worst


def inner_product(a: WaveFunction, b: WaveFunction) -> complex:
    """Discrete ``<a, b> = h^{dN} sum conj(a) b``."""
    if a.grid != b.grid or a.N != b.N:
        raise ValueError(f"shape mismatch: ({a.grid}, N={a.N}) vs ({b.grid}, N={b.N})")
    return complex(a.weight * np.vdot(a.amplitudes, b.amplitudes))


MAX_SYMMETRIZE_N = 6


def symmetrize(psi: WaveFunction) -> WaveFunction:
    """Average over all ``N!`` particle permutations, then renormalize."""
    if psi.N > MAX_SYMMETRIZE_N:
        raise ValueError(f"symmetrize needs N <= {MAX_SYMMETRIZE_N}, got N={psi.N}")
    acc = np.zeros_like(psi.amplitudes)
    for perm in itertools.permutations(range(psi.N)):
        acc += psi.permuted(perm)
    return WaveFunction(psi.grid, psi.N, acc / math.factorial(psi.N))
