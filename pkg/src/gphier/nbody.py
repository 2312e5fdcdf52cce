"""Scaled ``N``-boson dynamics on the discretized torus.

The Hamiltonian is ``sum_j -Lap_j + sum_{i<j} V_N(x_i - x_j)`` with the pair
potential ``V_N(y) = N^{d beta - 1} V(N^beta y)`` periodized over the box.  The
exponent ``d beta`` keeps ``int V_N = b0 / N`` in every dimension (``N^{2 beta}``
in the planar case).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .grid import (
    FieldState,
    TorusGrid,
    WaveFunction,
    check_alloc,
    inner_product,
    kinetic_symbol,
    product_symbol,
)

POTENTIAL_KINDS = ("periodized-gaussian", "cosine-bump", "tabulated")


@dataclass(frozen=True)
class PotentialSpec:
    """Unscaled pair potential ``V >= 0``.

    * ``periodized-gaussian``: ``V0 exp(-|x|^2 / (2 w^2))`` summed over box images.
    * ``cosine-bump``: ``V0 prod_a (1 + cos(pi x_a / w)) / 2`` on ``|x_a| < w``, else 0.
    * ``tabulated``: ``table`` holds ``V`` on the grid points of ``[-L, L)^d``;
      scaled lookups interpolate linearly and vanish outside the table.
    """

    kind: str
    amplitude: float = 0.0
    width: float = 1.0
    table: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {POTENTIAL_KINDS}")
        if self.amplitude < 0:
            raise ValueError("potential amplitude must be >= 0")
        if not self.width > 0:
            raise ValueError("potential width must be > 0")
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated potential needs a table")
            if np.any(np.asarray(self.table) < 0):
                raise ValueError("tabulated potential must be >= 0")

    def _profile(self, y: tuple[np.ndarray, ...]) -> np.ndarray:
        r2 = sum(yi**2 for yi in y)
        if self.kind == "periodized-gaussian":
            return self.amplitude * np.exp(-r2 / (2 * self.width**2))
        out = self.amplitude * np.ones_like(r2)
        for yi in y:
            inside = np.abs(yi) < self.width
            out = out * np.where(inside, 0.5 * (1 + np.cos(np.pi * yi / self.width)), 0.0)
        return out

    def _reach(self) -> float:
        """Distance beyond which the profile is below 1e-16 of its peak."""
        if self.kind == "periodized-gaussian":
            return self.width * math.sqrt(2 * math.log(1e16))
        return self.width

    def scaled_values(self, grid: TorusGrid, scale: float) -> np.ndarray:
        """``V(scale * y)`` on the wrapped difference grid, periodized over images."""
        y = grid.mesh()
        if self.kind == "tabulated":
            return self._tabulated(grid, scale, y)
        reach = self._reach() / scale
        n_img = int(math.ceil(reach / (2 * grid.L)))
        out = np.zeros(grid.shape)
        for shift in itertools.product(range(-n_img, n_img + 1), repeat=grid.d):
            ys = tuple(scale * (yi + 2 * grid.L * s) for yi, s in zip(y, shift))
            out += self._profile(ys)
        return out

    def _tabulated(self, grid: TorusGrid, scale: float, y) -> np.ndarray:
        table = np.asarray(self.table, dtype=float)
        if table.shape != grid.shape:
            raise ValueError(f"table shape {table.shape} != grid shape {grid.shape}")
        if scale == 1.0:
            return table.copy()
        axes = [grid.points] * grid.d
        interp = RegularGridInterpolator(axes, table, bounds_error=False, fill_value=0.0)
        pts = np.stack([scale * yi for yi in y], axis=-1)
        return interp(pts)

    def values(self, grid: TorusGrid) -> np.ndarray:
        return self.scaled_values(grid, 1.0)

    def b0(self, grid: TorusGrid) -> float:
        """Discrete quadrature ``h^d sum V`` of the unscaled potential."""
        return float(grid.h**grid.d * np.sum(self.values(grid)))


def zero_potential() -> PotentialSpec:
    return PotentialSpec("periodized-gaussian", 0.0, 1.0)


@dataclass(frozen=True)
class NBodyHamiltonian:
    grid: TorusGrid
    N: int
    beta: float
    potential: PotentialSpec

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not 0 < self.beta < 0.75:
            raise ValueError(f"beta must lie in (0, 3/4), got {self.beta}")

    @property
    def ndim(self) -> int:
        return self.grid.d * self.N

    def pair_potential(self) -> np.ndarray:
        """``V_N`` on the difference grid (index ``j`` <-> difference ``j h`` mod ``2L``).

        The difference grid is the wrapped set ``[-L, L)^d`` reordered so that
        array index ``0`` is the zero separation.
        """
        g = self.grid
        scale = self.N**self.beta
        vals = self.potential.scaled_values(g, scale) * self.N ** (g.d * self.beta - 1)
        # grid.points starts at -L: roll so that index 0 is y = 0
        return np.roll(vals, shift=[-(g.M // 2)] * g.d, axis=tuple(range(g.d)))

    def scaled_b0(self) -> float:
        """``N h^d sum V_N``; equals ``b0`` when the scaled profile is resolved."""
        return float(self.N * self.grid.h**self.grid.d * np.sum(self.pair_potential()))

    def interaction(self) -> np.ndarray:
        """Diagonal ``sum_{i<j} V_N(x_i - x_j)`` over ``grid^N``."""
        g = self.grid
        check_alloc((g.M,) * self.ndim, itemsize=8, what="interaction diagonal")
        out = np.zeros((g.M,) * self.ndim)
        if self.N < 2 or self.potential.amplitude == 0 and self.potential.kind != "tabulated":
            return out
        vpair = self.pair_potential()
        idx = np.arange(g.M)
        for i, j in itertools.combinations(range(self.N), 2):
            # index arrays broadcasting particle i and j coordinates
            diff = []
            for a in range(g.d):
                ai, aj = i * g.d + a, j * g.d + a
                shp_i = [1] * self.ndim
                shp_i[ai] = g.M
                shp_j = [1] * self.ndim
                shp_j[aj] = g.M
                diff.append((idx.reshape(shp_i) - idx.reshape(shp_j)) % g.M)
            out = out + vpair[tuple(diff)]
        return out

    def kinetic(self) -> np.ndarray:
        return kinetic_symbol(self.grid, self.N)


def _check(H: NBodyHamiltonian, psi: WaveFunction) -> None:
    if psi.grid != H.grid or psi.N != H.N:
        raise ValueError(f"wavefunction (N={psi.N}) does not match Hamiltonian (N={H.N})")


def apply_hamiltonian(H: NBodyHamiltonian, psi: WaveFunction, interaction: np.ndarray | None = None) -> np.ndarray:
    """``H psi`` as an unnormalized amplitude tensor."""
    _check(H, psi)
    a = psi.amplitudes
    kin = np.fft.ifftn(H.kinetic() * np.fft.fftn(a))
    w = H.interaction() if interaction is None else interaction
    return kin + w * a


def energy(H: NBodyHamiltonian, psi: WaveFunction) -> float:
    hpsi = psi.with_amplitudes(apply_hamiltonian(H, psi))
    return inner_product(psi, hpsi).real


class NBodyStepper:
    """Strang splitting ``exp(-i dt/2 T) exp(-i dt W) exp(-i dt/2 T)`` with cached factors."""

    def __init__(self, H: NBodyHamiltonian, dt: float):
        self.H = H
        self.dt = float(dt)
        g = H.grid
        check_alloc((g.M,) * H.ndim, what="propagator")
        self._half = product_symbol(g, H.ndim, lambda k: np.exp(-0.5j * self.dt * k**2))
        self._phase = np.exp(-1j * self.dt * H.interaction())

    def step_array(self, a: np.ndarray) -> np.ndarray:
        a = np.fft.ifftn(self._half * np.fft.fftn(a))
        a = a * self._phase
        return np.fft.ifftn(self._half * np.fft.fftn(a))

    def advance(self, psi: WaveFunction, n_steps: int) -> WaveFunction:
        a = psi.amplitudes
        for _ in range(n_steps):
            a = self.step_array(a)
        return psi.with_amplitudes(a)


def nbody_step(psi: WaveFunction, H: NBodyHamiltonian, dt: float) -> WaveFunction:
    _check(H, psi)
    return NBodyStepper(H, dt).advance(psi, 1)


def evolve(psi: WaveFunction, H: NBodyHamiltonian, t: float, dt: float) -> WaveFunction:
    """``exp(-i H t) psi`` by Strang steps no longer than ``dt``."""
    _check(H, psi)
    if t == 0:
        return psi
    n = max(1, int(np.ceil(abs(t) / dt - 1e-9)))
    return NBodyStepper(H, t / n).advance(psi, n)


def free_product_evolution(phi: FieldState, N: int, t: float) -> WaveFunction:
    """``(exp(i t Lap) phi)^{(x) N}``, the exact non-interacting evolution of a product."""
    c = np.fft.fftn(phi.values) * np.exp(-1j * t * phi.grid.ksq())
    return WaveFunction.product(FieldState(phi.grid, np.fft.ifftn(c)), N)


# --- energy cutoff -----------------------------------------------------------

MAX_DENSE_DIM = 4096


def smooth_cutoff(s: np.ndarray) -> np.ndarray:
    """C-infinity bump: 1 on ``(-inf, 1]``, 0 on ``[2, inf)``.

    Transition ``f(2 - s) / (f(2 - s) + f(s - 1))`` with ``f(u) = exp(-1/u)`` for
    ``u > 0`` and ``f(u) = 0`` otherwise.
    """
    s = np.asarray(s, dtype=float)

    def f(u):
        out = np.zeros_like(u)
        pos = u > 0
        out[pos] = np.exp(-1.0 / u[pos])
        return out

    a, b = f(2.0 - s), f(s - 1.0)
    return a / (a + b)


def dense_matrix(H: NBodyHamiltonian) -> np.ndarray:
    """``H`` as a dense Hermitian matrix in the grid-delta basis."""
    g = H.grid
    dim = g.M ** H.ndim
    if dim > MAX_DENSE_DIM:
        raise ValueError(f"Hilbert dimension {dim} exceeds dense limit {MAX_DENSE_DIM}")
    M = g.M
    F = np.fft.fft(np.eye(M), axis=0)
    lap1 = (np.conj(F).T * g.freqs**2) @ F / M  # -d^2/dx^2 in position basis
    eye = np.eye(M)
    out = np.zeros((dim, dim), dtype=complex)
    for a in range(H.ndim):
        term = np.ones((1, 1))
        for b in range(H.ndim):
            term = np.kron(term, lap1 if a == b else eye)
        out += term
    out += np.diag(H.interaction().ravel())
    return 0.5 * (out + out.conj().T)


def energy_cutoff(psi: WaveFunction, H: NBodyHamiltonian, kappa: float, spectrum=None) -> WaveFunction:
    """``chi(kappa H / N) psi`` normalized, via dense eigendecomposition.

    ``spectrum`` may pass a precomputed ``(eigenvalues, eigenvectors)`` pair.
    """
    _check(H, psi)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    evals, evecs = np.linalg.eigh(dense_matrix(H)) if spectrum is None else spectrum
    coeffs = evecs.conj().T @ psi.amplitudes.ravel()
    weights = smooth_cutoff(kappa * evals / H.N)
    out = evecs @ (weights * coeffs)
    if np.linalg.norm(out) == 0:
        raise ValueError("energy cutoff annihilates the state (no spectral weight below 2N/kappa)")
    return WaveFunction(H.grid, H.N, out.reshape(psi.amplitudes.shape))
