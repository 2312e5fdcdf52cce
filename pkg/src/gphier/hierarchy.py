"""Gross-Pitaevskii hierarchy operators on grid kernels.

Sign convention: the hierarchy reads
``d/dt gamma^(k) = -i sum_j [-Lap_j, gamma^(k)] - i b0 sum_j B_{j,k+1} gamma^(k+1)``
and its factorized solutions are ``|phi_t><phi_t|^{(x) k}`` with ``phi_t``
solving ``i d_t phi = -Lap phi + b0 |phi|^2 phi``.
"""
from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .grid import FieldState, TorusGrid, fourier_multiplier
from .marginals import DensityMatrix, projector
from .nls import NLSTrajectory, free_evolve

K_MAX = 3


@dataclass(frozen=True)
class HierarchyState:
    """Marginals ``gamma^(1..k_max)`` at time ``t`` with coupling ``b0``."""

    marginals: tuple[DensityMatrix, ...]
    b0: float
    t: float = 0.0

    def __post_init__(self):
        ms = tuple(self.marginals)
        if not 1 <= len(ms) <= K_MAX:
            raise ValueError(f"need 1..{K_MAX} marginals, got {len(ms)}")
        for i, g in enumerate(ms, start=1):
            if g.k != i:
                raise ValueError(f"entry {i} has order {g.k}")
        object.__setattr__(self, "marginals", ms)

    @classmethod
    def factorized(cls, phi: FieldState, k_max: int, b0: float) -> "HierarchyState":
        return cls(tuple(projector(phi, k) for k in range(1, k_max + 1)), b0, phi.time)

    @property
    def k_max(self) -> int:
        return len(self.marginals)

    def __getitem__(self, k: int) -> DensityMatrix:
        return self.marginals[k - 1]


def _side_multiplier(gamma: DensityMatrix, sym_x, sym_xp) -> np.ndarray:
    g = gamma.grid
    K = fourier_multiplier(gamma.kernel, g, sym_x, particles=range(gamma.k))
    return fourier_multiplier(K, g, sym_xp, particles=range(gamma.k, 2 * gamma.k))


def free_propagate(gamma: DensityMatrix, t: float) -> DensityMatrix:
    """``U(t) gamma = e^{i t Lap} gamma e^{-i t Lap}`` (mode factor ``e^{-it(|p|^2 - |p'|^2)}``)."""
    if t == 0:
        return gamma
    K = _side_multiplier(
        gamma,
        lambda *k: np.exp(-1j * t * sum(ki**2 for ki in k)),
        lambda *k: np.exp(1j * t * sum(ki**2 for ki in k)),
    )
    return DensityMatrix(gamma.grid, gamma.k, K)


def kinetic_commutator(gamma: DensityMatrix) -> np.ndarray:
    """Kernel of ``[-sum_j Lap_j, gamma]``, i.e. ``sum_j (-Lap_{x_j} + Lap_{x'_j}) gamma``."""
    g, k = gamma.grid, gamma.k
    lap = lambda *kk: sum(ki**2 for ki in kk)  # noqa: E731
    out = np.zeros_like(gamma.kernel)
    for j in range(k):
        out += fourier_multiplier(gamma.kernel, g, lap, particles=[j])
        out -= fourier_multiplier(gamma.kernel, g, lap, particles=[k + j])
    return out


def _collision_subscripts(d: int, k: int, j: int) -> tuple[str, str, str]:
    """einsum strings for the two diagonal evaluations of ``B_{j,k+1}``."""
    letters = iter(string.ascii_letters)
    xs = [[next(letters) for _ in range(d)] for _ in range(k)]
    xps = [[next(letters) for _ in range(d)] for _ in range(k)]
    xj, xpj = xs[j - 1], xps[j - 1]
    out = "".join("".join(p) for p in xs + xps)

    def lhs(extra):
        return "".join("".join(p) for p in xs + [extra] + xps + [extra])

    return lhs(xj) + "->" + out, lhs(xpj) + "->" + out, out


def collide(gamma: DensityMatrix, j: int) -> DensityMatrix:
    """``(B_{j,k+1} gamma)(x; x') = gamma(x, x_j; x', x_j) - gamma(x, x'_j; x', x'_j)``.

    ``gamma`` has order ``k + 1``; the delta collapses exactly on the grid.
    """
    k = gamma.k - 1
    if k < 1 or not 1 <= j <= k:
        raise ValueError(f"collision index j={j} out of range for an order-{gamma.k} kernel")
    first, second, _ = _collision_subscripts(gamma.grid.d, k, j)
    K = np.einsum(first, gamma.kernel) - np.einsum(second, gamma.kernel)
    return DensityMatrix(gamma.grid, k, K)


def collide_all(gamma: DensityMatrix) -> DensityMatrix:
    """``sum_{j <= k} B_{j,k+1} gamma``."""
    k = gamma.k - 1
    out = collide(gamma, 1).kernel
    for j in range(2, k + 1):
        out = out + collide(gamma, j).kernel
    return DensityMatrix(gamma.grid, k, out)


def density_difference(grid: TorusGrid, values: np.ndarray, k: int, j: int) -> np.ndarray:
    """``rho(x_j) - rho(x'_j)`` broadcast over an order-``k`` kernel."""
    d = grid.d
    ndim = 2 * d * k
    rho = np.abs(values) ** 2
    sx = [1] * ndim
    sxp = [1] * ndim
    for a in range(d):
        sx[(j - 1) * d + a] = grid.M
        sxp[(k + j - 1) * d + a] = grid.M
    return rho.reshape(sx) - rho.reshape(sxp)


def collide_factorized(gamma_k: DensityMatrix, phi: FieldState | np.ndarray, j: int | None = None) -> DensityMatrix:
    """``B_{j,k+1}`` applied to ``gamma_k (x) |phi><phi|`` without forming the order ``k+1`` kernel.

    Valid whenever the last particle factorizes off, which includes
    ``|phi><phi|^{(x)(k+1)}``; ``phi`` must be normalized.  ``j=None`` sums over
    ``j = 1..k``.
    """
    g = gamma_k.grid
    v = phi.values if isinstance(phi, FieldState) else np.asarray(phi)
    js = range(1, gamma_k.k + 1) if j is None else [j]
    factor = sum(density_difference(g, v, gamma_k.k, jj) for jj in js)
    return DensityMatrix(g, gamma_k.k, factor * gamma_k.kernel)


def l2_norm(kernel: np.ndarray, grid: TorusGrid) -> float:
    """Discrete ``L^2(grid^k x grid^k)`` norm ``(h^{d n} sum |K|^2)^{1/2}`` with ``n`` = number of axes / d."""
    n = kernel.ndim // grid.d
    return float(np.sqrt(grid.h ** (grid.d * n) * np.sum(np.abs(kernel) ** 2)))


def hierarchy_residual(
    trajectory: Callable[[float], FieldState],
    k: int,
    t: float,
    dt_fd: float,
    b0: float,
    include_collision: bool = True,
) -> float:
    """L^2 norm of the hierarchy defect on ``|phi_s><phi_s|^{(x) k}`` at time ``t``.

    The time derivative is a central difference with half-width ``dt_fd``;
    ``trajectory(s)`` returns the field at time ``s``.  With
    ``include_collision=False`` the coupling term is dropped (ablation).
    """
    if k < 1 or k > K_MAX - 1:
        raise ValueError(f"k must lie in [1, {K_MAX - 1}]")
    plus = projector(trajectory(t + dt_fd), k)
    minus = projector(trajectory(t - dt_fd), k)
    phi = trajectory(t).normalized()
    now = projector(phi, k)
    res = (plus.kernel - minus.kernel) / (2 * dt_fd) + 1j * kinetic_commutator(now)
    if include_collision:
        res = res + 1j * b0 * collide_factorized(now, phi).kernel
    return l2_norm(res, phi.grid)


def _gauss(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def duhamel_term(phi0: FieldState, k: int, m: int, t: float, b0: float, quad_nodes: int = 8) -> DensityMatrix:
    """Order-``m`` Duhamel term for factorized initial data ``|phi0><phi0|^{(x)(k+m)}``.

    ``m = 1``: ``-i b0 int_0^t U(t-s) B U(s) gamma0^(2) ds``.
    ``m = 2``: ``(-i b0)^2 int_0^t int_0^{s1} U(t-s1) B U(s1-s2) B U(s2) gamma0^(3) ds2 ds1``.
    The innermost ``U(s) gamma0`` stays a product of freely evolved fields, so
    the top collision is evaluated in factorized form.
    """
    if k != 1 or m not in (1, 2):
        raise ValueError(f"unsupported Duhamel term (k={k}, m={m}); only k=1, m in (1, 2)")
    if quad_nodes < 4:
        raise ValueError("need at least 4 Gauss-Legendre nodes")
    g = phi0.grid
    phi0 = phi0.normalized()
    out = np.zeros((g.M,) * (2 * g.d), dtype=complex)
    if t == 0 or b0 == 0:
        return DensityMatrix(g, 1, out)
    pref = (-1j * b0) ** m
    s1s, w1s = _gauss(quad_nodes, 0.0, t)
    for s1, w1 in zip(s1s, w1s):
        if m == 1:
            f = free_evolve(phi0, s1)
            inner = collide_factorized(projector(f, 1), f)
        else:
            acc = np.zeros((g.M,) * (4 * g.d), dtype=complex)
            s2s, w2s = _gauss(quad_nodes, 0.0, s1)
            for s2, w2 in zip(s2s, w2s):
                f = free_evolve(phi0, s2)
                top = collide_factorized(projector(f, 2), f)  # B_{1,3} + B_{2,3}
                acc += w2 * free_propagate(top, s1 - s2).kernel
            inner = collide(DensityMatrix(g, 2, acc), 1)
        out += w1 * free_propagate(inner, t - s1).kernel
    return DensityMatrix(g, 1, pref * out)


def duhamel_errors(
    phi0: FieldState, b0: float, t: float, dt: float = 1e-4, quad_nodes: int = 8
) -> tuple[float, float, float]:
    """L^2 truncation errors of the order 0, 1, 2 expansions at time ``t``.

    The reference ``gamma_t^(1)`` comes from an NLS trajectory with step ``dt``.
    """
    g = phi0.grid
    phi0 = phi0.normalized()
    ref = projector(NLSTrajectory(phi0, b0, dt)(t))
    e0 = ref.kernel - free_propagate(projector(phi0), t).kernel
    e1 = e0 - duhamel_term(phi0, 1, 1, t, b0, quad_nodes).kernel
    e2 = e1 - duhamel_term(phi0, 1, 2, t, b0, quad_nodes).kernel
    return l2_norm(e0, g), l2_norm(e1, g), l2_norm(e2, g)
