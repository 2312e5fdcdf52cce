"""Numerical checks of the analytic inequalities behind the derivation.

* ``continuous_collision_integral``: the two delta-constrained integrals over
  ``R^2 x R^2`` that bound the collision term, with the delta resolved exactly.
* ``km_bound_ratio``: Sobolev-weighted collision norm against the
  ``Tr (1 - Lap_1)(1 - Lap_2) gamma`` a-priori quantity.
* ``energy_ratio``: empirical constants in ``<(H + N)^k> >= C^k N^k <prod (1 - Lap_j)>``.
* ``sobolev_constant``: ``|<psi, V psi>| / (||V||_p <psi, (1 - Lap) psi>)``.
* ``poincare_scaling``: decay of the mollified-versus-diagonal collision gap.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln

from .grid import TorusGrid, WaveFunction, fourier_multiplier, inner_product, kinetic_symbol
from .hierarchy import collide, l2_norm
from .marginals import DensityMatrix, LowRankDensity, ObservableKernel, sobolev_trace, symmetrize_vector
from .nbody import NBodyHamiltonian, PotentialSpec, apply_hamiltonian

# --- continuous collision integral -----------------------------------------------


def line_integral_weight(M, alpha: float):
    """``W(M) = int_R (1 + x^2 + M^2)^{-alpha} dx = (1 + M^2)^{1/2 - alpha} sqrt(pi) G(alpha - 1/2) / G(alpha)``."""
    c = math.exp(0.5 * math.log(math.pi) + gammaln(alpha - 0.5) - gammaln(alpha))
    return c * (1.0 + np.asarray(M, dtype=float) ** 2) ** (0.5 - alpha)


@dataclass(frozen=True)
class CollisionIntegral:
    """``I1 + I2`` with its parts, the analytic tail included in each, and a node-doubling error."""

    first: float
    second: float
    tail: float
    rel_change: float

    @property
    def total(self) -> float:
        return self.first + self.second

    @property
    def converged(self) -> bool:
        return self.rel_change <= 1e-3


def _radial_nodes(p_abs: float, tau: float, r_max: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on ``[0, r_max]`` refined near the integrand's features."""
    brk = {0.0, r_max}
    brk.update(np.geomspace(1e-3, r_max, 48).tolist())
    feats = [p_abs, math.sqrt(abs(tau)), math.sqrt(abs(tau) / 2), math.sqrt(abs(tau + p_abs**2))]
    if p_abs > 0:
        # inner edge of the ridge where the second branch's line weight peaks
        feats.append(abs(tau + p_abs**2) / (2 * p_abs))
    for c in feats:
        for off in (-4, -2, -1, -0.5, -0.25, 0, 0.25, 0.5, 1, 2, 4):
            if 0 < c + off < r_max:
                brk.add(c + off)
    edges = np.array(sorted(brk))
    x, w = leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    r = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    wr = (0.5 * (b - a) * w).ravel()
    return r, wr


def _collision_parts(tau: float, p: np.ndarray, alpha: float, order: int, n_theta: int, r_max: float):
    p_abs = float(np.hypot(*p))
    r, wr = _radial_nodes(p_abs, tau, r_max, order)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    wt = 2 * np.pi / n_theta
    e1, e2 = np.cos(theta), np.sin(theta)
    # q = -p + r e, so |p + q| = r and the polar Jacobian r cancels 1/|p + q|
    q1 = -p[0] + r[:, None] * e1[None, :]
    q2 = -p[1] + r[:, None] * e2[None, :]
    qq = q1**2 + q2**2
    damp = (1.0 + qq) ** (-alpha)
    rr = r[:, None]
    m1 = (tau + rr**2 + qq) / (2 * rr)
    m2 = (rr**2 - qq - tau) / (2 * rr)
    first = wt * np.sum(wr[:, None] * damp * line_integral_weight(m1, alpha))
    second = wt * np.sum(wr[:, None] * 0.5 * damp * line_integral_weight(m2, alpha))
    # tails beyond r_max from the large-r asymptotics
    c = float(line_integral_weight(0.0, alpha))
    tail1 = 2 * np.pi * c * r_max ** (2 - 4 * alpha) / (4 * alpha - 2)
    pe = p[0] * e1 + p[1] * e2
    tail2 = 0.5 * wt * np.sum(line_integral_weight(pe, alpha)) * r_max ** (1 - 2 * alpha) / (2 * alpha - 1)
    return first + tail1, second + tail2, tail1 + tail2


def continuous_collision_integral(tau: float, p, alpha: float = 1.0, order: int = 12, n_theta: int | None = None,
                                  r_max: float | None = None) -> CollisionIntegral:
    """Evaluate ``I1(tau, p) + I2(tau, p)`` by polar quadrature around ``q = -p``.

    ``I1 = int dq W(M1) / (|p+q| (1+q^2)^a)`` with ``M1 = (tau + |p+q|^2 + q^2) / (2|p+q|)``
    and ``I2 = int dq W(M2) / (2|p+q| (1+q^2)^a)`` with ``M2 = (|p+q|^2 - q^2 - tau) / (2|p+q|)``,
    where ``W`` is ``line_integral_weight``.  The estimate is repeated with doubled
    radial and angular nodes; the relative change is reported.
    """
    if not 0.5 < alpha <= 1.5:
        raise ValueError("alpha must lie in (1/2, 3/2]")
    p = np.asarray(p, dtype=float)
    p_abs = float(np.hypot(*p))
    if n_theta is None:
        n_theta = int(max(128, 16 * (p_abs + 1)))
    if r_max is None:
        r_max = max(2000.0, 40 * (p_abs + math.sqrt(abs(tau)) + 1))
    f1, s1, tail = _collision_parts(float(tau), p, alpha, order, n_theta, r_max)
    f2, s2, _ = _collision_parts(float(tau), p, alpha, 2 * order, 2 * n_theta, r_max)
    rel = abs((f2 + s2) - (f1 + s1)) / abs(f2 + s2)
    return CollisionIntegral(f2, s2, tail, rel)


def collision_integral_scan(taus, p1s, p2s, alpha: float = 1.0, p_max: float = 50.0, order: int = 8):
    """Rows ``(tau, p1, p2, value, rel_change)`` over the grid, skipping ``|p| > p_max``.

    The integral depends on ``p`` only through ``|p|`` (rotation invariance), so
    each distinct ``(tau, |p|^2)`` is evaluated once, at ``p = (|p|, 0)``.
    """
    cache: dict[tuple[float, float], CollisionIntegral] = {}
    rows = []
    for tau in taus:
        for a in p1s:
            for b in p2s:
                if math.hypot(a, b) > p_max + 1e-12:
                    continue
                key = (float(tau), round(float(a) ** 2 + float(b) ** 2, 9))
                if key not in cache:
                    cache[key] = continuous_collision_integral(float(tau), (math.sqrt(key[1]), 0.0), alpha, order=order)
                res = cache[key]
                rows.append((float(tau), float(a), float(b), res.total, res.rel_change))
    return rows


# --- Sobolev-weighted collision bound ----------------------------------------------


def _bracket_symbol(s: float):
    return lambda *k: (1.0 + sum(ki**2 for ki in k)) ** s


def collide_low_rank(gamma: LowRankDensity) -> np.ndarray:
    """``B_{1,2} gamma`` for an order-2 low-rank density, as an order-1 kernel."""
    if gamma.k != 2:
        raise ValueError("collide_low_rank needs an order-2 density")
    d, M = gamma.grid.d, gamma.grid.M
    n = d
    diag_sub = "".join(chr(97 + i) for i in range(n))
    out = np.zeros((M,) * (2 * d), dtype=complex)
    for lam, v in zip(gamma.weights, gamma.vectors):
        diag = np.einsum(f"{diag_sub}{diag_sub}->{diag_sub}", v)
        swapped = np.conj(np.transpose(v, list(range(d, 2 * d)) + list(range(d))))
        expand_x = diag.reshape(diag.shape + (1,) * d)
        expand_xp = np.conj(diag).reshape((1,) * d + diag.shape)
        out += lam * (expand_x * swapped - v * expand_xp)
    return out


def km_bound_ratio(gamma: DensityMatrix | LowRankDensity, alpha: float) -> float:
    """``||S^(1, alpha) B_{1,2} gamma||_{L^2} / Tr (1 - Lap_1)(1 - Lap_2) gamma``."""
    g = gamma.grid
    if isinstance(gamma, LowRankDensity):
        K = collide_low_rank(gamma)
        denom = gamma.sobolev_trace(1.0)
    else:
        if gamma.k != 2:
            raise ValueError("km_bound_ratio needs an order-2 density")
        K = collide(gamma, 1).kernel
        denom = sobolev_trace(gamma, 2, 1.0)
    if denom == 0:
        raise ValueError("zero denominator: Tr (1-Lap_1)(1-Lap_2) gamma vanishes")
    sym = _bracket_symbol(alpha / 2)
    K = fourier_multiplier(K, g, sym, particles=[0])
    K = fourier_multiplier(K, g, sym, particles=[1])
    return l2_norm(K, g) / denom


def random_density_ensemble(grid: TorusGrid, n_members: int, rank: int, seed: int, decay: float = 0.5):
    """Reproducible ensemble of random positive bosonic order-2 densities.

    Each member is ``sum_j w_j |psi_j><psi_j|`` with ``psi_j`` symmetrized
    complex Gaussian mode coefficients damped by ``exp(-decay |p|^2 / 2)`` per
    particle and ``w`` a normalized positive uniform draw.
    """
    rng = np.random.default_rng(seed)
    shape = (grid.M,) * (2 * grid.d)
    d1 = np.exp(-decay * grid.ksq() / 2)
    damp = np.multiply.outer(d1, d1)
    wvol = grid.h ** (2 * grid.d)
    out = []
    for _ in range(n_members):
        vecs = np.empty((rank,) + shape, dtype=complex)
        for j in range(rank):
            c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * damp
            v = symmetrize_vector(np.fft.ifftn(c), grid, 2)
            vecs[j] = v / np.sqrt(wvol * np.vdot(v, v).real)
        lam = rng.random(rank) + 1e-3
        out.append(LowRankDensity(grid, 2, lam / lam.sum(), vecs))
    return out


def km_ensemble_max(grid: TorusGrid, alpha: float = 0.9, n_members: int = 100, rank: int = 5, seed: int = 0) -> float:
    return max(km_bound_ratio(g, alpha) for g in random_density_ensemble(grid, n_members, rank, seed))


# --- energy estimate ------------------------------------------------------------


def random_symmetric_state(grid: TorusGrid, N: int, rng: np.random.Generator, decay: float) -> WaveFunction:
    """Bosonic state with complex Gaussian mode coefficients damped by ``exp(-decay |p|^2 / 2)``."""
    shape = (grid.M,) * (grid.d * N)
    damp = np.exp(-decay * kinetic_symbol(grid, N) / 2)
    c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * damp
    v = np.fft.ifftn(c)
    acc = np.zeros_like(v)
    for perm in itertools.permutations(range(N)):
        axes = [a for j in perm for a in range(j * grid.d, (j + 1) * grid.d)]
        acc += np.transpose(v, axes)
    return WaveFunction(grid, N, acc)


def _one_minus_lap(psi: WaveFunction, particles) -> WaveFunction:
    a = fourier_multiplier(psi.amplitudes, psi.grid, _bracket_symbol(1.0), particles=particles)
    return psi.with_amplitudes(a)


def energy_ratio_of(H: NBodyHamiltonian, psi: WaveFunction, k: int, interaction: np.ndarray | None = None) -> float:
    """``<psi, (H + N)^k psi> / (N^k <psi, prod_{j <= k} (1 - Lap_j) psi>)``."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    w = H.interaction() if interaction is None else interaction
    hp = psi.with_amplitudes(apply_hamiltonian(H, psi, w) + H.N * psi.amplitudes)
    if k == 1:
        num = inner_product(psi, hp).real
    else:
        num = inner_product(hp, hp).real
    den = inner_product(psi, _one_minus_lap(psi, range(k))).real
    return num / (H.N**k * den)


def energy_ratio(H: NBodyHamiltonian, k: int, samples: int = 200, seed: int = 0,
                 decay_range: tuple[float, float] = (0.02, 2.0)) -> float:
    """Minimum of ``energy_ratio_of`` over ``samples`` random bosonic states.

    Mode damping ``decay`` is drawn log-uniformly from ``decay_range`` per sample
    so the ensemble covers both smooth and rough states.
    """
    rng = np.random.default_rng(seed)
    w = H.interaction()
    lo, hi = np.log(decay_range[0]), np.log(decay_range[1])
    best = np.inf
    for _ in range(samples):
        decay = float(np.exp(rng.uniform(lo, hi)))
        psi = random_symmetric_state(H.grid, H.N, rng, decay)
        best = min(best, energy_ratio_of(H, psi, k, w))
    return float(best)


# --- Sobolev inequality constant ---------------------------------------------------


def lp_norm(values: np.ndarray, grid: TorusGrid, p: float) -> float:
    a = np.abs(values)
    if np.isinf(p):
        return float(a.max())
    return float((grid.h**grid.d * np.sum(a**p)) ** (1 / p))


def _rayleigh(V: np.ndarray, psi: np.ndarray, grid: TorusGrid) -> float:
    wvol = grid.h**grid.d
    num = wvol * np.sum(V * np.abs(psi) ** 2)
    den = wvol * np.vdot(psi, fourier_multiplier(psi, grid, _bracket_symbol(1.0))).real
    return float(abs(num) / den)


def top_generalized_state(V: np.ndarray, grid: TorusGrid, iters: int = 500, tol: float = 1e-12) -> np.ndarray:
    """Maximizer of ``<psi, V psi> / <psi, (1 - Lap) psi>`` for ``V >= 0`` by power iteration.

    Iterates ``A = (1 - Lap)^{-1/2} V (1 - Lap)^{-1/2}`` (positive semidefinite).
    """
    half = _bracket_symbol(-0.5)
    u = np.ones(grid.shape, dtype=complex)
    lam = 0.0
    for _ in range(iters):
        w = fourier_multiplier(V * fourier_multiplier(u, grid, half), grid, half)
        new = float(np.vdot(u, w).real / np.vdot(u, u).real)
        u = w / np.linalg.norm(w)
        if abs(new - lam) <= tol * max(new, 1e-300):
            break
        lam = new
    return fourier_multiplier(u, grid, half)


def sobolev_constant(V: PotentialSpec | np.ndarray, grid: TorusGrid, p_norm: float, samples: int = 64,
                     seed: int = 0) -> float:
    """Max of ``|<psi, V psi>| / (||V||_p <psi, (1 - Lap) psi>)`` over probe states.

    Probes: ``samples`` random damped-mode states, the constant state and the
    power-iteration maximizer for ``|V|``.
    """
    if not p_norm >= 1:
        raise ValueError("p_norm must be >= 1 (the bound needs p > 1; p = 1 is a diagnostic)")
    vals = V.values(grid) if isinstance(V, PotentialSpec) else np.asarray(V, dtype=float)
    vnorm = lp_norm(vals, grid, p_norm)
    if vnorm == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    best = _rayleigh(vals, np.ones(grid.shape, dtype=complex), grid)
    best = max(best, _rayleigh(np.abs(vals), top_generalized_state(np.abs(vals), grid), grid))
    for _ in range(samples):
        decay = float(np.exp(rng.uniform(np.log(0.01), np.log(2.0))))
        c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * np.exp(-decay * grid.ksq() / 2)
        best = max(best, _rayleigh(vals, np.fft.ifftn(c), grid))
    return best / vnorm


# --- Poincare-type mollifier scaling ---------------------------------------------------


@dataclass(frozen=True)
class MollifierConfig:
    """Probability density ``h`` on the torus and its rescaling ``h_a(x) = a^{-d} h(x / a)``.

    Only the Gaussian profile (unit standard deviation) is provided; it is
    periodized over box images, so ``h_a`` is a wrapped Gaussian of width ``a``.
    """

    profile: str = "gaussian"
    alpha_moll: float = 1.0

    def __post_init__(self):
        if self.profile != "gaussian":
            raise ValueError(f"unknown mollifier profile {self.profile!r}")
        if not self.alpha_moll > 0:
            raise ValueError("mollifier scale must be positive")

    def values(self, grid: TorusGrid, scale: float | None = None) -> np.ndarray:
        """``h_a`` on the wrapped difference grid (index 0 is the zero separation)."""
        a = self.alpha_moll if scale is None else scale
        pot = PotentialSpec("periodized-gaussian", (2 * np.pi * a * a) ** (-grid.d / 2), a)
        vals = pot.values(grid)
        return np.roll(vals, shift=[-(grid.M // 2)] * grid.d, axis=tuple(range(grid.d)))

    def with_scale(self, a: float) -> "MollifierConfig":
        return MollifierConfig(self.profile, a)


def _difference_table(grid: TorusGrid, table: np.ndarray) -> np.ndarray:
    """``T[x, y] = table[x - y]`` as an ``(M^d, M^d)`` array."""
    idx = np.indices(grid.shape).reshape(grid.d, -1)
    diff = tuple((idx[a][:, None] - idx[a][None, :]) % grid.M for a in range(grid.d))
    return table[diff]


def _pair_operators(gamma2, h_table: np.ndarray):
    """Order-1 operator matrices of ``int h(x1 - x2) gamma2(x1, x2; x1', x2) dx2`` and the diagonal."""
    g = gamma2.grid
    D = g.M**g.d
    wv = g.h**g.d
    H = _difference_table(g, h_table)  # H[x1, x2]
    if isinstance(gamma2, LowRankDensity):
        A_h = np.zeros((D, D), dtype=complex)
        A_d = np.zeros((D, D), dtype=complex)
        for lam, v in zip(gamma2.weights, gamma2.vectors):
            V = v.reshape(D, D)  # V[x1, x2]
            A_h += lam * wv * (H * V) @ V.conj().T
            A_d += lam * np.diag(V)[:, None] * V.conj().T  # psi(x1, x1) conj psi(x1', x1)
    else:
        K = gamma2.kernel.reshape(D, D, D, D)
        A_h = wv * np.einsum("ab,abcb->ac", H, K)
        A_d = np.einsum("aaca->ac", K)
    return wv * A_h, wv * A_d


def poincare_gap(gamma2, J: ObservableKernel, moll: MollifierConfig) -> float:
    """``|Tr J (h_a(x1 - x2) - delta(x1 - x2)) gamma2|`` with ``delta`` as diagonal evaluation."""
    A_h, A_d = _pair_operators(gamma2, moll.values(gamma2.grid))
    return float(abs(np.trace(J.matrix() @ (A_h - A_d))))


@dataclass(frozen=True)
class ScalingFit:
    alphas: np.ndarray
    gaps: np.ndarray
    slope: float
    intercept: float
    used: np.ndarray = field(repr=False)


GAP_FLOOR = 1e-13


def poincare_scaling(gamma2, J: ObservableKernel, moll: MollifierConfig, alphas) -> ScalingFit:
    """Least-squares slope of ``log E(a)`` against ``log a``; gaps below ``1e-13`` are excluded."""
    alphas = np.asarray(alphas, dtype=float)
    h = gamma2.grid.h
    if np.any(alphas < 4 * h * (1 - 1e-12)):
        raise ValueError(f"mollifier scales must be >= 4 grid spacings ({4 * h:.4g})")
    gaps = np.array([poincare_gap(gamma2, J, moll.with_scale(a)) for a in alphas])
    used = gaps > GAP_FLOOR
    if used.sum() < 2:
        return ScalingFit(alphas, gaps, float("nan"), float("nan"), used)
    slope, intercept = np.polyfit(np.log(alphas[used]), np.log(gaps[used]), 1)
    return ScalingFit(alphas, gaps, float(slope), float(intercept), used)
