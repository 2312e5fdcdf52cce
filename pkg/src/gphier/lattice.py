"""Exact lattice-point counting on Z^2 and the delta-constrained weighted sum.

The frequency lattice here is Z^2 itself.  A solver grid on ``[-L, L)^2`` has
dual lattice ``(pi/L) Z^2``; its integer mode labels ``j`` are what this module
calls lattice points (``k = pi j / L``), so for ``L = pi`` the two coincide.

All constraint arithmetic is done in Python or 64-bit integers.  Inputs are
bounded by ``|p|_inf, K <= 2**20`` so that every squared norm stays below 2**45.
Only the weights ``<x>^{-2 alpha} = (1 + |x|^2)^{-alpha}`` are floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numba
import numpy as np

INT_BOUND = 2**20

# the bundled TBB is too old for numba; prefer OpenMP, then the builtin pool
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


# --- sums of two squares ---------------------------------------------------------


def r2(n: int) -> int:
    """Number of ``(x, y)`` in Z^2 with ``x^2 + y^2 = n``, by trial-division factorization."""
    n = int(n)
    if n < 0:
        return 0
    if n == 0:
        return 1
    while n % 2 == 0:
        n //= 2
    count = 4
    p = 3
    while p * p <= n:
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            if p % 4 == 3:
                if e % 2:
                    return 0
            else:
                count *= e + 1
        p += 2
    if n > 1:
        if n % 4 == 3:
            return 0
        count *= 2
    return count


def r2_table(n_max: int) -> np.ndarray:
    """``r2(n)`` for ``0 <= n <= n_max`` via a smallest-prime-factor sieve."""
    n_max = int(n_max)
    spf = np.zeros(n_max + 1, dtype=np.int64)
    for p in range(2, int(math.isqrt(n_max)) + 1):
        if spf[p] == 0:
            block = spf[p * p :: p]
            block[block == 0] = p
    return _r2_from_spf(spf)


@numba.njit(cache=True)
def _r2_from_spf(spf):
    n_max = spf.shape[0] - 1
    out = np.zeros(n_max + 1, dtype=np.int64)
    out[0] = 1
    for n in range(1, n_max + 1):
        m = n
        cnt = 4
        while m > 1:
            p = spf[m]
            if p == 0:
                p = m
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            if p == 2:
                continue
            if p % 4 == 3:
                if e % 2 == 1:
                    cnt = 0
                    break
            else:
                cnt *= e + 1
        out[n] = cnt
    return out


def two_square_reps(n: int) -> list[tuple[int, int]]:
    """All ``(x, y)`` with ``x^2 + y^2 = n`` (sorted)."""
    n = int(n)
    if n < 0:
        return []
    out = []
    x = 0
    while x * x <= n:
        y2 = n - x * x
        y = math.isqrt(y2)
        if y * y == y2:
            for sx in {x, -x}:
                for sy in {y, -y}:
                    out.append((sx, sy))
        x += 1
    return sorted(out)


# --- lines -----------------------------------------------------------------------


def egcd(a: int, b: int) -> tuple[int, int, int]:
    """``(g, x, y)`` with ``a x + b y = g = gcd(a, b) >= 0``."""
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        a, x0, y0 = -a, -x0, -y0
    return a, x0, y0


def _line_param(v: tuple[int, int], rhs: int):
    """Particular solution and primitive step of ``l . v = rhs``; ``None`` if unsolvable."""
    v1, v2 = int(v[0]), int(v[1])
    if v1 == 0 and v2 == 0:
        raise ValueError("direction vector v must be nonzero")
    g, x, y = egcd(v1, v2)
    if rhs % g:
        return None
    s = rhs // g
    base = (x * s, y * s)
    step = (-v2 // g, v1 // g)
    return base, step


def _t_range_quadratic(base, step, r2max: float) -> tuple[int, int]:
    """Integer ``t`` with ``|base + t step|^2 <= r2max`` (float bracket then exact trim)."""
    a = step[0] ** 2 + step[1] ** 2
    b = 2 * (base[0] * step[0] + base[1] * step[1])
    c = base[0] ** 2 + base[1] ** 2 - r2max
    disc = b * b - 4 * a * c
    if disc < 0:
        return 1, 0
    sq = math.sqrt(disc)
    lo = math.floor((-b - sq) / (2 * a)) - 1
    hi = math.ceil((-b + sq) / (2 * a)) + 1

    def inside(t):
        return (base[0] + t * step[0]) ** 2 + (base[1] + t * step[1]) ** 2 <= r2max

    while lo <= hi and not inside(lo):
        lo += 1
    while hi >= lo and not inside(hi):
        hi -= 1
    return lo, hi


def _disc_bound(R: float) -> int:
    return int(math.floor(float(R) ** 2 + 1e-9))


def line_points_in_disc(v: tuple[int, int], rhs: int, R: float) -> list[tuple[int, int]]:
    """All ``l`` in Z^2 with ``l . v = rhs`` and ``|l| <= R``, ordered along the line."""
    par = _line_param(v, int(rhs))
    if par is None or R < 0:
        return []
    base, step = par
    # shift base to the point closest to the origin keeps the bracket tight
    a = step[0] ** 2 + step[1] ** 2
    t0 = -round((base[0] * step[0] + base[1] * step[1]) / a)
    base = (base[0] + t0 * step[0], base[1] + t0 * step[1])
    lo, hi = _t_range_quadratic(base, step, _disc_bound(R))
    pts = [(base[0] + t * step[0], base[1] + t * step[1]) for t in range(lo, hi + 1)]
    return sorted(pts)


def line_points_in_box(v: tuple[int, int], rhs: int, K: int) -> list[tuple[int, int]]:
    """All ``l`` with ``l . v = rhs`` and ``|l|_inf <= K``."""
    return [q for q in line_points_in_disc(v, rhs, K * math.sqrt(2) + 1e-9) if max(abs(q[0]), abs(q[1])) <= K]


def line_step(v: tuple[int, int]) -> float:
    """Distance between consecutive lattice points on a line with normal ``v``."""
    g = math.gcd(int(v[0]), int(v[1]))
    return math.hypot(v[0], v[1]) / g


# --- circles ---------------------------------------------------------------------


@dataclass(frozen=True)
class CircleSpec:
    """Circle ``{l : |2 l - c|^2 = |c|^2}`` (center ``c/2``, radius ``|c|/2``) through the origin."""

    c: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "c", (int(self.c[0]), int(self.c[1])))

    @property
    def center(self) -> tuple[float, float]:
        return (self.c[0] / 2, self.c[1] / 2)

    @property
    def norm_sq(self) -> int:
        return self.c[0] ** 2 + self.c[1] ** 2

    @property
    def radius_sq4(self) -> int:
        """``4 R^2 = |c|^2`` (kept integral)."""
        return self.norm_sq

    @property
    def radius(self) -> float:
        return math.sqrt(self.norm_sq) / 2


def _as_circle(c) -> CircleSpec:
    return c if isinstance(c, CircleSpec) else CircleSpec(tuple(c))


def circle_points(c: CircleSpec | tuple[int, int], R: float | None = None) -> list[tuple[int, int]]:
    """All ``l`` in Z^2 with ``|l|^2 - l . c = 0``, optionally within ``|l| <= R``.

    Writes ``u = 2 l - c`` and keeps the representations ``u_1^2 + u_2^2 = |c|^2``
    with ``u = c (mod 2)`` componentwise.
    """
    cs = _as_circle(c)
    c1, c2 = cs.c
    pts = []
    for u1, u2 in two_square_reps(cs.norm_sq):
        if (u1 - c1) % 2 == 0 and (u2 - c2) % 2 == 0:
            pts.append(((u1 + c1) // 2, (u2 + c2) // 2))
    if R is not None:
        rb = _disc_bound(R)
        pts = [q for q in pts if q[0] ** 2 + q[1] ** 2 <= rb]
    return sorted(pts)


def circle_count(c: CircleSpec | tuple[int, int], table: np.ndarray | None = None) -> int:
    """``len(circle_points(c))`` from ``r2`` and the parity class of ``c``."""
    cs = _as_circle(c)
    n = cs.norm_sq
    f = (lambda m: int(table[m])) if table is not None else r2
    e1, e2 = cs.c[0] % 2, cs.c[1] % 2
    if e1 == 0 and e2 == 0:
        return f(n // 4)
    if e1 == 1 and e2 == 1:
        return f(n)
    return f(n) // 2


def circle_counts_all(c_max: int, table: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(|c|^2, count)`` for every ``c`` with ``|c| <= c_max`` (vectorized ``circle_count``)."""
    r = np.arange(-c_max, c_max + 1, dtype=np.int64)
    c1, c2 = np.meshgrid(r, r, indexing="ij")
    n = c1**2 + c2**2
    keep = n <= c_max**2
    c1, c2, n = c1[keep], c2[keep], n[keep]
    if table is None:
        table = r2_table(c_max**2)
    e1, e2 = c1 % 2, c2 % 2
    counts = np.where(
        (e1 == 0) & (e2 == 0), table[n // 4], np.where((e1 == 1) & (e2 == 1), table[n], table[n] // 2)
    )
    return n, counts


def gauss_growth(c_max: int, exponent: float = 0.15, table: np.ndarray | None = None) -> float:
    """``max_{|c| <= c_max} count(c) / (|c|^2 + 1)^exponent``."""
    n, counts = circle_counts_all(c_max, table)
    return float(np.max(counts / (n + 1.0) ** exponent))


def _max_in_window(angles: np.ndarray, width: float) -> int:
    a = np.sort(np.mod(angles, 2 * np.pi))
    m = len(a)
    if m == 0:
        return 0
    ext = np.concatenate([a, a + 2 * np.pi])
    # points j with ext[j] - ext[i] <= width, i ranging over one period
    hi = np.searchsorted(ext, a + width * (1 + 1e-12), side="right")
    return int(min(m, np.max(hi - np.arange(m))))


def arc_window(c: CircleSpec | tuple[int, int], scale: float = 0.5, exponent: float = 1 / 3) -> float:
    """Angular width of an arc of length ``scale * R^exponent`` on the circle of ``c``."""
    R = _as_circle(c).radius
    return min(2 * np.pi, scale * R**exponent / R)


def short_arc_max(c: CircleSpec | tuple[int, int], arc_exponent: float = 1 / 3, scale: float = 0.5) -> int:
    """Largest number of points of ``circle_points(c)`` on any arc of length ``scale * R^arc_exponent``.

    ``R = |c|/2``.  The window slides continuously, so the result is the exact
    maximum over all arc placements (up to angle round-off).
    """
    cs = _as_circle(c)
    if cs.norm_sq == 0:
        raise ValueError("short_arc_max needs c != 0")
    pts = np.array(circle_points(cs), dtype=float)
    if len(pts) <= 2:
        return len(pts)
    rel = 2 * pts - np.array(cs.c, dtype=float)  # u = 2l - c, same angles as l - c/2
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    return _max_in_window(ang, arc_window(cs, scale, arc_exponent))


def short_arc_sweep(c_max: int, arc_exponent: float = 1 / 3, scale: float = 0.5) -> tuple[int, tuple[int, int]]:
    """``max`` of ``short_arc_max`` over all ``0 < |c| <= c_max`` and an argmax.

    The dihedral symmetries of Z^2 preserve both counts and arc lengths, so only
    ``0 <= c_2 <= c_1`` is visited; circles with at most two points are skipped.
    """
    table = r2_table(c_max**2)
    best, arg = 0, (0, 0)
    for c1 in range(1, c_max + 1):
        for c2 in range(0, c1 + 1):
            if c1 * c1 + c2 * c2 > c_max * c_max:
                break
            cnt = circle_count((c1, c2), table)
            if cnt <= 2:
                best = max(best, cnt)
                continue
            if cnt <= best:
                continue
            val = short_arc_max((c1, c2), arc_exponent, scale)
            if val > best:
                best, arg = val, (c1, c2)
    return best, arg


# --- delta-constrained sum ----------------------------------------------------------


@dataclass(frozen=True)
class LatticeSumQuery:
    """Parameters of ``sum_{n, m} <p>^{2a} / (<p-n-m>^{2a} <n>^{2a} <m>^{2a})``.

    The sum runs over ``|n|_inf, |m|_inf <= K`` subject to
    ``tau + |p-n-m|^2 + |n|^2 - |m|^2 = 0``.
    """

    tau: int
    p: tuple[int, int]
    K: int
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "p", (int(self.p[0]), int(self.p[1])))
        if int(self.tau) != self.tau:
            raise ValueError("tau must be an integer (non-integer tau gives an empty sum)")
        object.__setattr__(self, "tau", int(self.tau))
        if self.K < 1:
            raise ValueError("cutoff K must be >= 1")
        if max(abs(self.p[0]), abs(self.p[1]), self.K) > INT_BOUND:
            raise OverflowError(f"|p|_inf and K must be <= {INT_BOUND} for exact 64-bit arithmetic")
        if abs(self.tau) > 2**44:
            raise OverflowError("|tau| exceeds the exact integer range")


def bracket_pow(norm_sq, alpha: float):
    """``<x>^{2 alpha} = (1 + |x|^2)^alpha`` from the exact squared norm."""
    return (1.0 + np.asarray(norm_sq, dtype=float)) ** alpha


@dataclass(frozen=True)
class DeltaSumResult:
    value: float
    terms: int
    support: tuple[tuple[int, int, int, int], ...] | None = None


def _sq(a, b):
    return a * a + b * b


def delta_sum(q: LatticeSumQuery, with_support: bool = False) -> DeltaSumResult:
    """Evaluate the constrained sum by reducing each fixed ``n`` to a line in ``m``.

    For ``n != p`` the constraint is ``m . (p - n) = (|p-n|^2 + |n|^2 + tau) / 2``;
    for ``n = p`` it holds for every ``m`` iff ``tau + |p|^2 = 0``.
    """
    p1, p2 = q.p
    K, a = q.K, q.alpha
    wp = float(bracket_pow(_sq(p1, p2), a))
    total = 0.0
    count = 0
    support = [] if with_support else None
    for n1 in range(-K, K + 1):
        for n2 in range(-K, K + 1):
            u1, u2 = p1 - n1, p2 - n2
            nn = _sq(n1, n2)
            if u1 == 0 and u2 == 0:
                if q.tau + nn == 0:
                    r = np.arange(-K, K + 1)
                    m1, m2 = np.meshgrid(r, r, indexing="ij")
                    total += float(np.sum(bracket_pow(m1**2 + m2**2, a) ** -2))
                    count += (2 * K + 1) ** 2
                    if with_support:
                        support.extend((n1, n2, int(x), int(y)) for x, y in zip(m1.ravel(), m2.ravel()))
                continue
            rhs2 = _sq(u1, u2) + nn + q.tau
            if rhs2 % 2:
                continue
            ms = line_points_in_box((u1, u2), rhs2 // 2, K)
            if not ms:
                continue
            m = np.array(ms, dtype=np.int64)
            rest = (u1 - m[:, 0]) ** 2 + (u2 - m[:, 1]) ** 2
            w = bracket_pow(rest, a) * float(bracket_pow(nn, a)) * bracket_pow(m[:, 0] ** 2 + m[:, 1] ** 2, a)
            total += float(np.sum(wp / w))
            count += len(ms)
            if with_support:
                support.extend((n1, n2, int(x), int(y)) for x, y in ms)
    return DeltaSumResult(total, count, tuple(sorted(support)) if with_support else None)


def delta_sum_bruteforce(q: LatticeSumQuery) -> DeltaSumResult:
    """Independent oracle: test the constraint on every ``(n, m)`` pair.

    Expanding the constraint gives
    ``2 n.m - 2 p.m = -(tau + |p|^2 + 2|n|^2 - 2 p.n)``, so the whole
    ``(n, m)`` table is one integer matrix product (exact in float64 here).
    """
    p = np.array(q.p, dtype=np.int64)
    K, a = q.K, q.alpha
    r = np.arange(-K, K + 1, dtype=np.int64)
    g1, g2 = np.meshgrid(r, r, indexing="ij")
    pts = np.stack([g1.ravel(), g2.ravel()], axis=1)
    nn = np.sum(pts**2, axis=1)
    lhs_n = q.tau + int(p @ p) + 2 * nn - 2 * (pts @ p)
    wp = float(bracket_pow(int(p @ p), a))
    inv_n = 1.0 / bracket_pow(nn, a)
    total = 0.0
    support = []
    chunk = max(1, 2_000_000 // len(pts))
    ptsf = pts.astype(np.float64)
    for start in range(0, len(pts), chunk):
        nb = pts[start : start + chunk]
        lhs = (2.0 * nb.astype(np.float64)) @ ptsf.T - 2.0 * (ptsf @ p.astype(np.float64))[None, :]
        hit_i, hit_j = np.nonzero(lhs + lhs_n[start : start + chunk, None] == 0)
        if len(hit_i) == 0:
            continue
        n_sel = nb[hit_i]
        m_sel = pts[hit_j]
        rest = np.sum((p[None, :] - n_sel - m_sel) ** 2, axis=1)
        # verify each hit in exact integer arithmetic
        check = q.tau + rest + np.sum(n_sel**2, axis=1) - np.sum(m_sel**2, axis=1)
        if np.any(check != 0):
            raise AssertionError("float screen produced a non-solution")
        w = inv_n[start + hit_i] / (bracket_pow(rest, a) * bracket_pow(nn[hit_j], a))
        total += float(np.sum(wp * w))
        support.extend(zip(n_sel[:, 0].tolist(), n_sel[:, 1].tolist(), m_sel[:, 0].tolist(), m_sel[:, 1].tolist()))
    return DeltaSumResult(total, len(support), tuple(sorted(support)))


# --- sup-scan -----------------------------------------------------------------------


@numba.njit(cache=True)
def _scan_one_p(p1, p2, K, tau_lo, tau_hi, inv_w, unit_alpha):
    """Values and term counts for every integer ``tau`` in ``[tau_lo, tau_hi]`` at fixed ``p``.

    For each ``n`` the constraint fixes ``m . u`` (``u = p - n``) within a
    window; the coordinate of ``m`` along the larger ``|u_i|`` is solved for,
    the other is enumerated.  ``inv_w[s] = (1 + s)^{-alpha}``; with ``unit_alpha``
    the two inner weights are formed by a single division instead of lookups.
    """
    nt = tau_hi - tau_lo + 1
    vals = np.zeros(nt)
    cnts = np.zeros(nt, dtype=np.int64)
    pp = p1 * p1 + p2 * p2
    for n1 in range(-K, K + 1):
        for n2 in range(-K, K + 1):
            u1 = p1 - n1
            u2 = p2 - n2
            nn = n1 * n1 + n2 * n2
            wn = inv_w[nn]
            uu = u1 * u1 + u2 * u2
            if uu == 0:
                t = -nn
                if tau_lo <= t <= tau_hi:
                    s = 0.0
                    for m1 in range(-K, K + 1):
                        for m2 in range(-K, K + 1):
                            w = inv_w[m1 * m1 + m2 * m2]
                            s += w * w
                    vals[t - tau_lo] += s * inv_w[pp]  # undone by the final <p> factor
                    cnts[t - tau_lo] += (2 * K + 1) * (2 * K + 1)
                continue
            # tau = 2 m.u - uu - nn must lie in [tau_lo, tau_hi]
            lo = tau_lo + uu + nn  # window for 2 m.u
            hi = tau_hi + uu + nn
            if abs(u1) >= abs(u2):
                a, b, swap = u1, u2, False
            else:
                a, b, swap = u2, u1, True
            # m_a * a + m_b * b = s with 2 s in [lo, hi]
            slo = (lo + 1) // 2
            shi = hi // 2
            reach = K * (abs(u1) + abs(u2))
            if slo > reach or shi < -reach:
                continue
            if a < 0:
                a, b, slo, shi = -a, -b, -shi, -slo
            # track q, r with slo - mb*b = q*a + r (0 <= r < a) as mb increases, same for shi
            qb = b // a
            rb = b - qb * a
            x_lo = slo + K * b
            q_lo = x_lo // a
            r_lo = x_lo - q_lo * a
            x_hi = shi + K * b
            q_hi = x_hi // a
            r_hi = x_hi - q_hi * a
            for mb in range(-K, K + 1):
                ma_lo = q_lo + (1 if r_lo > 0 else 0)
                ma_hi = q_hi
                q_lo -= qb
                r_lo -= rb
                if r_lo < 0:
                    r_lo += a
                    q_lo -= 1
                q_hi -= qb
                r_hi -= rb
                if r_hi < 0:
                    r_hi += a
                    q_hi -= 1
                if ma_lo < -K:
                    ma_lo = -K
                if ma_hi > K:
                    ma_hi = K
                for ma in range(ma_lo, ma_hi + 1):
                    if swap:
                        m1 = mb
                        m2 = ma
                    else:
                        m1 = ma
                        m2 = mb
                    t = 2 * (m1 * u1 + m2 * u2) - uu - nn
                    r1 = u1 - m1
                    r2_ = u2 - m2
                    if unit_alpha:
                        vals[t - tau_lo] += wn / ((1.0 + (r1 * r1 + r2_ * r2_)) * (1.0 + (m1 * m1 + m2 * m2)))
                    else:
                        vals[t - tau_lo] += inv_w[r1 * r1 + r2_ * r2_] * wn * inv_w[m1 * m1 + m2 * m2]
                    cnts[t - tau_lo] += 1
    w_p = 1.0 / inv_w[pp]
    for i in range(nt):
        vals[i] *= w_p
    return vals, cnts


@numba.njit(parallel=True, cache=True)
def _scan_batch(ps, K, tau_lo, tau_hi, inv_w, unit_alpha):
    n = ps.shape[0]
    nt = tau_hi - tau_lo + 1
    vals = np.zeros((n, nt))
    cnts = np.zeros((n, nt), dtype=np.int64)
    for i in numba.prange(n):
        v, c = _scan_one_p(ps[i, 0], ps[i, 1], K, tau_lo, tau_hi, inv_w, unit_alpha)
        vals[i] = v
        cnts[i] = c
    return vals, cnts


def _inv_weights(max_sq: int, alpha: float) -> np.ndarray:
    return (1.0 + np.arange(max_sq + 1, dtype=np.float64)) ** (-alpha)


@dataclass(frozen=True)
class ScanResult:
    taus: np.ndarray  # (n_tau,)
    ps: np.ndarray  # (n_p, 2)
    K: int
    alpha: float
    values: np.ndarray  # (n_p, n_tau)
    terms: np.ndarray  # (n_p, n_tau)

    @property
    def max(self) -> float:
        return float(np.max(self.values))

    @property
    def argmax(self) -> tuple[int, tuple[int, int]]:
        i, j = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return int(self.taus[j]), (int(self.ps[i, 0]), int(self.ps[i, 1]))

    def rows(self) -> Iterable[tuple]:
        for i, (p1, p2) in enumerate(self.ps):
            for j, t in enumerate(self.taus):
                yield int(t), int(p1), int(p2), self.K, self.alpha, float(self.values[i, j]), int(self.terms[i, j])

    def value(self, tau: int, p: tuple[int, int]) -> float:
        i = int(np.nonzero((self.ps[:, 0] == p[0]) & (self.ps[:, 1] == p[1]))[0][0])
        return float(self.values[i, int(tau) - int(self.taus[0])])


def p_box(p_max: int, canonical: bool = False) -> np.ndarray:
    """All ``p`` with ``|p|_inf <= p_max`` or, if ``canonical``, ``0 <= p_2 <= p_1 <= p_max``."""
    if canonical:
        return np.array([(a, b) for a in range(p_max + 1) for b in range(a + 1)], dtype=np.int64)
    r = range(-p_max, p_max + 1)
    return np.array([(a, b) for a in r for b in r], dtype=np.int64)


def sup_scan(tau_range: tuple[int, int], ps: np.ndarray | int, K: int, alpha: float = 1.0) -> ScanResult:
    """``delta_sum`` over every integer ``tau`` in ``tau_range`` (inclusive) and every ``p`` in ``ps``.

    ``ps`` is an ``(n, 2)`` integer array or a bound ``p_max`` for the full box.
    Points ``p`` are processed in parallel threads; each value is accumulated
    in a fixed order, so results do not depend on the thread count.
    """
    tau_lo, tau_hi = int(tau_range[0]), int(tau_range[1])
    if tau_hi < tau_lo:
        raise ValueError("empty tau range")
    ps = p_box(ps) if np.isscalar(ps) else np.asarray(ps, dtype=np.int64).reshape(-1, 2)
    pmax = int(np.max(np.abs(ps))) if len(ps) else 0
    if max(pmax, K) > INT_BOUND:
        raise OverflowError(f"|p|_inf and K must be <= {INT_BOUND}")
    max_sq = 2 * (pmax + 2 * K) ** 2
    inv_w = _inv_weights(max_sq, alpha)
    vals, cnts = _scan_batch(ps, int(K), tau_lo, tau_hi, inv_w, alpha == 1.0)
    return ScanResult(np.arange(tau_lo, tau_hi + 1), ps, int(K), float(alpha), vals, cnts)
