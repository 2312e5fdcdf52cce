"""Sub-command bodies: build objects from an ``ExperimentConfig``, run, write files.

Every ``cmd_*`` returns a ``RunReport`` listing the files it wrote and a few
headline numbers; all outputs go under the configured output directory.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines, io, lattice
from .config import ExperimentConfig, InitialConfig, config_hash, require
from .estimates import (
    MollifierConfig,
    collision_integral_scan,
    energy_ratio,
    km_bound_ratio,
    poincare_scaling,
    random_density_ensemble,
    sobolev_constant,
)
from .grid import FieldState, MemoryGuardError, TorusGrid, WaveFunction
from .hierarchy import duhamel_errors, hierarchy_residual
from .marginals import ObservableKernel, low_rank_from, partial_trace, projector, sobolev_trace, trace_distance
from .nbody import NBodyHamiltonian, NBodyStepper, PotentialSpec, energy
from .nls import NLSTrajectory, SplitStepper, nls_energy

log = logging.getLogger("gphier")

# largest one-particle operator dimension M^{2d} for which the k = 2 trace distance is computed
MAX_PAIR_DIM = 2048


@dataclass
class RunReport:
    command: str
    files: list[Path] = field(default_factory=list)
    summary: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    baselines: list[baselines.Baseline] = field(default_factory=list)


# --- shared builders -----------------------------------------------------------------


def initial_field(grid: TorusGrid, init: InitialConfig) -> FieldState:
    """Normalized initial one-particle field."""
    if init.profile == "exp-cos":
        x = grid.mesh()
        v = np.exp(sum(np.cos(xa) + 1j * init.phase * np.sin(xa) for xa in x))
    elif init.profile == "plane-wave":
        v = grid.plane_wave(init.mode)
    elif init.profile == "constant":
        v = np.ones(grid.shape, dtype=complex)
    else:
        raise ValueError(f"unknown initial profile {init.profile!r}")
    return FieldState(grid, v).normalized()


def build_grid(cfg: ExperimentConfig) -> TorusGrid:
    dm = cfg.domain
    return TorusGrid(dm.d, dm.L, dm.M)


def build_potential(cfg: ExperimentConfig) -> PotentialSpec:
    pot = cfg.physics.potential
    return PotentialSpec(pot.kind, pot.amplitude, pot.width)


def coupling(cfg: ExperimentConfig, grid: TorusGrid) -> float:
    """NLS coupling: the configured override or the grid integral of the unscaled potential."""
    if cfg.physics.b0 is not None:
        return float(cfg.physics.b0)
    return build_potential(cfg).b0(grid)


def snapshot_times(cfg: ExperimentConfig) -> list[float]:
    """``n_snapshots`` equally spaced times from 0 to ``t_final`` (empty for 0)."""
    n = cfg.time.n_snapshots
    if n == 0:
        return []
    if n == 1:
        return [cfg.time.t_final]
    return [float(t) for t in np.linspace(0.0, cfg.time.t_final, n)]


def _advance_nls(stepper_cache: dict, phi: FieldState, b0: float, t: float, dt: float) -> FieldState:
    if t == 0:
        return phi
    n = max(1, int(math.ceil(t / dt - 1e-9)))
    step = t / n
    key = round(step, 15)
    if key not in stepper_cache:
        stepper_cache[key] = SplitStepper(phi.grid, b0, step)
    return stepper_cache[key].advance(phi, n)


def _advance_nbody(stepper_cache: dict, psi: WaveFunction, H: NBodyHamiltonian, t: float, dt: float) -> WaveFunction:
    if t == 0:
        return psi
    n = max(1, int(math.ceil(t / dt - 1e-9)))
    step = t / n
    key = round(step, 15)
    if key not in stepper_cache:
        stepper_cache[key] = NBodyStepper(H, step)
    return stepper_cache[key].advance(psi, n)


# --- convergence -------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    t: float
    distance_1: float
    distance_2: float  # nan when not computed
    sobolev_1: float


def convergence_rows(
    grid: TorusGrid,
    N: int,
    beta: float,
    potential: PotentialSpec,
    phi0: FieldState,
    b0: float,
    times: Sequence[float],
    dt: float,
    pair_distance: bool | None = None,
) -> list[ConvergenceRow]:
    """Trace distances between the ``N``-body marginals and NLS projectors at ``times``.

    ``pair_distance=None`` computes the ``k = 2`` distance whenever ``N >= 2``
    and the pair operator dimension is at most ``MAX_PAIR_DIM``.
    """
    H = NBodyHamiltonian(grid, N, beta, potential)
    psi = WaveFunction.product(phi0, N)
    phi = phi0
    if pair_distance is None:
        pair_distance = N >= 2 and grid.M ** (2 * grid.d) <= MAX_PAIR_DIM
    nb_cache: dict = {}
    nls_cache: dict = {}
    now = 0.0
    rows = []
    for t in times:
        psi = _advance_nbody(nb_cache, psi, H, t - now, dt)
        phi = _advance_nls(nls_cache, phi, b0, t - now, dt)
        now = t
        g1 = partial_trace(psi, 1)
        d1 = trace_distance(g1, projector(phi, 1))
        d2 = float("nan")
        if pair_distance:
            d2 = trace_distance(partial_trace(psi, 2), projector(phi, 2))
        rows.append(ConvergenceRow(N, float(t), d1, d2, sobolev_trace(g1)))
    return rows


def cmd_converge(cfg: ExperimentConfig, out: Path, emit_plot_data: bool = False) -> RunReport:
    require(cfg, "converge")
    rep = RunReport("converge")
    grid = build_grid(cfg)
    pot = build_potential(cfg)
    phi0 = initial_field(grid, cfg.physics.initial)
    b0 = coupling(cfg, grid)
    times = snapshot_times(cfg)
    if not times:
        rep.warnings.append("time.n_snapshots = 0: no snapshots requested, nothing computed")
    rows = []
    for N in cfg.physics.N:
        try:
            res = convergence_rows(grid, N, cfg.physics.beta, pot, phi0, b0, times, cfg.time.dt)
        except MemoryGuardError as exc:
            rep.warnings.append(f"N={N} skipped: {exc}")
            continue
        rows.extend(res)
        if res:
            rep.summary[f"distance_N{N}"] = res[-1].distance_1
    header = ["N", "t", "trace_distance_k1", "trace_distance_k2", "sobolev_trace_k1"]
    table = [(r.N, r.t, r.distance_1, r.distance_2, r.sobolev_1) for r in rows]
    _emit(rep, cfg, out / "converge.csv", header, table, emit_plot_data, id_cols=2)
    return rep


# --- single-model runs ---------------------------------------------------------------


def cmd_nls(cfg: ExperimentConfig, out: Path, emit_plot_data: bool = False) -> RunReport:
    require(cfg, "nls")
    rep = RunReport("nls")
    grid = build_grid(cfg)
    b0 = coupling(cfg, grid)
    phi = initial_field(grid, cfg.physics.initial)
    times = snapshot_times(cfg)
    if not times:
        rep.warnings.append("time.n_snapshots = 0: no snapshots requested, nothing computed")
    cache: dict = {}
    now = 0.0
    table = []
    for i, t in enumerate(times):
        phi = _advance_nls(cache, phi, b0, t - now, cfg.time.dt)
        now = t
        phi = FieldState(grid, phi.values, t)
        table.append((t, phi.mass(), nls_energy(phi, b0)))
        rep.files.append(io.write_field(_dir(out) / f"nls_field_{i:04d}.bin", phi))
    if table:
        rep.summary["mass_drift"] = abs(table[-1][1] - table[0][1]) / table[0][1]
    _emit(rep, cfg, out / "nls.csv", ["t", "mass", "energy"], table, emit_plot_data, id_cols=1)
    return rep


def cmd_nbody(cfg: ExperimentConfig, out: Path, emit_plot_data: bool = False) -> RunReport:
    require(cfg, "nbody")
    rep = RunReport("nbody")
    grid = build_grid(cfg)
    pot = build_potential(cfg)
    phi0 = initial_field(grid, cfg.physics.initial)
    times = snapshot_times(cfg)
    if not times:
        rep.warnings.append("time.n_snapshots = 0: no snapshots requested, nothing computed")
    table = []
    for N in cfg.physics.N:
        try:
            H = NBodyHamiltonian(grid, N, cfg.physics.beta, pot)
            psi = WaveFunction.product(phi0, N)
        except MemoryGuardError as exc:
            rep.warnings.append(f"N={N} skipped: {exc}")
            continue
        cache: dict = {}
        now = 0.0
        for t in times:
            psi = _advance_nbody(cache, psi, H, t - now, cfg.time.dt)
            now = t
            table.append((N, t, psi.norm(), energy(H, psi)))
        if times:
            rep.files.append(io.write_wavefunction(_dir(out) / f"nbody_N{N}.bin", psi, now))
            rep.files.append(io.write_density(_dir(out) / f"density_k1_N{N}.bin", partial_trace(psi, 1), now))
    _emit(rep, cfg, out / "nbody.csv", ["N", "t", "norm", "energy"], table, emit_plot_data, id_cols=2)
    return rep


# --- hierarchy ---------------------------------------------------------------------


def cmd_hierarchy(cfg: ExperimentConfig, out: Path, emit_plot_data: bool = False) -> RunReport:
    require(cfg, "hierarchy")
    rep = RunReport("hierarchy")
    hc = cfg.hierarchy
    grid = build_grid(cfg)
    phi0 = initial_field(grid, cfg.physics.initial)
    traj = NLSTrajectory(phi0, hc.b0, hc.integrator_dt)
    table = []
    for k in (1, 2):
        for dt_fd in hc.dt_fd:
            r = hierarchy_residual(traj, k, hc.t, dt_fd, hc.b0)
            a = hierarchy_residual(traj, k, hc.t, dt_fd, hc.b0, include_collision=False)
            table.append((k, hc.t, dt_fd, r, a))
    _emit(rep, cfg, out / "hierarchy_residual.csv", ["k", "t", "dt_fd", "residual", "ablated_residual"],
          table, emit_plot_data, id_cols=3)
    duh = []
    for t in hc.duhamel_t:
        e0, e1, e2 = duhamel_errors(phi0, hc.b0, t, hc.integrator_dt, hc.quad_nodes)
        duh.append((t, e0, e1, e2))
        rep.summary[f"duhamel_gain_t{t}"] = min(e0 / e1, e1 / e2)
    _emit(rep, cfg, out / "duhamel.csv", ["t", "error_order0", "error_order1", "error_order2"],
          duh, emit_plot_data, id_cols=1)
    return rep


# --- lattice -----------------------------------------------------------------------


def scan_digest(rows) -> str:
    """sha256 of the scan table body as written to CSV (header excluded)."""
    h = hashlib.sha256()
    for r in rows:
        h.update((",".join(io._fmt(v) for v in r) + "\n").encode())
    return h.hexdigest()


def doubling_change(coarse: lattice.ScanResult, fine: lattice.ScanResult) -> float:
    """Max relative change of nonzero scan values when the box size ``K`` doubles."""
    a, b = coarse.values, fine.values
    mask = a > 0
    if np.any(b[~mask] != 0):
        return float("inf")
    return float(np.max(np.abs(b[mask] - a[mask]) / a[mask])) if mask.any() else 0.0


def _set_threads(workers: int) -> None:
    import numba

    numba.set_num_threads(max(1, min(workers, numba.config.NUMBA_NUM_THREADS)))


def cmd_lattice(cfg: ExperimentConfig, out: Path, emit_plot_data: bool = False, freeze: bool = False) -> RunReport:
    require(cfg, "lattice")
    rep = RunReport("lattice")
    lc = cfg.lattice
    _set_threads(cfg.workers)
    ps = lattice.p_box(lc.p_max, canonical=lc.canonical)
    tau = (lc.tau_min, lc.tau_max)
    scan = lattice.sup_scan(tau, ps, lc.K, lc.alpha)
    rows = list(scan.rows())
    header = ["tau", "p1", "p2", "K", "alpha", "value", "terms"]
    _emit(rep, cfg, out / "lattice_scan.csv", header, rows, emit_plot_data, id_cols=5)
    t_arg, p_arg = scan.argmax
    rep.summary.update(sup=scan.max, sup_tau=t_arg, sup_p1=p_arg[0], sup_p2=p_arg[1])
    digest = scan_digest(rows)
    tag = f"alpha={lc.alpha:g},K={lc.K},tau={lc.tau_min}..{lc.tau_max},p_inf<={lc.p_max}"
    params = dict(alpha=lc.alpha, K=lc.K, tau_min=lc.tau_min, tau_max=lc.tau_max, p_max=lc.p_max,
                  canonical=lc.canonical)
    rep.baselines += [
        baselines.Baseline(f"lattice.sup_scan.max[{tag}]", scan.max, 1e-9, "rel", params),
        baselines.Baseline(f"lattice.sup_scan.sha256[{tag},canonical={lc.canonical}]", digest, 0.0, "exact", params),
    ]
    if lc.doubling_K is not None:
        fine = lattice.sup_scan(tau, ps, lc.doubling_K, lc.alpha)
        change = doubling_change(scan, fine)
        rep.summary["doubling_change"] = change
        _emit(rep, cfg, out / "lattice_doubling.csv", ["tau", "p1", "p2", "K", "alpha", "value", "terms"],
              list(fine.rows()), emit_plot_data, id_cols=5)
        rep.baselines.append(baselines.Baseline(
            f"lattice.doubling_change[{tag},K2={lc.doubling_K}]", change, 0.01, "max",
            dict(params, K2=lc.doubling_K)))
    growth_rows = []
    for c_max in sorted({10**2, lc.growth_c_max} | {int(c) for c in np.geomspace(10, lc.growth_c_max, 7)}):
        growth_rows.append((c_max, lattice.gauss_growth(c_max, lc.growth_exponent)))
    _emit(rep, cfg, out / "gauss_growth.csv", ["c_max", "max_normalized_count"], growth_rows, emit_plot_data,
          id_cols=1)
    growth = growth_rows[-1][1]
    rep.summary["gauss_growth"] = growth
    rep.baselines.append(baselines.Baseline(
        f"lattice.gauss_growth[c_max={lc.growth_c_max},exponent={lc.growth_exponent:g}]", growth, 1e-9, "max",
        dict(c_max=lc.growth_c_max, exponent=lc.growth_exponent)))
    arc, arc_c = lattice.short_arc_sweep(lc.arc_c_max)
    rep.summary["short_arc_max"] = arc
    _emit(rep, cfg, out / "short_arc.csv", ["c_max", "max_points_in_arc", "c1", "c2"],
          [(lc.arc_c_max, arc, arc_c[0], arc_c[1])], emit_plot_data, id_cols=1)
    rep.baselines.append(baselines.Baseline(
        f"lattice.short_arc_max[c_max={lc.arc_c_max},scale=0.5,exponent=1/3]", float(arc), 0.0, "max",
        dict(c_max=lc.arc_c_max)))
    if freeze:
        baselines.freeze(rep.baselines, command="lattice", config_hash=config_hash(cfg))
    return rep


# --- estimates -----------------------------------------------------------------------


def collision_axes(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    es = cfg.estimates
    n_tau, n_p1, n_p2 = es.collision_grid
    return (np.linspace(-es.collision_tau_max, es.collision_tau_max, n_tau),
            np.linspace(-es.collision_p_max, es.collision_p_max, n_p1),
            np.linspace(0.0, es.collision_p_max, n_p2))


def standard_poincare_state(grid: TorusGrid, init: InitialConfig):
    """``(gamma2, J)``: rank-one ``|phi><phi|^{(x)2}`` and ``J = |chi><chi|`` with ``chi = exp(sin x)``."""
    phi = initial_field(grid, init).values
    gamma2 = low_rank_from(grid, 2, [1.0], [np.multiply.outer(phi, phi)])
    chi = np.exp(sum(np.sin(xa) for xa in grid.mesh()))
    J = ObservableKernel(grid, 1, np.multiply.outer(chi, chi.conj()))
    return gamma2, J


def cmd_estimates(cfg: ExperimentConfig, out: Path, emit_plot_data: bool = False, freeze: bool = False) -> RunReport:
    require(cfg, "estimates")
    rep = RunReport("estimates")
    es = cfg.estimates
    L = cfg.domain.L

    # continuous collision integral
    taus, p1s, p2s = collision_axes(cfg)
    crow = collision_integral_scan(taus, p1s, p2s, es.alpha, p_max=es.collision_p_max)
    _emit(rep, cfg, out / "collision_integral.csv", ["tau", "p1", "p2", "value", "rel_change"], crow,
          emit_plot_data, id_cols=3)
    csup = float(max(r[3] for r in crow))
    rep.summary["collision_sup"] = csup
    ctag = (f"alpha={es.alpha:g},|tau|<={es.collision_tau_max:g},|p|<={es.collision_p_max:g},"
            f"grid={'x'.join(map(str, es.collision_grid))}")
    rep.baselines.append(baselines.Baseline(f"estimates.collision_sup[{ctag}]", csup, 1e-6, "max",
                                            dict(alpha=es.alpha, grid=list(es.collision_grid))))
    if freeze and es.alpha == 1.0:
        origin = baselines.origin_collision_reference()
        rep.baselines.append(origin)

    # Sobolev-weighted collision bound over a random ensemble
    kgrid = TorusGrid(2, L, es.km_M)
    ens = random_density_ensemble(kgrid, es.km_members, es.km_rank, cfg.seed)
    kms = [(i, km_bound_ratio(g, es.km_alpha)) for i, g in enumerate(ens)]
    _emit(rep, cfg, out / "km_ensemble.csv", ["member", "ratio"], kms, emit_plot_data, id_cols=1)
    kmax = max(r[1] for r in kms)
    rep.summary["km_max"] = kmax
    rep.baselines.append(baselines.Baseline(
        f"estimates.km_max[d=2,M={es.km_M},alpha={es.km_alpha:g},members={es.km_members},rank={es.km_rank},"
        f"seed={cfg.seed}]", kmax, 1e-9, "max",
        dict(M=es.km_M, alpha=es.km_alpha, members=es.km_members, rank=es.km_rank, seed=cfg.seed)))

    # energy estimate (needs the physics block for the interaction)
    if cfg.physics is not None:
        egrid = TorusGrid(1, L, es.energy_M)
        H = NBodyHamiltonian(egrid, es.energy_N, cfg.physics.beta, build_potential(cfg))
        erows = [(k, energy_ratio(H, k, es.energy_samples, cfg.seed)) for k in (1, 2)]
        _emit(rep, cfg, out / "energy_ratio.csv", ["k", "min_ratio"], erows, emit_plot_data, id_cols=1)
        rep.summary["energy_min_k2"] = erows[1][1]
        pot = cfg.physics.potential
        rep.baselines.append(baselines.Baseline(
            f"estimates.energy_min_k2[N={es.energy_N},d=1,M={es.energy_M},samples={es.energy_samples},"
            f"beta={cfg.physics.beta:g},V={pot.kind}:{pot.amplitude:g}:{pot.width:g},seed={cfg.seed}]",
            erows[1][1], 0.05, "rel",
            dict(N=es.energy_N, M=es.energy_M, samples=es.energy_samples, beta=cfg.physics.beta,
                 potential=[pot.kind, pot.amplitude, pot.width], seed=cfg.seed)))
    else:
        rep.warnings.append("no physics block: energy estimate skipped")

    # Sobolev-type constant for shrinking potentials of unit integral
    sgrid = TorusGrid(2, L, es.sobolev_M)
    srows = []
    for w in es.sobolev_widths:
        V = PotentialSpec("periodized-gaussian", 1.0 / (2 * np.pi * w * w), w)
        for p_norm in (1.0, 2.0):
            srows.append((w, p_norm, sobolev_constant(V, sgrid, p_norm, seed=cfg.seed)))
    _emit(rep, cfg, out / "sobolev_constant.csv", ["width", "p_norm", "constant"], srows, emit_plot_data,
          id_cols=2)

    # mollifier scaling
    pgrid = TorusGrid(1, L, es.poincare_M)
    init = cfg.physics.initial if cfg.physics is not None else InitialConfig("exp-cos", 0.5)
    gamma2, J = standard_poincare_state(pgrid, init)
    alphas = np.geomspace(4 * pgrid.h, 40 * pgrid.h, es.poincare_points)
    fit = poincare_scaling(gamma2, J, MollifierConfig(), alphas)
    prow = [(float(a), float(e), bool(u)) for a, e, u in zip(fit.alphas, fit.gaps, fit.used)]
    _emit(rep, cfg, out / "poincare.csv", ["alpha_moll", "gap", "used_in_fit"], prow, emit_plot_data, id_cols=1)
    rep.summary["poincare_slope"] = fit.slope

    if freeze:
        baselines.freeze(rep.baselines, command="estimates", config_hash=config_hash(cfg))
    return rep


# --- output helpers --------------------------------------------------------------------


def _dir(out: Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def long_format(header: Sequence[str], rows, id_cols: int) -> tuple[list[str], list[tuple]]:
    """Melt a wide table: the first ``id_cols`` columns identify a row, the rest become (variable, value)."""
    ids = list(header[:id_cols])
    out = []
    for r in rows:
        for name, v in zip(header[id_cols:], r[id_cols:]):
            out.append(tuple(r[:id_cols]) + (name, v))
    return ids + ["variable", "value"], out


def _emit(rep: RunReport, cfg: ExperimentConfig, path: Path, header, rows, emit_plot_data: bool, id_cols: int):
    chash = config_hash(cfg)
    _dir(path.parent)
    rep.files.append(io.write_csv(path, header, rows, chash))
    if emit_plot_data:
        lh, lrows = long_format(header, rows, id_cols)
        rep.files.append(io.write_csv(path.with_name(path.stem + "_long.csv"), lh, lrows, chash))


COMMANDS = {
    "converge": cmd_converge,
    "lattice": cmd_lattice,
    "estimates": cmd_estimates,
    "hierarchy": cmd_hierarchy,
    "nls": cmd_nls,
    "nbody": cmd_nbody,
}
FREEZING = ("lattice", "estimates")
