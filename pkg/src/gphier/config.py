"""Experiment configuration: nested YAML sections mapped onto frozen dataclasses.

Example::

    domain:  {d: 1, L: 3.141592653589793, M: 32}
    physics:
      N: [2, 3, 4]
      beta: 0.4
      potential: {kind: periodized-gaussian, amplitude: 4.0, width: 0.5}
      initial: {profile: exp-cos, phase: 0.5}
      b0: null            # optional override of h^d sum V
    time:    {dt: 0.001, t_final: 0.5, n_snapshots: 6}
    lattice: {...}        # optional blocks, defaults below
    estimates: {...}
    hierarchy: {...}
    seed: 0
    workers: 1
    output:  {dir: out}

Physics blocks have no defaults; unknown keys are rejected with their full
path (``physics.potential.amplitud``).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


@dataclass(frozen=True)
class DomainConfig:
    d: int
    L: float
    M: int


@dataclass(frozen=True)
class PotentialConfig:
    kind: str
    amplitude: float
    width: float


@dataclass(frozen=True)
class InitialConfig:
    """``exp-cos``: ``exp(sum_a cos x_a + i phase sum_a sin x_a)``; ``plane-wave``: mode ``mode``;
    ``constant``: uniform field."""

    profile: str
    phase: float = 0.0
    mode: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class PhysicsConfig:
    N: tuple[int, ...]
    beta: float
    potential: PotentialConfig
    initial: InitialConfig
    b0: Optional[float] = None


@dataclass(frozen=True)
class TimeConfig:
    dt: float
    t_final: float
    n_snapshots: int


@dataclass(frozen=True)
class LatticeConfig:
    tau_min: int = -100
    tau_max: int = 100
    p_max: int = 30
    K: int = 100
    alpha: float = 1.0
    canonical: bool = True
    doubling_K: Optional[int] = 200
    growth_c_max: int = 1000
    growth_exponent: float = 0.15
    arc_c_max: int = 500


@dataclass(frozen=True)
class EstimatesConfig:
    alpha: float = 1.0
    collision_tau_max: float = 100.0
    collision_p_max: float = 50.0
    collision_grid: tuple[int, ...] = (21, 21, 11)
    km_alpha: float = 0.9
    km_M: int = 16
    km_members: int = 100
    km_rank: int = 5
    energy_N: int = 3
    energy_M: int = 16
    energy_samples: int = 200
    poincare_M: int = 256
    poincare_points: int = 8
    sobolev_M: int = 64
    sobolev_widths: tuple[float, ...] = (0.8, 0.4, 0.2, 0.1)


@dataclass(frozen=True)
class HierarchyConfig:
    b0: float = 1.0
    t: float = 0.1
    dt_fd: tuple[float, ...] = (0.01, 0.005, 0.0025)
    integrator_dt: float = 1e-4
    duhamel_t: tuple[float, ...] = (0.05, 0.025)
    quad_nodes: int = 8


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    domain: Optional[DomainConfig] = None
    physics: Optional[PhysicsConfig] = None
    time: Optional[TimeConfig] = None
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    estimates: EstimatesConfig = field(default_factory=EstimatesConfig)
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    seed: int = 0
    workers: int = 1
    output: OutputConfig = field(default_factory=OutputConfig)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=int(seed))

    def with_output(self, out: str) -> "ExperimentConfig":
        return dataclasses.replace(self, output=OutputConfig(str(out)))


# --- parsing ------------------------------------------------------------------------


def _unwrap_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def _coerce(value: Any, tp, path: str):
    tp, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: value must not be null")
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    if origin is tuple:
        elem = typing.get_args(tp)[0]
        if not isinstance(value, (list, tuple)):
            value = [value]
        return tuple(_coerce(v, elem, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported type {tp}")


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            raise ConfigError(f"unknown key '{_join(path, key)}'")
    kwargs = {}
    for name, f in fields.items():
        sub = _join(path, name)
        if name in data:
            kwargs[name] = _coerce(data[name], hints[name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"missing key '{sub}'")
    return cls(**kwargs)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else str(key)


def from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data or {}, "")
    validate(cfg)
    return cfg


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return from_dict(data if data is not None else {})


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def to_dict(cfg) -> dict:
    def conv(v):
        if dataclasses.is_dataclass(v):
            return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        return v

    return conv(cfg)


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def config_hash(cfg: ExperimentConfig) -> str:
    """Digest of everything that affects results; the output directory is excluded."""
    data = to_dict(cfg)
    data.pop("output", None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- validation ------------------------------------------------------------------


POTENTIAL_KINDS = ("periodized-gaussian", "cosine-bump", "tabulated")
INITIAL_PROFILES = ("exp-cos", "plane-wave", "constant")


def _check(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def validate(cfg: ExperimentConfig) -> None:
    """Value checks that do not depend on the command."""
    if cfg.domain is not None:
        dm = cfg.domain
        _check(dm.d in (1, 2), "domain.d", "must be 1 or 2")
        _check(dm.M >= 4 and dm.M % 2 == 0, "domain.M", "must be even and >= 4")
        _check(dm.L > 0, "domain.L", "must be positive")
    if cfg.physics is not None:
        ph = cfg.physics
        _check(len(ph.N) > 0 and all(n >= 1 for n in ph.N), "physics.N", "must list particle counts >= 1")
        _check(0 < ph.beta < 0.75, "physics.beta", "must lie in (0, 3/4)")
        _check(ph.potential.kind in POTENTIAL_KINDS[:2], "physics.potential.kind",
               f"must be one of {POTENTIAL_KINDS[:2]} (tabulated potentials are API-only)")
        _check(ph.potential.amplitude >= 0, "physics.potential.amplitude", "must be >= 0")
        _check(ph.potential.width > 0, "physics.potential.width", "must be positive")
        _check(ph.initial.profile in INITIAL_PROFILES, "physics.initial.profile", f"must be one of {INITIAL_PROFILES}")
        if ph.initial.profile == "plane-wave":
            _check(ph.initial.mode is not None, "physics.initial.mode", "required for plane-wave")
            if cfg.domain is not None:
                _check(len(ph.initial.mode) == cfg.domain.d, "physics.initial.mode", "length must equal domain.d")
    if cfg.time is not None:
        _check(cfg.time.dt > 0, "time.dt", "must be positive")
        _check(cfg.time.t_final >= 0, "time.t_final", "must be >= 0")
        _check(cfg.time.n_snapshots >= 0, "time.n_snapshots", "must be >= 0")
    lt = cfg.lattice
    _check(lt.tau_min <= lt.tau_max, "lattice.tau_max", "must be >= lattice.tau_min")
    _check(lt.K >= 1, "lattice.K", "must be >= 1")
    _check(lt.p_max >= 0, "lattice.p_max", "must be >= 0")
    _check(lt.doubling_K is None or lt.doubling_K > lt.K, "lattice.doubling_K", "must exceed lattice.K")
    es = cfg.estimates
    _check(0.5 < es.alpha <= 1.5, "estimates.alpha", "must lie in (1/2, 3/2]")
    _check(len(es.collision_grid) == 3, "estimates.collision_grid", "needs three sizes (tau, p1, p2)")
    hi = cfg.hierarchy
    _check(len(hi.dt_fd) >= 1 and all(x > 0 for x in hi.dt_fd), "hierarchy.dt_fd", "must be positive")
    _check(hi.quad_nodes >= 4, "hierarchy.quad_nodes", "must be >= 4")
    _check(cfg.workers >= 1, "workers", "must be >= 1")


REQUIRED_BLOCKS = {
    "converge": ("domain", "physics", "time"),
    "nls": ("domain", "physics", "time"),
    "nbody": ("domain", "physics", "time"),
    "hierarchy": ("domain", "physics"),
    "lattice": (),
    "estimates": ("domain",),
}


def require(cfg: ExperimentConfig, command: str) -> None:
    for block in REQUIRED_BLOCKS[command]:
        if getattr(cfg, block) is None:
            raise ConfigError(f"missing key '{block}' (required by '{command}')")
