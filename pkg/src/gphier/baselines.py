"""Frozen empirical baselines: a versioned, human-readable JSON table.

Each entry is keyed by operation plus parameters and stores a value, a
tolerance and how the tolerance applies:

* ``rel``   ``|x - v| <= tol |v|``
* ``max``   ``x <= v + tol |v|`` (the value is an upper bound)
* ``exact`` ``x == v`` (digests, integer counts)

Entries are written only by ``--freeze-baselines`` runs, which also record
the package version, UTC timestamp, producing command and config hash.
"""
from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from . import __version__

FORMAT_VERSION = 1
KINDS = ("rel", "max", "exact")


def default_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "baselines.json"


@dataclass
class Baseline:
    key: str
    value: Any
    tolerance: float
    kind: str
    params: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")

    def accepts(self, x) -> bool:
        if self.kind == "exact":
            return x == self.value
        v = float(self.value)
        x = float(x)
        if not math.isfinite(x):
            return False
        if self.kind == "rel":
            return abs(x - v) <= self.tolerance * abs(v)
        return x <= v + self.tolerance * abs(v)

    def describe(self, x) -> str:
        return f"{self.key}: measured {x!r} vs frozen {self.value!r} ({self.kind}, tol {self.tolerance:g})"


class BaselineMissing(KeyError):
    pass


def load(path: str | Path | None = None) -> dict[str, Baseline]:
    path = Path(path) if path is not None else default_path()
    if not path.exists():
        return {}
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported baseline format {doc.get('format')!r}")
    return {e["key"]: Baseline(**e) for e in doc["entries"]}


def get(key: str, path: str | Path | None = None) -> Baseline:
    table = load(path)
    if key not in table:
        raise BaselineMissing(f"no frozen baseline {key!r}; run the producing command with --freeze-baselines")
    return table[key]


def find(prefix: str, path: str | Path | None = None) -> Baseline:
    """The unique entry whose key starts with ``prefix``."""
    hits = [b for k, b in load(path).items() if k.startswith(prefix)]
    if len(hits) != 1:
        raise BaselineMissing(f"{len(hits)} frozen baselines match {prefix!r}")
    return hits[0]


def freeze(entries: Iterable[Baseline], command: str, config_hash: str, path: str | Path | None = None) -> Path:
    """Merge ``entries`` into the table, replacing equal keys, and stamp generation metadata."""
    path = Path(path) if path is not None else default_path()
    table = load(path)
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    for b in entries:
        b.metadata = dict(b.metadata, generated=stamp, version=__version__, command=command, config=config_hash)
        table[b.key] = b
    doc = {"format": FORMAT_VERSION, "entries": [asdict(table[k]) for k in sorted(table)]}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


# --- reference value for the continuous collision integral ------------------------------


ORIGIN_KEY = "estimates.collision_origin[alpha=1,p=0,tau=0]"


def origin_closed_form() -> float:
    """``I1 + I2`` at ``alpha = 1, p = 0, tau = 0``: ``2 pi^2 + pi^3 / 2``."""
    return 2 * math.pi**2 + math.pi**3 / 2


def origin_independent_quadrature(alpha: float = 1.0) -> float:
    """The same quantity by adaptive scipy quadrature with a numerically integrated line weight.

    At ``p = 0, tau = 0`` the first term has ``M = r`` and the second ``M = 0``,
    so both reduce to radial integrals of ``2 pi r`` times the integrand.
    """
    from scipy.integrate import quad

    def weight(m: float) -> float:
        val, _ = quad(lambda s: (1 + m * m + s * s) ** (-alpha), -math.inf, math.inf, epsabs=1e-13, epsrel=1e-12)
        return val

    first, _ = quad(lambda r: 2 * math.pi * weight(r) / (1 + r * r) ** alpha, 0, math.inf, epsabs=1e-11, epsrel=1e-10)
    w0 = weight(0.0)
    second, _ = quad(lambda r: math.pi * w0 / (1 + r * r) ** alpha, 0, math.inf, epsabs=1e-11, epsrel=1e-10)
    return first + second


def origin_collision_reference() -> Baseline:
    """Closed-form origin value, frozen only after the independent quadrature confirms it to 0.5%."""
    closed = origin_closed_form()
    indep = origin_independent_quadrature(1.0)
    if abs(indep - closed) > 0.005 * closed:
        raise RuntimeError(f"independent quadrature {indep} disagrees with closed form {closed}")
    return Baseline(ORIGIN_KEY, closed, 0.005, "rel", dict(alpha=1.0, p=[0.0, 0.0], tau=0.0),
                    dict(closed_form="2 pi^2 + pi^3/2", independent_quadrature=indep))
