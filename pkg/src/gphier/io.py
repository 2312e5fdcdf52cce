"""CSV tables with a provenance line and little-endian binary dumps.

CSV: first line ``# gphier <version> config=<hash> generated=<UTC timestamp>``,
then a mandatory header row; comma-delimited UTF-8.  Floats are written with
``repr`` so reruns are byte-identical apart from the timestamp.

Binary dumps (all little-endian)::

    magic   4 bytes   b"GPHF" field | b"GPHW" wavefunction | b"GPHD" density kernel
    d       int32
    M       int32
    N or k  int32     (wavefunctions and kernels only)
    L       float64
    t       float64
    data    float64 pairs (re, im), row-major
"""
from __future__ import annotations

import csv
import datetime as _dt
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .grid import FieldState, TorusGrid, WaveFunction
from .marginals import DensityMatrix

MAGIC_FIELD = b"GPHF"
MAGIC_WAVE = b"GPHW"
MAGIC_DENSITY = b"GPHD"


def provenance_line(config_hash: str, timestamp: str | None = None) -> str:
    ts = timestamp or _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"# gphier {__version__} config={config_hash} generated={ts}"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(provenance_line(config_hash) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row {row!r} has {len(row)} fields, header has {len(header)}")
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[str, list[str], list[list[str]]]:
    """``(provenance line, header, rows)`` with all cells as strings."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        rows = list(csv.reader(fh))
    return first, rows[0], rows[1:]


def _pack(magic: bytes, grid: TorusGrid, count: int | None, t: float, data: np.ndarray) -> bytes:
    head = struct.pack("<4sii", magic, grid.d, grid.M)
    if count is not None:
        head += struct.pack("<i", count)
    head += struct.pack("<dd", grid.L, t)
    return head + np.ascontiguousarray(data, dtype="<c16").tobytes()


def _unpack(buf: bytes, magic: bytes, with_count: bool):
    got, d, M = struct.unpack_from("<4sii", buf, 0)
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    off = 12
    count = None
    if with_count:
        (count,) = struct.unpack_from("<i", buf, off)
        off += 4
    L, t = struct.unpack_from("<dd", buf, off)
    off += 16
    data = np.frombuffer(buf, dtype="<c16", offset=off).astype(complex)
    return TorusGrid(d, L, M), count, t, data


def write_field(path: str | Path, phi: FieldState) -> Path:
    path = Path(path)
    path.write_bytes(_pack(MAGIC_FIELD, phi.grid, None, phi.time, phi.values))
    return path


def read_field(path: str | Path) -> FieldState:
    grid, _, t, data = _unpack(Path(path).read_bytes(), MAGIC_FIELD, False)
    return FieldState(grid, data.reshape(grid.shape), t)


def write_wavefunction(path: str | Path, psi: WaveFunction, t: float = 0.0) -> Path:
    path = Path(path)
    path.write_bytes(_pack(MAGIC_WAVE, psi.grid, psi.N, t, psi.amplitudes))
    return path


def read_wavefunction(path: str | Path) -> tuple[WaveFunction, float]:
    grid, N, t, data = _unpack(Path(path).read_bytes(), MAGIC_WAVE, True)
    return WaveFunction(grid, N, data.reshape((grid.M,) * (grid.d * N)), normalize=False), t


def write_density(path: str | Path, gamma: DensityMatrix, t: float = 0.0) -> Path:
    path = Path(path)
    path.write_bytes(_pack(MAGIC_DENSITY, gamma.grid, gamma.k, t, gamma.kernel))
    return path


def read_density(path: str | Path) -> tuple[DensityMatrix, float]:
    grid, k, t, data = _unpack(Path(path).read_bytes(), MAGIC_DENSITY, True)
    return DensityMatrix(grid, k, data), t
