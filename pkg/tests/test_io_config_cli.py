import hashlib
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_field
from gphier import cli, config, experiments, io
from gphier.config import ConfigError
from gphier.grid import FieldState, TorusGrid, WaveFunction
from gphier.marginals import partial_trace

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = {
    "domain": {"d": 1, "L": 3.141592653589793, "M": 16},
    "physics": {
        "N": [2, 3],
        "beta": 0.4,
        "potential": {"kind": "periodized-gaussian", "amplitude": 4.0, "width": 0.5},
        "initial": {"profile": "exp-cos", "phase": 0.5},
    },
    "time": {"dt": 0.01, "t_final": 0.1, "n_snapshots": 3},
}


def write_config(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def with_changes(base, **blocks):
    import copy

    data = copy.deepcopy(base)
    for block, changes in blocks.items():
        if isinstance(changes, dict) and isinstance(data.get(block), dict):
            data[block].update(changes)
        else:
            data[block] = changes
    return data


# --- configuration ---------------------------------------------------------------------


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = config.load(path)
    assert config.loads(config.dumps(cfg)) == cfg
    assert config.config_hash(config.loads(config.dumps(cfg))) == config.config_hash(cfg)


@given(
    st.integers(1, 2), st.sampled_from([8, 16, 32]), st.floats(0.01, 0.74), st.floats(0.0, 10.0),
    st.floats(0.05, 2.0), st.lists(st.integers(1, 6), min_size=1, max_size=4), st.integers(0, 2**31),
)
def test_config_round_trip_property(d, M, beta, amp, width, Ns, seed):
    data = with_changes(SMALL, domain={"d": d, "M": M},
                        physics={"N": Ns, "beta": beta,
                                 "potential": {"kind": "cosine-bump", "amplitude": amp, "width": width}},
                        seed=seed)
    cfg = config.from_dict(data)
    assert config.loads(config.dumps(cfg)) == cfg


def test_unknown_key_names_full_path():
    data = with_changes(SMALL)
    data["physics"]["potential"]["amplitud"] = 1.0
    with pytest.raises(ConfigError, match=r"unknown key 'physics\.potential\.amplitud'"):
        config.from_dict(data)


def test_missing_key_names_full_path():
    data = with_changes(SMALL)
    del data["physics"]["beta"]
    with pytest.raises(ConfigError, match=r"missing key 'physics\.beta'"):
        config.from_dict(data)


@pytest.mark.parametrize("block,change,where", [
    ("physics", {"beta": 0.75}, "physics.beta"),
    ("physics", {"beta": 0.0}, "physics.beta"),
    ("domain", {"M": 15}, "domain.M"),
    ("domain", {"d": 3}, "domain.d"),
    ("time", {"dt": 0.0}, "time.dt"),
    ("time", {"n_snapshots": -1}, "time.n_snapshots"),
    ("physics", {"N": "three"}, "physics.N[0]"),
    ("physics", {"initial": {"profile": "plane-wave"}}, "physics.initial.mode"),
    ("estimates", {"alpha": 0.5}, "estimates.alpha"),
])
def test_invalid_values_rejected(block, change, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.").replace("[", r"\[")):
        config.from_dict(with_changes(SMALL, **{block: change}))


def test_snapshot_times():
    def times(n):
        return experiments.snapshot_times(config.from_dict(with_changes(SMALL, time={"n_snapshots": n})))

    assert times(0) == []
    assert times(1) == [0.1]
    assert times(3) == pytest.approx([0.0, 0.05, 0.1], abs=1e-15)


# --- command line ----------------------------------------------------------------------


def test_cli_unknown_key_exits_2(tmp_path, capsys):
    data = with_changes(SMALL)
    data["physics"]["potential"]["amplitud"] = 1.0
    assert cli.main(["nls", "--config", str(write_config(tmp_path, data))]) == 2
    assert "physics.potential.amplitud" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["nls"],
    ["bogus", "--config", "x.yaml"],
    ["nls", "--config", "/nonexistent/run.yaml"],
])
def test_cli_usage_errors_exit_2(argv):
    assert cli.main(argv) == 2


def test_cli_missing_block_exits_2(tmp_path, capsys):
    path = write_config(tmp_path, {"seed": 1})
    assert cli.main(["nls", "--config", str(path)]) == 2
    assert "missing key 'domain'" in capsys.readouterr().err


def test_cli_freeze_only_for_baseline_commands(tmp_path):
    path = write_config(tmp_path, SMALL)
    assert cli.main(["nls", "--config", str(path), "--freeze-baselines"]) == 2


def test_cli_compute_failure_exits_1(tmp_path, monkeypatch, capsys):
    def boom(cfg, out, **kw):
        raise FloatingPointError("step diverged")

    monkeypatch.setitem(cli.COMMANDS, "nls", boom)
    assert cli.main(["nls", "--config", str(write_config(tmp_path, SMALL)), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "FloatingPointError" in err and "step diverged" in err


def test_empty_snapshot_list_warns_and_succeeds(tmp_path, capsys):
    path = write_config(tmp_path, with_changes(SMALL, time={"n_snapshots": 0}))
    assert cli.main(["converge", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    assert "no snapshots" in capsys.readouterr().err
    _, header, rows = io.read_csv(tmp_path / "o" / "converge.csv")
    assert header[0] == "N" and rows == []


def test_console_script_runs(tmp_path):
    path = write_config(tmp_path, with_changes(SMALL, physics={"N": [1]}))
    res = subprocess.run([sys.executable, "-m", "gphier.cli", "nls", "--config", str(path),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "mass_drift" in res.stdout


def _body(path):
    return path.read_text(encoding="utf-8").split("\n", 1)[1]


def test_reruns_are_byte_identical_apart_from_provenance(tmp_path):
    path = write_config(tmp_path, SMALL)
    for run in ("a", "b"):
        assert cli.main(["converge", "--config", str(path), "--out", str(tmp_path / run), "--seed", "3"]) == 0
        assert cli.main(["nbody", "--config", str(path), "--out", str(tmp_path / run)]) == 0
    for name in ("converge.csv", "nbody.csv"):
        assert _body(tmp_path / "a" / name) == _body(tmp_path / "b" / name)
    for name in ("nbody_N3.bin", "density_k1_N3.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_provenance_line_records_config_hash(tmp_path):
    path = write_config(tmp_path, SMALL)
    assert cli.main(["nls", "--config", str(path), "--out", str(tmp_path)]) == 0
    first, header, rows = io.read_csv(tmp_path / "nls.csv")
    assert first.startswith("# gphier ") and f"config={config.config_hash(config.load(path))}" in first
    assert header == ["t", "mass", "energy"] and len(rows) == 3


def test_plot_data_is_long_format(tmp_path):
    path = write_config(tmp_path, SMALL)
    assert cli.main(["nbody", "--config", str(path), "--out", str(tmp_path), "--emit-plot-data"]) == 0
    _, wide_header, wide = io.read_csv(tmp_path / "nbody.csv")
    _, header, rows = io.read_csv(tmp_path / "nbody_long.csv")
    assert header == ["N", "t", "variable", "value"]
    assert len(rows) == 2 * len(wide)
    assert {r[2] for r in rows} == {"norm", "energy"}


def test_long_format_melts_rows():
    header, rows = experiments.long_format(["a", "b", "c"], [(1, 2.0, 3.0), (4, 5.0, 6.0)], id_cols=1)
    assert header == ["a", "variable", "value"]
    assert rows == [(1, "b", 2.0), (1, "c", 3.0), (4, "b", 5.0), (4, "c", 6.0)]


def test_zero_interaction_converge_is_exact(tmp_path):
    data = with_changes(SMALL, physics={"potential": {"kind": "periodized-gaussian", "amplitude": 0.0,
                                                      "width": 0.5}},
                        time={"n_snapshots": 5, "t_final": 0.2})
    assert cli.main(["converge", "--config", str(write_config(tmp_path, data)), "--out", str(tmp_path)]) == 0
    _, header, rows = io.read_csv(tmp_path / "converge.csv")
    d1, d2 = header.index("trace_distance_k1"), header.index("trace_distance_k2")
    assert len(rows) == 10
    for r in rows:
        assert float(r[d1]) <= 1e-9 and float(r[d2]) <= 1e-9
        if float(r[1]) == 0.0:
            # exact product data: zero up to roundoff in the partial trace
            assert float(r[d1]) <= 1e-14


# --- binary dumps and CSV ------------------------------------------------------------


def test_field_dump_round_trip_and_layout(tmp_path, rng):
    grid = TorusGrid(2, 2.5, 8)
    phi = FieldState(grid, random_field(grid, rng).values, 0.75)
    path = io.write_field(tmp_path / "f.bin", phi)
    back = io.read_field(path)
    assert np.array_equal(back.values, phi.values) and back.time == 0.75 and back.grid == grid
    raw = path.read_bytes()
    magic, d, M, L, t = struct.unpack_from("<4siidd", raw, 0)
    assert (magic, d, M, L, t) == (b"GPHF", 2, 8, 2.5, 0.75)
    data = np.frombuffer(raw[28:], dtype="<f8")
    assert data[0] == phi.values.flat[0].real and data[1] == phi.values.flat[0].imag
    assert len(raw) == 28 + 16 * 64


def test_wavefunction_and_density_round_trip(tmp_path, rng):
    grid = TorusGrid(1, np.pi, 8)
    psi = WaveFunction(grid, 3, rng.normal(size=(8,) * 3) + 1j * rng.normal(size=(8,) * 3))
    back, t = io.read_wavefunction(io.write_wavefunction(tmp_path / "w.bin", psi, 0.5))
    assert np.array_equal(back.amplitudes, psi.amplitudes) and back.N == 3 and t == 0.5
    gamma = partial_trace(psi, 2)
    gback, _ = io.read_density(io.write_density(tmp_path / "g.bin", gamma))
    assert np.array_equal(gback.kernel, gamma.kernel) and gback.k == 2


def test_dump_rejects_wrong_magic(tmp_path):
    grid = TorusGrid(1, np.pi, 8)
    path = io.write_field(tmp_path / "f.bin", FieldState(grid, np.ones(8, dtype=complex)))
    with pytest.raises(ValueError, match="bad magic"):
        io.read_wavefunction(path)


def test_csv_rejects_ragged_rows(tmp_path):
    with pytest.raises(ValueError, match="fields"):
        io.write_csv(tmp_path / "x.csv", ["a", "b"], [(1,)], "0" * 16)


def test_scan_digest_is_hash_of_written_body(tmp_path):
    from gphier import lattice

    scan = lattice.sup_scan((-3, 3), lattice.p_box(2, canonical=True), 10, 1.0)
    rows = list(scan.rows())
    io.write_csv(tmp_path / "s.csv", ["tau", "p1", "p2", "K", "alpha", "value", "terms"], rows, "0" * 16)
    body = (tmp_path / "s.csv").read_bytes().split(b"\n", 2)[2]
    assert experiments.scan_digest(rows) == hashlib.sha256(body).hexdigest()
