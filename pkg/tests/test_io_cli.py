"""File formats and the command-line driver."""

import json
from pathlib import Path

import numpy as np
import pytest

from momtopo import cli, io
from momtopo.config import ConfigError, load_config, parse_config
from momtopo.curves import SphericalCurve
from momtopo.mesh import generate_plate, generate_sphere
from momtopo.operators import OperatorSet
from momtopo.qfactor import SweepRow

PLATE_CFG = """
[mesh]
kind = "plate"
nx = 3
ny = 2

[optimization]
ka = 0.8
Sf = 0.35
Rmin = 0.15
I_max = {imax}
snapshot_stride = 5
init = "random"
seed = 4

[output]
dir = "{out}"
"""


def _write_cfg(tmp_path, name="run.toml", imax=12, out="out"):
    path = tmp_path / name
    path.write_text(PLATE_CFG.format(imax=imax, out=out))
    return path


# ---------------------------------------------------------------- formats

@pytest.mark.parametrize("mesh", [generate_plate(1.0, 0.6, 5, 3), generate_sphere(1, 0.7)])
def test_mesh_roundtrip_byte_identical(tmp_path, mesh):
    a, b = tmp_path / "a.ntm", tmp_path / "b.ntm"
    io.write_mesh(a, mesh)
    back = io.read_mesh(a)
    io.write_mesh(b, back)
    assert a.read_bytes() == b.read_bytes()
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    lines = a.read_text().splitlines()
    assert lines[0] == "ntmesh 1"
    assert lines[1] == f"{mesh.num_vertices} {mesh.num_triangles}"


def test_design_roundtrip_byte_identical(tmp_path, rng):
    rho = rng.uniform(0, 1, 37)
    rho[:3] = [0.0, 1.0, 1 / 3]
    a, b = tmp_path / "a.ntd", tmp_path / "b.ntd"
    io.write_design(a, rho)
    back = io.read_design(a)
    io.write_design(b, back)
    assert a.read_bytes() == b.read_bytes()
    assert np.array_equal(back, rho)


def test_design_rejects_out_of_range(tmp_path):
    p = tmp_path / "bad.ntd"
    p.write_text("ntdesign 1\n2\n0.5\n1.5\n")
    with pytest.raises(io.FormatError):
        io.read_design(p)
    p.write_text("ntdesign 1\n3\n0.5\n0.5\n")
    with pytest.raises(io.FormatError):
        io.read_design(p)


def test_mesh_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.ntm"
    p.write_text("mesh\n0 0\n")
    with pytest.raises(io.FormatError):
        io.read_mesh(p)


@pytest.mark.parametrize("kind,param,arms", [("helix", 3.0, 1), ("loxodrome", 0.3, 2)])
def test_polyline_roundtrip(tmp_path, kind, param, arms):
    curve = SphericalCurve(kind, param, 0.5, 41, arms=arms)
    a = tmp_path / "a.csv"
    io.write_polyline(a, curve)
    head, data = io.read_polyline(a)
    assert head["kind"] == kind and head["param"] == param and head["R"] == 0.5
    assert len(data) == 41 * arms
    assert np.allclose(np.linalg.norm(data[:, 1:], axis=1), 0.5, rtol=1e-12)
    back = SphericalCurve(head["kind"], head["param"], head["R"], 41, arms=arms)
    b = tmp_path / "b.csv"
    io.write_polyline(b, back)
    assert a.read_bytes() == b.read_bytes()


def test_sweep_format_roundtrip(tmp_path):
    rows = [SweepRow(0.7, 10.5, 3.25, 10.5),
            SweepRow(0.8, 4.0, 4.0, 4.0),
            SweepRow(0.9, error="singular")]
    text = io.format_sweep(rows)
    a = tmp_path / "s.csv"
    a.write_text(text)
    back = io.read_sweep(a)
    assert [r["ka"] for r in back] == [0.7, 0.8, 0.9]
    assert back[1]["selfres"] == "1" and back[2]["selfres"] == "error"
    assert np.isnan(back[2]["Q"])
    rebuilt = [SweepRow(r["ka"], r["Qe"], r["Qm"], r["Q"], "e" if r["selfres"] == "error" else None)
               for r in back]
    assert io.format_sweep(rebuilt) == text


# ---------------------------------------------------------------- config

def test_unknown_key_rejected_with_location():
    with pytest.raises(ConfigError, match=r"unknown key 'foo' in \[optimization\]"):
        parse_config({"optimization": {"foo": 1}})
    with pytest.raises(ConfigError, match=r"unknown section \[bogus\]"):
        parse_config({"bogus": {}})


def test_sf_above_one_rejected():
    with pytest.raises(ConfigError, match="Sf"):
        parse_config({"optimization": {"Sf": 1.2}})


def test_type_errors_rejected():
    with pytest.raises(ConfigError):
        parse_config({"mesh": {"nx": 2.5}})
    with pytest.raises(ConfigError):
        parse_config({"solver": {"quad_radiation": 0}})


def test_missing_paths_rejected_before_run(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config({"mesh": {"kind": "file", "path": str(tmp_path / "none.ntm")}, "feed": {"edges": [0]}})


def test_shipped_configs_parse():
    root = Path(__file__).resolve().parents[1] / "configs"
    names = sorted(p.name for p in root.glob("*.toml"))
    assert names
    for p in root.glob("*.toml"):
        load_config(p)


# ---------------------------------------------------------------- commands

def test_mesh_command_counts(capsys, tmp_path):
    assert cli.main(["mesh", "plate", "--nx", "40", "--ny", "24"]) == 0
    assert "T=3840 N=5696" in capsys.readouterr().out
    out = tmp_path / "s.ntm"
    assert cli.main(["mesh", "sphere", "--subdiv", "2", "-o", str(out)]) == 0
    assert "T=320 N=480" in capsys.readouterr().out
    assert io.read_mesh(out).num_triangles == 320


def test_mesh_command_errors(capsys):
    with pytest.raises(SystemExit) as err:
        cli.main(["mesh", "plate"])
    assert err.value.code == 2
    assert "usage" in capsys.readouterr().err
    assert cli.main(["mesh", "plate", "--nx", "0", "--ny", "3"]) == 2
    assert "error" in capsys.readouterr().err


def test_optimize_writes_artifacts_and_is_deterministic(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, out="out1")
    assert cli.main(["optimize", str(cfg)]) == 0
    printed = capsys.readouterr().out
    assert "termination:" in printed and "self_resonant:" in printed
    out = tmp_path / "out1"
    for name in ("mesh.ntm", "log.csv", "design.ntd", "design_thr.ntd", "summary.json"):
        assert (out / name).is_file(), name
    snaps = sorted(p.name for p in (out / "snapshots").iterdir())
    assert snaps == ["iter_0001.ntd", "iter_0005.ntd", "iter_0010.ntd"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["termination"] == "iteration-cap" and summary["iterations"] == 12
    log = io.read_log(out / "log.csv")
    assert np.array_equal(log["iter"], np.arange(1, 13))

    cfg2 = _write_cfg(tmp_path, "run2.toml", out="out2")
    assert cli.main(["optimize", str(cfg2)]) == 0
    for name in ("log.csv", "design.ntd", "design_thr.ntd", "summary.json", "mesh.ntm"):
        assert (out / name).read_bytes() == (tmp_path / "out2" / name).read_bytes(), name

    # design files written by the run read back and rewrite identically
    rb = io.read_design(out / "design.ntd")
    io.write_design(tmp_path / "again.ntd", rb)
    assert (tmp_path / "again.ntd").read_bytes() == (out / "design.ntd").read_bytes()


def test_optimize_rejects_bad_config_before_running(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('[optimization]\nSf = 1.5\n[output]\ndir = "never"\n')
    assert cli.main(["optimize", str(p)]) == 2
    assert "Sf" in capsys.readouterr().err
    assert not (tmp_path / "never").exists()


def test_optimize_solver_abort_exits_one_and_keeps_log(tmp_path, monkeypatch, capsys):
    real = cli._operators

    def broken(cfg, problem, ka):
        ops = real(cfg, problem, ka)
        return OperatorSet(np.zeros_like(ops.Z0), ops.dX0_domega, ops.Psi, ops.V, ops.k)

    monkeypatch.setattr(cli, "_operators", broken)
    p = tmp_path / "abort.toml"
    p.write_text('[mesh]\nnx = 3\nny = 2\n[optimization]\nOmega_lo = 1e-12\nOmega_hi = 1e-11\n'
                 '[output]\ndir = "out"\n')
    assert cli.main(["optimize", str(p)]) == 1
    assert "error" in capsys.readouterr().err
    assert (tmp_path / "out" / "log.csv").read_text().startswith("iter,Qe,Qm,Q,beta,max_drho,area_frac")


def _design_file(tmp_path, T, value=None, seed=0):
    rho = np.full(T, value) if value is not None else np.random.default_rng(seed).uniform(0, 1, T)
    path = tmp_path / "d.ntd"
    io.write_design(path, rho)
    return path


def test_analyze_equals_single_point_sweep(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    d = _design_file(tmp_path, 24)
    assert cli.main(["analyze", str(cfg), str(d), "--ka", "0.8"]) == 0
    a = capsys.readouterr().out
    assert cli.main(["sweep", str(cfg), str(d), "--ka", "0.8"]) == 0
    s = capsys.readouterr().out
    assert a == s
    assert a.splitlines()[0] == "ka,Qe,Qm,Q,selfres" and len(a.splitlines()) == 2


def test_sweep_rows_in_order_and_deterministic(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    d = _design_file(tmp_path, 24, value=0.8)
    args = ["sweep", str(cfg), str(d), "--ka", "0.7", "0.8", "0.9", "--thresholded"]
    out1 = tmp_path / "s1.csv"
    out2 = tmp_path / "s2.csv"
    assert cli.main(args + ["-o", str(out1)]) == 0
    assert cli.main(args + ["-o", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert [r["ka"] for r in io.read_sweep(out1)] == [0.7, 0.8, 0.9]
    assert cli.main(["sweep", str(cfg), str(d), "--ka", "0.9", "0.7"]) == 2


def test_sweep_all_rows_failed_exits_one(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    # thresholding this random design leaves the feed edge without metal on one side
    d = _design_file(tmp_path, 24, seed=3)
    assert cli.main(["sweep", str(cfg), str(d), "--ka", "0.7", "0.8", "--thresholded"]) == 1
    rows = capsys.readouterr().out.splitlines()
    assert rows[1:] == ["0.7,nan,nan,nan,error", "0.8,nan,nan,nan,error"]


def test_sweep_usage_errors(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    with pytest.raises(SystemExit) as err:
        cli.main(["sweep", str(cfg), str(_design_file(tmp_path, 24)), "--ka"])
    assert err.value.code == 2
    wrong = _design_file(tmp_path, 10)
    assert cli.main(["sweep", str(cfg), str(wrong), "--ka", "0.8"]) == 2
    assert "24 triangles" in capsys.readouterr().err


def test_gradcheck_command(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert cli.main(["gradcheck", str(cfg), "--random-seed", "1"]) == 0
    first = capsys.readouterr().out
    assert first.startswith("max relative error")
    assert cli.main(["gradcheck", str(cfg), "--random-seed", "1"]) == 0
    assert capsys.readouterr().out == first


def test_gradcheck_guard_refuses_large_mesh(tmp_path, capsys):
    p = tmp_path / "big.toml"
    p.write_text("[mesh]\nnx = 20\nny = 12\n")
    assert cli.main(["gradcheck", str(p)]) == 2
    assert "at most 200" in capsys.readouterr().err


def test_gradcheck_failure_exit_code(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    # a huge step makes the finite differences disagree with the adjoint
    assert cli.main(["gradcheck", str(cfg), "--random-seed", "1", "--h", "0.05"]) == 1
    assert "triangle" in capsys.readouterr().err


def test_curves_command(tmp_path):
    out = tmp_path / "h.csv"
    assert cli.main(["curves", "helix", "--M", "2", "--samples", "21", "-o", str(out)]) == 0
    head, data = io.read_polyline(out)
    assert head["kind"] == "helix" and len(data) == 21
    assert np.allclose(np.linalg.norm(data[:, 1:], axis=1), 1.0, rtol=1e-12)
    assert np.allclose(data[0, 1:], [0, 0, -1], atol=1e-12)
    assert np.allclose(data[-1, 1:], [0, 0, 1], atol=1e-12)
    assert cli.main(["curves", "helix", "--M", "2", "--samples", "1", "-o", str(out)]) == 2
