import json
import os

import numpy as np
import pytest

from conftest import twisted_closed_curve
from filamentlab import cli
from filamentlab import dataio as dio
from filamentlab import flows as fl
from filamentlab import frames as fr
from filamentlab import hierarchy as hi
from filamentlab import liealg as la
from filamentlab import verify as ver

F = la.Flavor


def test_curve_csv_roundtrip_bit_identical(tmp_path):
    cur = twisted_closed_curve(64)
    p1 = tmp_path / "c.csv"
    dio.write_curve_csv(str(p1), cur)
    back = dio.read_curve_csv(str(p1))
    assert np.array_equal(back.points, cur.points)
    p2 = tmp_path / "c2.csv"
    dio.write_curve_csv(str(p2), back)
    assert p1.read_bytes() == p2.read_bytes()


def test_potential_csv_roundtrip(tmp_path, rng):
    from conftest import smooth_field

    q = smooth_field(rng, 64)
    u = hi.PotentialField(F.SU2, 2 * np.pi, q, x0=-np.pi)
    p1 = tmp_path / "u.csv"
    dio.write_potential_csv(str(p1), u)
    back = dio.read_potential_csv(str(p1), F.SU2)
    assert np.array_equal(back.q, u.q)
    assert back.x0 == u.x0
    r = smooth_field(rng, 64, real=True)
    u2 = hi.PotentialField(F.SL2R, 2 * np.pi, q.real + 0j, r)
    p2 = tmp_path / "u2.csv"
    dio.write_potential_csv(str(p2), u2)
    back2 = dio.read_potential_csv(str(p2), F.SL2R)
    assert np.array_equal(back2.r, u2.r)


def test_frames_csv_has_twelve_columns(tmp_path):
    cur = twisted_closed_curve(64)
    pf = fr.build_pframe(cur)
    p = tmp_path / "f.csv"
    dio.write_frames_csv(str(p), pf)
    header = p.read_text().splitlines()[0].split(",")
    assert len(header) == 12


def test_obj_export(tmp_path):
    cur = fr.make_circle(32)
    p = tmp_path / "c.obj"
    dio.write_curve_obj(str(p), cur)
    lines = p.read_text().splitlines()
    assert sum(1 for ln in lines if ln.startswith("v ")) == 32
    poly = [ln for ln in lines if ln.startswith("l ")][0].split()
    assert poly[-1] == "1"  # closed curve wraps


def test_trajectory_export_import(tmp_path):
    u0 = hi.PotentialField(F.SU2, 2 * np.pi, 0.3 * np.ones(64, complex))
    traj = fl.evolve_potential(u0, 2, 0.01, 1e-3, store_every=5)
    index = dio.export_trajectory(str(tmp_path), traj)
    assert index["kind"] == "potential"
    slices, dt, meta = dio.read_trajectory(str(tmp_path))
    assert len(slices) == len(traj.slices)
    assert np.array_equal(slices[-1].q, traj.slices[-1].q)
    assert dt == traj.dt


def test_unreadable_input_error():
    with pytest.raises(dio.DataIOError):
        dio.read_curve_csv("/nonexistent/path.csv")


def _write_cfg(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def test_cli_soliton_zero_and_one(tmp_path):
    out0 = str(tmp_path / "k0")
    cfg0 = _write_cfg(tmp_path, "k0.json", {
        "flavor": "su2",
        "grid": {"n": 128, "L": 20.0, "x0": -10.0},
        "time": {"T": 0.0},
        "poles": [],
    })
    assert cli.main(["soliton", "--config", cfg0, "--out", out0]) == 0
    pot = np.genfromtxt(os.path.join(out0, "potential_0000.csv"),
                        delimiter=",", skip_header=1)
    assert np.max(np.abs(pot[:, 1:3])) == 0.0
    curve = dio.read_curve_csv(os.path.join(out0, "curve_0000.csv"), closed=False)
    assert np.max(np.abs(curve.points[:, 1:])) < 1e-12  # straight line

    out1 = str(tmp_path / "k1")
    cfg1 = _write_cfg(tmp_path, "k1.json", {
        "flavor": "su2",
        "grid": {"n": 512, "L": 24.0, "x0": -12.0},
        "time": {"T": 0.0},
        "poles": [{"alpha": [0.0, 1.0], "seed": [1.0, 0.0, 1.0, 0.0]}],
    })
    assert cli.main(["soliton", "--config", cfg1, "--out", out1, "--strict"]) == 0
    pot = np.genfromtxt(os.path.join(out1, "potential_0000.csv"),
                        delimiter=",", skip_header=1)
    mod = np.abs(pot[:, 1] + 1j * pot[:, 2])
    assert abs(mod.max() - 2.0) < 1e-6


def test_cli_permutability_route_manifests_match(tmp_path):
    body = {
        "flavor": "su2",
        "grid": {"n": 256, "L": 24.0, "x0": -12.0},
        "time": {"T": 0.002, "dt": 0.001},
        "poles": [
            {"alpha": [0.0, 1.0], "seed": [1.0, 0.0, 1.0, 0.0]},
            {"alpha": [0.4, 0.8], "seed": [1.0, 0.0, -0.5, 0.3]},
        ],
    }
    outs = {}
    for route in ("sequential", "permutability"):
        cfg = dict(body, route=route)
        out = str(tmp_path / route)
        path = _write_cfg(tmp_path, f"{route}.json", cfg)
        assert cli.main(["soliton", "--config", path, "--out", out]) == 0
        with open(os.path.join(out, "manifest.json")) as f:
            outs[route] = json.load(f)
    a, b = outs["sequential"], outs["permutability"]
    assert a.pop("route") == "sequential"
    assert b.pop("route") == "permutability"
    assert a == b


def test_cli_schema_rejection_and_missing_input(tmp_path):
    bad = _write_cfg(tmp_path, "bad.json", {"grid": {"n": 64, "L": 1.0}, "nope": 1})
    assert cli.main(["soliton", "--config", bad, "--out", str(tmp_path / "x")]) == 2
    cfg = _write_cfg(tmp_path, "ev.json", {
        "flavor": "su2",
        "time": {"T": 0.01},
        "flow": "vfe",
        "input": str(tmp_path / "missing.csv"),
    })
    assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path / "y")]) == 4


def test_cli_evolve_circle_monitors(tmp_path):
    circ = fr.make_circle(128)
    inp = str(tmp_path / "circle.csv")
    dio.write_curve_csv(inp, circ)
    cfg = _write_cfg(tmp_path, "run.json", {
        "flavor": "su2",
        "time": {"T": 0.05, "store_every": 10},
        "flow": "vfe",
        "input": inp,
        "closed": True,
    })
    out = str(tmp_path / "run")
    assert cli.main(["evolve", "--config", cfg, "--out", out, "--strict"]) == 0
    mon = np.genfromtxt(os.path.join(out, "monitors.csv"), delimiter=",",
                        skip_header=1)
    with open(os.path.join(out, "monitors.csv")) as f:
        names = f.readline().strip().split(",")
    h1 = mon[:, names.index("H1")]
    assert np.max(np.abs(h1 - h1[0])) / abs(h1[0]) < 1e-6


def test_cli_evolve_line_is_stationary(tmp_path):
    line = fr.make_line(64, 10.0)
    inp = str(tmp_path / "line.csv")
    dio.write_curve_csv(inp, line)
    cfg = _write_cfg(tmp_path, "line.json", {
        "time": {"T": 0.01, "store_every": 5},
        "flow": "vfe",
        "input": inp,
        "closed": False,
    })
    out = str(tmp_path / "lineout")
    assert cli.main(["evolve", "--config", cfg, "--out", out]) == 0
    slices, _, _ = dio.read_trajectory(out)
    assert la.max_abs(slices[-1].points - line.points) < 1e-10


def test_cli_hasimoto_roundtrip_helix(tmp_path):
    hx = fr.make_helix(512, 1.0, -0.5, 8 * np.pi)
    inp = str(tmp_path / "helix.csv")
    dio.write_curve_csv(inp, hx)
    cfg = _write_cfg(tmp_path, "h.json", {
        "direction": "roundtrip",
        "input": inp,
        "closed": False,
    })
    out = str(tmp_path / "h")
    assert cli.main(["hasimoto", "--config", cfg, "--out", out, "--strict"]) == 0
    with open(os.path.join(out, "manifest.json")) as f:
        rep = json.load(f)
    assert rep["aligned_rms"] < 1e-4
    pot = np.genfromtxt(os.path.join(out, "potential.csv"), delimiter=",",
                        skip_header=1)
    mod = np.abs(pot[:, 1] + 1j * pot[:, 2])
    assert np.max(np.abs(mod - 0.5)) < 1e-3


def test_cli_hasimoto_line_zero_potential(tmp_path):
    line = fr.make_line(64, 10.0)
    inp = str(tmp_path / "line.csv")
    dio.write_curve_csv(inp, line)
    cfg = _write_cfg(tmp_path, "l.json", {"direction": "forward", "input": inp,
                                          "closed": False})
    out = str(tmp_path / "l")
    assert cli.main(["hasimoto", "--config", cfg, "--out", out]) == 0
    pot = np.genfromtxt(os.path.join(out, "potential.csv"), delimiter=",",
                        skip_header=1)
    assert np.max(np.abs(pot[:, 1:3])) == 0.0


def test_cli_hasimoto_closed_reports_holonomy(tmp_path):
    cur = twisted_closed_curve(256)
    inp = str(tmp_path / "closed.csv")
    dio.write_curve_csv(inp, cur)
    cfg = _write_cfg(tmp_path, "c.json", {"direction": "forward", "input": inp,
                                          "closed": True})
    out = str(tmp_path / "c")
    assert cli.main(["hasimoto", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "manifest.json")) as f:
        rep = json.load(f)
    assert abs(rep["holonomy_angle"]) > 1e-3
    assert abs(rep["c0"] + rep["holonomy_angle"] / cur.L) < 1e-12


def test_cli_determinism(tmp_path):
    cfg = _write_cfg(tmp_path, "d.json", {
        "flavor": "su2",
        "grid": {"n": 128, "L": 20.0, "x0": -10.0},
        "time": {"T": 0.001, "dt": 0.001},
        "poles": [{"alpha": [0.0, 1.0], "seed": [1.0, 0.0, 1.0, 0.0]}],
        "seed": 7,
    })
    outs = []
    for tag in ("r1", "r2"):
        out = str(tmp_path / tag)
        assert cli.main(["soliton", "--config", cfg, "--out", out]) == 0
        blob = b"".join(
            (tmp_path / tag / name).read_bytes()
            for name in sorted(os.listdir(out))
        )
        outs.append(blob)
    assert outs[0] == outs[1]


def test_verify_mutation_hook_fails():
    r = ver.suite_permutability(sign_flip=True)
    assert not r["passed"]
    assert max(c["residual"] for c in r["checks"].values()) > 0.1


def test_cli_verify_selected_suite(tmp_path):
    out = str(tmp_path / "v")
    assert cli.main(["verify", "--out", out, "--suite", "permutability"]) == 0
    with open(os.path.join(out, "verify_report.json")) as f:
        rep = json.load(f)
    assert rep["passed"]
    assert list(rep["report"].keys()) == ["permutability"]


def test_cli_hasimoto_closed_roundtrip(tmp_path):
    # closed curves reconstruct through the twisted frame at half the
    # twist rate (one-parameter version of the reconstruction)
    cur = twisted_closed_curve(256)
    inp = str(tmp_path / "closed.csv")
    dio.write_curve_csv(inp, cur)
    cfg = _write_cfg(tmp_path, "rt.json", {"direction": "roundtrip",
                                           "input": inp, "closed": True})
    out = str(tmp_path / "rt")
    assert cli.main(["hasimoto", "--config", cfg, "--out", out, "--strict"]) == 0
    with open(os.path.join(out, "manifest.json")) as f:
        rep = json.load(f)
    assert abs(rep["c0"]) > 1e-3
    assert rep["aligned_rms"] < 1e-4


def test_cli_hasimoto_backward(tmp_path):
    hx = fr.make_helix(512, 1.0, -0.5, 8 * np.pi)
    q = fr.hasimoto(hx)
    inp = str(tmp_path / "pot.csv")
    dio.write_potential_csv(inp, q)
    cfg = _write_cfg(tmp_path, "b.json", {"direction": "backward", "input": inp,
                                          "flavor": "su2", "closed": False})
    out = str(tmp_path / "b")
    assert cli.main(["hasimoto", "--config", cfg, "--out", out]) == 0
    rec = dio.read_curve_csv(os.path.join(out, "curve_0000.csv"), closed=False)
    assert rec.speed_residual() < 1e-6
    # reconstruction agrees with the source helix up to a rigid motion
    _, rms = fr.rigid_align(rec.points, hx.points)
    assert rms < 1e-4


def test_cli_soliton_strict_gate_exit_three(tmp_path):
    # a coarse grid cannot certify unit speed at the strict gate
    cfg = _write_cfg(tmp_path, "coarse.json", {
        "flavor": "su2",
        "grid": {"n": 128, "L": 24.0, "x0": -12.0},
        "time": {"T": 0.0},
        "poles": [{"alpha": [0.0, 1.0], "seed": [1.0, 0.0, 1.0, 0.0]}],
    })
    assert cli.main(["soliton", "--config", cfg,
                     "--out", str(tmp_path / "c"), "--strict"]) == 3


def test_cli_soliton_kdv(tmp_path):
    cfg = _write_cfg(tmp_path, "kdv.json", {
        "flavor": "kdv",
        "grid": {"n": 512, "L": 24.0, "x0": -12.0},
        "time": {"T": 0.0},
        "poles": [{"alpha": [1.0, 0.0], "seed": 0.0}],
    })
    out = str(tmp_path / "kdv")
    assert cli.main(["soliton", "--config", cfg, "--out", out]) == 0
    pot = np.genfromtxt(os.path.join(out, "potential_0000.csv"), delimiter=",",
                        skip_header=1)
    x = pot[:, 0]
    assert np.max(np.abs(pot[:, 1] - (-2.0 / np.cosh(x) ** 2))) < 1e-10


def test_cli_evolve_airy_planar_torsion_monitor(tmp_path):
    th = np.arange(128) * 2 * np.pi / 128
    ell = fr.DiscreteCurve(
        np.stack([1.3 * np.cos(th), np.sin(th), 0 * th], 1), 2 * np.pi / 128, True)
    ell, _ = fr.resample_arclength(ell)
    inp = str(tmp_path / "ell.csv")
    dio.write_curve_csv(inp, ell)
    cfg = _write_cfg(tmp_path, "airy.json", {
        "time": {"T": 0.05, "store_every": 200},
        "flow": "airy",
        "normalized": True,
        "input": inp,
        "closed": True,
    })
    out = str(tmp_path / "airy")
    assert cli.main(["evolve", "--config", cfg, "--out", out]) == 0
    with open(os.path.join(out, "monitors.csv")) as f:
        names = f.readline().strip().split(",")
    mon = np.genfromtxt(os.path.join(out, "monitors.csv"), delimiter=",",
                        skip_header=1)
    tau = np.atleast_2d(mon)[:, names.index("torsion_max")]
    assert np.nanmax(np.abs(tau)) < 1e-6


def test_cli_evolve_potential(tmp_path):
    x = np.arange(256) * 2 * np.pi / 256
    u0 = hi.PotentialField(F.SU2, 2 * np.pi, 0.4 * np.exp(1j * x))
    inp = str(tmp_path / "u.csv")
    dio.write_potential_csv(inp, u0)
    cfg = _write_cfg(tmp_path, "p.json", {
        "flavor": "su2",
        "time": {"T": 0.2, "dt": 0.001, "store_every": 50},
        "flow": "potential2",
        "input": inp,
        "input_kind": "potential",
    })
    out = str(tmp_path / "p")
    assert cli.main(["evolve", "--config", cfg, "--out", out, "--strict"]) == 0
    slices, dt, meta = dio.read_trajectory(out)
    assert meta["flavor"] == "su2"
    assert len(slices) == 5


def test_threads_env_gives_identical_results(tmp_path, monkeypatch):
    zero = hi.PotentialField(F.SU2, 2 * np.pi, np.zeros(64, complex))
    serial = fr.integrate_lax_frame([zero] * 5, 1e-3, 2, [0.0, 0.5, 1.0])
    monkeypatch.setenv("FILAMENT_LAB_THREADS", "3")
    threaded = fr.integrate_lax_frame([zero] * 5, 1e-3, 2, [0.0, 0.5, 1.0])
    for lam in (0.0, 0.5, 1.0):
        assert np.array_equal(serial.at(lam).E, threaded.at(lam).E)
