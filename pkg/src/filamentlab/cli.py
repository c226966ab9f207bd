"""Command line front end: soliton | evolve | hasimoto | verify.

Every command reads one JSON configuration (validated against the schema
shipped with the package; unknown keys are rejected) and writes CSV data
plus JSON manifests into --out.  Exit codes: 0 success, 1 failed verify
suite, 2 configuration violation, 3 numerical gate failure, 4 unreadable
input.  Identical configurations produce byte-identical outputs.

The environment variable FILAMENT_LAB_THREADS caps internal parallelism
(spectral-parameter columns of frame integrations are independent).
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import os
import sys

import jsonschema
import numpy as np

from . import backlund as bt
from . import dataio as dio
from . import flows as fl
from . import frames as fr
from . import hierarchy as hier
from . import verify as ver
from .liealg import Flavor, Metric, su2_lift

EXIT_SUITE_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_NUMERICAL_GATE = 3
EXIT_BAD_INPUT = 4

FLAVORS = {f.value: f for f in Flavor}
METRICS = {m.value: m for m in Metric}


class ConfigError(Exception):
    pass


class GateError(Exception):
    pass


def _schema() -> dict:
    ref = importlib.resources.files("filamentlab") / "schemas" / "jobconfig.json"
    return json.loads(ref.read_text())


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, _schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config violates the schema: {exc.message}") from exc
    return cfg


def _flavor(cfg) -> Flavor:
    return FLAVORS[cfg.get("flavor", "su2")]


def _grid(cfg):
    g = cfg.get("grid", {"n": 256, "L": 24.0, "x0": -12.0})
    return int(g["n"]), float(g["L"]), float(g.get("x0", 0.0))


def _time(cfg):
    t = cfg.get("time", {"T": 0.0})
    return float(t["T"]), t.get("dt"), int(t.get("store_every", 1))


def _poles(cfg, flavor):
    out = []
    for p in cfg.get("poles", []):
        alpha = complex(p["alpha"][0], p["alpha"][1])
        seed = p["seed"]
        if flavor is Flavor.KDV:
            out.append((alpha, float(seed)))
        else:
            s = np.asarray(seed, float)
            if s.size == 2:
                out.append((alpha, s.astype(complex)))
            else:
                out.append((alpha, np.array([s[0] + 1j * s[1], s[2] + 1j * s[3]])))
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_soliton(cfg: dict, outdir: str, strict: bool) -> int:
    flavor = _flavor(cfg)
    if flavor is Flavor.SL2R:
        raise ConfigError(
            "the sl2r flavor dresses with pole pairs and has no factory chain; "
            "use the library transform directly"
        )
    n, L, x0 = _grid(cfg)
    T, dt, store = _time(cfg)
    dt = dt or 1e-3
    nt = max(1, int(round(T / dt)) + 1)
    ts = np.arange(nt) * dt
    poles = _poles(cfg, flavor)
    route = cfg.get("route", "sequential")
    os.makedirs(outdir, exist_ok=True)

    fam = bt.soliton_factory(flavor, poles, L, n, ts, x0=x0)
    if route == "permutability":
        if len(poles) != 2 or flavor is not Flavor.SU2:
            raise ConfigError("the permutability route needs two poles and the su2 flavor")
        E = bt.vacuum_frame(flavor, 2, L, n, ts, x0=x0)
        (a1, v1), (a2, v2) = poles
        y1 = E.solve_pole(a1, v1)
        y2 = E.solve_pole(a2, v2)
        q0 = np.stack([u.q for u in E.potential_slices()])
        _, _, q12, q12b, _, _ = bt.permutability_double(
            q0, a1, y1[..., 0] / y1[..., 1], a2, y2[..., 0] / y2[..., 1])
        gap = float(np.max(np.abs(q12 - fam.q)))
        if gap > 1e-8:
            raise GateError(f"route agreement gate: sequential vs permutability gap {gap:.2e} > 1e-8")
        qfield = q12
    else:
        qfield = fam.q

    for i, tval in enumerate(ts):
        u = hier.PotentialField(flavor, L, qfield[i], x0=x0)
        dio.write_potential_csv(os.path.join(outdir, f"potential_{i:04d}.csv"), u)
        dio.write_curve_csv(os.path.join(outdir, f"curve_{i:04d}.csv"), fam.curves[i])
        if cfg.get("obj_export"):
            dio.write_curve_obj(os.path.join(outdir, f"curve_{i:04d}.obj"), fam.curves[i])
    worst_speed = max(c.speed_residual() for c in fam.curves)
    if strict and worst_speed > 1e-6:
        raise GateError(f"arc-length gate: unit-speed residual {worst_speed:.2e} > 1e-6")
    manifest = dict(fam.manifest)
    manifest["command"] = "soliton"
    manifest["route"] = route
    manifest["files"] = sorted(os.path.basename(p) for p in os.listdir(outdir)
                               if p.endswith(".csv"))
    dio.write_manifest(os.path.join(outdir, "manifest.json"), manifest)
    return 0


_MONITOR_GATES = {"H1": 1e-5, "H2": 1e-5, "H3": 1e-5, "holonomy": 1e-3,
                  "speed_deviation": 1e-6}


def cmd_evolve(cfg: dict, outdir: str, strict: bool) -> int:
    flavor = _flavor(cfg)
    T, dt, store = _time(cfg)
    flow = cfg.get("flow", "vfe")
    path = cfg.get("input")
    if not path:
        raise ConfigError("evolve needs an input curve or potential file")
    kind = cfg.get("input_kind", "curve" if flow in ("vfe", "airy") or flow.startswith("curve") else "potential")
    if kind == "curve":
        curve = dio.read_curve_csv(path, closed=cfg.get("closed", True),
                                   metric=METRICS[cfg.get("metric", "euclidean")])
        if flow == "vfe" or flow == "curve2":
            traj = fl.evolve_vfe(curve, T, dt, store_every=store)
        elif flow == "airy" or flow == "curve3":
            traj = fl.evolve_airy(curve, T, dt, normalized=cfg.get("normalized", False),
                                  store_every=store)
        elif flow in ("curve1", "curve4"):
            traj = fl.evolve_curve_flow_j(curve, int(flow[-1]), T, dt, store_every=store)
        else:
            raise ConfigError(f"flow {flow!r} does not act on curves")
    else:
        u0 = dio.read_potential_csv(path, flavor)
        if not flow.startswith("potential"):
            raise ConfigError(f"flow {flow!r} does not act on potentials")
        traj = fl.evolve_potential(u0, int(flow[-1]), T, dt, store_every=store)
    os.makedirs(outdir, exist_ok=True)
    dio.export_trajectory(outdir, traj, extra_meta={"command": "evolve", "flow": flow})
    mons = dio.write_monitor_csv(os.path.join(outdir, "monitors.csv"), traj)
    if strict:
        for m in mons:
            gate = _MONITOR_GATES.get(m.name)
            if gate is None or len(m.values) == 0:
                continue
            if m.name in ("H1", "H2", "H3", "holonomy"):
                drift = fl.relative_drift(m.values) if m.name.startswith("H") else \
                    float(np.max(np.abs(m.values - m.values[0])))
            else:
                drift = float(np.max(np.abs(m.values)))
            if drift > gate:
                raise GateError(f"monitor gate: {m.name} drift {drift:.2e} > {gate:.0e}")
    return 0


def cmd_hasimoto(cfg: dict, outdir: str, strict: bool) -> int:
    direction = cfg.get("direction", "forward")
    os.makedirs(outdir, exist_ok=True)
    report: dict = {"command": "hasimoto", "direction": direction}
    if direction in ("forward", "roundtrip"):
        path = cfg.get("input")
        if not path:
            raise ConfigError("hasimoto needs an input curve file")
        curve = dio.read_curve_csv(path, closed=cfg.get("closed", False))
        if curve.closed:
            field = fr.build_periodic_hframe(curve)
            report["holonomy_angle"] = fr.holonomy(curve)
            report["c0"] = field.c0
            q = hier.PotentialField(Flavor.SU2, curve.n * curve.h,
                                    0.5 * (field.k1 + 1j * field.k2))
        else:
            field = fr.build_pframe(curve)
            q = hier.PotentialField(Flavor.SU2, curve.n * curve.h,
                                    0.5 * (field.k1 + 1j * field.k2))
        dio.write_potential_csv(os.path.join(outdir, "potential.csv"), q)
        dio.write_frames_csv(os.path.join(outdir, "frames.csv"), field)
        if direction == "roundtrip":
            phi0 = su2_lift(field.frames[0])
            lam0 = field.c0 / 2.0 if curve.closed else cfg.get("lambda0", 0.0)
            lf = fr.integrate_lax_frame([q], 0.0, cfg.get("order", 2), [lam0],
                                        E0=phi0, closed=curve.closed)
            curves, _ = fr.sym_curve(lf, lam0, closed_curve=curve.closed)
            rec = curves[0].points + curve.points[0][None, :]
            _, rms = fr.rigid_align(rec, curve.points)
            report["aligned_rms"] = rms
            dio.write_curve_csv(os.path.join(outdir, "curve_roundtrip.csv"), curves[0])
            if strict and rms > 1e-4:
                raise GateError(f"round-trip gate: aligned rms {rms:.2e} > 1e-4")
    else:
        path = cfg.get("input")
        if not path:
            raise ConfigError("hasimoto backward needs a potential file or trajectory")
        lam0 = cfg.get("lambda0", 0.0)
        if os.path.isdir(path):
            slices, dt, _ = dio.read_trajectory(path)
            lf = fr.integrate_lax_frame(slices, dt, cfg.get("order", 2), [lam0],
                                        closed=cfg.get("closed", True))
        else:
            u0 = dio.read_potential_csv(path, _flavor(cfg))
            lf = fr.integrate_lax_frame([u0], 0.0, cfg.get("order", 2), [lam0],
                                        closed=cfg.get("closed", True))
        curves, fields = fr.sym_curve(lf, lam0, closed_curve=False)
        for i, c in enumerate(curves):
            dio.write_curve_csv(os.path.join(outdir, f"curve_{i:04d}.csv"), c)
        dio.write_frames_csv(os.path.join(outdir, "frames.csv"), fields[0])
        report["speed_residual"] = max(c.speed_residual() for c in curves)
    dio.write_manifest(os.path.join(outdir, "manifest.json"), report)
    return 0


def cmd_verify(cfg: dict, outdir: str, strict: bool, suites=None) -> int:
    names = suites or cfg.get("suites") or None
    results = ver.run_suites(names)
    os.makedirs(outdir, exist_ok=True)
    report = {
        "command": "verify",
        "report": {r["name"]: r for r in results},
        "passed": all(r["passed"] for r in results),
    }
    dio.write_manifest(os.path.join(outdir, "verify_report.json"), report)
    for r in results:
        status = "pass" if r["passed"] else "FAIL"
        worst = max((c["residual"] / c["gate"]) for c in r["checks"].values())
        print(f"[{status}] {r['name']}: worst residual/gate = {worst:.3e}")
    return 0 if report["passed"] else EXIT_SUITE_FAILED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="filament-lab",
        description="integrable curve flow laboratory: solitons, curve evolution, "
                    "curvature transforms and verification suites",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("soliton", "evolve", "hasimoto", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "verify"), help="JSON job configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--strict", action="store_true",
                       help="non-zero exit when a numerical gate fails")
        if name == "verify":
            p.add_argument("--suite", action="append", default=None,
                           help="suite name (repeatable); default runs all")
    args = parser.parse_args(argv)

    threads = os.environ.get("FILAMENT_LAB_THREADS")
    if threads is not None:
        try:
            int(threads)
        except ValueError:
            print("FILAMENT_LAB_THREADS must be an integer", file=sys.stderr)
            return EXIT_BAD_CONFIG

    try:
        cfg = load_config(args.config) if args.config else {}
        if args.command == "soliton":
            return cmd_soliton(cfg, args.out, args.strict)
        if args.command == "evolve":
            return cmd_evolve(cfg, args.out, args.strict)
        if args.command == "hasimoto":
            return cmd_hasimoto(cfg, args.out, args.strict)
        return cmd_verify(cfg, args.out, args.strict, args.suite)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except dio.DataIOError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except GateError as exc:
        print(f"numerical gate failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_GATE
    except (fl.UnstableStep, fr.FrameError, bt.BacklundError,
            hier.HierarchyError) as exc:
        print(f"numerical gate failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_GATE
    return 0


if __name__ == "__main__":
    sys.exit(main())
