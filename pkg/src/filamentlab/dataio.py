"""CSV / JSON / OBJ import and export.

All floating point values are written with 17 significant digits so that
export followed by import is bit identical for doubles; metadata (grids,
flavors, metrics, monitors) travels in JSON manifests with sorted keys,
which keeps repeated runs byte identical.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import flows as fl
from . import frames as fr
from . import hierarchy as hier
from .liealg import Flavor, Metric

FMT = "%.17g"


class DataIOError(Exception):
    pass


def _fmt_row(values) -> str:
    return ",".join(FMT % v for v in values)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


def write_curve_csv(path: str, curve: fr.DiscreteCurve) -> None:
    with open(path, "w") as f:
        f.write("x,g1,g2,g3\n")
        for xi, p in zip(curve.x, curve.points):
            f.write(_fmt_row((xi, p[0], p[1], p[2])) + "\n")


def read_curve_csv(path: str, closed: bool = True,
                   metric: Metric = Metric.EUCLIDEAN,
                   speed_sign: int = 1) -> fr.DiscreteCurve:
    try:
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
    except OSError as exc:
        raise DataIOError(f"cannot read curve file {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] < 4 or data.shape[0] < 3:
        raise DataIOError(f"curve file {path} is not x,g1,g2,g3 data")
    h = float(data[1, 0] - data[0, 0])
    return fr.DiscreteCurve(data[:, 1:4], h, closed, metric, speed_sign)


def write_curve_obj(path: str, curve: fr.DiscreteCurve) -> None:
    """Polyline export for 3d viewers (closed curves wrap around)."""
    with open(path, "w") as f:
        for p in curve.points:
            f.write("v " + " ".join(FMT % v for v in p) + "\n")
        idx = list(range(1, curve.n + 1))
        if curve.closed:
            idx.append(1)
        f.write("l " + " ".join(str(i) for i in idx) + "\n")


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


def write_potential_csv(path: str, u: hier.PotentialField) -> None:
    with open(path, "w") as f:
        if u.flavor is Flavor.SL2R:
            f.write("x,q_re,q_im,r_re,r_im\n")
            for xi, qi, ri in zip(u.x, u.q, u.r):
                f.write(_fmt_row((xi, qi.real, qi.imag, ri.real, ri.imag)) + "\n")
        else:
            f.write("x,q_re,q_im\n")
            for xi, qi in zip(u.x, u.q):
                f.write(_fmt_row((xi, qi.real, qi.imag)) + "\n")


def read_potential_csv(path: str, flavor: Flavor) -> hier.PotentialField:
    try:
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
    except OSError as exc:
        raise DataIOError(f"cannot read potential file {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[0] < 8:
        raise DataIOError(f"potential file {path} is not tabular grid data")
    n = data.shape[0]
    x0 = float(data[0, 0])
    h = float(data[1, 0] - data[0, 0])
    q = data[:, 1] + 1j * data[:, 2]
    if flavor is Flavor.SL2R:
        if data.shape[1] < 5:
            raise DataIOError("SL2R potential file needs r columns")
        r = data[:, 3] + 1j * data[:, 4]
        return hier.PotentialField(flavor, n * h, q, r, x0=x0)
    return hier.PotentialField(flavor, n * h, q, x0=x0)


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------


def write_frames_csv(path: str, field: fr.FrameField) -> None:
    """Twelve columns per sample: x, the three frame columns, k1, k2."""
    cur = field.curve
    with open(path, "w") as f:
        f.write("x,e0_1,e0_2,e0_3,e1_1,e1_2,e1_3,e2_1,e2_2,e2_3,k1,k2\n")
        for i in range(cur.n):
            m = field.frames[i]
            row = (cur.x[i], m[0, 0], m[1, 0], m[2, 0], m[0, 1], m[1, 1],
                   m[2, 1], m[0, 2], m[1, 2], m[2, 2], field.k1[i], field.k2[i])
            f.write(_fmt_row(row) + "\n")


# ---------------------------------------------------------------------------
# trajectories and manifests
# ---------------------------------------------------------------------------


def write_manifest(path: str, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def export_trajectory(outdir: str, traj: fl.Trajectory, stem: str = "slice",
                      extra_meta: dict | None = None) -> dict:
    """One CSV per slice plus a JSON index with monitors inline."""
    os.makedirs(outdir, exist_ok=True)
    files = []
    for i, s in enumerate(traj.slices):
        name = f"{stem}_{i:04d}.csv"
        p = os.path.join(outdir, name)
        if isinstance(s, fr.DiscreteCurve):
            write_curve_csv(p, s)
        else:
            write_potential_csv(p, s)
        files.append(name)
    mons = fl.monitors(traj)
    index = {
        "dt": traj.dt,
        "scheme": traj.scheme,
        "files": files,
        "monitors": {m.name: [float(v) for v in m.values] for m in mons},
    }
    first = traj.slices[0]
    if isinstance(first, fr.DiscreteCurve):
        index["kind"] = "curve"
        index["metric"] = first.metric.value
        index["closed"] = bool(first.closed)
    else:
        index["kind"] = "potential"
        index["flavor"] = first.flavor.value
    if extra_meta:
        index.update(extra_meta)
    write_manifest(os.path.join(outdir, "index.json"), index)
    return index


def read_trajectory(indexdir: str):
    """Load a trajectory directory written by export_trajectory."""
    index_path = os.path.join(indexdir, "index.json")
    try:
        with open(index_path) as f:
            index = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataIOError(f"cannot read trajectory index {index_path}: {exc}") from exc
    slices = []
    for name in index["files"]:
        p = os.path.join(indexdir, name)
        if index["kind"] == "curve":
            metric = {m.value: m for m in Metric}[index.get("metric", "euclidean")]
            slices.append(read_curve_csv(p, index.get("closed", True), metric))
        else:
            flavor = {f.value: f for f in Flavor}[index["flavor"]]
            slices.append(read_potential_csv(p, flavor))
    return slices, float(index["dt"]), index


def write_monitor_csv(path: str, traj: fl.Trajectory) -> list[fl.Monitor]:
    mons = fl.monitors(traj)
    names = [m.name for m in mons]
    length = len(traj.slices)
    with open(path, "w") as f:
        f.write("t," + ",".join(names) + "\n")
        for i in range(length):
            row = [traj.ts[i]]
            for m in mons:
                row.append(m.values[i] if i < len(m.values) else np.nan)
            f.write(_fmt_row(row) + "\n")
    return mons
