"""Named verification suites aggregating the cross-module invariants.

Every suite builds its own fixtures (dressing-generated solutions, direct
integrations) and returns measured residuals next to the gates they must
stay under.  The suites back the command line `verify` command; the same
gates appear in the test suite.
"""

from __future__ import annotations

import numpy as np

from . import backlund as bt
from . import flows as fl
from . import frames as fr
from . import hierarchy as hier
from .liealg import Flavor, max_abs, reality_residual

SUITE_NAMES = ("flatness", "conservation", "permutability", "reality",
               "arclength", "holonomy")


def _result(name, checks):
    passed = all(v <= g for v, g in checks.values())
    return {
        "name": name,
        "passed": bool(passed),
        "checks": {k: {"residual": float(v), "gate": float(g)} for k, (v, g) in checks.items()},
    }


def _soliton_fixture(n=256, L=24.0, nt=9, dt=1e-3):
    ts = np.arange(nt) * dt
    E = bt.vacuum_frame(Flavor.SU2, 2, L, n, ts, x0=-L / 2)
    res = bt.bt_nls(E, 1j, np.array([1.0, 1.0]))
    return E, res


def suite_flatness() -> dict:
    E, res = _soliton_fixture()
    slices = res.potential_slices()
    checks = {}
    for lam in (0.0, 0.5, 1.0):
        val = hier.flatness_of_trajectory(slices, 1e-3, 2, lam)
        checks[f"soliton_lambda_{lam}"] = (val, 1e-6)
    vac = hier.flatness_of_trajectory(E.potential_slices(), 1e-3, 2, 0.7)
    checks["vacuum"] = (vac, 1e-12)
    gap = fr.path_independence_gap(slices, 1e-3, 2, 0.5)
    checks["path_independence"] = (gap, 1e-6)
    return _result("flatness", checks)


def suite_reality() -> dict:
    checks = {}
    _, res = _soliton_fixture()
    for lam in (0.0, 0.4, 1.0):
        s = res.frame.at(lam)
        checks[f"su2_dressed_{lam}"] = (
            reality_residual(s.E, Flavor.SU2, lam), 1e-8)
    ts = np.arange(5) * 1e-3
    E11 = bt.vacuum_frame(Flavor.SU11, 2, 24.0, 256, ts, x0=-12.0)
    r11 = bt.bt_su11(E11, 0.5 + 0.8j, np.array([2.0, 1.0]))
    s11 = r11.frame.at(0.3)
    mask = ~r11.singular_locus
    ok = np.where(mask[:, :, None, None], s11.E, np.eye(2))
    checks["su11_dressed_0.3"] = (reality_residual(ok, Flavor.SU11, 0.3), 1e-8)
    Ek = bt.vacuum_frame(Flavor.KDV, 3, 24.0, 256, ts, x0=-12.0)
    rk = bt.bt_kdv(Ek, 1.0, 0.0)
    lam = 0.37
    checks["kdv_dressed_evenness"] = (
        reality_residual(rk.frame.at(lam).E, Flavor.KDV, lam,
                         None, rk.frame.at(-lam).E), 1e-8)
    return _result("reality", checks)


def suite_permutability(sign_flip: bool = False) -> dict:
    """Two-route agreement of the doubly dressed solution and filament.

    ``sign_flip`` deliberately corrupts the one-step update (test hook for
    mutation sanity); the suite must then fail with an order-one residual.
    """
    n, L = 256, 24.0
    ts = np.arange(3) * 1e-3
    E = bt.vacuum_frame(Flavor.SU2, 2, L, n, ts, x0=-L / 2)
    a1, a2 = 1j, 0.4 + 0.8j
    v1 = np.array([1.0, 1.0])
    v2 = np.array([1.0, -0.5 + 0.3j])
    y1 = E.solve_pole(a1, v1)
    y2 = E.solve_pole(a2, v2)
    p1 = y1[..., 0] / y1[..., 1]
    p2 = y2[..., 0] / y2[..., 1]
    q0 = np.stack([u.q for u in E.potential_slices()])
    if sign_flip:
        p1 = -p1
    pt1, pt2, q12a, q12b, _, _ = bt.permutability_double(q0, a1, p1, a2, p2)
    fam = bt.soliton_factory(Flavor.SU2, [(a1, v1), (a2, v2)], L, n, ts, x0=-L / 2)
    checks = {
        "two_route_potential": (max_abs(q12a - q12b), 1e-8),
        "factory_vs_formula": (max_abs(fam.q - q12a), 1e-8),
    }
    _, _, cgap = bt.permutability_curves(E, a1, v1, a2, v2)
    checks["two_route_curve"] = (cgap, 1e-6)
    pi1 = bt.hermitian_projection(v1)
    pi2 = bt.hermitian_projection(v2.astype(complex))
    t1, t2 = bt.permute(a1, pi1, a2, pi2)
    e1 = bt.SimpleElement(Flavor.SU2, a1, t1)
    e2 = bt.SimpleElement(Flavor.SU2, a2, pi2)
    f1 = bt.SimpleElement(Flavor.SU2, a2, t2)
    f2 = bt.SimpleElement(Flavor.SU2, a1, pi1)
    res = 0.0
    for lam in (0.3, -1.1, 0.7j, 2.0 - 0.5j):
        res = max(res, max_abs(e1.f(lam) @ e2.f(lam) - f1.f(lam) @ f2.f(lam)))
    checks["exchange_identity"] = (res, 1e-10)
    return _result("permutability", checks)


def suite_conservation() -> dict:
    checks = {}
    n, L = 256, 2 * np.pi
    x = np.arange(n) * L / n
    q0 = 0.4 * np.exp(1j * x) + 0.2 * np.exp(-2j * x) + 0.1 * np.cos(3 * x)
    for flavor in (Flavor.SU2, Flavor.SU11):
        u0 = hier.PotentialField(flavor, L, q0)
        tr = fl.evolve_potential(u0, 2, 1.0, 1e-3, store_every=200)
        mons = {m.name: m.values for m in fl.monitors(tr)}
        for k in (1, 2, 3):
            checks[f"{flavor.value}_H{k}"] = (fl.relative_drift(mons[f"H{k}"]), 1e-5)
    xk = np.arange(512) * 40.0 / 512 - 20.0
    uk = hier.PotentialField(Flavor.KDV, 40.0, (-2.0 / np.cosh(xk) ** 2) + 0j)
    trk = fl.evolve_potential(uk, 3, 1.0, store_every=2000)
    monk = {m.name: m.values for m in fl.monitors(trk)}
    for k in (1, 2, 3):
        checks[f"kdv_H{k}"] = (fl.relative_drift(monk[f"H{k}"]), 1e-5)
    # the coupled real second flow is time-elliptic; its conservation runs
    # on the exact two-pole dressed trajectory
    ts = np.linspace(0.0, 1.0, 11)
    E = bt.vacuum_frame(Flavor.SL2R, 2, 24.0, 256, ts, x0=-12.0)
    res = bt.bt_sl2r(E, -0.8, 0.8, np.array([1.0, 1.0]), np.array([1.0, -1.0]))
    hs = {k: [] for k in (1, 2, 3)}
    for u in res.potential_slices():
        s = hier.q_series(u, 3)
        for k in (1, 2, 3):
            hs[k].append(hier.hamiltonian(u, k, s))
    for k in (1, 2, 3):
        checks[f"sl2r_H{k}"] = (fl.relative_drift(np.array(hs[k])), 1e-5)
    return _result("conservation", checks)


def _twisted_closed_curve(n=256):
    th = np.arange(n) * 2 * np.pi / n
    pts = np.stack(
        [np.cos(th) * (1 + 0.08 * np.cos(2 * th)),
         np.sin(th) * (1 + 0.08 * np.cos(2 * th)),
         0.12 * np.sin(3 * th) + 0.05 * np.cos(th)], axis=1)
    cur = fr.DiscreteCurve(pts, 2 * np.pi / n, True)
    cur, _ = fr.resample_arclength(cur)
    return cur


def suite_holonomy() -> dict:
    checks = {}
    cur = _twisted_closed_curve()
    m = fr.holonomy(cur)
    _, tau = fr.frenet_data(cur)
    loop_tau = float(np.sum(tau) * cur.h)
    gap = abs((m + loop_tau + np.pi) % (2 * np.pi) - np.pi)
    checks["torsion_integral"] = (gap, 1e-3)
    # rigid-motion invariance
    ang = 0.7
    R = np.array([[np.cos(ang), -np.sin(ang), 0], [np.sin(ang), np.cos(ang), 0], [0, 0, 1.0]])
    moved = fr.DiscreteCurve(cur.points @ R.T + np.array([0.3, -1.0, 2.0]), cur.h, True)
    checks["rigid_invariance"] = (abs(fr.holonomy(moved) - m), 1e-10)
    tr = fl.evolve_vfe(cur, 0.5, store_every=250)
    holo = [fr.holonomy(c) for c in tr.slices]
    drift = float(np.max(np.abs(np.unwrap(holo) - holo[0])))
    checks["vfe_drift"] = (drift, 1e-3)
    return _result("holonomy", checks)


def suite_arclength() -> dict:
    checks = {}
    E2 = bt.vacuum_frame(Flavor.SU2, 2, 24.0, 512, np.array([0.0, 0.25]), x0=-12.0)
    curves = bt.bt_curve_vfe(E2, 1j, np.array([1.0, 1.0]))
    checks["filament_unit_speed"] = (
        max(c.speed_residual() for c in curves), 1e-6)
    ts = np.arange(3) * 1e-3
    Es = bt.vacuum_frame(Flavor.SL2R, 2, 24.0, 512, ts, x0=-12.0)
    cs, _ = bt.bt_curve_sl2r(Es, -0.8, 0.8, np.array([1.0, 1.0]), np.array([1.0, -1.0]))
    checks["spacelike_unit_speed"] = (cs[0].speed_residual(), 1e-6)
    Ek = bt.vacuum_frame(Flavor.KDV, 3, 24.0, 512, ts, x0=-12.0)
    ck, _ = bt.bt_curve_kdv(Ek, 1.0, 0.0)
    checks["kdv_unit_spacelike"] = (ck[0].speed_residual(), 1e-6)
    cur = _twisted_closed_curve(128)
    tr = fl.evolve_vfe(cur, 0.25, store_every=200)
    checks["vfe_speed_drift"] = (
        float(max(s.speed_residual() for s in tr.slices)), 1e-6)
    return _result("arclength", checks)


def run_suites(names=None, hooks=None) -> list[dict]:
    table = {
        "flatness": suite_flatness,
        "reality": suite_reality,
        "permutability": suite_permutability,
        "conservation": suite_conservation,
        "arclength": suite_arclength,
        "holonomy": suite_holonomy,
    }
    names = list(names) if names else list(SUITE_NAMES)
    out = []
    for name in names:
        if name not in table:
            raise ValueError(f"unknown suite {name!r}; pick from {SUITE_NAMES}")
        kwargs = (hooks or {}).get(name, {})
        out.append(table[name](**kwargs))
    return out
