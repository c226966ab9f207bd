"""Acceptance gate: every criterion at its stated tolerance.

Each test prints one pass/fail line; run with ``pytest -s
tests/test_acceptance.py`` to see the table, or check the captured output
of a plain run.
"""

import time

import numpy as np

from conftest import smooth_field, twisted_closed_curve
from filamentlab import backlund as bt
from filamentlab import flows as fl
from filamentlab import frames as fr
from filamentlab import hierarchy as hi
from filamentlab import liealg as la

F = la.Flavor


def _report(tag, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
    assert ok, f"{tag}: {detail}"


def test_ac01_closed_form_series_match(rng):
    started = time.time()
    n, L = 256, 2 * np.pi
    worst = 0.0
    q = smooth_field(rng, n)
    qre = smooth_field(rng, n, real=True)
    rre = smooth_field(rng, n, real=True)

    def printed(qv, rv):
        qx = hi.spectral_deriv(qv, L)
        rx = hi.spectral_deriv(rv, L)
        qxx = hi.spectral_deriv(qv, L, 2)
        rxx = hi.spectral_deriv(rv, L, 2)
        one = 0.5j * np.stack([np.stack([qv * rv, qx], -1),
                               np.stack([-rx, -qv * rv], -1)], -2)
        two = -0.25 * np.stack(
            [np.stack([qx * rv - qv * rx, qxx - 2 * qv**2 * rv], -1),
             np.stack([rxx - 2 * qv * rv**2, -qx * rv + qv * rx], -1)], -2)
        return one, two

    for flavor in (F.SU2, F.SU11, F.SL2R, F.KDV):
        if flavor is F.SU2:
            u = hi.PotentialField(flavor, L, q)
        elif flavor is F.SU11:
            u = hi.PotentialField(flavor, L, q)
        elif flavor is F.SL2R:
            u = hi.PotentialField(flavor, L, qre, rre)
        else:
            u = hi.PotentialField(flavor, L, qre)
        s = hi.q_series(u, 2)
        one, two = printed(u.q, u.r_values())
        if flavor in (F.SL2R, F.KDV):
            # real flavors: prefactor (1/2) instead of (i/2), opposite signs
            one = 1j * one
            two = -two
        scale = max(1.0, u.norm())
        worst = max(worst, la.max_abs(s[-1] - one) / scale,
                    la.max_abs(s[-2] - two) / scale)
    elapsed = time.time() - started
    _report("AC1 closed-form hierarchy match",
            worst < 1e-10 and elapsed < 1.0,
            f"relative residual {worst:.2e} (gate 1e-10), {elapsed:.2f}s (gate 1s)")


def test_ac02_vacuum_frame_exactness():
    started = time.time()
    n, L = 256, 2 * np.pi
    zero = hi.PotentialField(F.SU2, L, np.zeros(n, complex))
    nt, dt = 501, 2e-3
    lf = fr.integrate_lax_frame([zero] * nt, dt, 2, [0.0, 0.5, 1j])
    xs = zero.x
    ts = np.arange(nt) * dt
    worst = 0.0
    for lam in (0.0, 0.5, 1j):
        s = lf.at(lam)
        th = lam * xs[None, :] + lam**2 * ts[:, None]
        exact = np.zeros((nt, n, 2, 2), complex)
        exact[..., 0, 0] = np.exp(1j * th)
        exact[..., 1, 1] = np.exp(-1j * th)
        worst = max(worst, la.max_abs(s.E - exact))
    elapsed = time.time() - started
    _report("AC2 vacuum frame exactness",
            worst < 1e-10 and elapsed < 5.0,
            f"max error {worst:.2e} (gate 1e-10), {elapsed:.2f}s (gate 5s)")


def test_ac03_one_soliton():
    n, L = 512, 24.0
    ts = np.arange(9) * 1e-3
    E = bt.vacuum_frame(F.SU2, 2, L, n, ts, x0=-12.0)
    res = bt.bt_nls(E, 1j, np.array([1.0, 1.0]))
    xs = E.xs
    pointwise = la.max_abs(res.q[0] - (-2.0 / np.cosh(2.0 * xs)))
    q = res.q
    qt = (q[:-4] - 8 * q[1:-3] + 8 * q[3:-1] - q[4:]) / (12 * 1e-3)
    qxx = np.stack([hi.spectral_deriv(q[i], L, 2) for i in range(9)])
    resid = la.max_abs(qt - (0.5j * (qxx + 2 * np.abs(q) ** 2 * q))[2:-2])
    _report("AC3 one-soliton dressing",
            pointwise < 1e-8 and resid < 1e-5,
            f"profile error {pointwise:.2e} (gate 1e-8), "
            f"equation residual {resid:.2e} (gate 1e-5)")


def test_ac04_permutability_closure():
    n, L = 512, 24.0
    ts = np.arange(3) * 1e-3
    E = bt.vacuum_frame(F.SU2, 2, L, n, ts, x0=-12.0)
    a1, a2 = 1j, 0.4 + 0.8j
    v1 = np.array([1.0, 1.0])
    v2 = np.array([1.0, -0.5 + 0.3j])
    fam = bt.soliton_factory(F.SU2, [(a1, v1), (a2, v2)], L, n, ts, x0=-12.0)
    y1 = E.solve_pole(a1, v1)
    y2 = E.solve_pole(a2, v2)
    q0 = np.stack([u.q for u in E.potential_slices()])
    _, _, q12a, q12b, _, _ = bt.permutability_double(
        q0, a1, y1[..., 0] / y1[..., 1], a2, y2[..., 0] / y2[..., 1])
    pot_gap = max(la.max_abs(q12a - q12b), la.max_abs(fam.q - q12a))
    _, _, curve_gap = bt.permutability_curves(E, a1, v1, a2, v2)
    _report("AC4 permutability closure",
            pot_gap < 1e-8 and curve_gap < 1e-6,
            f"potential gap {pot_gap:.2e} (gate 1e-8), "
            f"filament gap {curve_gap:.2e} (gate 1e-6)")


def test_ac05_hasimoto_round_trip():
    # curvature 1, torsion 1/2 in the convention where the curvature
    # potential's phase slope is minus the torsion (left-handed in the
    # b_x = -tau n convention; see the decisions notes)
    hx = fr.make_helix(512, 1.0, -0.5, 8 * np.pi)
    q = fr.hasimoto(hx)
    mod_err = np.max(np.abs(np.abs(q.q) - 0.5))
    slope = np.polyfit(hx.x[20:-20], np.unwrap(np.angle(q.q))[20:-20], 1)[0]
    pf = fr.build_pframe(hx)
    phi0 = la.su2_lift(pf.frames[0])
    lf = fr.integrate_lax_frame([q], 0.0, 2, [0.0], E0=phi0, closed=False)
    curves, _ = fr.sym_curve(lf, 0.0)
    rec = curves[0].points + hx.points[0][None, :]
    _, rms = fr.rigid_align(rec, hx.points)
    _report("AC5 curvature-potential round trip",
            rms < 1e-4 and mod_err < 1e-3 and abs(slope + 0.5) < 1e-3,
            f"aligned rms {rms:.2e} (gate 1e-4), |q|-1/2 {mod_err:.2e} "
            f"(gate 1e-3), slope {slope:+.5f} (gate -0.5 +/- 1e-3)")


def test_ac06_binormal_flow_cross_validation():
    n, L = 512, 24.0
    E = bt.vacuum_frame(F.SU2, 2, L, n, np.array([0.0, 0.5]), x0=-12.0)
    curves = bt.bt_curve_vfe(E, 1j, np.array([1.0, 1.0]))
    tr = fl.evolve_vfe(curves[0], 0.5, store_every=10**9)
    _, rms = fr.rigid_align(tr.slices[-1].points, curves[1].points)
    speed = max(
        float(tr.meta["resample_deviation"].max()),
        max(s.speed_residual() for s in tr.slices),
    )
    _report("AC6 binormal-flow cross validation",
            rms < 1e-3 and speed < 1e-6,
            f"aligned rms {rms:.2e} (gate 1e-3), "
            f"unit-speed deviation {speed:.2e} (gate 1e-6)")


def test_ac07_conservation(rng):
    q0 = smooth_field(rng, 256)
    worst = {}
    for flavor in (F.SU2, F.SU11):
        u0 = hi.PotentialField(flavor, 2 * np.pi, q0)
        tr = fl.evolve_potential(u0, 2, 1.0, 1e-3, store_every=250)
        mons = {m.name: m.values for m in fl.monitors(tr)}
        worst[flavor.value] = max(fl.relative_drift(mons[f"H{k}"]) for k in (1, 2, 3))
    xk = np.arange(512) * 40.0 / 512 - 20.0
    uk = hi.PotentialField(F.KDV, 40.0, (-2.0 / np.cosh(xk) ** 2) + 0j)
    trk = fl.evolve_potential(uk, 3, 1.0, store_every=2000)
    monk = {m.name: m.values for m in fl.monitors(trk)}
    worst["kdv"] = max(fl.relative_drift(monk[f"H{k}"]) for k in (1, 2, 3))
    # the coupled real second flow is time elliptic: its trajectory is the
    # exact two-pole dressing, sampled in time
    ts = np.linspace(0.0, 1.0, 11)
    Es = bt.vacuum_frame(F.SL2R, 2, 24.0, 256, ts, x0=-12.0)
    res = bt.bt_sl2r(Es, -0.8, 0.8, np.array([1.0, 1.0]), np.array([1.0, -1.0]))
    series = {k: [] for k in (1, 2, 3)}
    for u in res.potential_slices():
        s = hi.q_series(u, 3)
        for k in (1, 2, 3):
            series[k].append(hi.hamiltonian(u, k, s))
    worst["sl2r"] = max(fl.relative_drift(np.array(series[k])) for k in (1, 2, 3))
    drift = max(worst.values())
    cur = twisted_closed_curve(128)
    trv = fl.evolve_vfe(cur, 1.0, store_every=400)
    holo = np.unwrap([fr.holonomy(c) for c in trv.slices])
    hdrift = float(np.max(np.abs(holo - holo[0])))
    _report("AC7 conservation",
            drift < 1e-5 and hdrift < 1e-3,
            f"worst invariant drift {drift:.2e} (gate 1e-5) over "
            f"{sorted(worst)}, holonomy drift {hdrift:.2e} (gate 1e-3)")


def test_ac08_commutation(rng):
    q0 = smooth_field(rng, 256)
    u0 = hi.PotentialField(F.SU2, 2 * np.pi, q0)
    pot_gap = fl.commuting_flows_check(u0, 1, 2, 0.1)
    cur = twisted_closed_curve(128, wobble=0.15)
    curve_gap = fl.commuting_curve_flows_check(cur, 0.05)
    _report("AC8 commutation",
            pot_gap < 1e-4 and curve_gap < 1e-3,
            f"translation/second-flow gap {pot_gap:.2e} (gate 1e-4), "
            f"binormal/third-order aligned rms {curve_gap:.2e} (gate 1e-3)")


def test_ac09_reality_and_flatness():
    ts = np.arange(9) * 1e-3
    E = bt.vacuum_frame(F.SU2, 2, 24.0, 256, ts, x0=-12.0)
    res = bt.bt_nls(E, 1j, np.array([1.0, 1.0]))
    reality = max(
        la.reality_residual(res.frame.at(lam).E, F.SU2, lam)
        for lam in (0.0, 0.5, 1.0)
    )
    E11 = bt.vacuum_frame(F.SU11, 2, 24.0, 256, ts, x0=-12.0)
    r11 = bt.bt_su11(E11, 0.5 + 0.8j, np.array([2.0, 1.0]))
    s11 = r11.frame.at(0.3)
    ok11 = np.where(r11.singular_locus[:, :, None, None], np.eye(2), s11.E)
    reality = max(reality, la.reality_residual(ok11, F.SU11, 0.3))
    Ek = bt.vacuum_frame(F.KDV, 3, 24.0, 256, ts, x0=-12.0)
    rk = bt.bt_kdv(Ek, 1.0, 0.0)
    reality = max(reality, la.reality_residual(
        rk.frame.at(0.37).E, F.KDV, 0.37, None, rk.frame.at(-0.37).E))
    flat = max(
        hi.flatness_of_trajectory(res.potential_slices(), 1e-3, 2, lam)
        for lam in (0.0, 0.5, 1.0)
    )
    _report("AC9 reality and flatness suite",
            reality < 1e-8 and flat < 1e-6,
            f"worst reality {reality:.2e} (gate 1e-8), "
            f"worst flatness {flat:.2e} (gate 1e-6)")


def test_ac10_kdv_realization():
    n, L = 512, 24.0
    ts = np.arange(9) * 1e-3
    E = bt.vacuum_frame(F.KDV, 3, L, n, ts, x0=-12.0)
    curves, res = bt.bt_curve_kdv(E, 1.0, 0.0)
    q = res.q.real
    qt = (q[:-4] - 8 * q[1:-3] + 8 * q[3:-1] - q[4:]) / (12 * 1e-3)
    qx = np.stack([hi.spectral_deriv(q[i] + 0j, L, 1).real for i in range(9)])
    qxxx = np.stack([hi.spectral_deriv(q[i] + 0j, L, 3).real for i in range(9)])
    resid = np.max(np.abs(qt - (0.25 * (qxxx - 6 * q * qx))[2:-2]))
    g = curves[0]
    speed = g.speed_residual()
    nf = fr.build_null_pframe(g, k2_at_start=2.0)
    k2dev = float(np.max(np.abs(nf.k2 - 2.0)))
    _report("AC10 KdV realization",
            resid < 1e-4 and speed < 1e-6 and k2dev < 1e-4,
            f"equation residual {resid:.2e} (gate 1e-4), space-like speed "
            f"deviation {speed:.2e} (gate 1e-6), k2-2 {k2dev:.2e} (gate 1e-4)")
