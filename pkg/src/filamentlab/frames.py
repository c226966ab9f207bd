"""Discrete curve geometry and the two directions of the Hasimoto bridge.

Curve -> potential: parallel (rotation minimizing) frames along arc-length
sampled curves, principal curvatures, q = (k1 + i k2)/2.

Potential -> curve: integration of the extended frame E(x, t, lam) of a
potential trajectory together with its lambda-derivative channel, followed
by the Pohlmeyer-Sym formula gamma = dE/dlam E^-1 at a real lambda (with
the Galilean shift x -> x - 2 lam0 t when lam0 != 0).

Conventions.  Frames are 3x3 matrices whose columns are (e0, e1, e2) in the
flavor's ordered-basis coordinates (see liealg).  Principal curvatures are
k_i = <(e0)_x, e_i>.  Frenet torsion follows b_x = -tau n; with that sign
the complex curvature k1 + i k2 of a parallel frame has phase slope +tau
and the normal holonomy of a closed curve is the rotation by -loop(tau).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline

from . import hierarchy as hier
from .liealg import (
    Flavor,
    I2,
    Metric,
    adjoint_frame,
    dagger,
    det2,
    flavor_a,
    flavor_metric,
    inv2,
    lie_to_vec,
    max_abs,
    metric_dot,
    reality_residual,
    trace2,
)


class FrameError(Exception):
    pass


class DegenerateTangent(FrameError):
    pass


class FrenetUndefined(FrameError):
    pass


class NotSpacelike(FrameError):
    pass


class FlatnessTooLarge(FrameError):
    pass


class RealityDrift(FrameError):
    pass


class MissingDerivativeChannel(FrameError):
    pass


# ---------------------------------------------------------------------------
# discrete derivative helpers
# ---------------------------------------------------------------------------


def _fd_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for one derivative on integer offsets."""
    m = len(offsets)
    v = np.vander(np.asarray(offsets, float), m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = float(math.factorial(order))
    return np.linalg.solve(v, rhs)


def fd_deriv_open(f: np.ndarray, h: float, order: int = 1, stencil: int = 9) -> np.ndarray:
    """High-order finite difference along axis 0 with one-sided ends."""
    n = f.shape[0]
    stencil = min(stencil if stencil % 2 == 1 else stencil + 1, n)
    half = stencil // 2
    out = np.empty(f.shape, dtype=f.dtype if np.iscomplexobj(f) else float)
    w_c = _fd_weights(np.arange(-half, half + 1), order)
    acc = w_c[0] * f[0 : n - stencil + 1]
    for k in range(1, stencil):
        acc = acc + w_c[k] * f[k : n - stencil + 1 + k]
    out[half : n - half] = acc
    for i in range(half):
        w = _fd_weights(np.arange(stencil) - i, order)
        out[i] = np.tensordot(w, f[:stencil], axes=(0, 0))
        w = _fd_weights(np.arange(stencil) - (stencil - 1 - i), order)
        out[n - 1 - i] = np.tensordot(w, f[n - stencil :], axes=(0, 0))
    return out / h**order


def curve_deriv(points: np.ndarray, h: float, order: int = 1, closed: bool = True) -> np.ndarray:
    """Derivative of curve samples with respect to the grid parameter."""
    if closed:
        d = hier.spectral_deriv(np.moveaxis(points, 0, -1), h * points.shape[0], order)
        return np.ascontiguousarray(np.moveaxis(d, -1, 0).real)
    return fd_deriv_open(np.asarray(points, float), h, order)


def integrate_tangent(e0: np.ndarray, h: float, closed: bool, start=None) -> np.ndarray:
    """Curve with prescribed start whose parameter derivative is e0."""
    n = e0.shape[0]
    if closed:
        L = n * h
        mean = e0.mean(axis=0)
        x = (np.arange(n) * h)[:, None]
        k = np.fft.fftfreq(n, d=1.0 / n)
        ik = 2j * np.pi * k / L
        ik[0] = 1.0
        spec = np.fft.fft(e0 - mean, axis=0) / ik[:, None]
        spec[0] = 0.0
        per = np.fft.ifft(spec, axis=0).real
        out = mean[None, :] * x + per - per[0]
    else:
        x = np.arange(n) * h
        spl = make_interp_spline(x, e0, k=min(5, n - 1), axis=0)
        out = spl.antiderivative()(x)
        out = out - out[0]
    if start is not None:
        out = out + np.asarray(start, float)[None, :]
    return out


# ---------------------------------------------------------------------------
# curves and frame fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteCurve:
    """Uniformly sampled curve; ``h`` is the parameter step.

    Arc-length sampling means <gamma_x, gamma_x> = speed_sign, with
    speed_sign = -1 for time-like curves in the (-++) metric and +1
    otherwise.
    """

    points: np.ndarray
    h: float
    closed: bool = True
    metric: Metric = Metric.EUCLIDEAN
    speed_sign: int = 1

    def __post_init__(self):
        object.__setattr__(
            self, "points", np.ascontiguousarray(np.asarray(self.points, float))
        )

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def L(self) -> float:
        return self.n * self.h if self.closed else (self.n - 1) * self.h

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def deriv(self, order: int = 1) -> np.ndarray:
        return curve_deriv(self.points, self.h, order, self.closed)

    def speed_residual(self) -> float:
        g = self.deriv(1)
        return max_abs(metric_dot(g, g, self.metric) - self.speed_sign)


@dataclass
class FrameField:
    """Moving frame samples along a curve; columns of ``frames`` are e0, e1, e2."""

    kind: str
    curve: DiscreteCurve
    frames: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    c0: float | None = None
    extras: dict = field(default_factory=dict)

    @property
    def e0(self) -> np.ndarray:
        return self.frames[:, :, 0]

    @property
    def e1(self) -> np.ndarray:
        return self.frames[:, :, 1]

    @property
    def e2(self) -> np.ndarray:
        return self.frames[:, :, 2]

    def connection(self) -> np.ndarray:
        """g^-1 g_x along the curve.

        Local differences are used even on closed curves: frames with
        normal monodromy are not periodic fields.
        """
        gx = fd_deriv_open(self.frames, self.curve.h, 1)
        return np.linalg.inv(self.frames) @ gx


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _double_reflection_step(p0, p1, t0, t1, n0):
    """Rotation-minimizing transport of the normal n0 from (p0, t0) to (p1, t1)."""
    v1 = p1 - p0
    c1 = v1 @ v1
    if c1 == 0.0:
        return n0.copy()
    nL = n0 - (2.0 / c1) * (v1 @ n0) * v1
    tL = t0 - (2.0 / c1) * (v1 @ t0) * v1
    v2 = t1 - tL
    c2 = v2 @ v2
    if c2 < 1e-30:
        return nL
    return nL - (2.0 / c2) * (v2 @ nL) * v2


def _default_initial_normal(t0: np.ndarray, initial_normal=None) -> np.ndarray:
    if initial_normal is not None:
        ref = np.asarray(initial_normal, float)
    else:
        ref = np.array([0.0, 0.0, 1.0])
        if np.linalg.norm(np.cross(ref, t0)) < 1e-6:
            ref = np.array([0.0, 1.0, 0.0])
    n = ref - (ref @ t0) * t0
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise DegenerateTangent("initial normal parallel to the tangent")
    return n / norm


def build_pframe(curve: DiscreteCurve, initial_normal=None) -> FrameField:
    """Parallel orthonormal frame (e0, e1, e2) along a Euclidean curve.

    The normal pair is transported with the double-reflection scheme, which
    keeps the frame exactly orthonormal and minimizes spurious rotation.
    Principal curvatures are k_i = <(e0)_x, e_i>.  The initial normal
    defaults to the z axis projected off the tangent, falling back to the
    y axis when nearly parallel; the frame is unique up to one constant
    rotation of the normal plane.
    """
    if curve.metric is not Metric.EUCLIDEAN:
        raise FrameError("p-frames are built for Euclidean curves")
    pts = curve.points
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if seg.size and float(seg.min()) < 0.5 * curve.h:
        raise DegenerateTangent("consecutive samples closer than h/2")
    e0 = _normalize(curve.deriv(1))
    n = curve.n
    e1 = np.empty_like(e0)
    e1[0] = _default_initial_normal(e0[0], initial_normal)
    for i in range(n - 1):
        nxt = _double_reflection_step(pts[i], pts[i + 1], e0[i], e0[i + 1], e1[i])
        nxt -= (nxt @ e0[i + 1]) * e0[i + 1]
        e1[i + 1] = nxt / np.linalg.norm(nxt)
    e2 = np.cross(e0, e1)
    de0 = curve_deriv(e0, curve.h, 1, curve.closed)
    k1 = np.einsum("ni,ni->n", de0, e1)
    k2 = np.einsum("ni,ni->n", de0, e2)
    frames = np.stack([e0, e1, e2], axis=-1)
    return FrameField("pframe", curve, frames, k1, k2)


def hasimoto(curve: DiscreteCurve, initial_normal=None) -> hier.PotentialField:
    """Complex curvature potential q = (k1 + i k2)/2 of a Euclidean curve.

    Defined up to one global phase (the parallel frame is unique up to a
    constant rotation of the normal plane); comparisons should be phase
    aligned first.
    """
    pf = build_pframe(curve, initial_normal)
    q = 0.5 * (pf.k1 + 1j * pf.k2)
    return hier.PotentialField(Flavor.SU2, curve.n * curve.h, q)


def closed_curve_potential(curve: DiscreteCurve) -> tuple[hier.PotentialField, float]:
    """Periodic curvature potential of a closed curve plus its twist rate.

    The parallel-frame potential of a closed curve with normal holonomy is
    not periodic; the twisted frame removes the monodromy, so its complex
    curvature is a genuinely periodic field suitable for spectral work.
    Returns (potential, c0) with c0 the twist rate; the parallel-frame
    potential is exp(i c0 x) times the periodic one.
    """
    hf = build_periodic_hframe(curve)
    q = 0.5 * (hf.k1 + 1j * hf.k2)
    return hier.PotentialField(Flavor.SU2, curve.n * curve.h, q), float(hf.c0)


def frenet_data(curve: DiscreteCurve) -> tuple[np.ndarray, np.ndarray]:
    """Curvature and torsion (convention b_x = -tau n) of a Euclidean curve."""
    g1 = curve.deriv(1)
    g2 = curve.deriv(2)
    g3 = curve.deriv(3)
    if float(np.min(np.einsum("ni,ni->n", g2, g2))) < 1e-16:
        raise FrenetUndefined("curvature vanishes somewhere on the curve")
    cr = np.cross(g1, g2)
    denom = np.einsum("ni,ni->n", cr, cr)
    k = np.linalg.norm(cr, axis=1) / np.linalg.norm(g1, axis=1) ** 3
    tau = np.einsum("ni,ni->n", cr, g3) / denom
    return k, tau


def holonomy(curve: DiscreteCurve) -> float:
    """Angle m of the normal transport monodromy R(m) around a closed curve.

    For curves with nonvanishing curvature this equals minus the torsion
    integral (mod 2 pi); rigid motions leave it unchanged.
    """
    if not curve.closed:
        raise FrameError("holonomy needs a closed curve")
    pf = build_pframe(curve)
    e1_end = _double_reflection_step(
        curve.points[-1], curve.points[0], pf.e0[-1], pf.e0[0], pf.e1[-1]
    )
    e1_end -= (e1_end @ pf.e0[0]) * pf.e0[0]
    e1_end /= np.linalg.norm(e1_end)
    return float(np.arctan2(e1_end @ pf.e2[0], e1_end @ pf.e1[0]))


def build_periodic_hframe(curve: DiscreteCurve) -> FrameField:
    """Frame that closes up on a closed curve by twisting the p-frame.

    The normal pair is rotated by the linear angle c0 * x with
    c0 = -(holonomy angle)/L, which cancels the monodromy; the twisted
    complex curvature exp(-i c0 x)(k1 + i k2) is periodic and the normal
    connection acquires the constant block entry c0.
    """
    m = holonomy(curve)
    L = curve.n * curve.h
    c0 = -m / L
    pf = build_pframe(curve)
    ang = c0 * curve.x
    cos, sin = np.cos(ang), np.sin(ang)
    v1 = cos[:, None] * pf.e1 + sin[:, None] * pf.e2
    v2 = -sin[:, None] * pf.e1 + cos[:, None] * pf.e2
    kc = (pf.k1 + 1j * pf.k2) * np.exp(-1j * ang)
    frames = np.stack([pf.e0, v1, v2], axis=-1)
    return FrameField("hframe", curve, frames, kc.real, kc.imag, c0=c0)


# ---------------------------------------------------------------------------
# null parallel frames for space-like curves in the x^2 + yz metric
# ---------------------------------------------------------------------------


def _null_normal_basis(e0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """A null basis (e1, e2) of the normal plane with <e1, e2> = 1/2."""
    metric = Metric.LORENTZ_NULL
    cols = []
    for t in np.eye(3):
        v = t - (metric_dot(t, e0, metric) / metric_dot(e0, e0, metric)) * e0
        if np.linalg.norm(v) > 1e-8:
            cols.append(v)
    b1 = cols[0]
    b2 = None
    for v in cols[1:]:
        if np.linalg.matrix_rank(np.stack([b1, v]), tol=1e-8) == 2:
            b2 = v
            break
    if b2 is None:
        raise NotSpacelike("could not span the normal plane")
    g = np.array(
        [
            [metric_dot(b1, b1, metric), metric_dot(b1, b2, metric)],
            [metric_dot(b1, b2, metric), metric_dot(b2, b2, metric)],
        ]
    )
    w, vecs = np.linalg.eigh(g)
    idx = np.argsort(w)[::-1]  # positive eigenvalue first
    w, vecs = w[idx], vecs[:, idx]
    wp = (vecs[0, 0] * b1 + vecs[1, 0] * b2) / np.sqrt(abs(w[0]))
    wm = (vecs[0, 1] * b1 + vecs[1, 1] * b2) / np.sqrt(abs(w[1]))
    e1 = 0.5 * (wp + wm)
    e2 = 0.5 * (wp - wm)
    if e1[0] < 0 or (e1[0] == 0 and e1[1] < 0):
        e1, e2 = -e1, -e2
    return e1, e2


def _renormalize_null_frame(tangent, e1, e2):
    metric = Metric.LORENTZ_NULL
    e0 = tangent / np.sqrt(metric_dot(tangent, tangent, metric))
    e1 = e1 - metric_dot(e1, e0, metric) * e0
    e2 = e2 - metric_dot(e2, e0, metric) * e0
    s12 = metric_dot(e1, e2, metric)
    e1 = e1 - (metric_dot(e1, e1, metric) / (2.0 * s12)) * e2
    s12 = metric_dot(e1, e2, metric)
    e2 = e2 - (metric_dot(e2, e2, metric) / (2.0 * s12)) * e1
    scale = np.sqrt(abs(2.0 * metric_dot(e1, e2, metric)))
    return e0, e1 / scale, e2 / scale


def build_null_pframe(curve: DiscreteCurve, k2_at_start: float | None = None) -> FrameField:
    """Parallel null normal frame along a space-like curve in R^{2,1}.

    The frame keeps g^t D g = D for the x^2 + yz Gram matrix, the normal
    pair stays null with <e1, e2> = 1/2, and the connection has the
    parallel shape (normal derivatives purely tangential).  Principal
    curvatures come from H = k1 e1 + k2 e2, i.e. k1 = 2<H, e2> and
    k2 = 2<H, e1>.  The frame is unique up to the constant gauge
    (e1, e2) -> (c e1, e2 / c) which maps (k1, k2) to (k1 / c, c k2); pass
    ``k2_at_start`` to pin it (the product k1 k2 is gauge invariant).
    """
    metric = Metric.LORENTZ_NULL
    if curve.metric is not metric:
        raise FrameError("null p-frames live in the x^2 + yz metric")
    g1 = curve.deriv(1)
    sp = metric_dot(g1, g1, metric)
    if float(np.min(sp)) <= 0.0:
        raise NotSpacelike("curve is not space-like everywhere")
    Hfield = curve.deriv(2)
    n = curve.n
    h = curve.h

    def blend(data, i_float):
        i0 = int(np.floor(i_float))
        w = i_float - i0
        i1 = min(i0 + 1, n - 1)
        return (1.0 - w) * data[i0] + w * data[i1]

    def rhs(e0, e1, e2, i_float):
        Hv = blend(Hfield, i_float)
        k1 = 2.0 * metric_dot(Hv, e2, metric)
        k2 = 2.0 * metric_dot(Hv, e1, metric)
        return (k1 * e1 + k2 * e2, -(k2 / 2.0) * e0, -(k1 / 2.0) * e0)

    E0 = np.empty((n, 3))
    E1 = np.empty((n, 3))
    E2 = np.empty((n, 3))
    e0 = g1[0] / np.sqrt(sp[0])
    e1_init, e2_init = _null_normal_basis(e0)
    if k2_at_start is not None:
        # labeling of the two null directions is a choice; pick the one
        # that makes the requested normalization k2(x0) possible
        k2_a = 2.0 * metric_dot(Hfield[0], e1_init, metric)
        k2_b = 2.0 * metric_dot(Hfield[0], e2_init, metric)
        if abs(k2_b) > abs(k2_a):
            e1_init, e2_init = e2_init, e1_init
    E0[0], E1[0], E2[0] = e0, e1_init, e2_init
    for i in range(n - 1):
        y = (E0[i], E1[i], E2[i])
        k1s = rhs(*y, i)
        y2 = tuple(y[m] + 0.5 * h * k1s[m] for m in range(3))
        k2s = rhs(*y2, i + 0.5)
        y3 = tuple(y[m] + 0.5 * h * k2s[m] for m in range(3))
        k3s = rhs(*y3, i + 0.5)
        y4 = tuple(y[m] + h * k3s[m] for m in range(3))
        k4s = rhs(*y4, i + 1.0)
        new = tuple(
            y[m] + (h / 6.0) * (k1s[m] + 2 * k2s[m] + 2 * k3s[m] + k4s[m])
            for m in range(3)
        )
        E0[i + 1], E1[i + 1], E2[i + 1] = _renormalize_null_frame(g1[i + 1], new[1], new[2])
    frames = np.stack([E0, E1, E2], axis=-1)
    k1 = 2.0 * metric_dot(Hfield, E2, metric)
    k2 = 2.0 * metric_dot(Hfield, E1, metric)
    if k2_at_start is not None:
        if abs(k2[0]) < 1e-12:
            raise FrameError("cannot pin the gauge: k2 vanishes at the base point")
        c = k2_at_start / k2[0]
        frames = np.stack([E0, c * E1, E2 / c], axis=-1)
        k1, k2 = k1 / c, c * k2
    return FrameField("null_pframe", curve, frames, k1, k2)


def null_frame_gauge(ff: FrameField, c: float) -> FrameField:
    """Constant gauge (e1, e2) -> (c e1, e2 / c) of a null parallel frame."""
    frames = np.stack([ff.e0, c * ff.e1, ff.e2 / c], axis=-1)
    return FrameField(ff.kind, ff.curve, frames, ff.k1 / c, c * ff.k2)


def frame_metric_residual(ff: FrameField) -> float:
    """Deviation of the frame Gram matrix from the metric Gram matrix."""
    from .liealg import _METRIC_GRAM

    metric = ff.curve.metric
    gram = np.einsum(
        "nia,ij,njb->nab", ff.frames, _METRIC_GRAM[metric], ff.frames
    )
    return max_abs(gram - _METRIC_GRAM[metric])


# ---------------------------------------------------------------------------
# extended frames of potential trajectories
# ---------------------------------------------------------------------------


def _restore_group(E: np.ndarray, flavor: Flavor, lam: complex) -> np.ndarray:
    """Project drifting frame samples back to the group.

    Unitary polar projection applies only where the frame actually is
    unitary, i.e. SU2 at real lambda; elsewhere only the determinant (a
    constant of the motion) is renormalized and reality is monitored.
    """
    if flavor is Flavor.SU2 and abs(lam.imag) < 1e-12:
        u, _, vt = np.linalg.svd(E)
        E = u @ vt
    d = det2(E)
    return E / np.sqrt(d)[..., None, None]


@dataclass
class FrameSamples:
    """Frame values and the lambda-derivative channel on a (t, x) grid."""

    E: np.ndarray
    Elam: np.ndarray


def _b_field(series: hier.QSeries, j: int, lam: complex) -> np.ndarray:
    n = series.u.n
    B = np.zeros((n, 2, 2), dtype=complex)
    for i in range(-(j - 1), 2):
        B = B + series[i] * lam ** (j - 1 + i)
    return B


def _b_dlam_field(series: hier.QSeries, j: int, lam: complex) -> np.ndarray:
    n = series.u.n
    out = np.zeros((n, 2, 2), dtype=complex)
    for i in range(-(j - 1), 2):
        p = j - 1 + i
        if p >= 1:
            out = out + series[i] * (p * lam ** (p - 1))
    return out


def _thread_count() -> int:
    """Internal parallelism cap from FILAMENT_LAB_THREADS (default 1)."""
    import os

    val = os.environ.get("FILAMENT_LAB_THREADS")
    if not val:
        return 1
    try:
        return max(1, int(val))
    except ValueError:
        return 1


def _lagrange_weights(nodes: np.ndarray, tau: float) -> np.ndarray:
    """Lagrange interpolation weights at tau for the given nodes."""
    m = len(nodes)
    w = np.ones(m)
    for i in range(m):
        for k in range(m):
            if k != i:
                w[i] *= (tau - nodes[k]) / (nodes[i] - nodes[k])
    return w


def _t_march(Bnodes, Blnodes, dt, E0s, El0s, flavor, lam):
    """Magnus-4 march in t; B values interpolated at Gauss nodes.

    ``Bnodes`` has shape (nt, ..., 2, 2); the state is propagated for every
    trailing stack entry at once and all stored states are returned.
    """
    from .liealg import expm2_traceless_deriv

    nt = Bnodes.shape[0]
    E = np.empty_like(Bnodes)
    El = np.empty_like(Bnodes)
    E[0] = E0s
    El[0] = El0s
    g_off = np.array([0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0])
    deg = min(5, nt)
    ct = np.sqrt(3.0) / 12.0 * dt * dt
    for i in range(nt - 1):
        lo = min(max(i - 2, 0), nt - deg)
        nodes = np.arange(lo, lo + deg)
        vals = []
        for g in g_off:
            w = _lagrange_weights(nodes.astype(float), i + g)
            vals.append(
                (
                    np.tensordot(w, Bnodes[nodes], axes=(0, 0)),
                    np.tensordot(w, Blnodes[nodes], axes=(0, 0)),
                )
            )
        (b1, bl1), (b2, bl2) = vals
        # right-multiplication convention: the commutator enters as [B1, B2]
        omega = 0.5 * dt * (b1 + b2) + ct * (b1 @ b2 - b2 @ b1)
        domega = 0.5 * dt * (bl1 + bl2) + ct * (
            bl1 @ b2 - b2 @ bl1 + b1 @ bl2 - bl2 @ b1
        )
        p, dp = expm2_traceless_deriv(omega, domega)
        El[i + 1] = El[i] @ p + E[i] @ dp
        E[i + 1] = _restore_group(E[i] @ p, flavor, lam)
    return E, El


def _shifted_potentials(slices, closed, offsets, cache):
    key = ("shifted", tuple(np.round(offsets, 14)))
    if key not in cache:
        nt = len(slices)
        n = slices[0].n
        xs = slices[0].x
        sq = np.empty((len(offsets), nt, n), dtype=complex)
        sr = np.empty((len(offsets), nt, n), dtype=complex)
        for io, off in enumerate(offsets):
            for it, u in enumerate(slices):
                if closed:
                    sq[io, it] = _fft_shift_samples(u.q, u.L, off)
                    sr[io, it] = _fft_shift_samples(u.r_values(), u.L, off)
                else:
                    xq = np.clip(xs + off, xs[0], xs[-1])
                    sq[io, it] = make_interp_spline(xs, u.q, k=5)(xq)
                    sr[io, it] = make_interp_spline(xs, u.r_values(), k=5)(xq)
        cache[key] = (sq, sr)
    return cache[key]


def _x_march(shifted_q, shifted_r, rows, h, nsub, a, lam, E0s, El0s, flavor):
    """Magnus-4 march in x for the given time rows, all at once.

    ``shifted_q/r`` hold the potential at the Gauss nodes of every substep,
    shape (2 nsub, nt, nx); the state arrays have one leading entry per
    requested row.
    """
    from .liealg import expm2_traceless_deriv

    n = shifted_q.shape[-1]
    nrows = len(rows)
    E = np.empty((nrows, n, 2, 2), dtype=complex)
    El = np.empty((nrows, n, 2, 2), dtype=complex)
    E[:, 0] = E0s
    El[:, 0] = El0s
    hs = h / nsub
    c_comm = np.sqrt(3.0) / 12.0 * hs * hs

    def pot_matrix(io, ix):
        m = np.zeros((nrows, 2, 2), dtype=complex)
        m[:, 0, 1] = shifted_q[io][rows, ix]
        m[:, 1, 0] = shifted_r[io][rows, ix]
        return m

    for ix in range(n - 1):
        y, yl = E[:, ix], El[:, ix]
        for s in range(nsub):
            a1m = pot_matrix(2 * s, ix) + lam * a
            a2m = pot_matrix(2 * s + 1, ix) + lam * a
            # right-multiplication convention: the commutator enters as [A1, A2]
            omega = 0.5 * hs * (a1m + a2m) + c_comm * (a1m @ a2m - a2m @ a1m)
            # d/dlam: the lambda parts cancel inside the commutator
            domega = hs * a + c_comm * ((a1m - a2m) @ a - a @ (a1m - a2m))
            p, dp = expm2_traceless_deriv(omega, domega)
            yl = yl @ p + y @ dp
            y = y @ p
        E[:, ix + 1] = _restore_group(y, flavor, lam)
        El[:, ix + 1] = yl
    return E, El


def _integrate_frame_single(slices, dt, j, lam, E0, closed, nsub=2,
                            cache=None, order="t-first") -> FrameSamples:
    """Integrate E and dE/dlam for one lambda over the whole (t, x) grid.

    Fourth-order Magnus stepping with exact traceless 2x2 exponentials in
    both directions: determinants stay one identically and constant
    coefficients (vacuum frames) integrate exactly.  Potential values at
    the spatial Gauss nodes come from spectral shifts (periodic) or
    quintic splines (open line data); time Gauss nodes from quartic
    interpolation over five stored slices.  ``order`` picks which leg runs
    first from the base point; the two orders agree up to the flatness
    residual of the sampled pair.
    """
    flavor = slices[0].flavor
    a = flavor_a(flavor)
    nt = len(slices)
    if nt == 2:
        raise ValueError("time sampling needs a single slice or at least three")
    n = slices[0].n
    L = slices[0].L
    h = L / n
    lam = complex(lam)

    if callable(E0):
        E_start = np.asarray(E0(lam), dtype=complex)
    elif E0 is None:
        E_start = I2.copy()
    else:
        E_start = np.asarray(E0, dtype=complex)

    if cache is None:
        cache = {}
    if "series" not in cache:
        cache["series"] = [hier.q_series(u, max(j - 1, 0)) for u in slices]
    series_list = cache["series"]

    gauss = np.array([0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0])
    hs = h / nsub
    offsets = [(s + g) * hs for s in range(nsub) for g in gauss]
    shifted_q, shifted_r = _shifted_potentials(slices, closed, offsets, cache)

    zero2 = np.zeros((2, 2), dtype=complex)
    if order == "t-first":
        if nt > 1:
            Bcol = np.stack([_b_field(s, j, lam)[:1] for s in series_list])
            Blcol = np.stack([_b_dlam_field(s, j, lam)[:1] for s in series_list])
            Ecol, Elcol = _t_march(Bcol, Blcol, dt, E_start, zero2, flavor, lam)
            Ecol, Elcol = Ecol[:, 0], Elcol[:, 0]
        else:
            Ecol = E_start[None]
            Elcol = zero2[None]
        E, El = _x_march(shifted_q, shifted_r, np.arange(nt), h, nsub, a, lam,
                         Ecol, Elcol, flavor)
        return FrameSamples(E, El)
    if order != "x-first":
        raise ValueError("order must be 't-first' or 'x-first'")
    Erow, Elrow = _x_march(shifted_q, shifted_r, np.array([0]), h, nsub, a,
                           lam, E_start[None], zero2[None], flavor)
    Erow, Elrow = Erow[0], Elrow[0]
    if nt == 1:
        return FrameSamples(Erow[None], Elrow[None])
    Ball = np.stack([_b_field(s, j, lam) for s in series_list])
    Blall = np.stack([_b_dlam_field(s, j, lam) for s in series_list])
    E, El = _t_march(Ball, Blall, dt, Erow, Elrow, flavor, lam)
    return FrameSamples(E, El)


def _fft_shift_samples(f: np.ndarray, L: float, shift: float) -> np.ndarray:
    """Values of periodic samples at x + shift (band limited)."""
    n = f.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    phase = np.exp(2j * np.pi * k * shift / L)
    if n % 2 == 0:
        phase[n // 2] = np.cos(2 * np.pi * (n // 2) * shift / L)
    return np.fft.ifft(np.fft.fft(f, axis=-1) * phase, axis=-1)


def path_independence_gap(slices, dt, j, lam, closed=True, E0=None, nsub=2) -> float:
    """Gap between integrating t-then-x and x-then-t from the base point.

    Vanishes with the flatness residual of the sampled connection pair, so
    it quantifies how consistently a trajectory determines its frame.
    """
    cache: dict = {}
    A = _integrate_frame_single(slices, dt, j, lam, E0, closed, nsub, cache, "t-first")
    B = _integrate_frame_single(slices, dt, j, lam, E0, closed, nsub, cache, "x-first")
    return max_abs(A.E - B.E)


class LaxFrame:
    """Extended frame of a sampled potential trajectory.

    Stores E and dE/dlam on the (t, x) grid for a list of spectral
    parameters and integrates additional parameters on demand, so pole
    evaluations of dressing transforms never interpolate stored samples.
    """

    def __init__(self, slices, dt, j, lambdas, E0=None, closed=True):
        self.slices = list(slices)
        self.dt = float(dt)
        self.j = int(j)
        self.flavor = self.slices[0].flavor
        self.closed = closed
        self._E0 = E0
        self._samples: dict[complex, FrameSamples] = {}
        self._cache: dict = {}
        self.meta: dict = {}
        lambdas = [complex(lam) for lam in lambdas]
        workers = _thread_count()
        if workers > 1 and len(lambdas) > 1:
            # warm the lambda-independent caches, then run columns parallel
            self.at(lambdas[0])
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                rest = lambdas[1:]
                results = list(
                    pool.map(
                        lambda lam: _integrate_frame_single(
                            self.slices, self.dt, self.j, lam, self._E0,
                            self.closed, cache=self._cache,
                        ),
                        rest,
                    )
                )
            for lam, res in zip(rest, results):
                self._samples[lam] = res
        else:
            for lam in lambdas:
                self.at(lam)

    @property
    def xs(self) -> np.ndarray:
        return self.slices[0].x

    @property
    def ts(self) -> np.ndarray:
        return np.arange(len(self.slices)) * self.dt

    @property
    def lambdas(self):
        return sorted(self._samples, key=lambda z: (z.real, z.imag))

    def at(self, lam: complex) -> FrameSamples:
        lam = complex(lam)
        if lam not in self._samples:
            self._samples[lam] = _integrate_frame_single(
                self.slices, self.dt, self.j, lam, self._E0, self.closed,
                cache=self._cache,
            )
        return self._samples[lam]

    def det_drift(self) -> float:
        drift = 0.0
        for s in self._samples.values():
            d = det2(s.E)
            drift = max(drift, max_abs(d - d[0, 0]))
        return drift

    def reality(self) -> float:
        res = 0.0
        for lam in list(self.lambdas):
            lam = complex(lam)
            if abs(lam.imag) > 1e-12:
                continue
            xm = self.at(-lam).E if (self.flavor is Flavor.KDV and abs(lam) > 1e-13) else None
            res = max(res, reality_residual(self.at(lam).E, self.flavor, lam, None, xm))
        return res


def integrate_lax_frame(
    slices,
    dt: float,
    j: int,
    lambdas,
    E0=None,
    closed: bool = True,
    flatness_gate: float = 1e-3,
    reality_gate: float = 1e-4,
) -> LaxFrame:
    """Extended frame of a potential trajectory at the given parameters.

    ``slices`` is a time-ordered list of potentials with uniform spacing
    ``dt`` (a single slice integrates the x-leg only).  Sampled flatness of
    the connection pair is checked first, since integrating a visibly
    non-flat pair would give a path dependent frame; the reality residual
    of the result is verified at the stored real parameters.
    """
    slices = list(slices)
    if len(slices) >= 5 and closed:
        worst = 0.0
        for lam in list(lambdas)[:3]:
            worst = max(worst, hier.flatness_of_trajectory(slices, dt, j, complex(lam)))
        if worst > flatness_gate:
            raise FlatnessTooLarge(
                f"trajectory flatness residual {worst:.3e} exceeds {flatness_gate:.1e}"
            )
    frame = LaxFrame(slices, dt, j, lambdas, E0, closed)
    res = frame.reality()
    if res > reality_gate:
        raise RealityDrift(f"reality residual {res:.3e} exceeds {reality_gate:.1e}")
    frame.meta["reality"] = res
    frame.meta["det_drift"] = frame.det_drift()
    return frame


# ---------------------------------------------------------------------------
# Pohlmeyer-Sym reconstruction
# ---------------------------------------------------------------------------


def _project_algebra(x: np.ndarray, flavor: Flavor) -> np.ndarray:
    if flavor is Flavor.SU2:
        return 0.5 * (x - dagger(x))
    if flavor is Flavor.SU11:
        J = np.diag([1.0, -1.0]).astype(complex)
        return 0.5 * (x - J @ dagger(x) @ J)
    return x.real.astype(complex)


def _fft_shift_field(f: np.ndarray, L: float, shift: float) -> np.ndarray:
    """Evaluate periodic samples at x + shift via the spectral phase."""
    n = f.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    phase = np.exp(2j * np.pi * k * shift / L)
    if n % 2 == 0:
        phase[n // 2] = np.cos(2 * np.pi * (n // 2) * shift / L)
    return np.fft.ifft(np.fft.fft(f, axis=-1) * phase, axis=-1)


def sym_curve(frame, lam0: float, closed_curve: bool = False):
    """Curves and attached frames from a frame family by the Sym formula.

    gamma is the traceless part of dE/dlam E^-1 at lam0, read in the
    flavor's algebra coordinates; for lam0 != 0 the space coordinate is
    shifted to x - 2 lam0 t (one-parameter version of the construction,
    as used for closed curves with nontrivial normal holonomy).  The
    attached frame is the adjoint frame of E at lam0; the first column is
    the unit tangent of the reconstructed curve.

    Returns (curves, frame_fields) as lists over the time grid.
    """
    lam0 = float(lam0)
    s = frame.at(lam0)
    if s.Elam is None:
        raise MissingDerivativeChannel("frame carries no dE/dlam channel")
    flavor = frame.flavor
    xs = frame.xs
    ts = frame.ts
    h = float(xs[1] - xs[0]) if len(xs) > 1 else 1.0
    alpha = s.Elam @ inv2(s.E)
    tr = trace2(alpha)
    alpha = alpha - 0.5 * tr[..., None, None] * I2
    alpha = _project_algebra(alpha, flavor)
    vec = lie_to_vec(alpha, flavor, tol=1e-4)
    Rfull = adjoint_frame(s.E, flavor, tol=1e-4)
    metric = flavor_metric(flavor)
    sign = -1 if flavor is Flavor.SU11 else 1
    L = xs[-1] + h
    curves = []
    fields = []
    for it, t in enumerate(ts):
        pts = vec[it]
        R = Rfull[it]
        shift = -2.0 * lam0 * t
        if abs(shift) > 0:
            if closed_curve:
                pts = _fft_shift_field(pts.T, L, shift).T.real
                R = np.moveaxis(_fft_shift_field(np.moveaxis(R, 0, -1), L, shift).real, -1, 0)
            else:
                pts = make_interp_spline(xs, pts, k=5, axis=0)(np.clip(xs + shift, xs[0], xs[-1]))
                R = make_interp_spline(xs, R, k=5, axis=0)(np.clip(xs + shift, xs[0], xs[-1]))
        curve = DiscreteCurve(pts, h, closed=closed_curve, metric=metric, speed_sign=sign)
        de0 = curve_deriv(R[:, :, 0], h, 1, closed_curve)
        if flavor in (Flavor.SL2R, Flavor.KDV):
            k1 = 2.0 * metric_dot(de0, R[:, :, 2], metric)
            k2 = 2.0 * metric_dot(de0, R[:, :, 1], metric)
            kind = "null_pframe"
        else:
            s11 = metric_dot(R[:, :, 1], R[:, :, 1], metric)
            s22 = metric_dot(R[:, :, 2], R[:, :, 2], metric)
            k1 = metric_dot(de0, R[:, :, 1], metric) / s11
            k2 = metric_dot(de0, R[:, :, 2], metric) / s22
            kind = "pframe"
        fields.append(FrameField(kind, curve, R, k1, k2))
        curves.append(curve)
    return curves, fields


# ---------------------------------------------------------------------------
# alignment and resampling utilities
# ---------------------------------------------------------------------------


def rigid_align(moving: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, float]:
    """Best Euclidean rigid alignment (Kabsch, no scaling).

    Returns the aligned copy of ``moving`` and the RMS distance to
    ``target`` after alignment.
    """
    mu_m = moving.mean(axis=0)
    mu_t = target.mean(axis=0)
    a = moving - mu_m
    b = target - mu_t
    u, _, vt = np.linalg.svd(a.T @ b)
    d = np.sign(np.linalg.det(u @ vt))
    R = (u @ np.diag([1.0, 1.0, d]) @ vt).T
    aligned = a @ R.T + mu_t
    rms = float(np.sqrt(np.mean(np.sum((aligned - target) ** 2, axis=1))))
    return aligned, rms


def _fourier_eval(points: np.ndarray, L: float, targets: np.ndarray) -> np.ndarray:
    """Evaluate closed-curve samples at arbitrary parameters (band limited)."""
    n = points.shape[0]
    spec = np.fft.fft(points, axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    ph = np.exp(2j * np.pi * np.outer(targets / L, k))
    if n % 2 == 0:
        # replace the Nyquist phase by its real (symmetric) interpolant
        ph[:, n // 2] = np.cos(2 * np.pi * (n // 2) * targets / L)
    return (ph @ spec).real


def _arclength_at(curve: DiscreteCurve, xq: np.ndarray, speed: np.ndarray) -> np.ndarray:
    """Arc length at arbitrary parameters via the spectral antiderivative."""
    n = curve.n
    L = curve.L
    mean = float(np.mean(speed))
    k = np.fft.fftfreq(n, d=1.0 / n)
    ik = 2j * np.pi * k / L
    ik[0] = 1.0
    spec = np.fft.fft(speed - mean) / ik
    spec[0] = 0.0
    per_nodes = np.fft.ifft(spec).real
    ph = np.exp(2j * np.pi * np.outer(xq / L, k))
    if n % 2 == 0:
        ph[:, n // 2] = np.cos(2 * np.pi * (n // 2) * xq / L)
    per = (ph @ (spec / n)).real
    return mean * xq + per - per_nodes[0]


def _speed_at(curve: DiscreteCurve, xq: np.ndarray, speed: np.ndarray) -> np.ndarray:
    n = curve.n
    L = curve.L
    spec = np.fft.fft(speed) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    ph = np.exp(2j * np.pi * np.outer(xq / L, k))
    if n % 2 == 0:
        ph[:, n // 2] = np.cos(2 * np.pi * (n // 2) * xq / L)
    return (ph @ spec).real


def resample_arclength(curve: DiscreteCurve) -> tuple[DiscreteCurve, float]:
    """Resample a Euclidean curve to uniform arc length.

    Returns the resampled curve and the speed deviation max||gamma_x| - 1|
    found before resampling.  Closed curves are evaluated spectrally with
    a Newton inversion of the arc-length function; open curves use quintic
    splines and keep their endpoints.
    """
    pts = curve.points
    n = curve.n
    if curve.closed:
        L = curve.L
        d = curve.deriv(1)
        speed = np.linalg.norm(d, axis=1)
        total = float(np.mean(speed) * L)
        dev = float(np.max(np.abs(speed - 1.0)))
        s_nodes = _arclength_at(curve, curve.x, speed)
        targets = np.arange(n) * (total / n)
        if dev < 1e-5:
            # tiny deviation: second-order correction at the nodes instead
            # of the dense Fourier evaluation (the shifts are O(dev))
            delta = (targets - s_nodes) / speed
            d2 = curve.deriv(2)
            new_pts = pts + delta[:, None] * d + 0.5 * (delta**2)[:, None] * d2
            return (
                DiscreteCurve(new_pts, total / n, True, curve.metric, curve.speed_sign),
                dev,
            )
        xg = np.interp(targets, s_nodes, curve.x)
        for _ in range(3):
            sp = np.maximum(_speed_at(curve, xg, speed), 1e-12)
            xg = xg - (_arclength_at(curve, xg, speed) - targets) / sp
        new_pts = _fourier_eval(pts, L, xg)
        return DiscreteCurve(new_pts, total / n, True, curve.metric, curve.speed_sign), dev
    x = curve.x
    spl = make_interp_spline(x, pts, k=min(5, n - 1), axis=0)
    dspl = spl.derivative()
    dev = float(np.max(np.abs(np.linalg.norm(dspl(x), axis=1) - 1.0)))
    xf = np.linspace(x[0], x[-1], 8 * n)
    speed_f = np.linalg.norm(dspl(xf), axis=1)
    sp_spl = make_interp_spline(xf, speed_f, k=5)
    s_spl = sp_spl.antiderivative()
    total = float(s_spl(x[-1]))
    targets = np.linspace(0.0, total, n)
    xg = np.interp(targets, s_spl(xf), xf)
    for _ in range(3):
        xg = np.clip(xg - (s_spl(xg) - targets) / np.maximum(sp_spl(xg), 1e-12), x[0], x[-1])
    new_pts = spl(xg)
    return (
        DiscreteCurve(new_pts, total / (n - 1), False, curve.metric, curve.speed_sign),
        dev,
    )


# ---------------------------------------------------------------------------
# canonical test curves
# ---------------------------------------------------------------------------


def make_line(n: int, L: float, direction=(1.0, 0.0, 0.0), metric=Metric.EUCLIDEAN,
              speed_sign: int = 1, x0: float = 0.0) -> DiscreteCurve:
    d = np.asarray(direction, float)
    x = (np.arange(n) * (L / (n - 1)) + x0)[:, None]
    return DiscreteCurve(x * d[None, :], L / (n - 1), False, metric, speed_sign)


def make_circle(n: int, radius: float = 1.0) -> DiscreteCurve:
    L = 2 * np.pi * radius
    s = np.arange(n) * (L / n)
    pts = np.stack(
        [radius * np.cos(s / radius), radius * np.sin(s / radius), np.zeros(n)], axis=1
    )
    return DiscreteCurve(pts, L / n, True)


def make_helix(n: int, curvature: float, torsion: float, length: float) -> DiscreteCurve:
    """Arc-length helix with the given Frenet curvature and torsion.

    Positive torsion gives the right-handed helix in the b_x = -tau n
    convention.
    """
    w2 = curvature**2 + torsion**2
    a = curvature / w2
    b = torsion / w2
    om = np.sqrt(w2)
    s = np.linspace(0.0, length, n)
    pts = np.stack([a * np.cos(om * s), a * np.sin(om * s), b * om * s], axis=1)
    return DiscreteCurve(pts, s[1] - s[0], False)
