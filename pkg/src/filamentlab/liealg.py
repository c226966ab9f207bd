"""Exact 2x2 matrix algebra for the four real forms used by the lab.

Every flavor selects a real form of sl(2, C), an ordered basis of the real
form, and an invariant metric:

``SU2``
    a = diag(i, -i), b = [[0, 1], [-1, 0]], c = [[0, i], [i, 0]].
    Ordered frame (a, -c, b); metric <X, Y> = -tr(XY)/2 is Euclidean and
    the frame is right handed, so [X, Y] corresponds to twice the cross
    product of the coordinate vectors.
``SU11``
    a = diag(i, -i), b = [[0, 1], [1, 0]], c = [[0, i], [-i, 0]].
    Ordered frame (a, b, c); metric <X, Y> = tr(XY)/2 has signature (-++).
``SL2R``
    a = diag(1, -1), b = e12, c = e21.
    Ordered frame (a, b, c); metric <X, Y> = tr(XY)/2 gives the quadratic
    form x^2 + yz in frame coordinates (b and c are null).
``KDV``
    Shares the SL2R matrices and metric; the distinction only matters for
    reality conditions of lambda-families, which for KDV add an evenness
    constraint on phi(lambda)^-1 E(lambda) phi(lambda), phi = [[1, lam], [0, 1]].

"Vec3" coordinates are always coordinates in the flavor's ordered frame, so
``adjoint_frame`` of the identity is the 3x3 identity for every flavor and
the frame Gram matrix plays the role of the ambient metric.

All operations are pure and vectorized over leading array dimensions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class LieAlgError(Exception):
    pass


class ResidualTooLarge(LieAlgError):
    pass


class DegenerateBasis(LieAlgError):
    pass


class NotInGroup(LieAlgError):
    pass


class Flavor(enum.Enum):
    SU2 = "su2"
    SU11 = "su11"
    SL2R = "sl2r"
    KDV = "kdv"


class Metric(enum.Enum):
    """Ambient metric tag for frame coordinates."""

    EUCLIDEAN = "euclidean"
    LORENTZ_TIMELIKE = "lorentz(-++)"
    LORENTZ_NULL = "lorentz(x^2+yz)"


I2 = np.eye(2, dtype=complex)

_A_I = np.array([[1j, 0.0], [0.0, -1j]])
_A_R = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

_B_SU2 = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
_C_SU2 = np.array([[0.0, 1j], [1j, 0.0]])
_B_SU11 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_C_SU11 = np.array([[0.0, 1j], [-1j, 0.0]])
_B_SL2R = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
_C_SL2R = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)

_J = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

_GRAM = {
    Flavor.SU2: np.eye(3),
    Flavor.SU11: np.diag([-1.0, 1.0, 1.0]),
    Flavor.SL2R: np.array([[1.0, 0, 0], [0, 0, 0.5], [0, 0.5, 0]]),
    Flavor.KDV: np.array([[1.0, 0, 0], [0, 0, 0.5], [0, 0.5, 0]]),
}

_METRIC_GRAM = {
    Metric.EUCLIDEAN: np.eye(3),
    Metric.LORENTZ_TIMELIKE: np.diag([-1.0, 1.0, 1.0]),
    Metric.LORENTZ_NULL: np.array([[1.0, 0, 0], [0, 0, 0.5], [0, 0.5, 0]]),
}


@dataclass(frozen=True)
class BasisTriple:
    """The (a, b, c) matrices of a flavor plus its ordered frame and Gram."""

    flavor: Flavor
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def frame(self) -> np.ndarray:
        """Ordered frame as an array of three matrices, shape (3, 2, 2)."""
        if self.flavor is Flavor.SU2:
            return np.stack([self.a, -self.c, self.b])
        return np.stack([self.a, self.b, self.c])

    @property
    def gram(self) -> np.ndarray:
        return _GRAM[self.flavor]


def basis_triple(flavor: Flavor) -> BasisTriple:
    if flavor is Flavor.SU2:
        return BasisTriple(flavor, _A_I, _B_SU2, _C_SU2)
    if flavor is Flavor.SU11:
        return BasisTriple(flavor, _A_I, _B_SU11, _C_SU11)
    return BasisTriple(flavor, _A_R, _B_SL2R, _C_SL2R)


def flavor_a(flavor: Flavor) -> np.ndarray:
    """The constant diagonal element a of the flavor."""
    return _A_I if flavor in (Flavor.SU2, Flavor.SU11) else _A_R


def flavor_a1(flavor: Flavor) -> complex:
    """Scalar a1 with a = a1 * diag(1, -1)."""
    return 1j if flavor in (Flavor.SU2, Flavor.SU11) else 1.0


def flavor_metric(flavor: Flavor) -> Metric:
    if flavor is Flavor.SU2:
        return Metric.EUCLIDEAN
    if flavor is Flavor.SU11:
        return Metric.LORENTZ_TIMELIKE
    return Metric.LORENTZ_NULL


# ---------------------------------------------------------------------------
# elementary 2x2 helpers, vectorized over leading dimensions
# ---------------------------------------------------------------------------


def dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def trace2(x: np.ndarray) -> np.ndarray:
    return x[..., 0, 0] + x[..., 1, 1]


def det2(x: np.ndarray) -> np.ndarray:
    return x[..., 0, 0] * x[..., 1, 1] - x[..., 0, 1] * x[..., 1, 0]


def inv2(x: np.ndarray) -> np.ndarray:
    """Closed-form inverse of a stack of 2x2 matrices."""
    d = det2(x)
    out = np.empty_like(x)
    out[..., 0, 0] = x[..., 1, 1]
    out[..., 1, 1] = x[..., 0, 0]
    out[..., 0, 1] = -x[..., 0, 1]
    out[..., 1, 0] = -x[..., 1, 0]
    return out / d[..., None, None]


def commutator(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return x @ y - y @ x


def max_abs(x: np.ndarray) -> float:
    return float(np.max(np.abs(x))) if x.size else 0.0


def _f0_f1_f2(m: np.ndarray):
    """Entire functions f0 = cosh(sqrt m), f1 = sinh(sqrt m)/sqrt m and
    f2 = (f0 - f1)/(2m), evaluated stably near m = 0."""
    m = np.asarray(m, dtype=complex)
    z = np.sqrt(m)
    small = np.abs(m) < 1e-8
    zs = np.where(small, 1.0, z)
    f0 = np.cosh(z)
    f1 = np.where(small, 1.0 + m / 6.0 + m * m / 120.0, np.sinh(zs) / zs)
    f2 = np.where(
        small,
        1.0 / 6.0 + m / 60.0 + m * m / 1680.0,
        (f0 - f1) / np.where(small, 1.0, 2.0 * m),
    )
    return f0, f1, f2


def expm2(x: np.ndarray) -> np.ndarray:
    """Matrix exponential of a stack of 2x2 matrices, closed form."""
    x = np.asarray(x, dtype=complex)
    mu = 0.5 * trace2(x)
    v = x - mu[..., None, None] * I2
    m = v[..., 0, 0] * v[..., 0, 0] + v[..., 0, 1] * v[..., 1, 0]
    f0, f1, _ = _f0_f1_f2(m)
    out = f0[..., None, None] * I2 + f1[..., None, None] * v
    return np.exp(mu)[..., None, None] * out


def expm2_traceless_deriv(x: np.ndarray, dx: np.ndarray):
    """exp(X) and its directional derivative for traceless 2x2 stacks.

    X must be traceless (exp then has determinant one exactly); dX is the
    derivative of X with respect to an external parameter.
    """
    x = np.asarray(x, dtype=complex)
    dx = np.asarray(dx, dtype=complex)
    m = x[..., 0, 0] * x[..., 0, 0] + x[..., 0, 1] * x[..., 1, 0]
    dm = (
        2.0 * x[..., 0, 0] * dx[..., 0, 0]
        + x[..., 0, 1] * dx[..., 1, 0]
        + x[..., 1, 0] * dx[..., 0, 1]
    )
    f0, f1, f2 = _f0_f1_f2(m)
    e = f0[..., None, None] * I2 + f1[..., None, None] * x
    de = (
        (0.5 * f1 * dm)[..., None, None] * I2
        + (f2 * dm)[..., None, None] * x
        + f1[..., None, None] * dx
    )
    return e, de


# ---------------------------------------------------------------------------
# algebra / group membership and reality conditions
# ---------------------------------------------------------------------------


def algebra_residual(x: np.ndarray, flavor: Flavor) -> float:
    """Max-norm deviation of X from the flavor's real Lie algebra."""
    x = np.asarray(x, dtype=complex)
    tr = max_abs(trace2(x))
    if flavor is Flavor.SU2:
        return max(tr, max_abs(x + dagger(x)))
    if flavor is Flavor.SU11:
        return max(tr, max_abs(dagger(x) @ _J + _J @ x))
    return max(tr, max_abs(x.imag))


def group_residual(g: np.ndarray, flavor: Flavor) -> float:
    """Max-norm deviation of g from the flavor's group.

    Unit-modulus determinants are accepted: the adjoint action kills the
    central phase, and dressed frames carry constant determinant phases.
    """
    g = np.asarray(g, dtype=complex)
    d = max_abs(np.abs(det2(g)) - 1.0)
    if flavor is Flavor.SU2:
        return max(d, max_abs(dagger(g) @ g - I2))
    if flavor is Flavor.SU11:
        return max(d, max_abs(dagger(g) @ _J @ g - _J))
    return max(d, max_abs(g.imag))


def _phi_kdv(lam: complex) -> np.ndarray:
    return np.array([[1.0, lam], [0.0, 1.0]], dtype=complex)


def reality_residual(
    x: np.ndarray,
    flavor: Flavor,
    lam: complex = 0.0,
    x_at_conj_lam: np.ndarray | None = None,
    x_at_minus_lam: np.ndarray | None = None,
) -> float:
    """Max-norm deviation of a frame sample from its flavor's reality condition.

    ``x`` is E(lambda) (a matrix or a stack).  For nonreal ``lam`` the
    conjugate-parameter sample E(conj(lambda)) must be supplied; for the KDV
    flavor the evenness check additionally needs E(-lambda) unless lam == 0.
    """
    x = np.asarray(x, dtype=complex)
    lam = complex(lam)
    if x_at_conj_lam is None:
        if abs(lam.imag) > 1e-13:
            raise ValueError("nonreal lambda needs the sample at conj(lambda)")
        x_at_conj_lam = x
    xc = np.asarray(x_at_conj_lam, dtype=complex)
    if flavor is Flavor.SU2:
        return max_abs(dagger(xc) @ x - I2)
    if flavor is Flavor.SU11:
        return max_abs(dagger(xc) @ _J @ x - _J)
    res = max_abs(np.conj(xc) - x)
    if flavor is Flavor.KDV:
        if x_at_minus_lam is None:
            if abs(lam) > 1e-13:
                raise ValueError("KDV evenness check needs the sample at -lambda")
            x_at_minus_lam = x
        xm = np.asarray(x_at_minus_lam, dtype=complex)
        phi_p, phi_m = _phi_kdv(lam), _phi_kdv(-lam)
        even = inv2(phi_p) @ x @ phi_p - inv2(phi_m) @ xm @ phi_m
        res = max(res, max_abs(even))
    return res


def frame_reality_residual(eval_fn, flavor: Flavor, lambdas) -> float:
    """Reality residual of a lambda-family given an evaluator lam -> E(lam)."""
    res = 0.0
    for lam in lambdas:
        lam = complex(lam)
        xc = eval_fn(np.conj(lam)) if abs(lam.imag) > 1e-13 else None
        xm = eval_fn(-lam) if flavor is Flavor.KDV and abs(lam) > 1e-13 else None
        res = max(res, reality_residual(eval_fn(lam), flavor, lam, xc, xm))
    return res


# ---------------------------------------------------------------------------
# vector identifications
# ---------------------------------------------------------------------------


def lie_to_vec(x: np.ndarray, flavor: Flavor, tol: float = 1e-10) -> np.ndarray:
    """Coordinates of an algebra element in the flavor's ordered frame.

    Raises ResidualTooLarge when X fails the algebra membership test at
    ``tol`` (callers that renormalize drifting frames may widen it).
    """
    x = np.asarray(x, dtype=complex)
    res = algebra_residual(x, flavor)
    if res > tol:
        raise ResidualTooLarge(
            f"not in the {flavor.value} algebra: residual {res:.3e} > {tol:.1e}"
        )
    if flavor is Flavor.SU2:
        # frame (a, -c, b): X = v0*a + v1*(-c) + v2*b
        return np.stack(
            [x[..., 0, 0].imag, -x[..., 0, 1].imag, x[..., 0, 1].real], axis=-1
        )
    if flavor is Flavor.SU11:
        return np.stack(
            [x[..., 0, 0].imag, x[..., 0, 1].real, x[..., 0, 1].imag], axis=-1
        )
    return np.stack(
        [x[..., 0, 0].real, x[..., 0, 1].real, x[..., 1, 0].real], axis=-1
    )


def vec_to_lie(v: np.ndarray, flavor: Flavor) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    frame = basis_triple(flavor).frame
    return np.einsum("...i,ijk->...jk", v, frame)


def inner(x: np.ndarray, y: np.ndarray, flavor: Flavor) -> np.ndarray:
    """Invariant trace form used for the flavor's geometric identification."""
    t = trace2(x @ y)
    return -0.5 * t if flavor is Flavor.SU2 else 0.5 * t


def ham_pairing(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pairing <X, Y> = -tr(XY)/2 used by Hamiltonians and gradients."""
    return -0.5 * trace2(x @ y)


def metric_dot(u: np.ndarray, v: np.ndarray, metric: Metric) -> np.ndarray:
    g = _METRIC_GRAM[metric]
    return np.einsum("...i,ij,...j->...", u, g, v)


def hodge_star_normal(
    e1: np.ndarray, e2: np.ndarray, v: np.ndarray, metric: Metric
) -> np.ndarray:
    """Hodge star on the normal plane spanned by (e1, e2).

    Euclidean plane: rotation by pi/2 (e1 -> e2, e2 -> -e1).  Lorentzian
    plane in a null basis: *e1 = e1, *e2 = -e2.  The basis type is detected
    from the Gram matrix of (e1, e2).
    """
    e1 = np.asarray(e1, float)
    e2 = np.asarray(e2, float)
    v = np.asarray(v, float)
    g11 = metric_dot(e1, e1, metric)
    g22 = metric_dot(e2, e2, metric)
    g12 = metric_dot(e1, e2, metric)
    if max_abs(g11 * g22 - g12 * g12) < 1e-12:
        raise DegenerateBasis("normal basis is degenerate")
    if max_abs(g11) < 1e-9 and max_abs(g22) < 1e-9:
        # null basis: v = alpha e1 + beta e2 with alpha = <v,e2>/g12
        alpha = metric_dot(v, e2, metric) / g12
        beta = metric_dot(v, e1, metric) / g12
        return alpha[..., None] * e1 - beta[..., None] * e2
    # orthonormal space-like pair: rotation by pi/2
    alpha = metric_dot(v, e1, metric) / g11
    beta = metric_dot(v, e2, metric) / g22
    return alpha[..., None] * e2 - beta[..., None] * e1


def adjoint_frame(g: np.ndarray, flavor: Flavor, tol: float = 1e-10) -> np.ndarray:
    """3x3 matrix of Ad(g) X = g X g^-1 in the flavor's ordered frame.

    The result preserves the frame Gram matrix; at g = identity it is the
    identity for every flavor.
    """
    g = np.asarray(g, dtype=complex)
    res = group_residual(g, flavor)
    if res > tol:
        raise NotInGroup(
            f"not in the {flavor.value} group: residual {res:.3e} > {tol:.1e}"
        )
    frame = basis_triple(flavor).frame
    gi = inv2(g)
    cols = [
        lie_to_vec(g @ frame[j] @ gi, flavor, tol=max(1e-8, 10 * res))
        for j in range(3)
    ]
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# SU(2) <-> SO(3) lift (used to pin Pohlmeyer-Sym base points)
# ---------------------------------------------------------------------------

# columns: ordered frame (a, -c, b) written in (a, b, c) coordinates
_P_SU2 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])


def su2_lift(r: np.ndarray) -> np.ndarray:
    """An SU(2) element U with adjoint_frame(U) equal to the given rotation.

    Uses the unit-quaternion extraction; the lift is unique up to sign and
    either choice gives the same adjoint frame.
    """
    r = np.asarray(r, dtype=float)
    m = _P_SU2 @ r @ _P_SU2.T
    t = np.trace(m)
    if t > -0.999:
        w = 0.5 * np.sqrt(max(1.0 + t, 1e-15))
        x = (m[2, 1] - m[1, 2]) / (4 * w)
        y = (m[0, 2] - m[2, 0]) / (4 * w)
        z = (m[1, 0] - m[0, 1]) / (4 * w)
    else:
        # near trace -1: pick the dominant diagonal axis
        k = int(np.argmax(np.diag(m)))
        i, j = (k + 1) % 3, (k + 2) % 3
        s = np.sqrt(max(m[k, k] - m[i, i] - m[j, j] + 1.0, 1e-15))
        q = np.zeros(4)
        q[1 + k] = 0.5 * s
        q[0] = (m[j, i] - m[i, j]) / (2 * s)
        q[1 + i] = (m[i, k] + m[k, i]) / (2 * s)
        q[1 + j] = (m[j, k] + m[k, j]) / (2 * s)
        w, x, y, z = q
    tri = basis_triple(Flavor.SU2)
    u = w * I2 + x * tri.a + y * tri.b + z * tri.c
    return u / np.sqrt(det2(u))
