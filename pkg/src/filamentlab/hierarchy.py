"""Generating series, flows, Lax pairs, Hamiltonians and Poisson operators.

The generating series Q(u, lam) = a*lam + u + Q_{-1}(u)/lam + ... is pinned
by the commutation relation [d/dx + a*lam + u, Q] = 0 together with the
quadratic constraint Q^2 = a^2 lam^2 I.  Both are enforced order by order:

* the off-diagonal part of Q_{-(j+1)} inverts ad(a) on
  (Q_{-j})_x + [u, Q_{-j}],
* the diagonal part is read off algebraically from the quadratic
  constraint, so every coefficient is a differential polynomial in the
  potential with no integration constants.

Derivatives are spectral; potentials live on uniform periodic grids with a
power-of-two number of samples.  Open-line potentials are handled by
embedding in a large period with decay padding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .liealg import (
    Flavor,
    commutator,
    flavor_a,
    flavor_a1,
    ham_pairing,
    max_abs,
)


class HierarchyError(Exception):
    pass


class TruncationExceeded(HierarchyError):
    pass


class NonPeriodicSource(HierarchyError):
    pass


JMAX = 6


def spectral_deriv(f: np.ndarray, L: float, order: int = 1) -> np.ndarray:
    """Spectral derivative of periodic samples along the last axis."""
    n = f.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    mult = (2j * np.pi * k / L) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0  # odd derivative: drop the Nyquist mode
    return np.fft.ifft(np.fft.fft(f, axis=-1) * mult, axis=-1)


def spectral_interp_refine(f: np.ndarray, factor: int) -> np.ndarray:
    """Band-limited refinement of periodic samples by an integer factor."""
    n = f.shape[-1]
    spec = np.fft.fft(f, axis=-1)
    m = n * factor
    out = np.zeros(f.shape[:-1] + (m,), dtype=complex)
    half = n // 2
    out[..., :half] = spec[..., :half]
    out[..., -half:] = spec[..., -half:]
    # split the Nyquist mode symmetrically
    out[..., half] = 0.5 * spec[..., half]
    out[..., m - half] += 0.5 * spec[..., half]
    return np.fft.ifft(out, axis=-1) * factor


def _validate_grid(n: int) -> None:
    if n < 8 or (n & (n - 1)) != 0:
        raise ValueError("grid size must be a power of two with N >= 8")


@dataclass(frozen=True)
class PotentialField:
    """Off-diagonal potential u = q e12 + r e21 sampled on [x0, x0 + L).

    The second entry r is flavor-determined for SU2 (-conj q), SU11 (conj q)
    and KDV (identically 1); it is stored only for SL2R.  The offset x0 only
    matters for constructions that use the actual coordinate (closed-form
    vacuum frames); all spectral operations are translation invariant.
    """

    flavor: Flavor
    L: float
    q: np.ndarray
    r: np.ndarray | None = None
    x0: float = 0.0

    def __post_init__(self):
        q = np.ascontiguousarray(np.asarray(self.q, dtype=complex))
        object.__setattr__(self, "q", q)
        _validate_grid(q.shape[-1])
        if self.flavor is Flavor.SL2R:
            if self.r is None:
                raise ValueError("SL2R potential needs both q and r")
            r = np.ascontiguousarray(np.asarray(self.r, dtype=complex))
            if r.shape != q.shape:
                raise ValueError("q and r grids differ")
            object.__setattr__(self, "r", r)
        elif self.r is not None:
            raise ValueError("r is stored only for the SL2R flavor")

    @property
    def n(self) -> int:
        return self.q.shape[-1]

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return self.x0 + np.arange(self.n) * self.h

    def r_values(self) -> np.ndarray:
        if self.flavor is Flavor.SU2:
            return -np.conj(self.q)
        if self.flavor is Flavor.SU11:
            return np.conj(self.q)
        if self.flavor is Flavor.KDV:
            return np.ones_like(self.q)
        return self.r

    def matrix(self) -> np.ndarray:
        """u as a stack of 2x2 matrices, shape (N, 2, 2)."""
        n = self.n
        u = np.zeros((n, 2, 2), dtype=complex)
        u[:, 0, 1] = self.q
        u[:, 1, 0] = self.r_values()
        return u

    def norm(self) -> float:
        m = float(np.max(np.abs(self.q)))
        if self.flavor is Flavor.SL2R:
            m = max(m, float(np.max(np.abs(self.r))))
        return m


@dataclass(frozen=True)
class Tangent:
    """Tangent direction v = xi e12 + eta e21 attached to a potential grid."""

    flavor: Flavor
    L: float
    dq: np.ndarray
    dr: np.ndarray | None = None

    def eta(self) -> np.ndarray:
        if self.flavor is Flavor.SU2:
            return -np.conj(self.dq)
        if self.flavor is Flavor.SU11:
            return np.conj(self.dq)
        if self.flavor is Flavor.KDV:
            return np.zeros_like(self.dq)
        return self.dr

    def matrix(self) -> np.ndarray:
        n = self.dq.shape[-1]
        v = np.zeros((n, 2, 2), dtype=complex)
        v[:, 0, 1] = self.dq
        v[:, 1, 0] = self.eta()
        return v


def _tangent_from_matrix(m: np.ndarray, flavor: Flavor, L: float) -> Tangent:
    dq = m[:, 0, 1].copy()
    if flavor is Flavor.SL2R:
        return Tangent(flavor, L, dq, m[:, 1, 0].copy())
    return Tangent(flavor, L, dq)


@dataclass
class QSeries:
    """Coefficients Q_1 = a, Q_0 = u, Q_{-1}, ..., Q_{-jmax} on the grid."""

    u: PotentialField
    jmax: int
    coeffs: dict = field(default_factory=dict)

    def __getitem__(self, j: int) -> np.ndarray:
        return self.coeffs[j]

    def recursion_residual(self, j: int) -> float:
        """Max-norm of (Q_{-j})_x + [u, Q_{-j}] - [Q_{-(j+1)}, a]."""
        a = flavor_a(self.u.flavor)
        um = self.u.matrix()
        qj = self.coeffs[-j]
        dx = spectral_deriv(np.moveaxis(qj, 0, -1), self.u.L)
        lhs = np.moveaxis(dx, -1, 0) + commutator(um, qj)
        rhs = commutator(self.coeffs[-(j + 1)], a)
        return max_abs(lhs - rhs)

    def quadratic_residual(self, m: int) -> float:
        """Max-norm of the lam^{1-m} coefficient of Q^2 - a^2 lam^2 I.

        The coefficient only involves Q_k with k >= -m, so it is complete
        for every m <= jmax.
        """
        if not 1 <= m <= self.jmax:
            raise ValueError("order out of the computed range")
        total = np.zeros_like(self.coeffs[0])
        for k in range(-m, 2):
            l_idx = 1 - m - k
            if -self.jmax <= l_idx <= 1:
                total = total + self.coeffs[k] @ self.coeffs[l_idx]
        return max_abs(total)


def q_series(u: PotentialField, jmax: int) -> QSeries:
    """Generating-series coefficients down to Q_{-jmax}.

    The truncation is capped at order 6, which covers every flow used by
    the curve-flow catalogue.
    """
    if jmax > JMAX:
        raise TruncationExceeded(f"jmax {jmax} exceeds the supported order {JMAX}")
    a = flavor_a(u.flavor)
    a1 = flavor_a1(u.flavor)
    n = u.n
    um = u.matrix()
    coeffs: dict[int, np.ndarray] = {
        1: np.broadcast_to(a, (n, 2, 2)).copy(),
        0: um,
    }
    for m in range(1, jmax + 1):
        prev = coeffs[-(m - 1)]
        dx = np.moveaxis(spectral_deriv(np.moveaxis(prev, 0, -1), u.L), -1, 0)
        lhs = dx + commutator(um, prev)
        new = np.zeros((n, 2, 2), dtype=complex)
        # [X, a] maps beta e12 + gamma e21 to -2 a1 beta e12 + 2 a1 gamma e21
        new[:, 0, 1] = lhs[:, 0, 1] / (-2.0 * a1)
        new[:, 1, 0] = lhs[:, 1, 0] / (2.0 * a1)
        # diagonal from the lam^{1-m} coefficient of the quadratic constraint
        s = np.zeros((n, 2, 2), dtype=complex)
        for k in range(1 - m, 0 + 1):
            l_idx = 1 - m - k
            if l_idx > 0:
                continue
            s = s + coeffs[k] @ coeffs[l_idx]
        new[:, 0, 0] = -s[:, 0, 0] / (2.0 * a1)
        new[:, 1, 1] = s[:, 1, 1] / (2.0 * a1)
        coeffs[-m] = new
    return QSeries(u, jmax, coeffs)


def flow_rhs(u: PotentialField, j: int, series: QSeries | None = None) -> Tangent:
    """Right-hand side [Q_{-j}(u), a] of the j-th flow, projected to V.

    KDV exposes odd flows only; the even ones would move the frozen entry
    r = 1.
    """
    if j < 1:
        raise ValueError("flow order must be >= 1")
    if u.flavor is Flavor.KDV and j % 2 == 0:
        raise HierarchyError("KDV flavor supports odd flows only")
    if series is None or series.jmax < j:
        series = q_series(u, j)
    rhs = commutator(series[-j], flavor_a(u.flavor))
    diag = max(max_abs(rhs[:, 0, 0]), max_abs(rhs[:, 1, 1]))
    if diag > 1e-9 * max(1.0, u.norm()):
        raise HierarchyError(f"flow rhs left V-space, diagonal {diag:.2e}")
    t = _tangent_from_matrix(rhs, u.flavor, u.L)
    if u.flavor is Flavor.KDV:
        dr = rhs[:, 1, 0]
        if max_abs(dr) > 1e-9 * max(1.0, u.norm()):
            raise HierarchyError("KDV flow moved the frozen entry r = 1")
    return t


def lax_pair(u: PotentialField, j: int, lam: complex,
             series: QSeries | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sampled Lax pair A = a lam + u and B = sum_i Q_i lam^{j-1+i}."""
    if series is None or series.jmax < j - 1:
        series = q_series(u, max(j - 1, 0))
    a = flavor_a(u.flavor)
    A = a * lam + u.matrix()
    B = np.zeros_like(A)
    for i in range(-(j - 1), 2):
        B = B + series[i] * lam ** (j - 1 + i)
    return A, B


def lax_b_dlam(u: PotentialField, j: int, lam: complex,
               series: QSeries | None = None) -> np.ndarray:
    """Derivative of the t-coefficient B with respect to lambda."""
    if series is None or series.jmax < j - 1:
        series = q_series(u, max(j - 1, 0))
    n = u.n
    out = np.zeros((n, 2, 2), dtype=complex)
    for i in range(-(j - 1), 2):
        p = j - 1 + i
        if p >= 1:
            out = out + series[i] * (p * lam ** (p - 1))
    return out


def _fd_time_deriv(f: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order finite difference along axis 0 (shifted at the ends)."""
    nt = f.shape[0]
    if nt < 5:
        raise ValueError("need at least five time slices")
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dt)
    for i in (0, 1, nt - 2, nt - 1):
        lo = min(max(i - 2, 0), nt - 5)
        offs = np.arange(lo, lo + 5) - i
        v = np.vander(offs.astype(float), 5, increasing=True).T
        rhs = np.zeros(5)
        rhs[1] = 1.0
        w = np.linalg.solve(v, rhs) / dt
        out[i] = np.tensordot(w, f[lo : lo + 5], axes=(0, 0))
    return out


def lax_flatness(A: np.ndarray, B: np.ndarray, dt: float, L: float) -> float:
    """Max-norm of A_t - B_x - [A, B] over an (x, t) sample grid.

    The sign convention matches frames E with E^-1 dE = A dx + B dt, for
    which the combination vanishes identically on exact solutions.
    """
    At = _fd_time_deriv(A, dt)
    Bx = np.moveaxis(spectral_deriv(np.moveaxis(B, 1, -1), L), -1, 1)
    return max_abs(At - Bx - commutator(A, B))


def flatness_of_trajectory(slices, dt: float, j: int, lam: complex) -> float:
    """Flatness residual of a sampled potential trajectory at one lambda."""
    A = np.stack([lax_pair(u, j, lam)[0] for u in slices])
    B = np.stack([lax_pair(u, j, lam)[1] for u in slices])
    return lax_flatness(A, B, dt, slices[0].L)


def hamiltonian(u: PotentialField, j: int, series: QSeries | None = None) -> float:
    """H_j(u) = -(1/j) * integral of <Q_{-j}(u), a> over the period."""
    if series is None or series.jmax < j:
        series = q_series(u, j)
    dens = ham_pairing(series[-j], flavor_a(u.flavor))
    val = -np.sum(dens) * u.h / j
    return float(val.real)


def gradient(u: PotentialField, j: int, series: QSeries | None = None) -> Tangent:
    """Gradient of H_j: the V-part Y_{-(j-1)} of Q_{-(j-1)}(u)."""
    if series is None or series.jmax < j - 1:
        series = q_series(u, max(j - 1, 0))
    m = series[-(j - 1)].copy()
    m[:, 0, 0] = 0.0
    m[:, 1, 1] = 0.0
    return _tangent_from_matrix(m, u.flavor, u.L)


def poisson_ops(u: PotentialField, v: Tangent, tol: float = 1e-8,
                a_mean: complex | None = None) -> tuple[Tangent, Tangent]:
    """The two Poisson operators applied to a tangent direction.

    J1 v = [v, a].  J2 v = [d/dx + u, P_u(v)] with P_u(v) = v + A a, where
    A solves a1 * A_x = r xi - q eta.  A non-integrable source (nonzero
    mean) raises NonPeriodicSource.

    On the circle the antiderivative A is only determined up to a constant,
    and J2 with two different constants differs by a multiple of [u, a].
    The default takes A with zero mean, which makes J2 skew on periodic
    data; recursion identities against the generating series hold with the
    canonical constant ``a_mean`` = mean of the diagonal coefficient of the
    matching Q (see :func:`canonical_a_mean`).
    """
    a = flavor_a(u.flavor)
    a1 = flavor_a1(u.flavor)
    vm = v.matrix()
    j1 = _tangent_from_matrix(commutator(vm, a), u.flavor, u.L)

    xi = v.dq
    eta = v.eta()
    q = u.q
    r = u.r_values()
    src = (r * xi - q * eta) / a1
    mean = np.mean(src)
    scale = max(1.0, float(np.max(np.abs(src))))
    if abs(mean) > tol * scale:
        raise NonPeriodicSource(
            f"P_u source has nonzero mean {abs(mean):.3e}; A would not be periodic"
        )
    # spectral antiderivative, constant fixed by a_mean (default zero mean)
    n = u.n
    k = np.fft.fftfreq(n, d=1.0 / n)
    ik = 2j * np.pi * k / u.L
    ik[0] = 1.0
    Ahat = np.fft.fft(src - mean) / ik
    Ahat[0] = 0.0
    A = np.fft.ifft(Ahat)
    if a_mean is not None:
        A = A + a_mean
    p = vm + A[:, None, None] * a
    dx = np.moveaxis(spectral_deriv(np.moveaxis(p, 0, -1), u.L), -1, 0)
    j2m = dx + commutator(u.matrix(), p)
    diag = max(max_abs(j2m[:, 0, 0]), max_abs(j2m[:, 1, 1]))
    if diag > 1e-7 * max(1.0, u.norm(), float(np.max(np.abs(xi)))):
        raise HierarchyError(f"J2 output left V-space, diagonal {diag:.2e}")
    return j1, _tangent_from_matrix(j2m, u.flavor, u.L)


def canonical_a_mean(u: PotentialField, j: int,
                     series: QSeries | None = None) -> complex:
    """Mean of the coefficient of a on the diagonal of Q_{-j}(u)."""
    if series is None or series.jmax < j:
        series = q_series(u, j)
    a1 = flavor_a1(u.flavor)
    return complex(np.mean(series[-j][:, 0, 0] / a1))


def scaling_action(u: PotentialField, c: float) -> PotentialField:
    """Conjugation u -> exp(c a) u exp(-c a) acting on the potential."""
    if u.flavor in (Flavor.SU2, Flavor.SU11):
        return PotentialField(u.flavor, u.L, np.exp(2j * c) * u.q, x0=u.x0)
    if u.flavor is Flavor.SL2R:
        return PotentialField(u.flavor, u.L, np.exp(2 * c) * u.q,
                              np.exp(-2 * c) * u.r, x0=u.x0)
    if abs(c) > 1e-14:
        raise HierarchyError("scaling would move the frozen KDV entry r = 1")
    return u
