import numpy as np
import pytest

from filamentlab import frames as fr
from filamentlab import hierarchy as hier
from filamentlab.liealg import Flavor


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def smooth_field(rng, n, modes=3, scale=0.4, real=False):
    """Band-limited random periodic samples on [0, 2 pi)."""
    x = np.arange(n) * 2 * np.pi / n
    f = np.zeros(n, dtype=complex)
    for k in range(1, modes + 1):
        c = rng.normal() + 1j * rng.normal()
        f += c * np.exp(1j * k * x) / k
        if real:
            f += np.conj(c) * np.exp(-1j * k * x) / k
    return scale * (f.real.astype(complex) if real else f)


@pytest.fixture
def su2_potential(rng):
    q = smooth_field(rng, 256)
    return hier.PotentialField(Flavor.SU2, 2 * np.pi, q)


@pytest.fixture
def sl2r_potential(rng):
    q = smooth_field(rng, 256, real=True)
    r = smooth_field(rng, 256, real=True)
    return hier.PotentialField(Flavor.SL2R, 2 * np.pi, q, r)


def twisted_closed_curve(n=256, wobble=0.3):
    """Closed curve with nonvanishing curvature and nonzero total torsion."""
    th = np.arange(n) * 2 * np.pi / n
    pts = np.stack(
        [np.cos(th) * (1 + wobble * np.cos(2 * th)),
         np.sin(th) * (1 + wobble * np.sin(2 * th)),
         wobble * np.sin(2 * th)], axis=1)
    cur = fr.DiscreteCurve(pts, 2 * np.pi / n, True)
    cur, _ = fr.resample_arclength(cur)
    return cur
