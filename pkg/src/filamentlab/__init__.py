"""Numerical laboratory for integrable geometric curve flows.

The curve/soliton correspondence in both directions: moving frames and
curvature potentials of discrete curves, the 2x2 generating-series
hierarchy on four real forms, dressing transforms and multi-soliton
factories, extended-frame integration with the Sym reconstruction, and
direct PDE integrators with conserved-quantity monitors as independent
oracles.
"""

from . import backlund, dataio, flows, frames, hierarchy, liealg, verify
from .liealg import Flavor, Metric

__all__ = [
    "Flavor",
    "Metric",
    "backlund",
    "dataio",
    "flows",
    "frames",
    "hierarchy",
    "liealg",
    "verify",
]
__version__ = "0.1.0"
