#!/usr/bin/env python3
"""Generate a small gallery of explicit soliton filaments.

Builds the one- and two-soliton solutions of the focusing flow from the
vacuum line, together with the KdV-realizing space-like filament, and
writes curve/potential CSV plus OBJ polylines for a 3d viewer.
"""

import argparse
import os

import numpy as np

from filamentlab import backlund as bt
from filamentlab import dataio as dio
from filamentlab.liealg import Flavor


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/gallery")
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--frames", type=int, default=9, help="time slices")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    L, x0 = 24.0, -12.0
    ts = np.linspace(0.0, 0.4, args.frames)

    one = bt.soliton_factory(Flavor.SU2, [(1j, np.array([1.0, 1.0]))],
                             L, args.n, ts, x0=x0)
    two = bt.soliton_factory(
        Flavor.SU2,
        [(1j, np.array([1.0, 1.0])), (0.4 + 0.8j, np.array([1.0, -0.5 + 0.3j]))],
        L, args.n, ts, x0=x0)
    kdv = bt.soliton_factory(Flavor.KDV, [(1.0, 0.0)], L, args.n, ts, x0=x0)

    for name, fam in (("one", one), ("two", two), ("kdv", kdv)):
        for i, cur in enumerate(fam.curves):
            dio.write_curve_csv(os.path.join(args.out, f"{name}_curve_{i:04d}.csv"), cur)
            dio.write_curve_obj(os.path.join(args.out, f"{name}_curve_{i:04d}.obj"), cur)
        dio.write_manifest(os.path.join(args.out, f"{name}_manifest.json"), fam.manifest)
        print(f"{name}: |q| max = {np.max(np.abs(fam.q)):.6f}, "
              f"{len(fam.curves)} slices -> {args.out}")


if __name__ == "__main__":
    main()
