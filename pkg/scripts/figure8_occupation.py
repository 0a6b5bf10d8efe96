"""Occupation on the figure-eight models.

variant 1: share of time near the figure eight {H=0} relative to the outer
cycles {H>0.1} for decreasing eps.  variant 2: mass in the two wells.
"""
import argparse

import numpy as np

from qplab.models import build_system
from qplab.sde import BoxGrid, SimConfig, neighborhood_mass, run_occupation

ap = argparse.ArgumentParser()
ap.add_argument("--variant", type=int, default=1, choices=[1, 2, 3])
ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05])
ap.add_argument("--horizon", type=float, default=500.0)
ap.add_argument("--replicas", type=int, default=20)
args = ap.parse_args()

s = build_system("figure8", {"variant": args.variant})
grid = BoxGrid([-3, -3], [3, 3], (60, 60))
for eps in args.eps:
    occ = run_occupation(s, SimConfig(eps, 0.005, args.horizon, seed=1), [1.0, 0.0], grid,
                         replicas=args.replicas)
    H = s.H(occ.samples)
    wells = sum(neighborhood_mass(occ, s.class_by_name(k), 0.2) for k in ("P+", "P-"))
    near, outer = np.mean(np.abs(H) < 0.1), np.mean(H > 0.1)
    print(f"eps={eps:<5} wells(B_0.2)={wells:.3f}  |H|<0.1: {near:.3f}  H>0.1: {outer:.3f}  "
          f"ratio {near / outer:.3f}")
