"""Occupation masses of the example41 classes as the noise shrinks.

The ratio (tube around the cycle K2) / (ball around K3) should grow like
exp(kappa / eps) with kappa = W(K3) - W(K2) = 49/144 once the horizon
exceeds the mixing time, roughly exp(V(K3, K2)/eps) = exp(0.66/eps).  Below
that the masses still remember where the replicas started, which is why half
of them start on each of the two stable classes.

    python scripts/concentration_example41.py --eps 0.1 0.07 0.05 --horizon 20000 --replicas 20
"""
import argparse
import time

import numpy as np

from qplab.flow import integrate
from qplab.models import build_system
from qplab.sde import BoxGrid, SimConfig, fit_decay_rate, neighborhood_mass, run_occupation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.07, 0.05])
    ap.add_argument("--horizon", type=float, default=2e4)
    ap.add_argument("--step", type=float, default=0.01)
    ap.add_argument("--replicas", type=int, default=20)
    ap.add_argument("--rho", type=float, default=0.15)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    s = build_system("example41")
    # half the replicas start on K2, half at K3
    half = max(args.replicas // 2, 1)
    starts = ((integrate(s, [-0.5, 0.0], 50.0).final, 0), (s.class_by_name("K3").representative(), half))
    grid = BoxGrid([-4, -4], [4, 4], (160, 160))
    print(f"{'eps':>6} " + " ".join(f"{c.name:>8}" for c in s.classes) + f" {'ratio':>8} {'sec':>6}")
    ratios = []
    for eps in args.eps:
        t0 = time.perf_counter()
        occs = [run_occupation(s, SimConfig(eps, args.step, args.horizon, seed=args.seed), x0, grid,
                               replicas=half, first_replica=r0) for x0, r0 in starts]
        m = [np.mean([neighborhood_mass(o, c, args.rho) for o in occs]) for c in s.classes]
        ratios.append(m[1] / m[2] if m[2] > 0 else np.inf)
        print(f"{eps:6.3f} " + " ".join(f"{v:8.4f}" for v in m)
              + f" {ratios[-1]:8.3f} {time.perf_counter() - t0:6.0f}")
    if len(args.eps) > 1 and np.all(np.isfinite(ratios)):
        kappa, _ = fit_decay_rate(args.eps, 1 / np.array(ratios))
        print(f"fitted kappa = {kappa:.3f} (large-deviation value 49/144 = {49 / 144:.3f})")


if __name__ == "__main__":
    main()
