"""Van der Pol with noise on the velocity only: cycle location and occupation near it."""
import argparse

from qplab.flow import find_limit_cycle
from qplab.models import build_system
from qplab.sde import BoxGrid, SimConfig, neighborhood_mass, run_occupation
from qplab.verify import check_vdp_identity

ap = argparse.ArgumentParser()
ap.add_argument("--eps", type=float, nargs="+", default=[0.2, 0.1, 0.05])
ap.add_argument("--horizon", type=float, default=500.0)
ap.add_argument("--replicas", type=int, default=20)
args = ap.parse_args()

s = build_system("vdp")
print(check_vdp_identity(s))
lc = find_limit_cycle(s)
print(f"cycle crosses x2=0 at x1={lc.section_point[0]:.6f}, period {lc.period:.6f}")
grid = BoxGrid([-5, -5], [5, 5], (100, 100))
for eps in args.eps:
    occ = run_occupation(s, SimConfig(eps, 0.005, args.horizon, seed=1), lc.section_point, grid,
                         replicas=args.replicas)
    g = neighborhood_mass(occ, s.class_by_name("Gamma"), 0.3, cycle=lc.points)
    o = neighborhood_mass(occ, s.class_by_name("O"), 0.3)
    print(f"eps={eps:<5} mass within 0.3 of the cycle {g:.3f}   in B_0.3(O) {o:.4f}")
