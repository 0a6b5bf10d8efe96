"""Action of one admissible diode path computed in the (v, i) and (v, w) charts."""
import numpy as np
from scipy.interpolate import CubicSpline

from qplab.action import diode_path_from_v, transform_invariance_check
from qplab.models import build_system
from qplab.sde import SimConfig, simulate

d = build_system("diode")
tr = simulate(d, SimConfig(0.2, 1e-3, 4.0, seed=0), [1.5, 0.0])
sp = CubicSpline(tr.times[::50], tr.states[::50, 0])
print(f"{'n':>6} {'(v,i)':>14} {'(v,w)':>14} {'rel gap':>10}")
for n in (200, 400, 800, 1600, 3200):
    t = np.linspace(0, 4.0, n)
    a, b = transform_invariance_check(diode_path_from_v(d, 4.0, sp(t), sp(t, 1)), d)
    print(f"{n:6d} {a:14.8f} {b:14.8f} {abs(a - b) / max(a, b):10.2e}")
