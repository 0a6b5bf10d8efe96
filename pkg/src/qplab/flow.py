"""Deterministic dynamics of the unperturbed systems.

ODE integration (Dormand-Prince via ``scipy.integrate.solve_ivp``), Newton
refinement and linear classification of equilibria, level-set tracing of
H-defined cycles with their invariant (time-on-cycle) measure, and Poincare
return maps for limit cycles without a closed form.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .models import POSITIVE_ORTHANT, SystemSpec

BLOWUP_BOUND = 1e6


class BlowUpError(RuntimeError):
    def __init__(self, time, state, bound):
        super().__init__(f"|state| exceeded {bound:g} at t={time:.6g}")
        self.time = time
        self.state = state


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.states = np.asarray(self.states, float)
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("times and states differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self):
        return self.states[-1]

    def to_csv(self, path):
        d = self.states.shape[1]
        header = ",".join(["t"] + [f"x{k + 1}" for k in range(d)])
        np.savetxt(path, np.column_stack([self.times, self.states]), delimiter=",",
                   header=header, comments="", fmt="%.17g")


def _rhs(sys):
    def f(t, x):
        return sys.drift(x)
    return f


def _blowup_event(bound):
    def ev(t, x):
        return bound - np.max(np.abs(x))
    ev.terminal = True
    return ev


def integrate(sys: SystemSpec, x0, T: float, tol: float = 1e-9, t_eval=None,
              bound: float = BLOWUP_BOUND, dense: bool = False) -> Trajectory:
    """Integrate dx/dt = b(x) on [0, T] with adaptive RK45.

    ``tol`` is used as both relative and absolute local error tolerance.  If
    ``t_eval`` is None the accepted steps are returned.  Raises
    :class:`BlowUpError` when ``max |x_k|`` exceeds ``bound``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    x0 = sys.check_state(x0)
    sol = solve_ivp(_rhs(sys), (0.0, T), x0, method="RK45", rtol=tol, atol=tol,
                    t_eval=t_eval, events=_blowup_event(bound), dense_output=dense)
    if sol.status == 1:
        raise BlowUpError(float(sol.t_events[0][0]), sol.y_events[0][0], bound)
    if sol.status < 0:
        raise RuntimeError(sol.message)
    traj = Trajectory(sol.t, sol.y.T)
    if dense:
        traj.sol = sol.sol
    return traj


# ---------------------------------------------------------------------------
# equilibria

@dataclass
class EquilibriumReport:
    point: np.ndarray
    eigenvalues: np.ndarray
    classification: str
    residual: float


def classify(eigs, tol=1e-9) -> str:
    re = np.real(eigs)
    if np.any(np.abs(re) <= tol):
        return "center-like"
    if np.any(re > 0) and np.any(re < 0):
        return "saddle"
    complex_pair = np.any(np.abs(np.imag(eigs)) > tol)
    if np.all(re < 0):
        return "stable-focus" if complex_pair else "stable-node"
    return "unstable-focus" if complex_pair else "unstable-node"


def newton(sys: SystemSpec, x0, tol: float = 1e-12, maxiter: int = 50):
    """Newton iteration on b(x) = 0.  Returns (x, residual, iterations)."""
    x = np.array(x0, float)
    for it in range(1, maxiter + 1):
        f = sys.drift(x)
        J = sys.drift_jac(x)
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            return x, float(np.linalg.norm(f)), it
        x = x + dx
        if not np.all(np.isfinite(x)):
            break
        if np.linalg.norm(dx) <= tol * (1 + np.linalg.norm(x)):
            break
    res = float(np.linalg.norm(sys.drift(x))) if np.all(np.isfinite(x)) else np.inf
    return x, res, it


def find_equilibria(sys: SystemSpec, lo, hi, num: int = 13, tol: float = 1e-12,
                    merge: float = 1e-6) -> list:
    """Newton from every node of a ``num**d`` seed grid on the box [lo, hi]."""
    lo = np.broadcast_to(np.asarray(lo, float), (sys.d,))
    hi = np.broadcast_to(np.asarray(hi, float), (sys.d,))
    axes = [np.linspace(a, b, num) for a, b in zip(lo, hi)]
    seeds = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, sys.d)
    found = []
    for s in seeds:
        if sys.domain == POSITIVE_ORTHANT and np.any(s <= 0):
            continue
        x, res, _ = newton(sys, s, tol=tol)
        if not (np.isfinite(res) and res < 1e-9):
            continue
        if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
            continue
        if sys.domain == POSITIVE_ORTHANT and np.any(x <= 0):
            continue
        if any(np.linalg.norm(x - r.point) < merge for r in found):
            continue
        J = sys.drift_jac(x)
        if abs(np.linalg.det(J)) < 1e-12:
            found.append(EquilibriumReport(x, np.linalg.eigvals(J), "unclassified", res))
            continue
        eig = np.linalg.eigvals(J)
        found.append(EquilibriumReport(x, eig, classify(eig), res))
    found.sort(key=lambda r: tuple(r.point))
    return found


# ---------------------------------------------------------------------------
# cycles

@dataclass
class CycleMeasure:
    points: np.ndarray
    period: float
    density: np.ndarray
    weights: np.ndarray
    level: Optional[float] = None


def _default_center(sys, level):
    inside = [c.representative() for c in sys.classes
              if c.kind == "equilibrium" and sys.H(c.representative()) < level]
    if not inside:
        raise ValueError(f"no known equilibrium inside {{H={level}}}; pass center")
    return min(inside, key=lambda p: float(sys.H(p)))


def _radius(H, center, u, level, rmax=1e3):
    g = lambda r: float(H(center + r * u)) - level
    r = 0.25
    while g(r) < 0:
        r *= 2
        if r > rmax:
            raise ValueError(f"level set H={level} not closed in the search box")
    return brentq(g, 0.0, r, xtol=1e-15, rtol=1e-15, maxiter=200)


def trace_level_set(sys: SystemSpec, level: float, n: int, center=None):
    """Points on {H = level} at ``n`` equispaced polar angles about ``center``.

    Returns ``(points, dX/dphi)``; the curve must be star-shaped about center.
    """
    if sys.H is None:
        raise ValueError(f"{sys.name} has no Hamiltonian")
    center = _default_center(sys, level) if center is None else np.asarray(center, float)
    if not sys.H(center) < level:
        raise ValueError(f"H(center) = {sys.H(center):g} is not below the level {level}")
    phi = 2 * np.pi * np.arange(n) / n
    u = np.stack([np.cos(phi), np.sin(phi)], -1)
    du = np.stack([-np.sin(phi), np.cos(phi)], -1)
    r = np.array([_radius(sys.H, center, uk, level) for uk in u])
    pts = center + r[:, None] * u
    g = sys.gradH(pts)
    dr = -r * np.sum(g * du, -1) / np.sum(g * u, -1)
    tangent = dr[:, None] * u + r[:, None] * du
    return pts, tangent


def cycle_measure(sys: SystemSpec, level: float, n: int = 512, center=None) -> CycleMeasure:
    """Invariant probability on the cycle {H = level}: density 1/(T |grad H|)
    with respect to arc length, and period T = closed-curve integral of ds/|grad H|."""
    pts, tangent = trace_level_set(sys, level, n, center)
    ds = np.linalg.norm(tangent, axis=-1) * (2 * np.pi / n)
    gnorm = np.linalg.norm(sys.gradH(pts), axis=-1)
    dt = ds / gnorm
    T = float(dt.sum())
    w = dt / T
    w = w / w.sum()
    return CycleMeasure(points=pts, period=T, density=1.0 / (T * gnorm), weights=w, level=level)


def return_time(sys: SystemSpec, x0, center, tol: float = 1e-11, tmax: float = 1e3) -> float:
    """Time for the flow from ``x0`` to come back to the ray from ``center`` through x0."""
    x0 = np.asarray(x0, float)
    center = np.asarray(center, float)
    u = (x0 - center) / np.linalg.norm(x0 - center)
    cross = lambda a, b: a[0] * b[1] - a[1] * b[0]
    sgn = np.sign(cross(u, sys.drift(x0)))

    def ev(t, x):
        return sgn * cross(u, x - center)
    ev.direction = 1.0

    t_skip = 0.1 * np.linalg.norm(x0 - center) / max(np.linalg.norm(sys.drift(x0)), 1e-12)
    ev.terminal = True
    pre = solve_ivp(_rhs(sys), (0, t_skip), x0, rtol=tol, atol=tol)
    t0, x = t_skip, pre.y[:, -1]
    while t0 < tmax:
        sol = solve_ivp(_rhs(sys), (t0, tmax), x, rtol=tol, atol=tol, events=ev)
        if not len(sol.t_events[0]):
            break
        t, y = float(sol.t_events[0][0]), sol.y_events[0][0]
        if np.dot(y - center, u) > 0:
            return t
        # crossed the opposite ray; step past it and keep going
        t0, x = t, y + 1e-9 * sys.drift(y)
    raise RuntimeError("no return to the section")


@dataclass
class LimitCycle:
    section_point: np.ndarray
    period: float
    points: np.ndarray
    iterations: int

    def measure(self) -> CycleMeasure:
        n = len(self.points)
        w = np.full(n, 1.0 / n)
        speed = np.ones(n)
        return CycleMeasure(self.points, self.period, speed / self.period, w)


def poincare_map(sys: SystemSpec, s: float, tol: float = 1e-12):
    """Return map on the section {x2 = 0, x1 > 0}; returns (s', return time)."""
    x0 = np.array([s, 0.0])

    def ev(t, x):
        return x[1]
    ev.direction = -1.0
    ev.terminal = True
    # leave the section before arming the event
    t0 = 0.05
    pre = solve_ivp(_rhs(sys), (0, t0), x0, rtol=tol, atol=tol)
    sol = solve_ivp(_rhs(sys), (t0, 1e3), pre.y[:, -1], rtol=tol, atol=tol,
                    events=[ev, _blowup_event(BLOWUP_BOUND)])
    for t, y in zip(sol.t_events[0], sol.y_events[0]):
        if y[0] > 0:
            return float(y[0]), float(t)
    raise RuntimeError("trajectory did not return to the section")


def find_limit_cycle(sys: SystemSpec, seed: float = 2.0, tol: float = 1e-8,
                     maxiter: int = 200, n_points: int = 2000) -> LimitCycle:
    """Fixed point of the return map on {x2 = 0, x1 > 0} by plain iteration."""
    s = float(seed)
    for it in range(1, maxiter + 1):
        s_new, T = poincare_map(sys, s)
        if abs(s_new - s) < tol:
            s = s_new
            break
        s = s_new
    else:
        warnings.warn("Poincare iteration did not converge", RuntimeWarning)
    _, T = poincare_map(sys, s)
    t = np.linspace(0, T, n_points, endpoint=False)
    sol = solve_ivp(_rhs(sys), (0, T), np.array([s, 0.0]), rtol=1e-12, atol=1e-12, t_eval=t)
    return LimitCycle(np.array([s, 0.0]), T, sol.y.T, it)


def hopf_curve(LC_ratio: float) -> float:
    """h(r) = -r + sqrt(r^2 + 3 r) for r = L/C."""
    r = float(LC_ratio)
    if not r > 0:
        raise ValueError("L/C must be positive")
    return -r + np.sqrt(r * r + 3 * r)
