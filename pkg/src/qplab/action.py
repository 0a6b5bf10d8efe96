"""Freidlin-Wentzell actions, minimum action paths and quasipotentials.

Two functional forms are supported:

* non-degenerate noise, ``L(u, beta) = 1/2 (beta - b(u))^T (sigma sigma^T)^{-1} (beta - b(u))``
  evaluated on a :class:`DiscretePath`;
* second-order systems ``x1' = x2, x2' = b(x1, x2) + sigma h``, where the cost is
  ``1/2 int |(phi'' - b(phi, phi')) / sigma|^2`` evaluated on a :class:`ScalarPath`
  holding only the position coordinate.

The reporting functionals :func:`rate_full` and :func:`rate_second_order` use
centered differences with trapezoid quadrature.  The optimiser in
:func:`minimize_action` works on a midpoint discretisation of the same
functional for first-order systems, because the centered-difference objective
has an odd/even null mode that lets zig-zag paths undercut the true action.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize

from .models import (
    POSITIVE_ORTHANT, EquivalenceClassSpec, ModelError, SystemSpec,
    _smooth_step, diode_f, diode_fp,
)
from .wgraph import ClassGraph, min_plus_closure

COND_LIMIT = 1e12
SQ2 = math.sqrt(2.0)


class SingularDiffusionError(ValueError):
    pass


@dataclass
class DiscretePath:
    T: float
    states: np.ndarray          # (n + 2, d)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.states.ndim != 2 or self.states.shape[0] < 3:
            raise ValueError("a DiscretePath needs at least one interior node")

    @property
    def n(self):
        return self.states.shape[0] - 2

    @property
    def dt(self):
        return self.T / (self.n + 1)

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.n + 2)

    def to_csv(self, path):
        d = self.states.shape[1]
        header = ",".join(["t"] + [f"x{k + 1}" for k in range(d)])
        np.savetxt(path, np.column_stack([self.times, self.states]), delimiter=",",
                   header=header, comments="", fmt="%.17g")


@dataclass
class ScalarPath:
    """Position samples of a second-order path on a uniform grid.

    ``v0``/``v1`` pin the endpoint velocities (ghost-node stencils); otherwise
    one-sided second-order stencils are used at the ends.  ``velocities`` may
    carry exact derivative samples when the path was built in closed form.
    """

    T: float
    values: np.ndarray
    v0: Optional[float] = None
    v1: Optional[float] = None
    velocities: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.T < 0:
            raise ValueError("T must be nonnegative")

    @property
    def n(self):
        return len(self.values)

    @property
    def dt(self):
        return self.T / (self.n - 1)

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.n)

    def derivatives(self):
        return _fd_second_order(self.values, self.dt, self.v0, self.v1)

    def states(self):
        if self.velocities is not None:
            return np.column_stack([self.values, self.velocities])
        v, _ = self.derivatives()
        return np.column_stack([self.values, v])


@dataclass
class ActionValue:
    value: float
    residuals: np.ndarray = field(repr=False, default=None)
    T: Optional[float] = None
    converged: bool = True
    warning: Optional[str] = None
    history: list = field(default_factory=list, repr=False)
    path: object = field(default=None, repr=False)
    by_T: dict = field(default_factory=dict, repr=False)

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# non-degenerate functional


def _noise_inverse(sys: SystemSpec, x):
    """(sigma sigma^T)^{-1} at the rows of x, with a conditioning check."""
    S = sys.diffusion(x)
    D = S @ np.swapaxes(S, -1, -2)
    cond = np.linalg.cond(D)
    bad = ~(cond < COND_LIMIT)
    if np.any(bad):
        k = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise SingularDiffusionError(f"sigma sigma^T is singular at node {k} "
                                     f"(condition number {np.atleast_1d(cond)[k]:.3g})")
    return np.linalg.inv(D)


def rate_full(sys: SystemSpec, path: DiscretePath) -> ActionValue:
    """Trapezoid quadrature of the non-degenerate Lagrangian along ``path``."""
    if sys.second_order:
        raise SingularDiffusionError("second-order systems need rate_second_order")
    x = path.states
    xdot = np.gradient(x, path.dt, axis=0, edge_order=2)
    r = xdot - sys.drift(x)
    Dinv = _noise_inverse(sys, x)
    lag = 0.5 * np.einsum("ki,kij,kj->k", r, Dinv, r)
    value = float(np.trapezoid(lag, dx=path.dt))
    return ActionValue(max(value, 0.0), residuals=2 * lag, T=path.T)


def _midpoint_objective(sys, inner, x, y, N, dt, want_grad=True):
    d = sys.d
    phi = np.vstack([x, inner.reshape(-1, d), y])
    if sys.domain == POSITIVE_ORTHANT and np.any(phi <= 0):
        return np.inf, np.zeros_like(inner)
    m = 0.5 * (phi[1:] + phi[:-1])
    r = np.diff(phi, axis=0) / dt - sys.drift(m)
    if sys.constant_diffusion:
        Dinv = _noise_inverse(sys, m[:1])[0]
        q = r @ Dinv.T
    else:
        Dinv = _noise_inverse(sys, m)
        q = np.einsum("kij,kj->ki", Dinv, r)
    f = 0.5 * dt * float(np.sum(q * r))
    if not want_grad:
        return f, None
    J = sys.drift_jac(m)
    gm = -dt * np.einsum("kji,kj->ki", J, q)
    if not sys.constant_diffusion:
        h = 1e-7
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            S1 = sys.diffusion(m + e)
            S0 = sys.diffusion(m - e)
            dD = (S1 @ np.swapaxes(S1, -1, -2) - S0 @ np.swapaxes(S0, -1, -2)) / (2 * h)
            gm[:, i] -= 0.5 * dt * np.einsum("ki,kij,kj->k", q, dD, q)
    g = np.zeros_like(phi)
    g[1:] += q + 0.5 * gm
    g[:-1] += -q + 0.5 * gm
    return f, g[1:-1].ravel()


def path_objective(sys: SystemSpec, path: DiscretePath):
    """Midpoint action and its gradient with respect to the interior nodes."""
    x, y = path.states[0], path.states[-1]
    return _midpoint_objective(sys, path.states[1:-1].ravel(), x, y, path.n + 2, path.dt)


# ---------------------------------------------------------------------------
# second-order functional


def _fd_second_order(phi, dt, v0=None, v1=None):
    phi = np.asarray(phi, float)
    n = len(phi)
    v = np.empty(n)
    a = np.empty(n)
    v[1:-1] = (phi[2:] - phi[:-2]) / (2 * dt)
    a[1:-1] = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / dt ** 2
    if v0 is None:
        v[0] = (-3 * phi[0] + 4 * phi[1] - phi[2]) / (2 * dt)
        a[0] = (2 * phi[0] - 5 * phi[1] + 4 * phi[2] - phi[3]) / dt ** 2 if n > 3 else a[1]
    else:
        ghost = phi[1] - 2 * dt * v0
        v[0] = v0
        a[0] = (phi[1] - 2 * phi[0] + ghost) / dt ** 2
    if v1 is None:
        v[-1] = (3 * phi[-1] - 4 * phi[-2] + phi[-3]) / (2 * dt)
        a[-1] = (2 * phi[-1] - 5 * phi[-2] + 4 * phi[-3] - phi[-4]) / dt ** 2 if n > 3 else a[-2]
    else:
        ghost = phi[-2] + 2 * dt * v1
        v[-1] = v1
        a[-1] = (ghost - 2 * phi[-1] + phi[-2]) / dt ** 2
    return v, a


def _sigma2(sys, states):
    amp = sys.diffusion(states)[..., 1, 0]
    if np.any(amp == 0):
        k = int(np.flatnonzero(amp == 0)[0])
        raise SingularDiffusionError(f"sigma vanishes at node {k}")
    return amp


def _require_second_order(sys):
    if not sys.second_order:
        raise ModelError(f"{sys.name} is not a second-order system")


def rate_second_order(sys: SystemSpec, path: ScalarPath) -> ActionValue:
    _require_second_order(sys)
    if not path.T > 0:
        raise ValueError("T must be positive")
    v, a = path.derivatives()
    st = np.column_stack([path.values, v])
    h = (a - sys.drift(st)[:, 1]) / _sigma2(sys, st)
    value = float(np.trapezoid(0.5 * h * h, dx=path.dt))
    return ActionValue(value, residuals=h * h, T=path.T)


def _second_order_objective(sys, inner, x, y, N, dt, want_grad=True):
    phi = np.concatenate([[x[0]], inner, [y[0]]])
    e = np.concatenate([[phi[1] - 2 * dt * x[1]], phi, [phi[-2] + 2 * dt * y[1]]])
    v = (e[2:] - e[:-2]) / (2 * dt)
    a = (e[2:] - 2 * e[1:-1] + e[:-2]) / dt ** 2
    st = np.column_stack([phi, v])
    s = _sigma2(sys, st)
    c = sys.drift(st)[:, 1]
    h = (a - c) / s
    w = np.ones(N)
    w[0] = w[-1] = 0.5
    f = 0.5 * dt * float(np.sum(w * h * h))
    if not want_grad:
        return f, None
    J = sys.drift_jac(st)
    c_phi, c_v = J[:, 1, 0], J[:, 1, 1]
    if sys.constant_diffusion:
        s_phi = s_v = 0.0
    else:
        eps = 1e-7
        s_phi = (_sigma2(sys, st + [eps, 0]) - _sigma2(sys, st - [eps, 0])) / (2 * eps)
        s_v = (_sigma2(sys, st + [0, eps]) - _sigma2(sys, st - [0, eps])) / (2 * eps)
    G = dt * w * h
    A_a = G / s
    A_phi = G * (-c_phi - h * s_phi) / s
    A_v = G * (-c_v - h * s_v) / s
    ge = np.zeros(N + 2)
    ge[:-2] += A_a / dt ** 2 - A_v / (2 * dt)
    ge[1:-1] += -2 * A_a / dt ** 2 + A_phi
    ge[2:] += A_a / dt ** 2 + A_v / (2 * dt)
    gphi = ge[1:-1].copy()
    gphi[1] += ge[0]
    gphi[-2] += ge[-1]
    return f, gphi[1:-1]


def scalar_path_objective(sys: SystemSpec, path: ScalarPath):
    """Ghost-node action and gradient in the interior samples (v0/v1 required)."""
    x = (path.values[0], path.v0)
    y = (path.values[-1], path.v1)
    return _second_order_objective(sys, path.values[1:-1], x, y, path.n, path.dt)


# ---------------------------------------------------------------------------
# minimisation


def _lbfgs(fun, z0, maxiter, gtol, bounds=None):
    history = []

    def cb(zk):
        history.append(fun(zk)[0])

    f0 = fun(z0)[0]
    history.append(f0)
    res = minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=bounds, callback=cb,
                   options={"maxiter": maxiter, "gtol": gtol, "ftol": 1e-15, "maxcor": 20})
    return res, history


def linear_init(x, y, N):
    s = np.linspace(0.0, 1.0, N)[:, None]
    return (1 - s) * np.asarray(x, float) + s * np.asarray(y, float)


def minimize_action(sys: SystemSpec, x, y, T: float, n: int, init=None,
                    maxiter: int = 5000, gtol: float = 1e-9):
    """Minimise the discrete action over the ``n`` interior nodes with fixed ends.

    Returns ``(path, ActionValue)``.  ``init`` may be an ``(n + 2, d)`` array
    (or ``(n + 2,)`` for second-order systems); the default is the straight
    line from x to y.  Uses L-BFGS with a line search, so accepted iterates
    never increase the objective; ``ActionValue.history`` records them.
    """
    if n < 8:
        raise ValueError("n must be at least 8")
    if not T > 0:
        raise ValueError("T must be positive")
    x = sys.check_state(x)
    y = sys.check_state(y)
    N = n + 2
    dt = T / (N - 1)
    if sys.second_order:
        if init is None:
            init = _hermite_init(x, y, T, N)
        z0 = np.asarray(init, float)[1:-1].copy()
        fun = lambda z: _second_order_objective(sys, z, x, y, N, dt)
        bounds = None
    else:
        if init is None:
            init = linear_init(x, y, N)
        z0 = np.asarray(init, float)[1:-1].ravel().copy()
        fun = lambda z: _midpoint_objective(sys, z, x, y, N, dt)
        bounds = [(1e-12, None)] * z0.size if sys.domain == POSITIVE_ORTHANT else None
    if np.allclose(x, y) and np.linalg.norm(sys.drift(x)) == 0 and init is None:
        z0 = np.zeros_like(z0) + (x[0] if sys.second_order else np.tile(x, n))
    res, history = _lbfgs(fun, z0, maxiter, gtol, bounds)
    z = res.x
    f = float(res.fun)
    converged = bool(res.success)
    warn = None if converged else f"optimizer stopped: {res.message}"
    if sys.second_order:
        path = ScalarPath(T, np.concatenate([[x[0]], z, [y[0]]]), v0=x[1], v1=y[1])
    else:
        path = DiscretePath(T, np.vstack([x, z.reshape(n, sys.d), y]))
    if warn:
        warnings.warn(warn, RuntimeWarning)
    val = ActionValue(max(f, 0.0), T=T, converged=converged, warning=warn,
                      history=history, path=path)
    return path, val


def _hermite_init(x, y, T, N):
    """Cubic matching positions and velocities at both ends."""
    t = np.linspace(0.0, 1.0, N)
    h00 = 2 * t ** 3 - 3 * t ** 2 + 1
    h10 = t ** 3 - 2 * t ** 2 + t
    h01 = -2 * t ** 3 + 3 * t ** 2
    h11 = t ** 3 - t ** 2
    return h00 * x[0] + h10 * T * x[1] + h01 * y[0] + h11 * T * y[1]


def resample(path_states, N):
    """Resample a polyline of states to N nodes uniformly in parameter."""
    src = np.asarray(path_states, float)
    s0 = np.linspace(0, 1, len(src))
    s1 = np.linspace(0, 1, N)
    if src.ndim == 1:
        return np.interp(s1, s0, src)
    return np.column_stack([np.interp(s1, s0, src[:, k]) for k in range(src.shape[1])])


def quasipotential_estimate(sys: SystemSpec, x, y, Tgrid: Sequence[float] = (2, 4, 8, 16, 32),
                            n: int = 300, init=None, **kw) -> ActionValue:
    """Minimum over ``Tgrid`` of :func:`minimize_action`; ties go to the smaller T.

    ``init`` may be a callable ``init(T, N)`` returning a starting path.
    Either endpoint may be an :class:`EquivalenceClassSpec`; see
    :func:`class_start_point`.
    """
    Tgrid = sorted(float(t) for t in Tgrid)
    if not Tgrid:
        raise ValueError("Tgrid must be nonempty")
    if isinstance(y, EquivalenceClassSpec):
        y = class_end_point(sys, y, x.representative() if isinstance(x, EquivalenceClassSpec)
                            and x.point is not None else (0.0,) * sys.d)
    if isinstance(x, EquivalenceClassSpec):
        x = class_start_point(sys, x, y)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.allclose(x, y) and np.allclose(sys.drift(x), 0):
        return ActionValue(0.0, T=Tgrid[0], path=None)
    best = None
    by_T = {}
    for T in Tgrid:
        guess = init(T, n + 2) if callable(init) else init
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            _, val = minimize_action(sys, x, y, T, n, init=guess, **kw)
        by_T[T] = val.value
        if best is None or val.value < best.value - 1e-12:
            best = val
    best.by_T = by_T
    if len(Tgrid) > 1 and best.T in (Tgrid[0], Tgrid[-1]):
        best.warning = (best.warning or "") + f"argmin T={best.T:g} at grid edge; extend the grid"
    return best


# ---------------------------------------------------------------------------
# decomposable systems


def _exact_potential(sys: SystemSpec, target):
    """U at a point or class, as a Fraction when the data are exact."""
    if isinstance(target, EquivalenceClassSpec):
        if target.kind == "level-cycle":
            h = Fraction(target.level).limit_denominator(10 ** 6)
            return h * h / 2 + h
        target = target.representative()
    pt = np.asarray(target, float)
    try:
        xs = [Fraction(float(c)).limit_denominator(10 ** 6) for c in pt]
        if all(abs(float(a) - c) < 1e-15 for a, c in zip(xs, pt)):
            obj = np.array(xs, dtype=object)
            h = obj[1] ** 2 / 2 + _F_exact(sys, obj[0])
            return h * h / 2 + h
    except (TypeError, ValueError):
        pass
    return float(sys.U(pt))


def _F_exact(sys, s):
    if sys.name == "example41":
        return s ** 4 / 4 + s ** 3 / 3 - s ** 2
    if sys.name == "example42":
        return s ** 4 / 4 - s ** 3 / 3 - s ** 2
    raise ModelError("exact potential only for the quartic examples")


def analytic_quasipotential(sys: SystemSpec, X, Y):
    """2 (U(Y) - U(X)) clipped at 0.  X, Y are points or equivalence classes.

    Valid only when Y is reachable from X along the extremal heteroclinic
    structure; the caller is responsible for that.
    """
    if not sys.decomposable:
        raise ModelError(f"{sys.name} is not decomposable")
    if X is Y:
        return Fraction(0)
    if not isinstance(X, EquivalenceClassSpec) and not isinstance(Y, EquivalenceClassSpec):
        if np.allclose(np.asarray(X, float), np.asarray(Y, float), rtol=0, atol=0):
            return Fraction(0)
    dU = _exact_potential(sys, Y) - _exact_potential(sys, X)
    return max(2 * dU, 0 * dU)


def analytic_matrix(sys: SystemSpec) -> ClassGraph:
    """Class-to-class quasipotentials from the model's direct transitions.

    Flow connections cost 0, extremal connections cost 2 dU, and longer
    transitions are concatenations (min-plus closure).
    """
    if not sys.direct_transitions:
        raise ModelError(f"{sys.name} carries no transition structure")
    cls = sys.classes
    l = len(cls)
    inf = float("inf")
    D = [[Fraction(0) if i == j else inf for j in range(l)] for i in range(l)]
    prov = [["diagonal" if i == j else "unreachable" for j in range(l)] for i in range(l)]
    for i, j, kind in sys.direct_transitions:
        D[i][j] = Fraction(0) if kind == "flow" else analytic_quasipotential(sys, cls[i], cls[j])
    V = min_plus_closure(D)
    for i, j, kind in sys.direct_transitions:
        prov[i][j] = f"analytic-{kind}"
    for i in range(l):
        for j in range(l):
            if i != j and prov[i][j] == "unreachable" and V[i][j] != inf:
                prov[i][j] = "analytic-concatenation"
    return ClassGraph([c.name for c in cls], V, prov)


def extremal_rhs(sys: SystemSpec):
    if not sys.decomposable:
        raise ModelError(f"{sys.name} is not decomposable")
    return lambda t, x: sys.gradU(x) + sys.rotation(x)


def extremal_path(sys: SystemSpec, x0, T: float, n: int = 400, t_start: float = 0.0,
                  tol: float = 1e-11, bound: float = 1e6) -> DiscretePath:
    """Solve dX/dt = grad U + l with X(0) = x0 on [t_start, T], uniformly resampled.

    ``t_start < 0`` integrates backwards from x0 as well.
    """
    f = extremal_rhs(sys)
    x0 = sys.check_state(x0)
    if not T > t_start:
        raise ValueError("need T > t_start")
    grid = np.linspace(t_start, T, n + 2)

    def blow(t, x):
        return bound - np.max(np.abs(x))
    blow.terminal = True

    pieces = []
    if t_start < 0:
        back = grid[grid <= 0][::-1]
        sol = solve_ivp(f, (0.0, t_start), x0, t_eval=back, rtol=tol, atol=tol, events=blow)
        if sol.status == 1:
            raise RuntimeError(f"extremal blow-up at t={sol.t_events[0][0]:.4g}")
        pieces.append(sol.y.T[::-1][:-1] if grid[grid <= 0][-1] == 0 else sol.y.T[::-1])
    fwd = grid[grid >= 0]
    if fwd.size and fwd[0] != 0:
        fwd = np.concatenate([[0.0], fwd])
        drop = True
    else:
        drop = False
    sol = solve_ivp(f, (0.0, T), x0, t_eval=fwd, rtol=tol, atol=tol, events=blow)
    if sol.status == 1:
        raise RuntimeError(f"extremal blow-up at t={sol.t_events[0][0]:.4g}")
    fw = sol.y.T[1:] if drop else sol.y.T
    pieces.append(fw)
    states = np.vstack(pieces)
    return DiscretePath(T - t_start, states)


def shoot_extremal(sys: SystemSpec, y, source: EquivalenceClassSpec, N: int = 302,
                   radius: float = 1e-4, n_dirs: int = 24, tmax: float = 40.0):
    """Backward extremal from a small circle around ``y`` until it lands on ``source``.

    Returns N arc-length-uniform points from the landing point to ``y``, or
    None if no ray lands.  Among landing rays the shortest in time wins.
    """
    f = extremal_rhs(sys)
    back = lambda t, x: -f(t, x)
    if source.kind == "level-cycle":
        def hit(t, x):
            return float(sys.H(x)) - source.level
    else:
        p = source.representative()

        def hit(t, x):
            return np.linalg.norm(x - p) - 1e-3
    hit.terminal = True

    def escape(t, x):
        return 1e3 - np.max(np.abs(x))
    escape.terminal = True

    best = None
    for k in range(n_dirs):
        a = 2 * np.pi * (k + 0.5) / n_dirs
        z0 = np.asarray(y, float) + radius * np.array([np.cos(a), np.sin(a)])
        if hit(0, z0) * hit(0, np.asarray(y, float)) < 0:
            continue
        sol = solve_ivp(back, (0, tmax), z0, rtol=1e-9, atol=1e-12, events=[hit, escape],
                        dense_output=True)
        if sol.status != 1 or not len(sol.t_events[0]):
            continue
        te = sol.t_events[0][0]
        if best is None or te < best[0]:
            best = (te, sol)
    if best is None:
        return None
    te, sol = best
    pts = sol.sol(np.linspace(te, 0.0, 4000)).T
    pts[-1] = y
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0], np.cumsum(seg)])
    s /= s[-1]
    u = np.linspace(0, 1, N)
    return np.column_stack([np.interp(u, s, pts[:, k]) for k in range(pts.shape[1])])


def class_start_point(sys: SystemSpec, source: EquivalenceClassSpec, y):
    """A departure point on ``source`` for a transition towards y.

    Equilibria give their own point.  For H-level cycles of decomposable
    systems the cheapest exit is where the backward extremal from y lands;
    otherwise the cycle point nearest to y is used.
    """
    if source.kind == "equilibrium":
        return source.representative()
    if source.kind != "level-cycle":
        raise ModelError(f"cannot pick a start point on a {source.kind} class")
    if sys.decomposable:
        ws = shoot_extremal(sys, y, source)
        if ws is not None:
            return ws[0]
    from .flow import trace_level_set
    pts, _ = trace_level_set(sys, source.level, 720)
    return pts[np.argmin(np.linalg.norm(pts - np.asarray(y, float), axis=1))]


def class_end_point(sys: SystemSpec, target: EquivalenceClassSpec, x):
    if target.kind == "equilibrium":
        return target.representative()
    from .flow import trace_level_set
    pts, _ = trace_level_set(sys, target.level, 720)
    return pts[np.argmin(np.linalg.norm(pts - np.asarray(x, float), axis=1))]


# ---------------------------------------------------------------------------
# theta bumps


@dataclass(frozen=True)
class ThetaBump:
    """theta_j^+ (sign=+1) or theta_j^- (sign=-1) with closed-form antiderivatives."""

    j: float
    sign: int

    def __post_init__(self):
        if not self.j > 0:
            raise ValueError("j must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def length(self):
        return (2 + SQ2) * self.j

    def __call__(self, t):
        t = np.asarray(t, float)
        j = self.j
        out = np.where(t <= j, t, 2 * j - t)
        out = np.where((t < 0) | (t > self.length), 0.0, out)
        return self.sign * out

    def integral(self, t):
        """int_0^t theta."""
        t = np.clip(np.asarray(t, float), 0.0, self.length)
        j = self.j
        first = t * t / 2
        second = j * j / 2 - ((t - 2 * j) ** 2 - j * j) / 2
        return self.sign * np.where(t <= j, first, second)

    def double_integral(self, t):
        """int_0^t int_0^s theta, extended as a constant past the support."""
        t = np.clip(np.asarray(t, float), 0.0, self.length)
        j = self.j
        first = t ** 3 / 6
        # for t > j: j^3/6 + int_j^t (j^2 - (s-2j)^2/2) ds
        second = j ** 3 / 6 + j * j * (t - j) - ((t - 2 * j) ** 3 + j ** 3) / 6
        return self.sign * np.where(t <= j, first, second)

    def breakpoints(self):
        return (0.0, self.j, self.length)


def theta_bump(j: float, sign: int) -> ThetaBump:
    return ThetaBump(float(j), int(sign))


THETA_MOMENT = (3 + 2 * SQ2) / 3


def _bump_scale(shift: float) -> float:
    return (abs(shift) / THETA_MOMENT) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# piecewise acceleration profiles and the endpoint repair construction


@dataclass
class AccelerationProfile:
    """zeta'' = piecewise constant part + a sum of theta bumps, integrated exactly."""

    x0: tuple
    breaks: np.ndarray        # t_0 = 0 < ... < t_K
    accel: np.ndarray         # K values
    bumps: list               # (start, ThetaBump)

    def __post_init__(self):
        self.breaks = np.asarray(self.breaks, float)
        self.accel = np.asarray(self.accel, float)
        dtk = np.diff(self.breaks)
        V = np.concatenate([[self.x0[1]], self.x0[1] + np.cumsum(self.accel * dtk)])
        P = np.empty_like(V)
        P[0] = self.x0[0]
        P[1:] = self.x0[0] + np.cumsum(V[:-1] * dtk + 0.5 * self.accel * dtk ** 2)
        self._V, self._P = V, P

    @property
    def T(self):
        return float(self.breaks[-1])

    def evaluate(self, t):
        """(position, velocity, acceleration) at times t."""
        t = np.asarray(t, float)
        k = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.accel) - 1)
        tau = t - self.breaks[k]
        a = self.accel[k] if len(self.accel) else np.zeros_like(t)
        pos = self._P[k] + self._V[k] * tau + 0.5 * a * tau * tau
        vel = self._V[k] + a * tau
        acc = np.array(a, float, copy=True)
        for s, b in self.bumps:
            pos = pos + b.double_integral(t - s)
            vel = vel + b.integral(t - s)
            acc = acc + b(t - s)
        return pos, vel, acc

    def all_breaks(self):
        pts = list(self.breaks)
        for s, b in self.bumps:
            pts.extend(s + np.array(b.breakpoints()))
        pts = np.unique(np.clip(pts, 0.0, self.T))
        return pts

    def action(self, sys: SystemSpec, order: int = 16, max_len: float = 0.25):
        """Gauss-Legendre quadrature of 1/2 |h|^2 on every smooth piece."""
        if self.T == 0:
            return 0.0
        xg, wg = np.polynomial.legendre.leggauss(order)
        edges = self.all_breaks()
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            if b <= a:
                continue
            m = max(1, int(math.ceil((b - a) / max_len)))
            sub = np.linspace(a, b, m + 1)
            lo, hi = sub[:-1, None], sub[1:, None]
            t = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
            pos, vel, acc = self.evaluate(t.ravel())
            st = np.column_stack([pos, vel])
            h = (acc - sys.drift(st)[:, 1]) / _sigma2(sys, st)
            total += float(np.sum((0.5 * (hi - lo) * wg).ravel() * 0.5 * h * h))
        return total

    def sample(self, n: int) -> ScalarPath:
        if self.T == 0:
            return ScalarPath(0.0, np.array([self.x0[0], self.x0[0]]), v0=self.x0[1],
                              v1=self.x0[1], velocities=np.array([self.x0[1]] * 2))
        t = np.linspace(0.0, self.T, n)
        pos, vel, _ = self.evaluate(t)
        return ScalarPath(self.T, pos, v0=float(vel[0]), v1=float(vel[-1]), velocities=vel)


@dataclass
class Connection:
    profile: AccelerationProfile
    case: str
    endpoint: tuple


def _sgn(u):
    return float(np.sign(u))


def build_connection(x, y, base: Optional[ScalarPath] = None) -> Connection:
    """Acceleration profile steering (x1, x2) to (y1, y2) through ``base``.

    Pieces, in order: a unit ramp of the velocity onto the base start
    velocity, the base accelerations (piecewise constant between base
    samples), a unit ramp onto the target velocity, and a correction of the
    final position by coasting or by a theta bump, chosen by the sign of the
    base end velocity.  Without a base the base is empty and starts at x.
    """
    x = (float(x[0]), float(x[1]))
    y = (float(y[0]), float(y[1]))
    if base is None:
        bv = np.array([x[1]])
        T0, dtb = 0.0, 0.0
    else:
        bv = base.velocities if base.velocities is not None else base.derivatives()[0]
        T0, dtb = base.T, base.dt
    xh2, yh2 = float(bv[0]), float(bv[-1])

    prefix = [(abs(xh2 - x[1]), _sgn(xh2 - x[1]))]
    prefix += [(dtb, float(a)) for a in np.diff(bv) / dtb] if T0 > 0 else []

    def make(segments, bumps=()):
        segs = [(d, a) for d, a in segments if d > 0]
        breaks = np.concatenate([[0.0], np.cumsum([d for d, _ in segs])])
        return AccelerationProfile(x, breaks, np.array([a for _, a in segs]), list(bumps))

    def end_pos(prof):
        return float(prof.evaluate(prof.T)[0])

    tol = 1e-14
    case = None
    if yh2 > 0 and y[1] >= yh2 / 2:
        case = "case1"
    elif yh2 < 0 and y[1] <= yh2 / 2:
        case = "case2"
    prof = None
    if case is not None:
        segs = prefix + [(abs(y[1] - yh2), _sgn(y[1] - yh2))]
        gap = y[0] - end_pos(make(segs))
        if gap * _sgn(y[1]) >= 0:
            prof = make(segs + [(gap / y[1], 0.0)])
            case += "-coast"
        else:
            bump = theta_bump(_bump_scale(gap), int(_sgn(gap)))
            if bump.length <= T0:
                t_base1 = float(np.sum([d for d, _ in prefix]))
                prof = make(segs, [(t_base1 - bump.length, bump)])
                case += "-bump"
    if prof is None:
        # velocity to 0, theta bump for the position, velocity to y2
        head = prefix + [(abs(yh2), -_sgn(yh2))]
        gap = y[0] - end_pos(make(head + [(abs(y[1]), _sgn(y[1]))]))
        if abs(gap) > tol:
            bump = theta_bump(_bump_scale(gap), int(_sgn(gap)))
            t_bump = float(np.sum([d for d, _ in head]))
            prof = make(head + [(bump.length, 0.0), (abs(y[1]), _sgn(y[1]))], [(t_bump, bump)])
        else:
            prof = make(head + [(abs(y[1]), _sgn(y[1]))])
        case = "case3" if yh2 == 0 else "fallback-case3"
    pos, vel, _ = prof.evaluate(prof.T)
    return Connection(prof, case, (float(pos), float(vel)))


def connect_second_order(sys: SystemSpec, x, y, base: Optional[ScalarPath] = None,
                         n: int = 401):
    """Explicit finite-action path from x to y (both (position, velocity)).

    Returns ``(ScalarPath, ActionValue)``; the action is computed on the exact
    piecewise-polynomial states.
    """
    _require_second_order(sys)
    if base is not None:
        bs = base.states()
        if abs(bs[0, 0] - x[0]) > 1 + 1e-12 or abs(bs[-1, 0] - y[0]) > 1 + 1e-12:
            warnings.warn("base endpoints are more than 1 away from x, y", RuntimeWarning)
    con = build_connection(x, y, base)
    value = con.profile.action(sys)
    path = con.profile.sample(n)
    av = ActionValue(value, T=con.profile.T, path=path, warning=None)
    av.case = con.case
    av.endpoint = con.endpoint
    if not np.isfinite(value):
        raise SingularDiffusionError("action is not finite along the constructed path")
    return path, av


def cutoff_path(x, y, T: float, n: int = 401) -> ScalarPath:
    """phi = alpha f1 + (1 - alpha) f2 with a C-infinity cutoff alpha.

    f1 is the line through x with slope x2, f2 the line through y at time T
    with slope y2; alpha is 1 on [0, T/3] and 0 on [2T/3, T].
    """
    t = np.linspace(0.0, T, n)
    u = (t - T / 3) / (T / 3)
    step, dstep = _smooth_step(u)
    alpha = 1 - step
    dalpha = -dstep / (T / 3)
    f1 = x[0] + x[1] * t
    f2 = y[0] + y[1] * (t - T)
    phi = alpha * f1 + (1 - alpha) * f2
    dphi = dalpha * (f1 - f2) + alpha * x[1] + (1 - alpha) * y[1]
    return ScalarPath(T, phi, v0=x[1], v1=y[1], velocities=dphi)


# ---------------------------------------------------------------------------
# diode: (v, i) versus (v, w) charts


def diode_path_from_v(sys: SystemSpec, T: float, v, dv) -> DiscretePath:
    """Admissible (v, i) path with i = C v' + f(v) from samples of v and v'."""
    C, E = sys.params["C"], sys.params["E"]
    i = C * np.asarray(dv) + diode_f(np.asarray(v), E)
    return DiscretePath(T, np.column_stack([v, i]))


def diode_action_vi(sys: SystemSpec, path: DiscretePath) -> float:
    """Action in the (v, i) chart: noise drives only the current equation."""
    L, R, E = sys.params["L"], sys.params["R"], sys.params["E"]
    v, i = path.states[:, 0], path.states[:, 1]
    di = np.gradient(i, path.dt, edge_order=2)
    sig = sys.noise_amplitude(path.states)
    h = (L * di - (E - R * i - v)) / sig
    return float(np.trapezoid(0.5 * h * h, dx=path.dt))


def diode_action_vw(sys: SystemSpec, path: DiscretePath) -> float:
    """Action of the same path after (v, i) -> (v, w = (i - f(v))/C)."""
    L, C, R, E = (sys.params[k] for k in ("L", "C", "R", "E"))
    v, i = path.states[:, 0], path.states[:, 1]
    w = (i - diode_f(v, E)) / C
    dw = np.gradient(w, path.dt, edge_order=2)
    bw = -((diode_fp(v, E) + C * R / L) * w + R / L * diode_f(v, E) + (v - E) / L) / C
    sig = sys.noise_amplitude(path.states)
    h = L * C * (dw - bw) / sig
    return float(np.trapezoid(0.5 * h * h, dx=path.dt))


def transform_invariance_check(path: DiscretePath, sys: SystemSpec,
                               constraint_tol: float = 1e-2):
    """Return (action in the (v, i) chart, action in the (v, w) chart)."""
    if sys.name != "diode":
        raise ModelError("transform_invariance_check needs the diode model")
    C, E = sys.params["C"], sys.params["E"]
    v, i = path.states[:, 0], path.states[:, 1]
    dv = np.gradient(v, path.dt, edge_order=2)
    viol = np.max(np.abs(C * dv - (i - diode_f(v, E))))
    scale = 1.0 + np.max(np.abs(i))
    if viol > constraint_tol * scale:
        raise ValueError(f"path violates C v' = i - f(v) by {viol:.3g}; not admissible")
    return diode_action_vi(sys, path), diode_action_vw(sys, path)


# ---------------------------------------------------------------------------
# numeric class matrix


def _lands_in(sys, cls, x, tol):
    if cls.kind == "equilibrium":
        return np.linalg.norm(x - cls.representative()) < tol
    if cls.kind == "level-cycle":
        return abs(float(cls.H(x)) - cls.level) < tol
    return False


def certify_flow(sys: SystemSpec, source: EquivalenceClassSpec, target: EquivalenceClassSpec,
                 offset: float = 1e-4, T: float = 80.0, tol: float = 1e-2):
    """True if a forward trajectory leaving ``source`` along an unstable
    direction ends within ``tol`` of ``target``; such a transition costs 0."""
    from .flow import integrate

    if source.kind != "equilibrium":
        return False
    p = source.representative()
    w, vec = np.linalg.eig(sys.drift_jac(p))
    dirs = [np.real(vec[:, k]) for k in range(len(w)) if np.real(w[k]) > 0]
    if len(dirs) == len(w):
        ang = 2 * np.pi * np.arange(8) / 8
        dirs = [np.array([np.cos(a), np.sin(a)]) for a in ang] if sys.d == 2 else dirs
    for u in dirs:
        for s in (1.0, -1.0):
            x0 = p + s * offset * u / np.linalg.norm(u)
            end = integrate(sys, x0, T, tol=1e-10).final
            if _lands_in(sys, target, end, tol):
                return True
    return False


def numeric_matrix(sys: SystemSpec, Tgrid: Sequence[float] = (2, 4, 8, 16, 32), n: int = 300,
                   entries=None):
    """Class matrix from numerics alone, followed by min-plus closure.

    Flow transitions are certified by integrating the deterministic dynamics;
    the remaining direct transitions (or ``entries``, a list of index pairs)
    are minimum-action estimates.  Returns ``(ClassGraph, direct)`` where
    ``direct`` maps ``(i, j)`` to the per-entry record.
    """
    cls = sys.classes
    l = len(cls)
    inf = float("inf")
    pairs = list(sys.direct_transitions) if entries is None else [
        (i, j, "flow" if (i, j, "flow") in sys.direct_transitions else "extremal") for i, j in entries]
    D = [[0.0 if i == j else inf for j in range(l)] for i in range(l)]
    prov = [["diagonal" if i == j else "unreachable" for j in range(l)] for i in range(l)]
    direct = {}
    for i, j, kind in pairs:
        if kind == "flow" and certify_flow(sys, cls[i], cls[j]):
            D[i][j] = 0.0
            prov[i][j] = "numeric-flow"
            direct[(i, j)] = {"value": 0.0, "method": "flow-certified", "warning": None}
            continue
        av = quasipotential_estimate(sys, cls[i], cls[j], Tgrid=Tgrid, n=n)
        D[i][j] = float(av.value)
        prov[i][j] = "numeric-action"
        direct[(i, j)] = {"value": float(av.value), "method": "minimum-action", "T": av.T,
                          "converged": bool(av.converged), "warning": av.warning,
                          "by_T": {str(k): v for k, v in av.by_T.items()}}
    V = min_plus_closure(D)
    for i in range(l):
        for j in range(l):
            if i != j and prov[i][j] == "unreachable" and V[i][j] != inf:
                prov[i][j] = "numeric-concatenation"
    return ClassGraph([c.name for c in cls], V, prov), direct
