from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from qplab.action import (
    DiscretePath, ScalarPath, SingularDiffusionError, THETA_MOMENT, analytic_matrix,
    analytic_quasipotential, connect_second_order, cutoff_path, diode_path_from_v,
    extremal_path, minimize_action, quasipotential_estimate, rate_full, rate_second_order,
    theta_bump, transform_invariance_check,
)
from qplab.flow import integrate
from qplab.models import SECOND_ORDER, build_system, diode_equilibria, diode_second_order
from qplab.sde import SimConfig, simulate

from test_wgraph import EX41, EX42


@pytest.fixture(scope="module")
def ex41():
    return build_system("example41")


@pytest.fixture(scope="module")
def vdp():
    return build_system("vdp")


def flow_path(sys, x0, T, n):
    t = np.linspace(0, T, n + 2)
    return DiscretePath(T, integrate(sys, x0, T, tol=1e-12, t_eval=t).states)


# ------------------------------------------------------------ first order

def test_action_vanishes_on_trajectories(ex41):
    a200 = rate_full(ex41, flow_path(ex41, [-0.5, 0.3], 4.0, 200)).value
    a400 = rate_full(ex41, flow_path(ex41, [-0.5, 0.3], 4.0, 400)).value
    assert a200 < 1e-3 and a400 < a200


def test_constant_path_at_equilibrium_is_zero(ex41):
    p = DiscretePath(3.0, np.tile([1.0, 0.0], (50, 1)))
    assert rate_full(ex41, p).value == pytest.approx(0.0, abs=1e-28)


def test_straight_uphill_path_exceeds_bound(ex41):
    x, y = np.array([1.0, 0.0]), np.array([0.0, 0.0])
    s = np.linspace(0, 1, 202)[:, None]
    val = rate_full(ex41, DiscretePath(1.0, x + s * (y - x))).value
    assert val >= 95 / 144


def test_singular_diffusion_rejected(vdp):
    with pytest.raises(SingularDiffusionError):
        rate_full(vdp, DiscretePath(1.0, np.zeros((5, 2))))


def test_linear_oracle_quasipotential(linear_sys):
    # dx = -x dt + sqrt(eps) dW: cheapest 0 -> y in time T costs |y|^2 / (1 - exp(-2T))
    y = np.array([0.5, 0.3])
    for T in (1.0, 3.0):
        _, av = minimize_action(linear_sys, [0.0, 0.0], y, T, 200)
        assert av.value == pytest.approx(y @ y / (1 - np.exp(-2 * T)), rel=2e-3)
    est = quasipotential_estimate(linear_sys, [0.0, 0.0], y, Tgrid=(2, 4, 8), n=200)
    assert est.value == pytest.approx(y @ y, rel=5e-3)
    assert set(est.by_T) == {2.0, 4.0, 8.0}


def test_quasipotential_estimate_identity(ex41):
    av = quasipotential_estimate(ex41, [1.0, 0.0], [1.0, 0.0])
    assert av.value == 0
    _, av = minimize_action(ex41, [1.0, 0.0], [1.0, 0.0], 2.0, 50)
    assert av.value == pytest.approx(0.0, abs=1e-14)


@settings(max_examples=10)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_minimum_never_above_straight_line(a, b):
    from conftest import linear_gradient_system
    s = linear_gradient_system()
    y = np.array([a, b])
    line = DiscretePath(2.0, np.linspace(0, 1, 42)[:, None] * y)
    _, av = minimize_action(s, [0.0, 0.0], y, 2.0, 40, init=line.states)
    assert av.value <= rate_full(s, line).value + 1e-9
    assert av.value >= y @ y - 1e-6


# ------------------------------------------------------------ analytic layer

def test_analytic_values(ex41):
    K = {c.name: c for c in ex41.classes}
    assert analytic_quasipotential(ex41, K["K2"], K["K1"]) == Fr(25, 9)
    assert analytic_quasipotential(ex41, K["K2"], K["K4"]) == 1
    assert analytic_quasipotential(ex41, K["K3"], K["K3"]) == 0
    assert analytic_quasipotential(ex41, K["K4"], K["K3"]) == 0   # downhill clipped


@pytest.mark.parametrize("name, expect", [("example41", EX41), ("example42", EX42)])
def test_analytic_matrix_exact(name, expect):
    g = analytic_matrix(build_system(name))
    assert g.V == expect
    assert all(isinstance(v, Fr) for row in g.V for v in row)


def test_extremal_structure(ex41):
    # a point just inside K2 on the K1 side runs forward to K1
    p = extremal_path(ex41, [-1.5, 0.0], 30.0, n=400)
    H = ex41.H(np.array([[-1.5, 0.0]]))
    assert H[0] < -1
    assert np.linalg.norm(p.states[-1] - [-2.0, 0.0]) < 1e-3
    const = extremal_path(ex41, [-2.0, 0.0], 5.0, n=50)
    assert np.allclose(const.states, [-2.0, 0.0])


def test_action_along_extremal_is_potential_gap(ex41):
    x0 = np.array([-1.5, 0.0])
    vals = []
    for n in (400, 1600):
        p = extremal_path(ex41, x0, 4.0, n=n, t_start=-4.0)
        gap = 2 * (ex41.U(p.states[-1]) - ex41.U(p.states[0]))
        vals.append(abs(rate_full(ex41, p).value / gap - 1))
    assert vals[1] < 0.05 and vals[1] < vals[0]


# ------------------------------------------------------------ theta bumps

@pytest.mark.parametrize("j", [0.1, 1.0, 3.0])
def test_theta_identities(j):
    for sign in (1, -1):
        th = theta_bump(j, sign)
        L = th.length
        assert L == pytest.approx((2 + np.sqrt(2)) * j)
        assert abs(th.integral(L)) < 1e-12
        assert abs(th.double_integral(L) - sign * THETA_MOMENT * j ** 3) < 1e-12 * max(1, j ** 3)
        bp = np.array(th.breakpoints() + (2 * j,))
        assert np.max(np.abs(th.integral(bp))) == pytest.approx(j * j, abs=1e-12)
        t = np.linspace(0, L, 20001)
        assert np.max(np.abs(th.integral(t))) <= j * j + 1e-12


@given(st.floats(0.05, 4))
def test_theta_antiderivatives_consistent(j):
    th = theta_bump(j, 1)
    t = np.linspace(0, th.length, 4001)
    f, F, G = th(t), th.integral(t), th.double_integral(t)
    dt = t[1] - t[0]
    assert np.allclose(np.gradient(F, dt), f, atol=5e-3 * j)
    assert np.allclose(np.gradient(G, dt), F, atol=5e-3 * j * j)


def test_theta_rejects_bad_args():
    with pytest.raises(ValueError):
        theta_bump(0.0, 1)
    with pytest.raises(ValueError):
        theta_bump(1.0, 0)


# ------------------------------------------------------------ second order

def test_second_order_action_on_solution(vdp):
    vals = []
    for n in (400, 800):
        t = np.linspace(0, 5.0, n)
        st_ = integrate(vdp, [1.0, 0.5], 5.0, tol=1e-12, t_eval=t).states
        vals.append(rate_second_order(vdp, ScalarPath(5.0, st_[:, 0], v0=0.5, v1=st_[-1, 1])).value)
    assert vals[0] < 1e-2 and vals[1] < vals[0]


def test_second_order_zero_and_cutoff(vdp):
    assert rate_second_order(vdp, ScalarPath(2.0, np.zeros(101), v0=0.0, v1=0.0)).value == 0
    p = cutoff_path((0.3, -1.0), (1.2, 0.4), 1.0)
    assert np.isfinite(rate_second_order(vdp, p).value)
    assert p.values[0] == pytest.approx(0.3) and p.values[-1] == pytest.approx(1.2)


def test_connection_hits_endpoints(vdp):
    path, av = connect_second_order(vdp, (0.0, 0.0), (0.5, 0.3))
    s = path.states()
    assert np.allclose(s[0], [0, 0], atol=1e-10) and np.allclose(s[-1], [0.5, 0.3], atol=1e-10)
    assert np.isfinite(av.value) and av.value > 0
    path, av = connect_second_order(vdp, (0.4, -0.2), (0.4, -0.2))
    assert av.value == 0 and av.T == 0


coord = st.floats(-2, 2, allow_nan=False)


@settings(max_examples=25)
@given(coord, coord, coord, coord)
def test_connection_property(a, b, c, d):
    vdp = build_system("vdp")
    path, av = connect_second_order(vdp, (a, b), (c, d))
    pos, vel = av.endpoint
    assert abs(pos - c) < 1e-10 and abs(vel - d) < 1e-10
    assert np.isfinite(av.value) and av.value >= 0


def test_connection_repair_trend(vdp):
    # a near-optimal base path from (1.5, 0) to the origin; perturbing both
    # endpoints by delta and repairing must approach the base action
    x, y = np.array([1.5, 0.0]), np.array([0.0, 0.0])
    base = cutoff_path(x, y, 3.0, n=601)
    base_val = rate_second_order(vdp, base).value
    excess = []
    for delta in (0.5, 0.25, 0.125):
        _, av = connect_second_order(vdp, x + [delta, -delta], y + [delta, delta], base=base)
        excess.append(av.value - base_val)
    assert excess[0] > excess[1] > excess[2]


# ------------------------------------------------------------ diode charts

def test_diode_constant_path_zero():
    d = build_system("diode")
    S = diode_equilibria(**{k: d.params[k] for k in ("L", "C", "R", "E")})["S"]
    a, b = transform_invariance_check(DiscretePath(2.0, np.tile(S, (41, 1))), d)
    assert a == pytest.approx(0, abs=1e-20) and b == pytest.approx(0, abs=1e-20)


def noisy_diode_v(d, T=4.0, seed=0):
    tr = simulate(d, SimConfig(0.2, 1e-3, T, seed=seed), [1.5, 0.0])
    t = tr.times[::50]
    return CubicSpline(t, tr.states[::50, 0])


def test_diode_charts_agree_and_converge():
    d = build_system("diode")
    sp = noisy_diode_v(d)
    gaps = []
    for n in (400, 800, 1600):
        t = np.linspace(0, 4.0, n)
        path = diode_path_from_v(d, 4.0, sp(t), sp(t, 1))
        a, b = transform_invariance_check(path, d)
        gaps.append(abs(a - b) / max(a, b))
    assert gaps[0] < 0.02
    assert gaps[1] <= gaps[0] / 2 and gaps[2] <= gaps[1] / 2


def test_diode_inadmissible_path_rejected():
    d = build_system("diode")
    t = np.linspace(0, 1, 50)
    with pytest.raises(ValueError):
        transform_invariance_check(DiscretePath(1.0, np.column_stack([t, 5 + t])), d)


def test_diode_second_order_chart():
    d = build_system("diode")
    c = diode_second_order(d)
    assert SECOND_ORDER in c.flags and c.d == 2
    sp = noisy_diode_v(d, seed=1)
    t = np.linspace(0, 4.0, 800)
    path = diode_path_from_v(d, 4.0, sp(t), sp(t, 1))
    a, _ = transform_invariance_check(path, d)
    so = rate_second_order(c, ScalarPath(4.0, sp(t), v0=float(sp(0, 1)), v1=float(sp(4.0, 1)))).value
    assert so == pytest.approx(a, rel=0.02)
