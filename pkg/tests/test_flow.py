import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qplab.flow import (
    BlowUpError, Trajectory, classify, cycle_measure, find_equilibria, find_limit_cycle,
    hopf_curve, integrate, poincare_map, return_time, trace_level_set,
)
from qplab.models import build_system


@pytest.fixture(scope="module")
def ex41():
    return build_system("example41")


def test_equilibrium_stays_put(ex41):
    tr = integrate(ex41, [1.0, 0.0], 10.0)
    assert np.allclose(tr.states, [1.0, 0.0], atol=1e-14)


def test_flow_reaches_cycle_from_inside(ex41):
    tr = integrate(ex41, [-0.5, 0.0], 50.0)
    assert abs(ex41.H(tr.final) + 1) < 1e-3


def test_flow_from_near_origin_goes_to_focus(ex41):
    # (0.1, 0.1) sits in the basin of the stable focus, not of the cycle
    tr = integrate(ex41, [0.1, 0.1], 50.0)
    assert np.linalg.norm(tr.final - [1.0, 0.0]) < 1e-3


def test_linear_decay_matches_closed_form(linear_sys):
    t = np.linspace(0, 3, 31)
    tr = integrate(linear_sys, [1.0, -2.0], 3.0, tol=1e-11, t_eval=t)
    assert np.allclose(tr.states, np.outer(np.exp(-t), [1.0, -2.0]), atol=1e-9)


def test_blowup_detected():
    # outside the cycle of example 4.1 the flow is attracted back, so use a
    # reversed linear system that explodes
    from qplab.models import SystemSpec
    s = SystemSpec("grow", 1, 1, lambda x: np.asarray(x) ** 2, lambda x: np.ones(np.shape(x) + (1,)),
                   lambda x: np.array([[2 * x[0]]]))
    with pytest.raises(BlowUpError) as e:
        integrate(s, [1.0], 5.0)
    assert e.value.time < 1.0 + 1e-3


def test_bad_arguments(ex41):
    with pytest.raises(ValueError):
        integrate(ex41, [0, 0], -1)
    with pytest.raises(ValueError):
        integrate(ex41, [0, 0], 1, tol=0)
    with pytest.raises(ValueError):
        Trajectory([0, 0], [[1], [2]])


def test_equilibria_example41(ex41):
    reps = find_equilibria(ex41, [-3, -3], [3, 3])
    found = {tuple(np.round(r.point, 8)): r.classification for r in reps}
    assert found == {(-2.0, 0.0): "unstable-node", (0.0, 0.0): "saddle", (1.0, 0.0): "stable-focus"}


def test_equilibria_diode():
    s = build_system("diode", {"R": 2.0, "L": 1.0, "C": 2.0})
    reps = find_equilibria(s, [-2, -2], [3, 2])
    assert len(reps) == 3
    S = [r for r in reps if np.allclose(r.point, [s.params["E"], 0])][0]
    assert S.classification == "saddle"


def test_equilibria_mayleonard():
    s = build_system("mayleonard")
    reps = find_equilibria(s, [0.05] * 3, [1.2] * 3, num=5)
    interior = [r for r in reps if np.all(r.point > 0.1)]
    assert len(interior) == 1 and np.allclose(interior[0].point, 0.5)


@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                min_size=2, max_size=2))
def test_classify_total(eigs):
    label = classify(np.array(eigs))
    assert label in {"saddle", "stable-node", "stable-focus", "unstable-node", "unstable-focus",
                     "center-like"}


def test_cycle_measure_normalized_and_period(ex41):
    cm = cycle_measure(ex41, -1.0, n=512)
    assert cm.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(ex41.H(cm.points), -1.0, atol=1e-12)
    for k in (0, 100, 300):
        T = return_time(ex41, cm.points[k], center=[1.0, 0.0])
        assert T == pytest.approx(cm.period, rel=1e-3)


def test_figure8_right_lobe_level_set():
    s = build_system("figure8", {"variant": 1})
    pts, _ = trace_level_set(s, -1 / 8, 256, center=[1.0, 0.0])
    assert np.all(pts[:, 0] > 0)
    assert np.allclose(s.H(pts), -1 / 8, atol=1e-12)


@settings(max_examples=15)
@given(st.floats(-2.6, -0.05))
def test_cycle_measure_property(level):
    # component of {H = level} around K1, traced from the default center
    s = build_system("example41")
    cm = cycle_measure(s, level, n=64)
    assert cm.period > 0 and np.all(cm.density > 0)
    assert cm.weights.sum() == pytest.approx(1.0)
    assert np.allclose(s.H(cm.points), level, atol=1e-10)


def test_vdp_limit_cycle():
    s = build_system("vdp")
    lc = find_limit_cycle(s, seed=2.0)
    assert lc.section_point[0] == pytest.approx(2.0086, abs=1e-3)
    assert lc.period == pytest.approx(6.6633, abs=1e-3)
    s2, _ = poincare_map(s, lc.section_point[0])
    assert s2 == pytest.approx(lc.section_point[0], abs=1e-7)
    # the long unperturbed run from (2, 0) stays on the cycle
    end = integrate(s, [2.0, 0.0], 100.0).final
    d = np.min(np.linalg.norm(lc.points - end, axis=1))
    assert d < 1e-2


@pytest.mark.parametrize("r, h", [(1.0, 1.0), (3.0, -3 + np.sqrt(18))])
def test_hopf_values(r, h):
    assert hopf_curve(r) == pytest.approx(h, abs=1e-12)


def test_hopf_monotone_to_three_halves():
    r = np.logspace(-2, 3, 50)
    h = np.array([hopf_curve(v) for v in r])
    assert np.all(np.diff(h) > 0)
    assert abs(hopf_curve(1e3) - 1.5) < 3e-3
    with pytest.raises(ValueError):
        hopf_curve(0.0)
