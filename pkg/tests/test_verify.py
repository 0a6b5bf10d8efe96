import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qplab.models import LyapunovCertificate, build_system
from qplab.verify import (
    box_points, check_dissipativity, check_growth_bound, check_lyapunov, check_monotonicity,
    check_positive_definite, check_radial_growth, check_trace_bound, check_vdp_identity,
    default_checks, generator, run_default_sweep, shell_points,
)

BOX = ([-2.0, -2.0], [2.0, 2.0])


def test_linear_monotonicity_constant(linear_sys):
    # b = -x, sigma = I: the ratio is exactly -2 for every pair
    rep = check_monotonicity(linear_sys, BOX, samples=512)
    assert rep.passed
    assert rep.details["L_R"] == pytest.approx(-2.0, abs=1e-12)


def test_linear_generator_closed_form(linear_sys):
    x = box_points(*BOX, 64)
    cert = linear_sys.certificate
    # L^eps V = -|x|^2 + eps d / 2
    assert np.allclose(generator(linear_sys, cert, 0.3, x), -np.sum(x * x, 1) + 0.3)


def test_linear_dissipativity_gamma(linear_sys):
    rep = check_dissipativity(linear_sys, linear_sys.certificate, 0.1, (1.0, 2.0), samples=1024)
    # min over the shell of |x|^2 - eps is 1 - 0.1, reached on the inner sphere
    assert rep.passed
    assert rep.details["gamma"] == pytest.approx(0.9, abs=5e-3)


def test_gradient_system_zero_noise(linear_sys):
    rep = check_dissipativity(linear_sys, linear_sys.certificate, 0.0, (0.5, 3.0), samples=256)
    assert rep.passed and rep.details["gamma"] > 0.24


def test_linear_trace_and_lyapunov(linear_sys):
    cert = linear_sys.certificate
    rep = check_trace_bound(linear_sys, cert, 1.9, BOX, samples=128)
    assert rep.margin == pytest.approx(0.1) and rep.passed
    assert not check_trace_bound(linear_sys, cert, 2.1, BOX, samples=128).passed
    assert check_lyapunov(linear_sys, cert, BOX, samples=256).passed


def test_determinism(linear_sys):
    a = check_lyapunov(linear_sys, linear_sys.certificate, BOX, samples=256, seed=3)
    b = check_lyapunov(linear_sys, linear_sys.certificate, BOX, samples=256, seed=3)
    assert a.to_json() == b.to_json()
    json.loads(a.to_json())
    assert "PASS" in str(a)


def test_more_samples_never_raise_the_margin():
    # scrambled Sobol prefixes are nested, so the unrefined minimum can only drop
    s = build_system("example41")
    m = [check_lyapunov(s, s.certificate, ([-3, -3], [3, 3]), samples=n, seed=1, refine=False).margin
         for n in (256, 512, 1024, 2048)]
    assert all(b <= a for a, b in zip(m, m[1:]))
    refined = check_lyapunov(s, s.certificate, ([-3, -3], [3, 3]), samples=256, seed=1).margin
    assert refined <= m[0]


def test_singular_sample_fails():
    s = build_system("example41")
    c = s.certificate
    bad = LyapunovCertificate(V=c.V, grad=c.grad,
                              hess=lambda x: np.where(x[:, :1, None] > 2.5, np.nan, c.hess(x)),
                              theta=c.theta, eta=c.eta, C=c.C, M=c.M)
    rep = check_lyapunov(s, bad, ([-3, -3], [3, 3]), samples=256)
    assert not rep.passed and rep.margin == -np.inf
    assert rep.details["singular_samples"] > 0


def test_too_small_constant_fails():
    s = build_system("example41")
    c = s.certificate
    weak = LyapunovCertificate(V=c.V, grad=c.grad, hess=c.hess, theta=c.theta, eta=c.eta, C=2.0, M=c.M)
    rep = check_lyapunov(s, weak, ([-6, -6], [6, 6]), samples=1024)
    assert not rep.passed and rep.details["C_needed"] > 2.0


@pytest.mark.parametrize("s, margin, ok", [(0.0, 1.0, True), (1.99, 0.005, True),
                                           (2.0, 0.0, False), (2.01, -0.005, False),
                                           (-1.0, 0.0, False)])
def test_positive_definite_boundary(s, margin, ok):
    rep = check_positive_definite(s / 2, s / 2)
    assert rep.margin == pytest.approx(margin, abs=1e-12)
    assert rep.passed is ok
    assert np.allclose(sorted(rep.details["eigvalsh"]), rep.details["eigenvalues"], atol=1e-12)


@given(st.floats(-0.99, 1.99), st.floats(0, 1))
def test_positive_definite_matches_eigvalsh(s, split):
    rep = check_positive_definite(s * split, s * (1 - split))
    assert rep.passed == (min(rep.details["eigvalsh"]) > 0)


@pytest.mark.parametrize("name, c1", [("vdp", 1.0), ("diode", 1.0), ("figure8", 2.0),
                                      ("mayleonard", 3.0)])
def test_growth_constants(name, c1):
    s = build_system(name)
    box = ([0.05] * 3, [3.0] * 3) if name == "mayleonard" else ([-3, -3], [3, 3])
    rep = check_growth_bound(s, name, box, samples=2048)
    assert rep.passed
    assert rep.details["c1"] <= c1 + 1e-12
    assert rep.details["c1"] > 0.99 * c1


def test_vdp_identity_and_quartic_shell():
    s = build_system("vdp")
    assert check_vdp_identity(s).passed
    checks = dict(default_checks("vdp", samples=1024))
    assert checks["J<=-(Y1^4+Y2^2)/5"]().passed


@settings(max_examples=20)
@given(st.floats(0.1, 5), st.floats(1.01, 4), st.integers(2, 4))
def test_shell_points_stay_in_annulus(r1, f, d):
    c = np.arange(d, dtype=float)
    x = shell_points(c, r1, r1 * f, 128, seed=2)
    r = np.linalg.norm(x - c, axis=1)
    assert np.all(r >= r1 * (1 - 1e-9)) and np.all(r <= r1 * f * (1 + 1e-9))


def test_radial_growth_flags_bounded_function():
    bounded = LyapunovCertificate(V=lambda x: np.tanh(np.sum(x ** 2, -1)), grad=None, hess=None,
                                  theta=1, eta=1, C=1, M=1)
    assert not check_radial_growth(bounded, 2).passed


def test_argument_validation(linear_sys):
    with pytest.raises(ValueError):
        check_monotonicity(linear_sys, BOX, eps0=1.5)
    with pytest.raises(ValueError):
        check_dissipativity(linear_sys, linear_sys.certificate, 0.1, (2.0, 1.0))


def test_mayleonard_boundary_through_default_checks():
    ok = [fn() for label, fn in default_checks("mayleonard", {"alpha": 0.995, "beta": 0.995}, 1024)]
    assert all(r.passed for r in ok)
    pd = dict(default_checks("mayleonard", {"alpha": 0.8, "beta": 0.8}, 256))["positive-definite"]()
    assert pd.margin == pytest.approx(0.2)


def test_default_sweep_passes():
    out = run_default_sweep(samples=2048)
    assert set(out) == {"example41", "example42", "vdp", "diode", "mayleonard", "figure8"}
    failed = [(n, r.name) for n, reps in out.items() for r in reps if not r.passed]
    assert not failed
