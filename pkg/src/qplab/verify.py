"""Sampled verification of the standing hypotheses on each model.

Every check draws a scrambled Sobol sample over its region, evaluates a
signed margin (positive means the inequality holds), optionally polishes the
worst sample by a pattern search, and returns a :class:`VerificationReport`.
Asymptotic statements ("for |x| large") are checked on explicit annuli so the
report says exactly what was tested.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm, qmc

from .models import (
    POSITIVE_ORTHANT, LyapunovCertificate, SystemSpec, build_system,
    mayleonard_decay_rate, vdp_certificate, vdp_drift_identity,
)

CAP = 1e6


@dataclass
class VerificationReport:
    name: str
    samples: int
    region: str
    margin: float
    witness: list
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["margin"] = float(self.margin)
        d["witness"] = [float(v) for v in self.witness]
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.name}: margin={self.margin:.6g} over {self.samples} samples "
                f"in {self.region}; worst at {np.round(self.witness, 6).tolist()}")


def _sobol(dim, n, seed):
    eng = qmc.Sobol(dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return eng.random(n)


def box_points(lo, hi, n, seed=0):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return qmc.scale(_sobol(len(lo), n, seed), lo, hi)


def shell_points(center, r1, r2, n, seed=0):
    """Low-discrepancy points in the annulus r1 <= |x - center| <= r2."""
    center = np.asarray(center, float)
    d = len(center)
    u = _sobol(d + 1, n, seed)
    g = norm.ppf(np.clip(u[:, :d], 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = (r1 ** d + u[:, d] * (r2 ** d - r1 ** d)) ** (1.0 / d)
    return center + r[:, None] * g


def _pattern_search(fun, x0, step, accept=lambda x: True, iters=60):
    """Minimise fun by compass search; returns (x, f)."""
    x = np.array(x0, float)
    f = fun(x[None, :])[0]
    d = len(x)
    dirs = np.vstack([np.eye(d), -np.eye(d)])
    for _ in range(iters):
        cand = x + step * dirs
        ok = np.array([accept(c) for c in cand])
        if not np.any(ok):
            step *= 0.5
            continue
        fc = fun(cand[ok])
        k = int(np.argmin(fc))
        if fc[k] < f:
            x, f = cand[ok][k], fc[k]
        else:
            step *= 0.5
            if step < 1e-9:
                break
    return x, f


def _finish(name, pts, margins, region, refine, fun, accept, step, details=None, strict=False):
    finite = np.isfinite(margins)
    if not np.all(finite):
        k = int(np.flatnonzero(~finite)[0])
        return VerificationReport(name, len(pts), region, float("-inf"), pts[k].tolist(), False,
                                  dict(details or {}, singular_samples=int(np.sum(~finite))))
    k = int(np.argmin(margins))
    x, m = pts[k], float(margins[k])
    if refine:
        x2, m2 = _pattern_search(fun, x, step, accept)
        if m2 < m:
            x, m = x2, float(m2)
    passed = m > 0 if strict else m >= 0
    return VerificationReport(name, len(pts), region, m, np.asarray(x).tolist(), bool(passed),
                              details or {})


def _in_box(lo, hi, sys=None):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)

    def ok(x):
        inside = np.all(x >= lo) and np.all(x <= hi)
        if sys is not None and sys.domain == POSITIVE_ORTHANT:
            inside = inside and np.all(x > 0)
        return bool(inside)
    return ok


def _region_text(lo, hi):
    return "box " + " x ".join(f"[{a:g}, {b:g}]" for a, b in zip(lo, hi))


# ---------------------------------------------------------------------------
# local monotonicity


def check_monotonicity(sys: SystemSpec, region, eps0: float = 0.5, samples: int = 4096,
                       seed: int = 0, refine: bool = True, cap: float = CAP) -> VerificationReport:
    """Empirical L_R = max (2<x-y, b(x)-b(y)> + |sigma(x)-sigma(y)|_F^2) / |x-y|^2.

    Pairs have |x - y| <= eps0 and both ends in the region; x = y is skipped.
    The margin is ``cap - L_R``: the condition only asks L_R to be finite.
    """
    if not 0 < eps0 < 1:
        raise ValueError("eps0 must lie in (0, 1)")
    lo, hi = (np.asarray(r, float) for r in region)
    d = sys.d
    u = _sobol(2 * d + 1, samples, seed)
    x = qmc.scale(u[:, :d], lo, hi)
    g = norm.ppf(np.clip(u[:, d:2 * d], 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = eps0 * u[:, 2 * d] ** (1.0 / d)
    y = x + rad[:, None] * g
    keep = np.all((y >= lo) & (y <= hi), axis=1) & (rad > 0)
    if sys.domain == POSITIVE_ORTHANT:
        keep &= np.all(x > 0, axis=1) & np.all(y > 0, axis=1)
    x, y = x[keep], y[keep]

    def ratio(z):
        a, b = z[:, :d], z[:, d:]
        dx = a - b
        nn = np.sum(dx * dx, axis=1)
        num = 2 * np.sum(dx * (sys.drift(a) - sys.drift(b)), axis=1)
        ds = sys.diffusion(a) - sys.diffusion(b)
        num += np.sum(ds * ds, axis=(1, 2))
        return np.where(nn > 0, num / np.where(nn > 0, nn, 1), -np.inf)

    z = np.hstack([x, y])
    L = ratio(z)
    box_ok = _in_box(np.concatenate([lo, lo]), np.concatenate([hi, hi]), None)

    def accept(c):
        if not box_ok(c):
            return False
        if sys.domain == POSITIVE_ORTHANT and np.any(c <= 0):
            return False
        sep = np.linalg.norm(c[:d] - c[d:])
        return 0 < sep <= eps0

    rep = _finish("local-monotonicity", z, cap - L, _region_text(lo, hi), refine,
                  lambda c: cap - ratio(c), accept, 0.05 * eps0)
    rep.details["L_R"] = float(cap - rep.margin)
    rep.details["eps0"] = eps0
    return rep


# ---------------------------------------------------------------------------
# Lyapunov conditions


def lyapunov_terms(sys: SystemSpec, cert: LyapunovCertificate, x):
    """(J(x), Trace(sigma^T Hess V sigma), V(x)) with 0/0 read as 0 in the last J term."""
    S = sys.diffusion(x)
    gV = cert.grad(x)
    HV = cert.hess(x)
    V = cert.V(x)
    tr = np.einsum("kim,kij,kjm->k", S, HV, S)
    sg = np.einsum("kim,ki->km", S, gV)
    q = np.sum(sg * sg, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        last = np.where(q == 0, 0.0, q / (cert.eta * V))
    J = np.sum(sys.drift(x) * gV, axis=1) + 0.5 * cert.theta * tr + last
    return J, tr, V


def check_lyapunov(sys: SystemSpec, cert: LyapunovCertificate, region, samples: int = 4096,
                   seed: int = 0, refine: bool = True) -> VerificationReport:
    """J <= C(1 + V) and Trace(sigma^T Hess V sigma) >= -M - C V on a box."""
    lo, hi = (np.asarray(r, float) for r in region)
    x = box_points(lo, hi, samples, seed)
    if sys.domain == POSITIVE_ORTHANT:
        x = x[np.all(x > 0, axis=1)]

    def margin(z):
        J, tr, V = lyapunov_terms(sys, cert, z)
        m1 = cert.C * (1 + V) - J
        m2 = tr + cert.M + cert.C * V
        return np.minimum(m1, m2)

    m = margin(x)
    J, tr, V = lyapunov_terms(sys, cert, x)
    with np.errstate(invalid="ignore"):
        C_needed = float(np.max(J / (1 + V)))
    rep = _finish("lyapunov", x, m, _region_text(lo, hi), refine, margin, _in_box(lo, hi, sys),
                  0.02 * float(np.max(hi - lo)),
                  {"C": cert.C, "M": cert.M, "theta": cert.theta, "eta": cert.eta,
                   "C_needed": C_needed, "min_trace": float(np.min(tr))})
    return rep


def check_trace_bound(sys: SystemSpec, cert: LyapunovCertificate, lower: float, region,
                      samples: int = 4096, seed: int = 0) -> VerificationReport:
    """Trace(sigma^T Hess V sigma) > lower on a box (strict)."""
    lo, hi = (np.asarray(r, float) for r in region)
    x = box_points(lo, hi, samples, seed)

    def margin(z):
        return lyapunov_terms(sys, cert, z)[1] - lower

    return _finish(f"trace-bound>{lower:g}", x, margin(x), _region_text(lo, hi), True, margin,
                   _in_box(lo, hi), 0.05, strict=True)


def generator(sys: SystemSpec, cert: LyapunovCertificate, eps: float, x):
    """L^eps V = <b, grad V> + eps/2 Trace(sigma^T Hess V sigma)."""
    _, tr, _ = lyapunov_terms(sys, cert, x)
    return np.sum(sys.drift(x) * cert.grad(x), axis=1) + 0.5 * eps * tr


def check_dissipativity(sys: SystemSpec, cert: LyapunovCertificate, eps: float, shell,
                        center=None, bound: Optional[Callable] = None, samples: int = 4096,
                        seed: int = 0, refine: bool = True, name: str = "dissipativity",
                        use_J: bool = False) -> VerificationReport:
    """max of L^eps V + bound(x) over the annulus r1 <= |x - center| <= r2.

    With ``bound=None`` the report's ``details['gamma']`` is the empirical
    gamma with L^eps V <= -gamma on the shell.  ``use_J`` swaps the generator
    for the left side J of the Lyapunov inequality.
    """
    r1, r2 = shell
    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    center = np.zeros(sys.d) if center is None else np.asarray(center, float)
    x = shell_points(center, r1, r2, samples, seed)
    if sys.domain == POSITIVE_ORTHANT:
        x = x[np.all(x > 0, axis=1)]
    extra = bound if bound is not None else (lambda z: np.zeros(len(z)))

    def lhs(z):
        if use_J:
            return lyapunov_terms(sys, cert, z)[0]
        return generator(sys, cert, eps, z)

    def margin(z):
        return -(lhs(z) + extra(z))

    def accept(c):
        r = np.linalg.norm(c - center)
        if sys.domain == POSITIVE_ORTHANT and np.any(c <= 0):
            return False
        return r1 <= r <= r2

    region = f"shell {r1:g} <= |x - {np.round(center, 6).tolist()}| <= {r2:g}"
    rep = _finish(name, x, margin(x), region, refine, margin, accept, 0.01 * r1, strict=True)
    rep.details["gamma"] = float(np.min(-lhs(x)))
    rep.details["eps"] = eps
    return rep


def check_positive_definite(alpha: float, beta: float) -> VerificationReport:
    """Eigenvalues of the matrix with unit diagonal and off-diagonal (alpha+beta)/2.

    Closed form: 1 + s (simple) and 1 - s/2 (double) for s = alpha + beta.
    Passes iff all are strictly positive.
    """
    s = alpha + beta
    closed = np.array([1 + s, 1 - s / 2, 1 - s / 2])
    P = np.full((3, 3), s / 2)
    np.fill_diagonal(P, 1.0)
    numeric = np.linalg.eigvalsh(P)
    m = float(closed.min())
    return VerificationReport("positive-definite", 1, f"alpha+beta={s:g}", m, [alpha, beta], m > 0,
                              {"eigenvalues": sorted(closed.tolist()),
                               "eigvalsh": numeric.tolist()})


GROWTH_BOUNDS = {
    # sigma^2 <= c1 (Y1^4 + Y2^2 + 1)
    "vdp": lambda x: x[:, 0] ** 4 + x[:, 1] ** 2 + 1,
    # sigma^2 <= c1 (v^4 + i^2 + 1)
    "diode": lambda x: x[:, 0] ** 4 + x[:, 1] ** 2 + 1,
    # |sigma|_F^2 <= c1 (x1^4 + |x2|^(4/3) + 1)
    "figure8": lambda x: x[:, 0] ** 4 + np.abs(x[:, 1]) ** (4 / 3) + 1,
    # sum sigma_i^2 <= c1
    "mayleonard": lambda x: np.ones(len(x)),
}


def _noise_size(sys, x):
    if sys.name == "mayleonard":
        return np.sum(sys.noise_rates(x) ** 2, axis=1)
    if sys.name in ("vdp", "diode"):
        return sys.noise_amplitude(x) ** 2
    S = sys.diffusion(x)
    return np.sum(S * S, axis=(1, 2))


def check_growth_bound(sys: SystemSpec, bound, region, samples: int = 4096, seed: int = 0,
                       cap: float = CAP) -> VerificationReport:
    """Smallest c1 with noise size <= c1 * bound(x) over the sample.

    ``bound`` is a model family name from :data:`GROWTH_BOUNDS` or a callable.
    """
    fn = GROWTH_BOUNDS[bound] if isinstance(bound, str) else bound
    lo, hi = (np.asarray(r, float) for r in region)
    x = box_points(lo, hi, samples, seed)
    if sys.domain == POSITIVE_ORTHANT:
        x = x[np.all(x > 0, axis=1)]
    ratio = _noise_size(sys, x) / fn(x)
    k = int(np.argmax(ratio))
    c1 = float(ratio[k])
    return VerificationReport("growth-bound", len(x), _region_text(lo, hi), cap - c1,
                              x[k].tolist(), bool(np.isfinite(c1)), {"c1": c1})


def check_vdp_identity(sys: SystemSpec, samples: int = 10_000, seed: int = 0,
                       box=(-3.0, 3.0), tol: float = 1e-10) -> VerificationReport:
    """<b, grad V> against its closed form; margin = tol - max error."""
    cert = sys.certificate
    x = box_points([box[0]] * 2, [box[1]] * 2, samples, seed)
    err = np.abs(np.sum(sys.drift(x) * cert.grad(x), axis=1) - vdp_drift_identity(x))
    k = int(np.argmax(err))
    return VerificationReport("vdp-drift-identity", samples, _region_text([box[0]] * 2, [box[1]] * 2),
                              tol - float(err[k]), x[k].tolist(), bool(err[k] <= tol),
                              {"max_error": float(err[k])})


def check_radial_growth(cert: LyapunovCertificate, d: int, radii=(5, 10, 20, 40, 80),
                        center=None, samples: int = 512, seed: int = 0, domain=None) -> VerificationReport:
    """min V on spheres of increasing radius must increase without bound."""
    center = np.zeros(d) if center is None else np.asarray(center, float)
    mins = []
    for r in radii:
        x = shell_points(center, r, r * (1 + 1e-9), samples, seed)
        if domain == POSITIVE_ORTHANT:
            x = x[np.all(x > 0, axis=1)]
        mins.append(float(np.min(cert.V(x))))
    inc = np.diff(mins)
    m = float(np.min(inc)) if len(inc) else 0.0
    return VerificationReport("radial-growth", samples * len(radii), f"spheres r={list(radii)}",
                              m, center.tolist(), m > 0, {"min_V": mins})


# ---------------------------------------------------------------------------
# the default sweep


def default_checks(name: str, params: Optional[dict] = None, samples: int = 4096, seed: int = 0):
    """List of (label, thunk) covering the hypotheses for one built-in model."""
    sys = build_system(name, params or {})
    cert = sys.certificate
    checks = []
    add = lambda label, fn: checks.append((label, fn))
    if name in ("example41", "example42"):
        box = ([-3, -3], [3, 3])
        add("monotonicity", lambda: check_monotonicity(sys, box, 0.5, samples, seed))
        add("lyapunov", lambda: check_lyapunov(sys, cert, box, samples, seed))
        add("trace>-2", lambda: check_trace_bound(sys, cert, -2.0, box, samples, seed))
        add("dissipativity", lambda: check_dissipativity(sys, cert, 0.1, (5, 50), samples=samples, seed=seed))
        add("radial-growth", lambda: check_radial_growth(cert, 2))
    elif name == "vdp":
        box = ([-5, -5], [5, 5])
        eps = 0.1
        c = vdp_certificate(eps)
        add("monotonicity", lambda: check_monotonicity(sys, box, 0.5, samples, seed))
        add("lyapunov", lambda: check_lyapunov(sys, c, box, samples, seed))
        add("J<=-(Y1^4+Y2^2)/5", lambda: check_dissipativity(
            sys, c, eps, (17, 50), bound=lambda z: (z[:, 0] ** 4 + z[:, 1] ** 2) / 5,
            samples=samples, seed=seed, name="vdp-quartic-bound", use_J=True))
        add("drift-identity", lambda: check_vdp_identity(sys, seed=seed))
        add("growth", lambda: check_growth_bound(sys, "vdp", box, samples, seed))
        add("radial-growth", lambda: check_radial_growth(c, 2))
    elif name == "diode":
        box = ([-3, -3], [5, 3])
        add("monotonicity", lambda: check_monotonicity(sys, box, 0.5, samples, seed))
        add("lyapunov", lambda: check_lyapunov(sys, cert, box, samples, seed))
        add("L^eps V<=-k(i^2+v^4)", lambda: check_dissipativity(
            sys, cert, 0.1, (5, 50), bound=lambda z: 0.5 * (z[:, 1] ** 2 + z[:, 0] ** 4),
            samples=samples, seed=seed, name="diode-quartic-bound"))
        add("growth", lambda: check_growth_bound(sys, "diode", box, samples, seed))
        add("radial-growth", lambda: check_radial_growth(cert, 2))
    elif name == "mayleonard":
        a, b = sys.params["alpha"], sys.params["beta"]
        s = a + b
        E = sys.classes[0].representative()
        k = mayleonard_decay_rate(a, b)
        c1 = 3.0
        box = ([0.05] * 3, [3.0] * 3)
        eps = 0.5 * k / (2 * c1 * (1 + s))
        r1 = 1 / (math.sqrt(2) * (1 + s))
        add("monotonicity", lambda: check_monotonicity(sys, box, 0.5, samples, seed))
        add("lyapunov", lambda: check_lyapunov(sys, cert, box, samples, seed))
        add("positive-definite", lambda: check_positive_definite(a, b))
        add("L^eps V<=-k|x-E|^2+eps c1/(2(1+s))", lambda: check_dissipativity(
            sys, cert, eps, (1e-3, 3.0), center=E,
            bound=lambda z: k * np.sum((z - E) ** 2, axis=1) - eps * c1 / (2 * (1 + s)) - 1e-12,
            samples=samples, seed=seed, name="mayleonard-quadratic-bound"))
        add("L^eps V<=-gamma", lambda: check_dissipativity(
            sys, cert, eps, (r1, 5.0), center=E, samples=samples, seed=seed))
        add("growth", lambda: check_growth_bound(sys, "mayleonard", box, samples, seed))
    elif name == "figure8":
        box = ([-2.5, -2.5], [2.5, 2.5])
        add("monotonicity", lambda: check_monotonicity(sys, box, 0.5, samples, seed))
        add("lyapunov", lambda: check_lyapunov(sys, cert, box, samples, seed))
        add("dissipativity", lambda: check_dissipativity(sys, cert, 0.1, (5, 50), samples=samples, seed=seed))
        add("growth", lambda: check_growth_bound(sys, "figure8", box, samples, seed))
        add("radial-growth", lambda: check_radial_growth(cert, 2))
    else:
        raise ValueError(f"no default checks for {name}")
    return checks


def run_default_sweep(names=("example41", "example42", "vdp", "diode", "mayleonard", "figure8"),
                      samples: int = 4096, seed: int = 0):
    out = {}
    for n in names:
        out[n] = [fn() for _, fn in default_checks(n, samples=samples, seed=seed)]
    return out
