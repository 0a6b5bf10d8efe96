"""SDE model registry.

Every model is a :class:`SystemSpec` holding closed-form, vectorised callbacks:
``drift(x)`` maps an array of shape ``(..., d)`` to ``(..., d)`` and
``diffusion(x)`` maps it to ``(..., d, m)``.  Analytic extras (Hamiltonian,
gradient decomposition ``b = -grad U + l``, Lyapunov certificate, known
equivalence classes) are attached where the model has them.

Shipped models: ``example41``, ``example42`` (quartic systems with a stable
cycle at ``H = -1``), ``vdp`` (stochastic van der Pol), ``diode`` (single diode
circuit), ``mayleonard`` (three-species competition on the open orthant) and
``figure8`` (figure-eight Hamiltonian with dissipation ``F_i(H)``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray

FULL_SPACE = "full-space"
POSITIVE_ORTHANT = "positive-orthant"

SECOND_ORDER = "second-order"
DECOMPOSABLE = "decomposable"


class ModelError(ValueError):
    """Unknown model name or inadmissible parameters."""


class DomainError(ValueError):
    """State outside the model's domain."""


@dataclass(frozen=True)
class LyapunovCertificate:
    V: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hess: Callable[[Array], Array]
    theta: float
    eta: float
    C: float
    M: float


@dataclass(frozen=True)
class EquivalenceClassSpec:
    """A node of the transition graph.

    ``kind`` is one of ``equilibrium`` (``point``), ``level-cycle`` (``H`` and
    ``level``), ``annulus`` (``H`` and ``interval``) or ``limit-cycle`` (a cycle
    without closed form; ``point`` is a seed on a Poincare section).
    """

    label: int
    kind: str
    name: str = ""
    point: Optional[Array] = None
    H: Optional[Callable[[Array], Array]] = None
    level: Optional[float] = None
    interval: Optional[tuple] = None

    def representative(self) -> Array:
        if self.point is None:
            raise ValueError(f"class {self.name or self.label} has no stored point")
        return np.asarray(self.point, dtype=float)


@dataclass(frozen=True)
class SystemSpec:
    name: str
    d: int
    m: int
    drift: Callable[[Array], Array]
    diffusion: Callable[[Array], Array]
    drift_jac: Callable[[Array], Array]
    domain: str = FULL_SPACE
    flags: frozenset = frozenset()
    params: dict = field(default_factory=dict)
    constant_diffusion: bool = False
    # optional analytic structure
    H: Optional[Callable[[Array], Array]] = None
    gradH: Optional[Callable[[Array], Array]] = None
    U: Optional[Callable[[Array], Array]] = None
    gradU: Optional[Callable[[Array], Array]] = None
    rotation: Optional[Callable[[Array], Array]] = None
    certificate: Optional[LyapunovCertificate] = None
    classes: tuple = ()
    # (i, j, kind) with kind "flow" (cost 0) or "extremal" (cost 2 dU)
    direct_transitions: tuple = ()
    # scalar noise amplitude as written in the model (sigma(Y) for vdp/diode)
    noise_amplitude: Optional[Callable[[Array], Array]] = None
    # x_i * (growth_i(x) dt + sqrt(eps) rate_i(x) dB_i) structure for log-Euler
    growth: Optional[Callable[[Array], Array]] = None
    noise_rates: Optional[Callable[[Array], Array]] = None

    @property
    def second_order(self) -> bool:
        return SECOND_ORDER in self.flags

    @property
    def decomposable(self) -> bool:
        return DECOMPOSABLE in self.flags

    def check_state(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DomainError(f"{self.name}: expected last axis of length {self.d}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError(f"{self.name}: non-finite state")
        if self.domain == POSITIVE_ORTHANT and np.any(x <= 0):
            raise DomainError(f"{self.name}: state must lie in the open positive orthant")
        return x

    def class_by_name(self, name: str) -> EquivalenceClassSpec:
        for c in self.classes:
            if c.name == name:
                return c
        raise KeyError(name)


# ---------------------------------------------------------------------------
# quartic systems with a stable cycle (Examples 4.1 / 4.2)


def _quartic_cycle_system(name, F, Fp, Fpp, eq_points, cycle_label, transitions, hmin):
    def H(x):
        return 0.5 * x[..., 1] ** 2 + F(x[..., 0])

    def gradH(x):
        return np.stack([Fp(x[..., 0]), x[..., 1]], axis=-1)

    def drift(x):
        x1, x2 = x[..., 0], x[..., 1]
        g = H(x) + 1.0
        fp = Fp(x1)
        return np.stack([x2 - fp * g, -fp - x2 * g], axis=-1)

    def drift_jac(x):
        x1, x2 = x[..., 0], x[..., 1]
        g = H(x) + 1.0
        fp, fpp = Fp(x1), Fpp(x1)
        j = np.empty(x.shape + (2,))
        j[..., 0, 0] = -fpp * g - fp * fp
        j[..., 0, 1] = 1.0 - fp * x2
        j[..., 1, 0] = -fpp - x2 * fp
        j[..., 1, 1] = -g - x2 * x2
        return j

    def diffusion(x):
        return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()

    def U(x):
        h = H(x)
        return 0.5 * h * h + h

    def gradU(x):
        return (H(x) + 1.0)[..., None] * gradH(x)

    def rotation(x):
        return np.stack([x[..., 1], -Fp(x[..., 0])], axis=-1)

    def hessV(x):
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = Fpp(x[..., 0])
        out[..., 1, 1] = 1.0
        return out

    # V = H + 3 is positive since min H = -8/3
    cert = LyapunovCertificate(
        V=lambda x: H(x) + 3.0, grad=gradH, hess=hessV, theta=2.0, eta=1.0, C=20.0, M=2.0
    )
    classes = []
    for label, (cname, pt) in enumerate(eq_points):
        if cname == cycle_label:
            classes.append(EquivalenceClassSpec(label, "level-cycle", cname, H=H, level=-1.0))
        else:
            classes.append(EquivalenceClassSpec(label, "equilibrium", cname, point=np.array(pt, float)))
    return SystemSpec(
        name=name, d=2, m=2, drift=drift, diffusion=diffusion, drift_jac=drift_jac,
        flags=frozenset({DECOMPOSABLE}), params={}, constant_diffusion=True,
        H=H, gradH=gradH, U=U, gradU=gradU, rotation=rotation, certificate=cert,
        classes=tuple(classes), direct_transitions=tuple(transitions),
    )


def _example41(params):
    F = lambda s: s ** 4 / 4 + s ** 3 / 3 - s ** 2
    Fp = lambda s: s * (s - 1) * (s + 2)
    Fpp = lambda s: 3 * s ** 2 + 2 * s - 2
    pts = [("K1", (-2.0, 0.0)), ("K2", None), ("K3", (1.0, 0.0)), ("K4", (0.0, 0.0))]
    # K1 -> K2 and K4 -> {K2, K3} along the flow; uphill moves along extremals
    trans = [(0, 1, "flow"), (3, 1, "flow"), (3, 2, "flow"),
             (1, 0, "extremal"), (1, 3, "extremal"), (2, 3, "extremal")]
    return _quartic_cycle_system("example41", F, Fp, Fpp, pts, "K2", trans, -8 / 3)


def _example42(params):
    F = lambda s: s ** 4 / 4 - s ** 3 / 3 - s ** 2
    Fp = lambda s: s * (s + 1) * (s - 2)
    Fpp = lambda s: 3 * s ** 2 - 2 * s - 2
    pts = [("K1", (-1.0, 0.0)), ("K2", None), ("K3", (0.0, 0.0)), ("K4", (2.0, 0.0))]
    trans = [(3, 1, "flow"), (2, 1, "flow"), (2, 0, "flow"),
             (1, 3, "extremal"), (1, 2, "extremal"), (0, 2, "extremal")]
    return _quartic_cycle_system("example42", F, Fp, Fpp, pts, "K2", trans, -8 / 3)


# ---------------------------------------------------------------------------
# van der Pol


def _scalar_noise(params, key="sigma"):
    sig = params.get(key)
    if sig is None:
        return lambda x: np.ones(x.shape[:-1])
    if callable(sig):
        return lambda x: np.asarray(sig(x), dtype=float) * np.ones(x.shape[:-1])
    value = float(sig)
    if value <= 0:
        raise ModelError(f"{key} must be positive, got {value}")
    return lambda x: np.full(x.shape[:-1], value)


def vdp_certificate(eps: float = 0.1, C: float = 3.0, M: float = 1.0) -> LyapunovCertificate:
    """Nevelson-type certificate with theta = eps/2 and eta = 8/eps."""
    a = (math.sqrt(5) - 1) / 24
    c = (math.sqrt(5) + 1) / 2

    def q(x):
        y1, y2 = x[..., 0], x[..., 1]
        return y2 + y1 ** 3 / 3 - c * y1

    def V(x):
        return a * x[..., 0] ** 4 + 0.5 * q(x) ** 2

    def grad(x):
        y1 = x[..., 0]
        qq = q(x)
        return np.stack([4 * a * y1 ** 3 + qq * (y1 ** 2 - c), qq], axis=-1)

    def hess(x):
        y1 = x[..., 0]
        out = np.empty(x.shape + (2,))
        out[..., 0, 0] = 12 * a * y1 ** 2 + (y1 ** 2 - c) ** 2 + 2 * y1 * q(x)
        out[..., 0, 1] = out[..., 1, 0] = y1 ** 2 - c
        out[..., 1, 1] = 1.0
        return out

    return LyapunovCertificate(V=V, grad=grad, hess=hess, theta=eps / 2, eta=8 / eps, C=C, M=M)


def vdp_drift_identity(x):
    """Closed form of <b, grad V> for the van der Pol certificate."""
    y1, y2 = x[..., 0], x[..., 1]
    return -y1 ** 4 / 3 + (math.sqrt(5) + 1) / 2 * y1 ** 2 - (math.sqrt(5) - 1) / 2 * y2 ** 2


def _vdp(params):
    sig = _scalar_noise(params)

    def drift(x):
        y1, y2 = x[..., 0], x[..., 1]
        return np.stack([y2, -((y1 ** 2 - 1) * y2 + y1)], axis=-1)

    def drift_jac(x):
        y1, y2 = x[..., 0], x[..., 1]
        j = np.zeros(x.shape + (2,))
        j[..., 0, 1] = 1.0
        j[..., 1, 0] = -2 * y1 * y2 - 1
        j[..., 1, 1] = -(y1 ** 2 - 1)
        return j

    def diffusion(x):
        out = np.zeros(x.shape + (1,))
        out[..., 1, 0] = sig(x)
        return out

    classes = (
        EquivalenceClassSpec(0, "equilibrium", "O", point=np.zeros(2)),
        EquivalenceClassSpec(1, "limit-cycle", "Gamma", point=np.array([2.0, 0.0])),
    )
    return SystemSpec(
        name="vdp", d=2, m=1, drift=drift, diffusion=diffusion, drift_jac=drift_jac,
        flags=frozenset({SECOND_ORDER}), params=dict(params),
        constant_diffusion="sigma" not in params or not callable(params["sigma"]),
        certificate=vdp_certificate(float(params.get("cert_eps", 0.1))),
        classes=classes, noise_amplitude=sig,
        direct_transitions=((0, 1, "flow"),),
    )


# ---------------------------------------------------------------------------
# single diode circuit, state (v, i)


def _diode_params(params):
    p = {"L": 1.0, "C": 2.0, "R": 2.0, "E": 1.0}
    p.update({k: v for k, v in params.items() if k in p})
    for k in ("L", "C", "R", "E"):
        if not float(p[k]) > 0:
            raise ModelError(f"diode requires {k} > 0, got {p[k]}")
        p[k] = float(p[k])
    return p


def diode_f(v, E):
    u = v - E
    return u ** 3 - u


def diode_fp(v, E):
    return 3 * (v - E) ** 2 - 1


def diode_equilibria(L, C, R, E):
    """Equilibria (v, i) of the unperturbed circuit: S, and A, B when R > 1."""
    out = {"S": np.array([E, 0.0])}
    if R > 1:
        s = math.sqrt(1 - 1 / R)
        out["A"] = np.array([E + s, -s / R])
        out["B"] = np.array([E - s, s / R])
    return out


def _diode(params):
    p = _diode_params(params)
    L, C, R, E = p["L"], p["C"], p["R"], p["E"]
    sig = _scalar_noise(params)

    def drift(x):
        v, i = x[..., 0], x[..., 1]
        return np.stack([(i - diode_f(v, E)) / C, (E - R * i - v) / L], axis=-1)

    def drift_jac(x):
        v = x[..., 0]
        j = np.zeros(x.shape + (2,))
        j[..., 0, 0] = -diode_fp(v, E) / C
        j[..., 0, 1] = 1 / C
        j[..., 1, 0] = -1 / L
        j[..., 1, 1] = -R / L
        return j

    def diffusion(x):
        out = np.zeros(x.shape + (1,))
        out[..., 1, 0] = sig(x) / L
        return out

    def V(x):
        return L * x[..., 1] ** 2 + C * x[..., 0] ** 2

    def gradV(x):
        return np.stack([2 * C * x[..., 0], 2 * L * x[..., 1]], axis=-1)

    def hessV(x):
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = 2 * C
        out[..., 1, 1] = 2 * L
        return out

    c1 = float(params.get("c1", 1.0))
    cert = LyapunovCertificate(V=V, grad=gradV, hess=hessV, theta=L / (4 * c1),
                               eta=16 * c1 / L, C=float(params.get("cert_C", 20.0)),
                               M=float(params.get("cert_M", 1.0)))
    eqs = diode_equilibria(L, C, R, E)
    classes = tuple(EquivalenceClassSpec(k, "equilibrium", n, point=pt)
                    for k, (n, pt) in enumerate(eqs.items()))
    return SystemSpec(
        name="diode", d=2, m=1, drift=drift, diffusion=diffusion, drift_jac=drift_jac,
        params={**params, **p}, constant_diffusion=not callable(params.get("sigma")),
        certificate=cert, classes=classes, noise_amplitude=sig,
    )


def diode_to_vw(sys: SystemSpec, x):
    """(v, i) -> (v, w) with w = (i - f(v)) / C."""
    x = np.asarray(x, float)
    E, C = sys.params["E"], sys.params["C"]
    return np.stack([x[..., 0], (x[..., 1] - diode_f(x[..., 0], E)) / C], axis=-1)


def diode_to_vi(sys: SystemSpec, p):
    p = np.asarray(p, float)
    E, C = sys.params["E"], sys.params["C"]
    return np.stack([p[..., 0], C * p[..., 1] + diode_f(p[..., 0], E)], axis=-1)


def diode_second_order(sys: SystemSpec) -> SystemSpec:
    """The diode circuit in the (v, w = dv/dt) chart, a second-order system."""
    if sys.name != "diode":
        raise ModelError("diode_second_order needs the diode model")
    L, C, R, E = (sys.params[k] for k in ("L", "C", "R", "E"))
    sig = sys.noise_amplitude

    def drift(x):
        v, w = x[..., 0], x[..., 1]
        acc = -((diode_fp(v, E) + C * R / L) * w + R / L * diode_f(v, E) + (v - E) / L) / C
        return np.stack([w, acc], axis=-1)

    def drift_jac(x):
        v, w = x[..., 0], x[..., 1]
        j = np.zeros(x.shape + (2,))
        j[..., 0, 1] = 1.0
        j[..., 1, 0] = -(6 * (v - E) * w + R / L * diode_fp(v, E) + 1 / L) / C
        j[..., 1, 1] = -(diode_fp(v, E) + C * R / L) / C
        return j

    def amp(x):
        return sig(diode_to_vi(sys, x)) / (L * C)

    def diffusion(x):
        out = np.zeros(x.shape + (1,))
        out[..., 1, 0] = amp(x)
        return out

    eqs = diode_equilibria(L, C, R, E)
    classes = tuple(EquivalenceClassSpec(k, "equilibrium", n, point=np.array([pt[0], 0.0]))
                    for k, (n, pt) in enumerate(eqs.items()))
    return SystemSpec(
        name="diode-vw", d=2, m=1, drift=drift, diffusion=diffusion, drift_jac=drift_jac,
        flags=frozenset({SECOND_ORDER}), params=dict(sys.params),
        constant_diffusion=False, classes=classes, noise_amplitude=amp,
    )


# ---------------------------------------------------------------------------
# May-Leonard


def mayleonard_matrix(alpha, beta):
    return np.array([[1.0, alpha, beta], [beta, 1.0, alpha], [alpha, beta, 1.0]])


def _mayleonard(params):
    alpha = float(params.get("alpha", 0.5))
    beta = float(params.get("beta", 0.5))
    s = alpha + beta
    if not -1 < s < 2:
        raise ModelError(f"mayleonard requires -1 < alpha+beta < 2, got alpha+beta={s:g}")
    A = mayleonard_matrix(alpha, beta)
    e = 1.0 / (1.0 + s)
    E = np.full(3, e)
    rates = params.get("sigma")
    if rates is None:
        rate_fn = lambda x: np.ones(x.shape)
    elif callable(rates):
        rate_fn = lambda x: np.asarray(rates(x), float) * np.ones(x.shape)
    else:
        r = np.asarray(rates, float) * np.ones(3)
        rate_fn = lambda x: np.broadcast_to(r, x.shape).copy()

    def growth(x):
        return 1.0 - x @ A.T

    def drift(x):
        return x * growth(x)

    def drift_jac(x):
        g = growth(x)
        j = -x[..., :, None] * A
        idx = np.arange(3)
        j[..., idx, idx] += g
        return j

    def diffusion(x):
        diag = x * rate_fn(x)
        out = np.zeros(x.shape + (3,))
        idx = np.arange(3)
        out[..., idx, idx] = diag
        return out

    def V(x):
        return np.sum(x - E - E * np.log(x / E), axis=-1)

    def gradV(x):
        return (x - E) / x

    def hessV(x):
        out = np.zeros(x.shape + (3,))
        idx = np.arange(3)
        out[..., idx, idx] = E / x ** 2
        return out

    cert = LyapunovCertificate(V=V, grad=gradV, hess=hessV, theta=1.0, eta=1.0,
                               C=float(params.get("cert_C", 4.0)), M=1.0)
    return SystemSpec(
        name="mayleonard", d=3, m=3, drift=drift, diffusion=diffusion, drift_jac=drift_jac,
        domain=POSITIVE_ORTHANT, params={"alpha": alpha, "beta": beta, **params},
        certificate=cert,
        classes=(EquivalenceClassSpec(0, "equilibrium", "E", point=E.copy()),),
        growth=growth, noise_rates=rate_fn,
    )


def mayleonard_decay_rate(alpha, beta) -> float:
    """Smallest eigenvalue k of the symmetrised interaction form."""
    s = alpha + beta
    return min(1 + s, 1 - s / 2)


# ---------------------------------------------------------------------------
# figure-eight systems


def _psi(u):
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _dpsi(u):
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos]) / u[pos] ** 2
    return out


def _smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, and its derivative."""
    a, b = _psi(u), _psi(1 - u)
    da, db = _dpsi(u), -_dpsi(1 - u)
    den = a + b
    return a / den, (da * den - a * (da + db)) / den ** 2


def _gap_bump(s):
    """G on (0, 1]: zero on I_1 = [5/8, 1] and I_n = 2^-(n-1) [5/8, 7/8],
    positive on each gap (2^-n 7/8, 2^-n 5/4).

    The bump on gap n has height exp(1 - 2^(n-1)).  Its k-th derivative is of
    order 2^(nk) exp(-2^(n-1)), which tends to 0 for every k, so G is smooth
    at s = 0 as well.
    """
    val = np.zeros_like(s)
    der = np.zeros_like(s)
    live = (s > 2.0 ** -45) & (s < 0.625)
    if not np.any(live):
        return val, der
    ss = s[live]
    n = np.floor(np.log2(1.25 / ss))
    p = 2.0 ** -n * 0.875
    q = 2.0 ** -n * 1.25
    inside = (ss > p) & (ss < q)
    width = q - p
    u = np.where(inside, (ss - p) / width, 0.0)
    height = np.exp(4.0 + 1.0 - 2.0 ** (n - 1))
    g = height * _psi(u) * _psi(1 - u)
    dg = height * (_dpsi(u) * _psi(1 - u) - _psi(u) * _dpsi(1 - u)) / width
    val[live] = np.where(inside, g, 0.0)
    der[live] = np.where(inside, dg, 0.0)
    return val, der


def figure8_F(s, variant: int):
    """Dissipation profile F_i(s) and its derivative for i in {1, 2, 3, 4}."""
    s = np.asarray(s, dtype=float)
    val = np.zeros_like(s)
    der = np.zeros_like(s)
    sign = -1.0 if variant % 2 else 1.0
    neg = s < 0
    val[neg] = sign * np.abs(s[neg]) ** 3
    der[neg] = -3 * sign * s[neg] ** 2
    if variant in (1, 2):
        core = (s > 0) & (s <= 1)
        sc = s[core]
        sn = np.sin(np.pi / sc)
        val[core] = sc ** 5 * sn ** 2
        der[core] = 5 * sc ** 4 * sn ** 2 - np.pi * sc ** 3 * np.sin(2 * np.pi / sc)
        mid = (s > 1) & (s < 2)
        t = s[mid] - 1
        val[mid] = t ** 3 * (10 - 15 * t + 6 * t * t)
        der[mid] = 30 * t ** 2 * (t - 1) ** 2
        val[s >= 2] = 1.0
    else:
        low = (s > 0) & (s <= 1)
        g, dg = _gap_bump(s[low])
        val[low], der[low] = g, dg
        up = s > 1
        st, dst = _smooth_step(s[up] - 1)
        val[up], der[up] = st, dst
    return val, der


def _figure8(params):
    variant = int(params.get("variant", 1))
    if variant not in (1, 2, 3, 4):
        raise ModelError(f"figure8 requires variant i in {{1,2,3,4}}, got {variant}")

    def H(x):
        x1, x2 = x[..., 0], x[..., 1]
        return 0.5 * x2 ** 2 + x1 ** 4 / 4 - x1 ** 2 / 2

    def gradH(x):
        x1 = x[..., 0]
        return np.stack([x1 ** 3 - x1, x[..., 1]], axis=-1)

    def drift(x):
        g = gradH(x)
        f, _ = figure8_F(H(x), variant)
        return np.stack([g[..., 1] - f * g[..., 0], -g[..., 0] - f * g[..., 1]], axis=-1)

    def drift_jac(x):
        x1 = x[..., 0]
        g = gradH(x)
        f, fp = figure8_F(H(x), variant)
        hess = np.zeros(x.shape + (2,))
        hess[..., 0, 0] = 3 * x1 ** 2 - 1
        hess[..., 1, 1] = 1.0
        j = np.zeros(x.shape + (2,))
        j[..., 0, :] = hess[..., 1, :]
        j[..., 1, :] = -hess[..., 0, :]
        j -= fp[..., None, None] * g[..., :, None] * g[..., None, :]
        j -= f[..., None, None] * hess
        return j

    scale = float(params.get("sigma", 1.0))
    if scale <= 0:
        raise ModelError("figure8 sigma must be positive")

    def diffusion(x):
        return np.broadcast_to(scale * np.eye(2), x.shape[:-1] + (2, 2)).copy()

    def hessV(x):
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = 3 * x[..., 0] ** 2 - 1
        out[..., 1, 1] = 1.0
        return out

    cert = LyapunovCertificate(V=lambda x: H(x) + 0.25, grad=gradH, hess=hessV,
                               theta=0.1, eta=4.0, C=float(params.get("cert_C", 3.0)), M=2.0)
    classes = (
        EquivalenceClassSpec(0, "equilibrium", "O", point=np.zeros(2)),
        EquivalenceClassSpec(1, "equilibrium", "P+", point=np.array([1.0, 0.0])),
        EquivalenceClassSpec(2, "equilibrium", "P-", point=np.array([-1.0, 0.0])),
    )
    return SystemSpec(
        name="figure8", d=2, m=2, drift=drift, diffusion=diffusion, drift_jac=drift_jac,
        params={"variant": variant, "sigma": scale}, constant_diffusion=True,
        H=H, gradH=gradH, certificate=cert, classes=classes,
    )


_REGISTRY = {
    "example41": (_example41, set()),
    "example42": (_example42, set()),
    "vdp": (_vdp, {"sigma", "cert_eps"}),
    "diode": (_diode, {"L", "C", "R", "E", "sigma", "c1", "cert_C", "cert_M"}),
    "mayleonard": (_mayleonard, {"alpha", "beta", "sigma", "cert_C"}),
    "figure8": (_figure8, {"variant", "sigma", "cert_C"}),
}

MODEL_NAMES = tuple(_REGISTRY)


def build_system(name: str, params: Optional[dict] = None) -> SystemSpec:
    """Look up a model by name and instantiate it with ``params``."""
    params = dict(params or {})
    if name not in _REGISTRY:
        raise ModelError(f"unknown model {name!r}; choose one of {', '.join(MODEL_NAMES)}")
    factory, allowed = _REGISTRY[name]
    unknown = set(params) - allowed
    if unknown:
        raise ModelError(f"{name}: unknown parameters {sorted(unknown)}")
    return factory(params)


def eval_drift(sys: SystemSpec, x) -> Array:
    return sys.drift(sys.check_state(x))


def hamiltonian(sys: SystemSpec, x) -> Array:
    if sys.H is None:
        raise ModelError(f"{sys.name} has no Hamiltonian")
    return sys.H(sys.check_state(x))


def decomposition(sys: SystemSpec, x):
    """Return ``(U, grad U, l)`` with ``b = -grad U + l`` and ``<grad U, l> = 0``."""
    if not sys.decomposable:
        raise ModelError(f"{sys.name} is not decomposable")
    x = sys.check_state(x)
    return sys.U(x), sys.gradU(x), sys.rotation(x)


def class_potential(sys: SystemSpec, cls: EquivalenceClassSpec) -> float:
    """U on an equivalence class (constant on H-level cycles)."""
    if sys.U is None:
        raise ModelError(f"{sys.name} is not decomposable")
    if cls.kind == "equilibrium":
        return float(sys.U(cls.representative()))
    if cls.kind == "level-cycle":
        h = cls.level
        return 0.5 * h * h + h
    raise ModelError(f"no potential for class kind {cls.kind}")
