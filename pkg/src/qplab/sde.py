"""Monte Carlo for dX = b(X) dt + sqrt(eps) sigma(X) dB.

Replicas are simulated together as a vectorised batch.  Each replica owns a
Philox stream keyed by ``(seed, replica)``, and Gaussian increments are drawn
in fixed chunks of steps, so a replica's path does not depend on how many
other replicas run next to it.
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .flow import BlowUpError, Trajectory
from .models import POSITIVE_ORTHANT, EquivalenceClassSpec, SystemSpec

CHUNK = 10_000
CHECKPOINT_EVERY = 1_000_000


class PositivityError(RuntimeError):
    pass


@dataclass
class SimConfig:
    epsilon: float
    step: float
    horizon: float
    burn_in: Optional[float] = None        # default: 10% of horizon
    seed: int = 0
    scheme: str = "euler-maruyama"
    bound: float = 1e6

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.step > 0 or not self.horizon > 0:
            raise ValueError("step and horizon must be positive")
        if not self.step < self.horizon:
            raise ValueError("step must be smaller than horizon")
        if self.burn_in is None:
            self.burn_in = 0.1 * self.horizon
        if not 0 <= self.burn_in < self.horizon:
            raise ValueError("burn_in must lie in [0, horizon)")
        if self.scheme not in ("euler-maruyama", "log-euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.step))

    @property
    def burn_steps(self):
        return int(round(self.burn_in / self.step))


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(replica)])
    return np.random.Generator(np.random.Philox(ss))


class _Engine:
    """Single-step map for a batch of replicas (shape (R, d))."""

    def __init__(self, sys: SystemSpec, cfg: SimConfig):
        self.sys = sys
        self.cfg = cfg
        self.h = cfg.step
        self.sq = np.sqrt(cfg.epsilon * cfg.step)
        if cfg.scheme == "log-euler":
            if sys.domain != POSITIVE_ORTHANT or sys.growth is None:
                raise ValueError("log-euler needs a positive-orthant model with x_i-multiplicative noise")
        self.const_sigma = None
        if sys.constant_diffusion and cfg.scheme == "euler-maruyama":
            self.const_sigma = sys.diffusion(np.zeros(sys.d) + 0.5)

    def noise(self, Z, x=None):
        """sqrt(eps h) sigma(x) Z for a chunk (const sigma) or a single step."""
        if self.const_sigma is not None:
            return self.sq * (Z @ self.const_sigma.T)
        return self.sq * np.einsum("rij,rj->ri", self.sys.diffusion(x), Z)

    def run_chunk(self, x, Z, out):
        """Advance x through len(Z) steps, writing the state after each step to out."""
        h = self.h
        drift = self.sys.drift
        if self.cfg.scheme == "log-euler":
            eps = self.cfg.epsilon
            growth, rates = self.sys.growth, self.sys.noise_rates
            for k in range(Z.shape[0]):
                s = rates(x)
                x = x * np.exp((growth(x) - 0.5 * eps * s * s) * h + self.sq * s * Z[k])
                out[k] = x
            return x
        if self.const_sigma is not None:
            dW = self.noise(Z)
            for k in range(Z.shape[0]):
                x = x + h * drift(x) + dW[k]
                out[k] = x
        else:
            for k in range(Z.shape[0]):
                x = x + h * drift(x) + self.noise(Z[k], x)
                out[k] = x
        return x


def _check_chunk(sys, cfg, states, t0):
    """Raise for the earliest failure in the chunk: blow-up or leaving the orthant."""
    blow = ~np.all(np.isfinite(states), axis=-1) | (np.max(np.abs(states), axis=-1) > cfg.bound)
    neg = np.any(states <= 0, axis=-1) if sys.domain == POSITIVE_ORTHANT else np.zeros_like(blow)
    first = lambda m: np.argwhere(m)[0] if np.any(m) else None
    kb, kn = first(blow), first(neg)
    if kn is not None and (kb is None or kn[0] <= kb[0]):
        k, r = kn
        raise PositivityError(f"replica {r} left the positive orthant at t={t0 + (k + 1) * cfg.step:.6g}; "
                              "use scheme='log-euler'")
    if kb is not None:
        k, r = kb
        raise BlowUpError(t0 + (k + 1) * cfg.step, states[k, r], cfg.bound)


def _draw(rngs, n, m):
    return np.stack([g.standard_normal((n, m)) for g in rngs], axis=1)


def simulate(sys: SystemSpec, cfg: SimConfig, x0, replica: int = 0,
             record_every: int = 1) -> Trajectory:
    """One replica, full horizon, states every ``record_every`` steps (t = 0 included)."""
    x0 = sys.check_state(x0)
    eng = _Engine(sys, cfg)
    rng = [replica_rng(cfg.seed, replica)]
    x = x0[None, :].copy()
    n = cfg.n_steps
    kept_t = [0.0]
    kept_x = [x0.copy()]
    done = 0
    while done < n:
        c = min(CHUNK, n - done)
        Z = _draw(rng, c, sys.m)
        buf = np.empty((c, 1, sys.d))
        x = eng.run_chunk(x, Z, buf)
        _check_chunk(sys, cfg, buf, done * cfg.step)
        steps = np.arange(done + 1, done + c + 1)
        keep = steps % record_every == 0
        kept_t.extend(steps[keep] * cfg.step)
        kept_x.extend(buf[keep, 0])
        done += c
    return Trajectory(np.array(kept_t), np.array(kept_x))


# ---------------------------------------------------------------------------
# occupation measures


@dataclass
class BoxGrid:
    lo: np.ndarray
    hi: np.ndarray
    bins: tuple

    def __post_init__(self):
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)
        self.bins = tuple(int(b) for b in np.broadcast_to(self.bins, self.lo.shape))
        if np.any(self.hi <= self.lo):
            raise ValueError("grid box must have hi > lo")

    @property
    def width(self):
        return (self.hi - self.lo) / np.array(self.bins)

    def centers(self):
        axes = [self.lo[k] + (np.arange(b) + 0.5) * self.width[k] for k, b in enumerate(self.bins)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1)

    def index(self, x):
        """Flat bin index per row, -1 when outside."""
        rel = (x - self.lo) / self.width
        idx = np.floor(rel).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.array(self.bins)), axis=-1)
        flat = np.full(x.shape[:-1], -1, dtype=np.int64)
        if np.any(inside):
            flat[inside] = np.ravel_multi_index(tuple(idx[inside].T), self.bins)
        return flat


@dataclass
class OccupationMeasure:
    grid: BoxGrid
    mass: np.ndarray               # normalised histogram, shape grid.bins
    overflow: float                # fraction of time outside the box
    total_time: float
    samples: Optional[np.ndarray] = field(default=None, repr=False)   # (n, R, d)
    replicas: int = 1

    def to_csv(self, path):
        c = self.grid.centers().reshape(-1, len(self.grid.bins))
        d = c.shape[1]
        header = ",".join([f"x{k + 1}" for k in range(d)] + ["mass"])
        np.savetxt(path, np.column_stack([c, self.mass.ravel()]), delimiter=",",
                   header=header, comments="", fmt="%.10g")


def occupation(traj: Trajectory, grid: BoxGrid, keep_samples: bool = True) -> OccupationMeasure:
    """Time-weighted histogram of a trajectory (states weighted equally)."""
    x = np.asarray(traj.states, float)
    idx = grid.index(x)
    size = int(np.prod(grid.bins))
    counts = np.bincount(idx[idx >= 0], minlength=size).astype(float)
    n = len(x)
    over = float(np.sum(idx < 0)) / n
    if over > 0:
        warnings.warn(f"{over:.3%} of the time was spent outside the grid box", RuntimeWarning)
    T = float(traj.times[-1] - traj.times[0]) if len(traj.times) > 1 else 0.0
    return OccupationMeasure(grid, (counts / n).reshape(grid.bins), over, T,
                             samples=x[:, None, :] if keep_samples else None)


def _config_key(sys, cfg, x0, grid, replicas, sample_every):
    return json.dumps({"sys": sys.name, "params": {k: v for k, v in sys.params.items() if not callable(v)},
                       "cfg": asdict(cfg), "x0": np.asarray(x0, float).tolist(),
                       "lo": grid.lo.tolist(), "hi": grid.hi.tolist(), "bins": list(grid.bins),
                       "replicas": replicas, "sample_every": sample_every}, sort_keys=True, default=str)


def run_occupation(sys: SystemSpec, cfg: SimConfig, x0, grid: BoxGrid, replicas: int = 1,
                   sample_every: int = 10, checkpoint: Optional[str] = None,
                   first_replica: int = 0) -> OccupationMeasure:
    """Ergodic occupation measure of ``replicas`` independent runs after burn-in.

    The histogram pools all replicas.  Every ``sample_every``-th post-burn-in
    state is also kept (shape ``(n, R, d)``) so neighbourhood masses can be
    computed exactly and per replica.  With ``checkpoint`` set, the running
    state is written every 10^6 steps and a matching file is resumed from.
    """
    x0 = sys.check_state(x0)
    eng = _Engine(sys, cfg)
    R = int(replicas)
    reps = list(range(first_replica, first_replica + R))
    rngs = [replica_rng(cfg.seed, r) for r in reps]
    x = np.repeat(x0[None, :], R, axis=0)
    size = int(np.prod(grid.bins))
    counts = np.zeros(size)
    over = 0
    samples = []
    n, burn = cfg.n_steps, cfg.burn_steps
    done = 0
    key = _config_key(sys, cfg, x0, grid, R, sample_every) + f"|{first_replica}"
    if checkpoint and os.path.exists(checkpoint):
        done, x, counts, over, samples = _load_checkpoint(checkpoint, key, rngs)
    while done < n:
        c = min(CHUNK, n - done)
        Z = _draw(rngs, c, sys.m)
        buf = np.empty((c, R, sys.d))
        x = eng.run_chunk(x, Z, buf)
        _check_chunk(sys, cfg, buf, done * cfg.step)
        steps = np.arange(done + 1, done + c + 1)
        post = steps > burn
        if np.any(post):
            kept = buf[post]
            idx = grid.index(kept.reshape(-1, sys.d))
            counts += np.bincount(idx[idx >= 0], minlength=size)
            over += int(np.sum(idx < 0))
            sel = post & ((steps - burn) % sample_every == 0)
            if np.any(sel):
                samples.append(buf[sel].copy())
        done += c
        if checkpoint and done % CHECKPOINT_EVERY == 0 and done < n:
            _save_checkpoint(checkpoint, key, done, x, counts, over, samples, rngs)
    total = float(counts.sum() + over)
    if over > 0:
        warnings.warn(f"{over / total:.3%} of the time was spent outside the grid box", RuntimeWarning)
    samp = np.concatenate(samples, axis=0) if samples else np.empty((0, R, sys.d))
    if checkpoint and os.path.exists(checkpoint):
        os.remove(checkpoint)
    return OccupationMeasure(grid, (counts / total).reshape(grid.bins), over / total,
                             (n - burn) * cfg.step, samples=samp, replicas=R)


def _save_checkpoint(path, key, done, x, counts, over, samples, rngs):
    samp = np.concatenate(samples, axis=0) if samples else np.empty((0,) + x.shape)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, done=done, x=x, counts=counts, over=over, samples=samp,
                 key=np.array(key), rng=np.array(json.dumps([g.bit_generator.state for g in rngs],
                                                            default=lambda a: np.asarray(a).tolist())))
    os.replace(tmp, path)


def _load_checkpoint(path, key, rngs):
    with np.load(path, allow_pickle=False) as z:
        if str(z["key"]) != key:
            raise ValueError(f"checkpoint {path} belongs to a different configuration")
        states = json.loads(str(z["rng"]))
        for g, st in zip(rngs, states):
            st["state"]["counter"] = np.array(st["state"]["counter"], dtype=np.uint64)
            st["state"]["key"] = np.array(st["state"]["key"], dtype=np.uint64)
            st["buffer"] = np.array(st["buffer"], dtype=np.uint64)
            g.bit_generator.state = st
        samp = z["samples"]
        return int(z["done"]), z["x"].copy(), z["counts"].copy(), int(z["over"]), [samp] if len(samp) else []


# ---------------------------------------------------------------------------
# neighbourhoods


def _distance_to_polyline(pts, poly):
    from scipy.spatial import cKDTree
    # densify so nearest-vertex distance approximates the segment distance
    closed = np.vstack([poly, poly[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    k = np.maximum(1, np.ceil(seg / 1e-3).astype(int))
    dense = np.vstack([closed[i] + np.outer(np.arange(k[i]) / k[i], closed[i + 1] - closed[i])
                       for i in range(len(poly))])
    d, _ = cKDTree(dense).query(pts)
    return d


def in_neighborhood(cls: EquivalenceClassSpec, x, rho: float, cycle=None):
    x = np.asarray(x, float)
    if cls.kind == "equilibrium":
        return np.linalg.norm(x - cls.representative(), axis=-1) < rho
    if cls.kind == "level-cycle":
        return np.abs(cls.H(x) - cls.level) < rho
    if cls.kind == "annulus":
        a, b = cls.interval
        h = cls.H(x)
        return (h > a - rho) & (h < b + rho)
    if cls.kind == "limit-cycle":
        if cycle is None:
            raise ValueError("limit-cycle neighbourhoods need the traced cycle points")
        flat = x.reshape(-1, x.shape[-1])
        return (_distance_to_polyline(flat, cycle) < rho).reshape(x.shape[:-1])
    raise ValueError(f"unknown class kind {cls.kind}")


def neighborhood_mass(occ: OccupationMeasure, cls: EquivalenceClassSpec, rho: float,
                      cycle=None, per_replica: bool = False):
    """Occupation mass of the rho-neighbourhood of a class.

    Balls for equilibria, |H - c| < rho tubes for level cycles, and Euclidean
    distance to the traced orbit for limit cycles.  Uses the kept samples when
    present, otherwise bin centres.
    """
    if cls.kind == "equilibrium":
        p = cls.representative()
        if np.any(p - rho < occ.grid.lo) or np.any(p + rho > occ.grid.hi):
            warnings.warn("neighbourhood sticks out of the grid box", RuntimeWarning)
    if occ.samples is not None and len(occ.samples):
        inside = in_neighborhood(cls, occ.samples, rho, cycle)
        per = inside.mean(axis=0)
        return per if per_replica else float(per.mean())
    if per_replica:
        raise ValueError("per-replica masses need kept samples")
    c = occ.grid.centers()
    return float(np.sum(occ.mass[in_neighborhood(cls, c, rho, cycle)]))


def ball(center, name="ball"):
    return EquivalenceClassSpec(-1, "equilibrium", name, point=np.asarray(center, float))


def fit_decay_rate(eps, masses, floor: float = 0.0):
    """Least-squares kappa in log(mass) ~ a - kappa/eps; zero masses are set to ``floor``."""
    eps = np.asarray(eps, float)
    m = np.maximum(np.asarray(masses, float), floor)
    if np.any(m <= 0):
        raise ValueError("zero masses need a positive floor for the log fit")
    A = np.column_stack([np.ones_like(eps), -1.0 / eps])
    coef, *_ = np.linalg.lstsq(A, np.log(m), rcond=None)
    return float(coef[1]), float(coef[0])


# ---------------------------------------------------------------------------
# exit times


def make_predicate(desc, sys: Optional[SystemSpec] = None) -> Callable:
    """Vectorised membership test from a callable or a dict description.

    Dict forms: {"type": "all"}, {"type": "ball", "center", "radius"},
    {"type": "H-below", "level"}, {"type": "halfplane", "normal", "offset"}
    (normal . x > offset), {"type": "box", "lo", "hi"}, {"type": "and", "parts"}.
    """
    if callable(desc):
        return desc
    if not isinstance(desc, dict) or "type" not in desc:
        raise ValueError(f"malformed domain predicate: {desc!r}")
    t = desc["type"]
    try:
        if t == "all":
            return lambda x: np.ones(x.shape[:-1], bool)
        if t == "ball":
            c, r = np.asarray(desc["center"], float), float(desc["radius"])
            return lambda x: np.linalg.norm(x - c, axis=-1) < r
        if t == "H-below":
            if sys is None or sys.H is None:
                raise ValueError("H-below needs a system with a Hamiltonian")
            lv = float(desc["level"])
            return lambda x: sys.H(x) < lv
        if t == "halfplane":
            nrm, off = np.asarray(desc["normal"], float), float(desc["offset"])
            return lambda x: x @ nrm > off
        if t == "box":
            lo, hi = np.asarray(desc["lo"], float), np.asarray(desc["hi"], float)
            return lambda x: np.all((x > lo) & (x < hi), axis=-1)
        if t == "and":
            parts = [make_predicate(p, sys) for p in desc["parts"]]
            if not parts:
                raise ValueError("empty 'and'")
            return lambda x: np.logical_and.reduce([p(x) for p in parts])
    except KeyError as exc:
        raise ValueError(f"malformed domain predicate {desc!r}: missing {exc}") from None
    raise ValueError(f"malformed domain predicate: unknown type {t!r}")


@dataclass
class ExitResult:
    times: np.ndarray
    censored: np.ndarray
    exit_states: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.times))

    def to_json(self):
        return json.dumps({"times": self.times.tolist(), "censored": self.censored.tolist(),
                           "exit_states": self.exit_states.tolist()})


def exit_time(sys: SystemSpec, cfg: SimConfig, x0, domain, replicas: int = 1) -> ExitResult:
    """First time each replica leaves ``domain``; runs reaching the horizon are censored."""
    pred = make_predicate(domain, sys)
    x0 = sys.check_state(x0)
    if not bool(pred(x0[None, :])[0]):
        raise ValueError("x0 does not satisfy the domain predicate")
    eng = _Engine(sys, cfg)
    R = int(replicas)
    rngs = [replica_rng(cfg.seed, r) for r in range(R)]
    x = np.repeat(x0[None, :], R, axis=0)
    times = np.full(R, cfg.n_steps * cfg.step)
    censored = np.ones(R, bool)
    exits = np.full((R, sys.d), np.nan)
    done = 0
    n = cfg.n_steps
    while done < n and np.any(censored):
        c = min(CHUNK, n - done)
        Z = _draw(rngs, c, sys.m)
        buf = np.empty((c, R, sys.d))
        x = eng.run_chunk(x, Z, buf)
        live = censored.copy()
        _check_chunk(sys, cfg, buf[:, live], done * cfg.step)
        inside = pred(buf)
        for r in np.flatnonzero(live):
            out = np.flatnonzero(~inside[:, r])
            if out.size:
                k = out[0]
                times[r] = (done + k + 1) * cfg.step
                exits[r] = buf[k, r]
                censored[r] = False
        # park finished replicas so they cannot blow up while the rest run
        x[~censored] = x0
        done += c
    return ExitResult(times, censored, exits)
