"""Command-line driver: ``qplab <command> --config cfg.json --out DIR``.

Configs are JSON documents validated against a versioned schema before any
work starts.  Outputs are plain CSV/JSON written in a fixed key order with no
timestamps, so a rerun of the same config produces identical bytes; the
``manifest.json`` next to them records the seed, the sha256 of the config,
and the sha256 of every file written.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys as _sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .models import MODEL_NAMES, ModelError, build_system

SCHEMA_VERSION = 1

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_endpoint = {"oneOf": [{"type": "string"}, _vec]}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "system"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "system": {
            "type": "object", "additionalProperties": False, "required": ["name"],
            "properties": {"name": {"enum": list(MODEL_NAMES)}, "params": {"type": "object"}},
        },
        "simulate": {
            "type": "object", "additionalProperties": False,
            "required": ["epsilon", "step", "horizon", "x0", "grid"],
            "properties": {
                "epsilon": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                            "minItems": 1},
                "step": {"type": "number", "exclusiveMinimum": 0},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "burn_in": {"type": "number", "minimum": 0},
                "scheme": {"enum": ["euler-maruyama", "log-euler"]},
                "replicas": {"type": "integer", "minimum": 1},
                "sample_every": {"type": "integer", "minimum": 1},
                "x0": _vec,
                "grid": {
                    "type": "object", "additionalProperties": False,
                    "required": ["lo", "hi", "bins"],
                    "properties": {"lo": _vec, "hi": _vec,
                                   "bins": {"type": "array", "items": {"type": "integer", "minimum": 1}}},
                },
                "rho": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "checkpoint": {"type": "boolean"},
            },
        },
        "quasipotential": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "method": {"enum": ["analytic", "numeric", "file"]},
                "file": {"type": "string"},
                "Tgrid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "n": {"type": "integer", "minimum": 3},
                "entries": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                                       "minItems": 2, "maxItems": 2}},
            },
        },
        "wgraph": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "file": {"type": "string"},
                "labels": {"type": "array", "items": {"type": "string"}},
                "V": {"type": "array", "items": {"type": "array",
                                                 "items": {"oneOf": [_num, {"type": "null"}, {"type": "string"}]}}},
            },
        },
        "verify": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "checks": {"type": "array", "items": {"type": "string"}},
                "samples": {"type": "integer", "minimum": 16},
            },
        },
        "action": {
            "type": "object", "additionalProperties": False, "required": ["from", "to"],
            "properties": {
                "from": _endpoint, "to": _endpoint,
                "T": {"type": "number", "exclusiveMinimum": 0},
                "Tgrid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "n": {"type": "integer", "minimum": 3},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


def load_config(path):
    text = Path(path).read_bytes()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    validate_config(cfg)
    return cfg, hashlib.sha256(text).hexdigest()


def validate_config(cfg):
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}") from None


def thread_count(arg=None) -> int:
    if arg:
        return max(1, int(arg))
    env = os.environ.get("QPLAB_THREADS")
    return max(1, int(env)) if env else 1


# ---------------------------------------------------------------------------
# output helpers


class Writer:
    """Collects output files and writes the manifest last."""

    def __init__(self, out, command, seed, config_hash):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.meta = {"command": command, "seed": seed, "config_sha256": config_hash,
                     "qplab": __version__}
        self.files = {}

    def _record(self, name):
        self.files[name] = hashlib.sha256((self.out / name).read_bytes()).hexdigest()

    def json(self, name, obj):
        body = dict(obj)
        body["_meta"] = self.meta
        (self.out / name).write_text(json.dumps(body, indent=2, sort_keys=True, default=_enc) + "\n")
        self._record(name)

    def csv(self, name, header, rows):
        lines = [f"# seed={self.meta['seed']} config_sha256={self.meta['config_sha256']}",
                 ",".join(header)]
        lines += [",".join(_fmt(v) for v in r) for r in rows]
        (self.out / name).write_text("\n".join(lines) + "\n")
        self._record(name)

    def text(self, name, body):
        (self.out / name).write_text(body)
        self._record(name)

    def manifest(self, status):
        m = dict(self.meta, status=status, files=dict(sorted(self.files.items())))
        (self.out / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, str):
        return v
    return repr(float(v))


def _enc(v):
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def _matrix_out(V):
    return [[None if float(v) == float("inf") else float(v) for v in row] for row in V]


# ---------------------------------------------------------------------------
# commands


def _system(cfg):
    s = cfg["system"]
    return build_system(s["name"], s.get("params", {}))


def cmd_simulate(cfg, w: Writer, threads=1):
    from .flow import find_limit_cycle
    from .sde import BoxGrid, SimConfig, neighborhood_mass, run_occupation

    if "simulate" not in cfg:
        raise ConfigError("simulate block missing")
    sc = cfg["simulate"]
    sys = _system(cfg)
    grid = BoxGrid(sc["grid"]["lo"], sc["grid"]["hi"], sc["grid"]["bins"])
    rhos = sc.get("rho", [0.15])
    cycles = {c.name: find_limit_cycle(sys, seed=float(c.representative()[0])).points
              for c in sys.classes if c.kind == "limit-cycle"}
    seed = w.meta["seed"]

    def one(k_eps):
        k, eps = k_eps
        sim = SimConfig(epsilon=eps, step=sc["step"], horizon=sc["horizon"], burn_in=sc.get("burn_in"),
                        seed=seed, scheme=sc.get("scheme", "euler-maruyama"))
        ck = str(w.out / f"checkpoint_{k}.npz") if sc.get("checkpoint") else None
        return run_occupation(sys, sim, sc["x0"], grid, sc.get("replicas", 1),
                              sc.get("sample_every", 10), checkpoint=ck)

    eps_list = list(enumerate(sc["epsilon"]))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        occs = list(pool.map(one, eps_list))
    masses = {}
    rows = []
    for (k, eps), occ in zip(eps_list, occs):
        key = repr(float(eps))
        masses[key] = {}
        for c in sys.classes:
            masses[key][c.name] = {repr(float(r)): neighborhood_mass(occ, c, r, cycle=cycles.get(c.name))
                                   for r in rhos}
        idx = np.argwhere(occ.mass > 0)
        centers = [np.asarray(cg)[i] for cg, i in zip(
            [(occ.grid.lo[d] + (np.arange(occ.grid.bins[d]) + 0.5) * occ.grid.width[d])
             for d in range(sys.d)], idx.T)]
        for r, ix in enumerate(idx):
            rows.append([eps] + [centers[d][r] for d in range(sys.d)] + [occ.mass[tuple(ix)]])
        masses[key]["_outside_grid"] = occ.overflow
    w.csv("occupation.csv", ["epsilon"] + [f"x{d + 1}" for d in range(sys.d)] + ["mass"], rows)
    w.json("masses.json", {"system": sys.name, "masses": masses})
    table = [[eps] + [masses[repr(float(eps))][c.name][repr(float(rhos[0]))] for c in sys.classes]
             for _, eps in eps_list]
    w.csv("mass_table.csv", ["epsilon"] + [c.name for c in sys.classes], table)
    return True


def cmd_quasipotential(cfg, w: Writer, threads=1):
    from .action import analytic_matrix, numeric_matrix
    from .wgraph import ClassGraph, summary

    qc = cfg.get("quasipotential", {})
    method = qc.get("method", "analytic")
    sys = _system(cfg)
    direct = None
    if method == "analytic":
        g = analytic_matrix(sys)
    elif method == "numeric":
        entries = qc.get("entries")
        g, direct = numeric_matrix(sys, Tgrid=qc.get("Tgrid", (2, 4, 8, 16, 32)), n=qc.get("n", 300),
                                   entries=[tuple(e) for e in entries] if entries else None)
    else:
        if "file" not in qc:
            raise ConfigError("method=file needs quasipotential.file")
        g = ClassGraph.from_json(Path(qc["file"]).read_text())
    body = {"system": sys.name, "method": method, "labels": g.labels, "V": _matrix_out(g.V),
            "provenance": g.provenance, "exact": [[str(v) if isinstance(v, Fraction) else None
                                                   for v in row] for row in g.V]}
    ok = True
    if direct is not None:
        body["direct"] = {f"{g.labels[i]}->{g.labels[j]}": rec for (i, j), rec in direct.items()}
        # non-converged entries are reported with their warning, not treated as errors
    w.json("classgraph.json", body)
    w.json("wgraph.json", summary(g))
    return ok


def _parse_entry(v):
    if v is None:
        return float("inf")
    if isinstance(v, str):
        return Fraction(v)
    return v


def cmd_wgraph(cfg, w: Writer, threads=1):
    from .wgraph import ClassGraph, summary

    wc = cfg.get("wgraph", {})
    if "file" in wc:
        g = ClassGraph.from_json(Path(wc["file"]).read_text())
    elif "V" in wc:
        V = [[_parse_entry(v) for v in row] for row in wc["V"]]
        labels = wc.get("labels") or [f"K{i + 1}" for i in range(len(V))]
        g = ClassGraph(labels, V)
    else:
        from .action import analytic_matrix
        g = analytic_matrix(_system(cfg))
    w.json("wgraph.json", summary(g))
    return True


def cmd_verify(cfg, w: Writer, threads=1):
    from .verify import default_checks

    vc = cfg.get("verify", {})
    s = cfg["system"]
    checks = default_checks(s["name"], s.get("params", {}), samples=vc.get("samples", 4096),
                            seed=w.meta["seed"])
    wanted = vc.get("checks")
    if wanted:
        labels = [c[0] for c in checks]
        missing = [c for c in wanted if c not in labels]
        if missing:
            raise ConfigError(f"unknown checks {missing}; available: {labels}")
        checks = [c for c in checks if c[0] in wanted]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        reports = list(pool.map(lambda c: c[1](), checks))
    w.json("verify.json", {"system": s["name"],
                           "reports": {lab: r.to_dict() for (lab, _), r in zip(checks, reports)}})
    w.text("verify.txt", "".join(f"{r}\n" for r in reports))
    for r in reports:
        print(r)
    return all(r.passed for r in reports)


def _endpoint_value(sys, v):
    if isinstance(v, str):
        return sys.class_by_name(v)
    return np.asarray(v, float)


def cmd_action_min(cfg, w: Writer, threads=1):
    from .action import (DiscretePath, EquivalenceClassSpec, connect_second_order,
                         minimize_action, quasipotential_estimate)

    if "action" not in cfg:
        raise ConfigError("action block missing")
    ac = cfg["action"]
    sys = _system(cfg)
    x, y = _endpoint_value(sys, ac["from"]), _endpoint_value(sys, ac["to"])
    n = ac.get("n", 300)
    if sys.second_order:
        if isinstance(x, EquivalenceClassSpec) or isinstance(y, EquivalenceClassSpec):
            raise ConfigError("second-order systems take explicit state endpoints")
        path, av = connect_second_order(sys, x, y, n=n + 1)
        states = path.states()
        times = path.times
    elif "T" in ac:
        if isinstance(x, EquivalenceClassSpec):
            x = x.representative()
        if isinstance(y, EquivalenceClassSpec):
            y = y.representative()
        path, av = minimize_action(sys, x, y, ac["T"], n)
        states, times = path.states, path.times
    else:
        av = quasipotential_estimate(sys, x, y, Tgrid=ac.get("Tgrid", (2, 4, 8, 16, 32)), n=n)
        if isinstance(av.path, DiscretePath):
            states, times = av.path.states, av.path.times
        else:
            states, times = np.empty((0, sys.d)), np.empty(0)
    w.json("action.json", {"system": sys.name, "value": float(av.value), "T": av.T,
                           "converged": bool(av.converged), "warning": av.warning,
                           "by_T": {str(k): v for k, v in (av.by_T or {}).items()}})
    w.csv("path.csv", ["t"] + [f"x{d + 1}" for d in range(sys.d)],
          [[t] + list(s) for t, s in zip(times, states)])
    return bool(av.converged) or av.warning is not None


COMMANDS = {
    "simulate": cmd_simulate,
    "quasipotential": cmd_quasipotential,
    "wgraph": cmd_wgraph,
    "verify": cmd_verify,
    "action-min": cmd_action_min,
}


def run(command, cfg, config_hash, out, seed=None, threads=None) -> int:
    seed = seed if seed is not None else cfg.get("seed", 0)
    w = Writer(out, command, seed, config_hash)
    try:
        ok = COMMANDS[command](cfg, w, thread_count(threads))
    except (ConfigError, ModelError) as e:
        print(f"error: {e}", file=_sys.stderr)
        w.manifest("error")
        return 2
    except Exception:
        traceback.print_exc()
        w.manifest("error")
        return 3
    w.manifest("ok" if ok else "failed")
    return 0 if ok else 1


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="qplab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    args = p.parse_args(argv)
    try:
        cfg, h = load_config(args.config)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=_sys.stderr)
        return 2
    out = args.out or cfg.get("out") or "qplab-out"
    return run(args.command, cfg, h, out, seed=args.seed, threads=args.threads)


if __name__ == "__main__":
    raise SystemExit(main())
