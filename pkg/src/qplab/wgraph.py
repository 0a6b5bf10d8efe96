"""W-graphs over a finite set of equivalence classes.

A W-graph on labels L is an assignment of one outgoing arrow to each node of
L minus W such that following arrows from any node ends in W.  For a matrix of
transition costs V, W(K_i) is the cheapest {i}-graph.  Everything here is brute
force (l <= 10), which is plenty for the four-class examples.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

MAX_CLASSES = 10
INF = float("inf")


@dataclass
class ClassGraph:
    labels: list
    V: list                      # l x l, entries Fraction/float, inf = absent edge
    provenance: list = field(default=None)

    def __post_init__(self):
        l = len(self.labels)
        if len(self.V) != l or any(len(row) != l for row in self.V):
            raise ValueError("V must be a square matrix matching labels")
        for i in range(l):
            if self.V[i][i] != 0:
                raise ValueError(f"V[{i}][{i}] must be 0")
            for j in range(l):
                if self.V[i][j] < 0:
                    raise ValueError(f"negative entry V[{i}][{j}]")
        if self.provenance is None:
            self.provenance = [["user"] * l for _ in range(l)]

    @property
    def l(self):
        return len(self.labels)

    def index(self, label) -> int:
        if label in self.labels:
            return self.labels.index(label)
        if isinstance(label, int) and 0 <= label < self.l:
            return label
        raise KeyError(label)

    def as_array(self):
        return np.array([[float(v) for v in row] for row in self.V])

    def to_json(self) -> str:
        def enc(v):
            if v == INF:
                return None
            return float(v)
        return json.dumps({"labels": list(self.labels),
                           "V": [[enc(v) for v in row] for row in self.V],
                           "provenance": self.provenance}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ClassGraph":
        d = json.loads(text)
        V = [[INF if v is None else v for v in row] for row in d["V"]]
        return cls(d["labels"], V, d.get("provenance"))


@dataclass(frozen=True)
class WGraph:
    W: frozenset
    arrows: dict   # node -> target (0-based indices)

    def cost(self, g: ClassGraph):
        return sum((g.V[m][n] for m, n in self.arrows.items()), Fraction(0))


def _reaches_sink(arrows, sinks, l) -> bool:
    for start in arrows:
        node, steps = start, 0
        while node not in sinks:
            node = arrows[node]
            steps += 1
            if steps > l:
                return False
    return True


def enumerate_wgraphs(l: int, W: Sequence[int], V=None) -> Iterator[WGraph]:
    """All W-graphs on nodes ``0..l-1``; arrows along infinite V entries are skipped."""
    if l > MAX_CLASSES:
        raise ValueError(f"brute force over {l} classes is too large (limit {MAX_CLASSES}); "
                         "merge classes or use a spanning-forest algorithm instead")
    sinks = frozenset(W)
    if not sinks or len(sinks) >= l or any(not 0 <= w < l for w in sinks):
        raise ValueError("need 1 <= |W| < l with labels in range")
    free = [m for m in range(l) if m not in sinks]
    choices = []
    for m in free:
        targets = [n for n in range(l) if n != m and (V is None or V[m][n] != INF)]
        choices.append(targets)
    for combo in itertools.product(*choices):
        arrows = dict(zip(free, combo))
        if _reaches_sink(arrows, sinks, l):
            yield WGraph(sinks, arrows)


def _min_cost(g: ClassGraph, W):
    best = INF
    for wg in enumerate_wgraphs(g.l, W, g.V):
        c = wg.cost(g)
        if c < best:
            best = c
    return best


def w_value(g: ClassGraph, i):
    """W(K_i): minimal total cost over {i}-graphs."""
    return _min_cost(g, [g.index(i)])


def w_values(g: ClassGraph) -> list:
    return [w_value(g, i) for i in range(g.l)]


def minimizing_set(g: ClassGraph):
    """(nu, L0): the minimal W value and the labels attaining it."""
    ws = w_values(g)
    nu = min(ws)
    return nu, [g.labels[i] for i, w in enumerate(ws) if w == nu]


def lambda_value(g: ClassGraph):
    """nu minus the cheapest two-sink graph over all unordered pairs."""
    if g.l < 2:
        raise ValueError("Lambda needs at least two classes")
    nu, _ = minimizing_set(g)
    if g.l == 2:
        return nu - 0
    two = min(_min_cost(g, [i, j]) for i, j in itertools.combinations(range(g.l), 2))
    return nu - two


def mass_exponent(g: ClassGraph, i):
    nu, _ = minimizing_set(g)
    return w_value(g, i) - nu


def min_plus_closure(D):
    """Shortest-path closure of a direct-cost matrix (Floyd-Warshall in (min, +))."""
    l = len(D)
    V = [list(row) for row in D]
    for k in range(l):
        for i in range(l):
            for j in range(l):
                if V[i][k] + V[k][j] < V[i][j]:
                    V[i][j] = V[i][k] + V[k][j]
    return V


def summary(g: ClassGraph) -> dict:
    ws = w_values(g)
    nu, L0 = minimizing_set(g)
    return {
        "labels": list(g.labels),
        "W": [float(w) for w in ws],
        "nu": float(nu),
        "L0": L0,
        "Lambda": float(lambda_value(g)),
        "mass_exponent": [float(w - nu) for w in ws],
    }
