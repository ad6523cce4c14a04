"""Weighted graphs, fractional assignments and update events.

Edges are stored as normalized vertex pairs ``(u, v)`` with ``u < v``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Literal

Edge = tuple[int, int]

# Absolute slack used when validating values that went through float arithmetic.
VALUE_TOL = 1e-9


class GraphError(ValueError):
    """Malformed graph, assignment or event."""


class EdgeNotFound(KeyError):
    """An update referenced an edge that is not present."""


def edge_key(u: int, v: int) -> Edge:
    if u == v:
        raise GraphError(f"self-loop at vertex {u}")
    return (u, v) if u < v else (v, u)


def check_epsilon(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 1.0:
        raise GraphError(f"epsilon must lie in (0, 1), got {epsilon}")
    return epsilon


@dataclass
class WeightedGraph:
    """Simple undirected graph on vertices ``0..n-1`` with weights in ``[1, W]``.

    ``W`` is fixed at construction (defaulting to ``max(1, max weight)``) so it
    stays a valid upper bound while edges are deleted.
    """

    n: int
    weights: dict[Edge, float] = field(default_factory=dict)
    W: float | None = None

    def __post_init__(self) -> None:
        if self.n < 0:
            raise GraphError("vertex count must be nonnegative")
        normalized: dict[Edge, float] = {}
        for (u, v), w in self.weights.items():
            key = edge_key(u, v)
            if not (0 <= key[0] and key[1] < self.n):
                raise GraphError(f"edge {key} out of range for n={self.n}")
            if key in normalized:
                raise GraphError(f"parallel edge {key}")
            normalized[key] = float(w)
        self.weights = normalized
        top = max(normalized.values(), default=1.0)
        if self.W is None:
            self.W = max(1.0, top)
        for key, w in normalized.items():
            if not (1.0 - VALUE_TOL <= w <= self.W + VALUE_TOL):
                raise GraphError(f"weight {w} of edge {key} outside [1, {self.W}]")
        self._adj: dict[int, set[int]] = {}
        for u, v in normalized:
            self._adj.setdefault(u, set()).add(v)
            self._adj.setdefault(v, set()).add(u)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple], W: float | None = None) -> WeightedGraph:
        """Build from ``(u, v)`` or ``(u, v, w)`` tuples; missing weights are 1."""
        weights: dict[Edge, float] = {}
        for item in edges:
            u, v = int(item[0]), int(item[1])
            key = edge_key(u, v)
            if key in weights:
                raise GraphError(f"parallel edge {key}")
            weights[key] = float(item[2]) if len(item) > 2 else 1.0
        return cls(n, weights, W)

    @property
    def m(self) -> int:
        return len(self.weights)

    def edges(self) -> list[Edge]:
        return sorted(self.weights)

    def weight(self, u: int, v: int) -> float:
        return self.weights[edge_key(u, v)]

    def has_edge(self, u: int, v: int) -> bool:
        return u != v and edge_key(u, v) in self.weights

    def neighbors(self, v: int) -> set[int]:
        return self._adj.get(v, set())

    def degree(self, v: int) -> int:
        return len(self._adj.get(v, ()))

    def active_vertices(self) -> list[int]:
        return sorted(v for v, nb in self._adj.items() if nb)

    def remove_edge(self, u: int, v: int) -> float:
        key = edge_key(u, v)
        if key not in self.weights:
            raise EdgeNotFound(key)
        w = self.weights.pop(key)
        self._adj[key[0]].discard(key[1])
        self._adj[key[1]].discard(key[0])
        return w

    def copy(self) -> WeightedGraph:
        return WeightedGraph(self.n, dict(self.weights), self.W)

    def subgraph(self, edges: Iterable[Edge]) -> WeightedGraph:
        return WeightedGraph(self.n, {e: self.weights[e] for e in edges}, self.W)

    def induced_edges(self, vertices: Iterable[int]) -> list[Edge]:
        vs = sorted(set(vertices))
        members = set(vs)
        out = []
        for u in vs:
            for v in self._adj.get(u, ()):
                if u < v and v in members:
                    out.append((u, v))
        return sorted(out)


@dataclass
class FractionalAssignment:
    """Per-edge values ``x(e)`` in ``[0, 1]`` plus the precision parameter."""

    values: dict[Edge, float]
    epsilon: float

    def __post_init__(self) -> None:
        self.epsilon = check_epsilon(self.epsilon)
        clean: dict[Edge, float] = {}
        for (u, v), x in self.values.items():
            x = float(x)
            if not (-VALUE_TOL <= x <= 1.0 + VALUE_TOL) or math.isnan(x):
                raise GraphError(f"x{(u, v)}={x} outside [0, 1]")
            x = min(max(x, 0.0), 1.0)
            if x > 0.0:
                clean[edge_key(u, v)] = x
        self.values = clean

    def __getitem__(self, e: Edge) -> float:
        return self.values.get(e, 0.0)

    def __iter__(self) -> Iterator[Edge]:
        return iter(sorted(self.values))

    def __len__(self) -> int:
        return len(self.values)

    def support(self) -> list[Edge]:
        return sorted(self.values)

    def total(self) -> float:
        return math.fsum(self.values.values())

    def weighted_total(self, graph: WeightedGraph) -> float:
        return math.fsum(graph.weights[e] * x for e, x in self.values.items())

    def copy(self) -> FractionalAssignment:
        return FractionalAssignment(dict(self.values), self.epsilon)

    def restricted_to(self, graph: WeightedGraph) -> FractionalAssignment:
        return FractionalAssignment(
            {e: x for e, x in self.values.items() if e in graph.weights}, self.epsilon
        )

    def check_support(self, graph: WeightedGraph) -> None:
        missing = [e for e in self.values if e not in graph.weights]
        if missing:
            raise GraphError(f"support edges missing from graph: {missing[:5]}")


@dataclass(frozen=True)
class UpdateEvent:
    kind: Literal["del", "setx"]
    u: int
    v: int
    x: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("del", "setx"):
            raise GraphError(f"unknown update kind {self.kind!r}")
        if self.kind == "setx":
            if self.x is None or not (0.0 <= self.x <= 1.0):
                raise GraphError(f"setx value must lie in [0, 1], got {self.x}")
        edge_key(self.u, self.v)

    @property
    def edge(self) -> Edge:
        return edge_key(self.u, self.v)

    @classmethod
    def delete(cls, u: int, v: int) -> UpdateEvent:
        return cls("del", u, v)

    @classmethod
    def set_x(cls, u: int, v: int, x: float) -> UpdateEvent:
        return cls("setx", u, v, float(x))

    def to_json(self) -> dict:
        data: dict = {"op": self.kind, "u": self.u, "v": self.v}
        if self.kind == "setx":
            data["x"] = self.x
        return data

    @classmethod
    def from_json(cls, data: dict) -> UpdateEvent:
        op = data.get("op")
        if op == "del":
            return cls.delete(int(data["u"]), int(data["v"]))
        if op == "setx":
            return cls.set_x(int(data["u"]), int(data["v"]), float(data["x"]))
        raise GraphError(f"unknown op {op!r}")


@dataclass(frozen=True)
class ChangeRecord:
    """Old/new value of the edge touched by an update (``None`` = absent)."""

    edge: Edge
    kind: str
    old_x: float
    new_x: float
    old_bucket: int | None
    new_bucket: int | None
    deleted: bool


def bucket_index(x_e: float, epsilon: float) -> int:
    """Return the unique ``i >= 1`` with ``(1+eps)^-i <= x_e < (1+eps)^(1-i)``.

    The top bucket is closed at 1 so ``x_e = 1`` maps to ``i = 1``.
    """
    if not (0.0 < x_e <= 1.0):
        raise GraphError(f"bucket_index needs x in (0, 1], got {x_e}")
    base = 1.0 + epsilon
    i = max(1, math.ceil(-math.log(x_e) / math.log(base)))
    # log round-off can land one bucket off; settle by direct interval tests
    while i > 1 and x_e >= base ** (-(i - 1)):
        i -= 1
    while x_e < base ** (-i):
        i += 1
    return i


def prune_threshold(epsilon: float, n: int) -> float:
    return epsilon**2 / max(n, 1) ** 2


def max_bucket(epsilon: float, n: int) -> int:
    """Largest bucket index that can survive pruning, ``ceil(2 log_{1+eps}(n/eps))``."""
    return math.ceil(2.0 * math.log(max(n, 1) / epsilon) / math.log1p(epsilon))


def prune_low(x: FractionalAssignment, n: int) -> FractionalAssignment:
    """Drop every edge with ``x(e) <= eps^2 / n^2``."""
    cut = prune_threshold(x.epsilon, n)
    return FractionalAssignment({e: v for e, v in x.values.items() if v > cut}, x.epsilon)


def vertex_mass(x: FractionalAssignment, v: int) -> float:
    return math.fsum(val for (a, b), val in x.values.items() if a == v or b == v)


def vertex_masses(x: FractionalAssignment, n: int) -> list[float]:
    acc = [0.0] * n
    for (a, b), val in x.values.items():
        acc[a] += val
        acc[b] += val
    return acc


def apply_update(
    graph: WeightedGraph, x: FractionalAssignment, event: UpdateEvent
) -> ChangeRecord:
    """Mutate ``graph``/``x`` according to ``event`` and report the change."""
    e = event.edge
    if e not in graph.weights:
        raise EdgeNotFound(e)
    old = x.values.get(e, 0.0)
    old_bucket = bucket_index(old, x.epsilon) if old > 0 else None
    if event.kind == "del":
        graph.remove_edge(*e)
        x.values.pop(e, None)
        return ChangeRecord(e, "del", old, 0.0, old_bucket, None, True)
    new = float(event.x)
    if new > 0:
        x.values[e] = new
    else:
        x.values.pop(e, None)
    new_bucket = bucket_index(new, x.epsilon) if new > 0 else None
    return ChangeRecord(e, "setx", old, new, old_bucket, new_bucket, False)


# ---------------------------------------------------------------- file formats


def read_graph(path: str | Path) -> WeightedGraph:
    """Read ``n m`` followed by ``m`` lines of ``u v w``."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise GraphError(f"{path}: empty graph file")
    n, m = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != m:
        raise GraphError(f"{path}: header says {m} edges, found {len(body)}")
    return WeightedGraph.from_edges(n, ((int(a), int(b), float(w)) for a, b, w in body))


def write_graph(graph: WeightedGraph, path: str | Path) -> None:
    rows = [f"{graph.n} {graph.m}"]
    rows += [f"{u} {v} {_fmt(w)}" for (u, v), w in sorted(graph.weights.items())]
    Path(path).write_text("\n".join(rows) + "\n")


def read_fractional(path: str | Path, epsilon: float) -> FractionalAssignment:
    values: dict[Edge, float] = {}
    for ln in Path(path).read_text().splitlines():
        if ln.strip():
            a, b, val = ln.split()
            values[edge_key(int(a), int(b))] = float(val)
    return FractionalAssignment(values, epsilon)


def write_fractional(x: FractionalAssignment, path: str | Path) -> None:
    rows = [f"{u} {v} {x.values[(u, v)]!r}" for u, v in x.support()]
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""))


def read_updates(path: str | Path) -> list[UpdateEvent]:
    events = []
    for ln in Path(path).read_text().splitlines():
        if ln.strip():
            events.append(UpdateEvent.from_json(json.loads(ln)))
    return events


def write_updates(events: Iterable[UpdateEvent], path: str | Path) -> None:
    Path(path).write_text("".join(json.dumps(ev.to_json()) + "\n" for ev in events))


def _fmt(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))
