"""Fractional matching polytopes: degree constraints plus odd-set constraints.

Three polytopes are supported:

``"P"``       degree constraints only,
``"M_eps"``   degree constraints plus odd sets of size at most ``1/eps``,
``"M_full"``  degree constraints plus every odd set (exact, small components only).

Only odd sets inducing a connected subgraph are enumerated.  A disconnected
odd set splits into an odd component and an even remainder, and its
constraint is the sum of the component constraint and the degree bounds of
the remainder, so nothing is lost.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Literal

import numpy as np
from scipy import sparse

from .graph import Edge, FractionalAssignment, WeightedGraph

Polytope = Literal["P", "M_eps", "M_full"]

CONSTRAINT_TOL = 1e-9
FULL_EXACT_CAP = 14


class UnsupportedSize(ValueError):
    """Exact odd-set enumeration requested above the supported size."""


class ContractError(ValueError):
    """A documented precondition does not hold."""


@dataclass(frozen=True, order=True)
class OddSet:
    vertices: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.vertices) % 2 == 0 or len(self.vertices) < 3:
            raise ValueError(f"odd set needs odd size >= 3, got {self.vertices}")
        if list(self.vertices) != sorted(set(self.vertices)):
            raise ValueError(f"odd set vertices must be sorted and distinct: {self.vertices}")

    @classmethod
    def of(cls, vertices: Iterable[int]) -> OddSet:
        return cls(tuple(sorted(vertices)))

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def bound(self) -> float:
        return (len(self.vertices) - 1) / 2

    def contains_edge(self, e: Edge) -> bool:
        return e[0] in self.vertices and e[1] in self.vertices


@dataclass(frozen=True)
class PolytopeReport:
    member: bool
    polytope: str
    violated: int | OddSet | None = None
    lhs: float | None = None
    rhs: float | None = None

    def to_json(self) -> dict:
        violated = self.violated
        if isinstance(violated, OddSet):
            violated = {"odd_set": list(violated.vertices)}
        elif violated is not None:
            violated = {"vertex": violated}
        return {"member": self.member, "polytope": self.polytope,
                "violated": violated, "lhs": self.lhs, "rhs": self.rhs}


def odd_set_cap(epsilon: float) -> int:
    # 1/eps can land a hair below an integer (1/0.2 is fine, 1/(1/3) is not always)
    return math.floor(1.0 / epsilon + 1e-9)


def _adjacency(edges: Iterable[Edge]) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    return adj


def connected_subsets(adj: dict[int, set[int]], max_size: int) -> Iterator[tuple[int, ...]]:
    """Yield every vertex set of size ``1..max_size`` inducing a connected subgraph.

    ESU-style enumeration: each set is produced exactly once, rooted at its
    smallest vertex.
    """
    if max_size < 1:
        return

    def extend(sub: list[int], closed: set[int], ext: list[int], root: int):
        yield tuple(sorted(sub))
        if len(sub) == max_size:
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            fresh = [u for u in adj[w] if u > root and u not in closed]
            yield from extend(sub + [w], closed | set(fresh), ext + fresh, root)

    for root in sorted(adj):
        first = [u for u in adj[root] if u > root]
        yield from extend([root], {root, *first}, first, root)


def enumerate_odd_sets(graph: WeightedGraph | Iterable[Edge], epsilon: float,
                       cap: int = FULL_EXACT_CAP) -> list[OddSet]:
    """Odd sets ``B`` with ``3 <= |B| <= min(floor(1/eps), cap)`` and ``G[B]`` connected."""
    if cap < 3:
        raise ValueError("cap must be at least 3")
    edges = graph.edges() if isinstance(graph, WeightedGraph) else list(graph)
    limit = min(odd_set_cap(epsilon), cap)
    adj = _adjacency(edges)
    return sorted(OddSet(s) for s in connected_subsets(adj, limit) if len(s) >= 3 and len(s) % 2)


def all_odd_sets(vertices: Iterable[int], max_size: int | None = None) -> Iterator[OddSet]:
    """Every odd subset of size >= 3, connected or not (exhaustive)."""
    vs = sorted(set(vertices))
    top = len(vs) if max_size is None else min(max_size, len(vs))
    for k in range(3, top + 1, 2):
        for combo in itertools.combinations(vs, k):
            yield OddSet(combo)


def components(edges: Iterable[Edge]) -> list[list[int]]:
    adj = _adjacency(edges)
    seen: set[int] = set()
    out = []
    for start in sorted(adj):
        if start in seen:
            continue
        stack, comp = [start], []
        seen.add(start)
        while stack:
            v = stack.pop()
            comp.append(v)
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        out.append(sorted(comp))
    return out


def full_odd_sets(edges: Iterable[Edge], cap: int = FULL_EXACT_CAP) -> list[OddSet]:
    """Connected odd sets of every size, one component at a time."""
    edges = list(edges)
    comps = components(edges)
    if comps and max(len(c) for c in comps) > cap:
        raise UnsupportedSize(
            f"component of size {max(len(c) for c in comps)} exceeds exact cap {cap}")
    adj = _adjacency(edges)
    top = max((len(c) for c in comps), default=0)
    return sorted(OddSet(s) for s in connected_subsets(adj, top) if len(s) >= 3 and len(s) % 2)


def odd_sets_for(edges: Iterable[Edge], polytope: Polytope, epsilon: float) -> list[OddSet]:
    edges = list(edges)
    if polytope == "P":
        return []
    if polytope == "M_eps":
        return enumerate_odd_sets(edges, epsilon, cap=max(3, odd_set_cap(epsilon)))
    if polytope == "M_full":
        return full_odd_sets(edges)
    raise ValueError(f"unknown polytope {polytope!r}")


def odd_set_sums(x: FractionalAssignment | dict[Edge, float], odd_sets: Iterable[OddSet]
                 ) -> list[float]:
    values = x.values if isinstance(x, FractionalAssignment) else x
    adj = _adjacency(values)
    out = []
    for B in odd_sets:
        members = set(B.vertices)
        total = 0.0
        for u in B.vertices:
            for v in adj.get(u, ()):
                if u < v and v in members:
                    total += values[(u, v)]
        out.append(total)
    return out


def check_membership(x: FractionalAssignment, polytope: Polytope,
                     epsilon: float | None = None, tol: float = CONSTRAINT_TOL
                     ) -> PolytopeReport:
    """Check degree and odd-set constraints; report the most violated one."""
    eps = x.epsilon if epsilon is None else epsilon
    support = x.support()
    worst: tuple[float, int | OddSet, float, float] | None = None
    deg: dict[int, float] = {}
    for (u, v), val in x.values.items():
        deg[u] = deg.get(u, 0.0) + val
        deg[v] = deg.get(v, 0.0) + val
    for v in sorted(deg):
        excess = deg[v] - 1.0
        if excess > tol and (worst is None or excess > worst[0]):
            worst = (excess, v, deg[v], 1.0)
    if polytope != "P":
        sets = odd_sets_for(support, polytope, eps)
        for B, lhs in zip(sets, odd_set_sums(x, sets)):
            excess = lhs - B.bound
            if excess > tol and (worst is None or excess > worst[0]):
                worst = (excess, B, lhs, B.bound)
    if worst is None:
        return PolytopeReport(True, polytope)
    return PolytopeReport(False, polytope, worst[1], worst[2], worst[3])


def scale_into_full(x: FractionalAssignment, epsilon: float | None = None) -> FractionalAssignment:
    """Return ``x / (1 + eps)``, which lies in the full matching polytope."""
    eps = x.epsilon if epsilon is None else epsilon
    report = check_membership(x, "M_eps", eps)
    if not report.member:
        raise ContractError(f"input is not in M_eps: {report.to_json()}")
    return FractionalAssignment({e: v / (1.0 + eps) for e, v in x.values.items()}, x.epsilon)


def constraint_system(edges: list[Edge], odd_sets: Iterable[OddSet], prune: bool = True
                      ) -> tuple[sparse.csr_matrix, np.ndarray, list[int | OddSet]]:
    """Rows ``A x <= b`` over the given edge order: vertex rows, then odd-set rows.

    With ``prune`` an odd set inducing at most ``(|B|-1)/2`` edges is dropped:
    its constraint already follows from ``x(e) <= 1``.
    """
    index = {e: j for j, e in enumerate(edges)}
    rows: list[int] = []
    cols: list[int] = []
    b: list[float] = []
    labels: list[int | OddSet] = []
    vertices = sorted({v for e in edges for v in e})
    for v in vertices:
        r = len(b)
        for j, e in enumerate(edges):
            if v in e:
                rows.append(r)
                cols.append(j)
        b.append(1.0)
        labels.append(v)
    adj = _adjacency(edges)
    for B in odd_sets:
        members = set(B.vertices)
        inside = [index[(u, v)] for u in B.vertices for v in adj.get(u, ())
                  if u < v and v in members]
        if not inside or (prune and len(inside) <= B.bound):
            continue
        r = len(b)
        rows.extend([r] * len(inside))
        cols.extend(inside)
        b.append(B.bound)
        labels.append(B)
    A = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(b), len(edges)))
    return A, np.asarray(b, dtype=float), labels
