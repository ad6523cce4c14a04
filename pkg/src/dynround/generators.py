"""Deterministic instance generators for the test corpus and the CLI."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .graph import Edge, FractionalAssignment, WeightedGraph

KINDS = ("random-gnp", "cycle", "blossom-rich", "weighted-random")


def random_gnp(n: int, p: float, seed: int, W: int = 1) -> WeightedGraph:
    """``G(n, p)``; integer weights uniform in ``[1, W]`` when ``W > 1``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng([seed, n])
    edges = []
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() < p:
            edges.append((u, v, int(rng.integers(1, W + 1)) if W > 1 else 1))
    return WeightedGraph.from_edges(n, edges, W=float(max(W, 1)))


def cycle(n: int) -> WeightedGraph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 vertices")
    return WeightedGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def blossom_rich(n: int, seed: int, cycle_len: int = 5, p_extra: float = 0.1) -> WeightedGraph:
    """Disjoint odd cycles packed into ``n`` vertices, joined by sparse random edges.

    ``cycle_len`` must be odd; at least 3 cycles are required to fit.
    """
    if cycle_len < 3 or cycle_len % 2 == 0:
        raise ValueError("cycle_len must be odd and at least 3")
    k = n // cycle_len
    if k < 3:
        raise ValueError(f"need n >= {3 * cycle_len} for three disjoint {cycle_len}-cycles")
    rng = np.random.default_rng([seed, n, cycle_len])
    perm = rng.permutation(n).tolist()
    edges: set[Edge] = set()
    for c in range(k):
        ring = perm[c * cycle_len:(c + 1) * cycle_len]
        for i in range(cycle_len):
            a, b = ring[i], ring[(i + 1) % cycle_len]
            edges.add((min(a, b), max(a, b)))
    for u, v in itertools.combinations(range(n), 2):
        if (u, v) not in edges and rng.random() < p_extra:
            edges.add((u, v))
    return WeightedGraph.from_edges(n, sorted(edges))


def weighted_random(n: int, p: float, seed: int, W: int = 10) -> WeightedGraph:
    return random_gnp(n, p, seed, W=W)


def generate(kind: str, n: int, param: float | None = None, seed: int = 0,
             W: int = 10) -> WeightedGraph:
    if kind == "random-gnp":
        return random_gnp(n, 0.2 if param is None else param, seed)
    if kind == "cycle":
        return cycle(n)
    if kind == "blossom-rich":
        return blossom_rich(n, seed, p_extra=0.1 if param is None else param)
    if kind == "weighted-random":
        return weighted_random(n, 0.2 if param is None else param, seed, W)
    raise ValueError(f"unknown generator {kind!r}; choose from {', '.join(KINDS)}")


def disjoint_odd_cycles(graph: WeightedGraph, max_len: int = 7) -> int:
    """Largest number of vertex-disjoint odd cycles of length at most ``max_len``.

    Exact over that cycle family (exhaustive packing search), so it is meant
    for small instances.
    """
    cycles = sorted({frozenset(c) for c in _odd_cycles(graph, max_len)}, key=len)
    by_vertex: dict[int, list[frozenset]] = {}
    for c in cycles:
        for v in c:
            by_vertex.setdefault(v, []).append(c)

    best = 0

    def search(free: frozenset, count: int) -> None:
        nonlocal best
        best = max(best, count)
        usable = [v for v in sorted(free) if any(c <= free for c in by_vertex.get(v, ()))]
        if not usable or count + len(usable) // 3 <= best:
            return
        v = usable[0]
        for c in by_vertex[v]:
            if c <= free:
                search(free - c, count + 1)
        search(free - {v}, count)

    search(frozenset(by_vertex), 0)
    return best


def _odd_cycles(graph: WeightedGraph, max_len: int):
    # each cycle is rooted at its smallest vertex and walked in one direction
    adj = {v: sorted(graph.neighbors(v)) for v in range(graph.n)}
    for root in range(graph.n):
        stack = [(root, [root])]
        while stack:
            v, path = stack.pop()
            for u in adj[v]:
                if u == root and len(path) >= 3 and len(path) % 2 == 1 and path[1] < path[-1]:
                    yield tuple(path)
                elif u > root and u not in path and len(path) < max_len:
                    stack.append((u, path + [u]))


def random_fractional(graph: WeightedGraph, epsilon: float, seed: int, low: float = 1e-3,
                      high: float = 1.0) -> FractionalAssignment:
    """A point of the degree polytope with log-uniform raw values.

    Raw values ``r`` are drawn log-uniformly from ``[low, high]``; each edge is
    divided by ``max(1, R_u, R_v)`` where ``R_v`` is the raw mass at ``v``.
    """
    rng = np.random.default_rng([seed, graph.n, graph.m])
    edges = graph.edges()
    raw = np.exp(rng.uniform(math.log(low), math.log(high), size=len(edges)))
    mass = np.zeros(graph.n)
    for (u, v), r in zip(edges, raw):
        mass[u] += r
        mass[v] += r
    vals = {e: float(r / max(1.0, mass[e[0]], mass[e[1]])) for e, r in zip(edges, raw)}
    return FractionalAssignment(vals, epsilon)
