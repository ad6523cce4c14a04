"""Static matching routines (exact blossom via networkx)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import networkx as nx

from .graph import Edge, WeightedGraph, edge_key


@dataclass(frozen=True)
class Matching:
    edges: tuple[Edge, ...] = ()
    weight: float = 0.0

    @property
    def cardinality(self) -> int:
        return len(self.edges)

    def is_valid(self, graph: WeightedGraph | None = None) -> bool:
        seen: set[int] = set()
        for u, v in self.edges:
            if u in seen or v in seen:
                return False
            seen.update((u, v))
            if graph is not None and not graph.has_edge(u, v):
                return False
        return True

    def to_json(self) -> dict:
        return {"edges": [list(e) for e in self.edges], "weight": self.weight,
                "cardinality": self.cardinality}


def matching_from_edges(graph: WeightedGraph, edges) -> Matching:
    es = tuple(sorted(edge_key(u, v) for u, v in edges))
    return Matching(es, math.fsum(graph.weights[e] for e in es))


def _blossom(graph: WeightedGraph, unit: bool) -> Matching:
    if graph.m == 0:
        return Matching()
    G = nx.Graph()
    for (u, v), w in graph.weights.items():
        G.add_edge(u, v, weight=1 if unit else w)
    pairs = nx.max_weight_matching(G, maxcardinality=False, weight="weight")
    return matching_from_edges(graph, pairs)


def max_weight_matching_exact(graph: WeightedGraph) -> Matching:
    """Maximum-weight matching, O(n^3) blossom."""
    return _blossom(graph, unit=False)


def max_cardinality_matching(graph: WeightedGraph) -> Matching:
    """Maximum-cardinality matching (blossom with unit weights)."""
    return _blossom(graph, unit=True)


def static_match_approx(graph: WeightedGraph, epsilon: float = 0.0) -> Matching:
    """A matching of weight at least ``(1 - eps) * mwm(G)``.

    Delegates to the exact routine, which meets the bound for every ``eps >= 0``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return max_weight_matching_exact(graph)
