"""Lazy rounding of a dynamic fractional matching (cardinality version).

An integral matching ``M`` is kept inside the sparsifier ``S``.  Updates only
remove edges from ``M``; ``M`` is recomputed from ``S`` once
``|M| <= (1 - 2 eps) * sum x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .graph import Edge, FractionalAssignment, UpdateEvent, WeightedGraph, apply_update
from .sparsifier import MembershipDelta, SparsifierState, build_sparsifier, update_sparsifier
from .static import max_cardinality_matching


@dataclass(frozen=True)
class RoundingDelta:
    t: int
    op: str
    edge: Edge
    matching_size: int
    sum_x: float
    recompute: bool
    membership: MembershipDelta = MembershipDelta()
    dropped_from_m: bool = False

    def to_json(self) -> dict:
        return {"t": self.t, "op": self.op, "edge": list(self.edge), "|M|": self.matching_size,
                "sum_x": self.sum_x, "recompute": self.recompute}


@dataclass
class RoundingState:
    graph: WeightedGraph
    x: FractionalAssignment
    sparsifier: SparsifierState
    M: set[Edge]
    sum_x: float
    threshold: float
    t: int = 0
    recomputes: int = 0
    sum_x_at_recompute: float = 0.0
    trace: list[RoundingDelta] = field(default_factory=list)

    @property
    def epsilon(self) -> float:
        return self.x.epsilon

    def matching_ok(self) -> bool:
        seen: set[int] = set()
        for u, v in self.M:
            if u in seen or v in seen or (u, v) not in self.sparsifier.S:
                return False
            seen.update((u, v))
        return True

    def write_trace(self, path: str | Path) -> None:
        Path(path).write_text("".join(json.dumps(d.to_json()) + "\n" for d in self.trace))


def _match_on(graph: WeightedGraph, S: set[Edge]) -> set[Edge]:
    return set(max_cardinality_matching(graph.subgraph(S)).edges)


def init(graph: WeightedGraph, x: FractionalAssignment, d: float | None = None,
         seed: int = 0) -> RoundingState:
    """Build ``S`` and take a maximum matching inside it.

    The graph and assignment are copied; the state owns its own versions.
    """
    graph = graph.copy()
    x = x.copy()
    sp = build_sparsifier(graph, x, d=d, seed=seed)
    M = _match_on(graph, sp.S)
    total = x.total()
    return RoundingState(graph, x, sp, M, total, 1.0 - 2.0 * x.epsilon,
                         sum_x_at_recompute=total)


def recompute(state: RoundingState) -> None:
    state.M = _match_on(state.graph, state.sparsifier.S)
    state.sum_x = state.x.total()
    state.sum_x_at_recompute = state.sum_x
    state.recomputes += 1


def on_update(state: RoundingState, event: UpdateEvent) -> RoundingDelta:
    """Apply one update; recompute ``M`` only when it has become too small."""
    record = apply_update(state.graph, state.x, event)
    membership = update_sparsifier(state.sparsifier, event)
    state.sum_x += record.new_x - record.old_x
    e = record.edge
    dropped = e in state.M
    if dropped:
        state.M.discard(e)
    fired = False
    if state.sum_x > 0 and len(state.M) <= state.threshold * state.sum_x:
        recompute(state)
        fired = True
    state.t += 1
    delta = RoundingDelta(state.t, event.kind, e, len(state.M), state.sum_x, fired,
                          membership, dropped)
    state.trace.append(delta)
    return delta


def cached_sum_drift(state: RoundingState) -> float:
    return abs(state.sum_x - state.x.total())


def recompute_budget(updates: int, epsilon: float, sum_x: float) -> float:
    """Allowed recomputes for ``updates`` changes: ``updates / (eps * sum_x) + 1``."""
    if sum_x <= 0:
        return math.inf
    return updates / (epsilon * sum_x) + 1
