"""Fully adaptive decremental weighted matching.

The driver keeps a fractional matching ``x`` (an entropy-regularized optimum
restricted to its significant edges) and an integral matching ``M`` rounded
from a sparsifier of ``x``.  Two counters track deleted weight: ``counter_x``
against ``x`` and ``counter_m`` against ``M``.  Crossing ``eps * mu_star``
triggers a rebuild of ``x`` or a fresh rounding, respectively.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .entropy import EntropyParams, restrict_significant, solve_entropy
from .graph import Edge, EdgeNotFound, FractionalAssignment, WeightedGraph, check_epsilon, edge_key
from .polytope import FULL_EXACT_CAP, scale_into_full
from .sparsifier import build_sparsifier, default_density
from .static import Matching, matching_from_edges, max_weight_matching_exact, static_match_approx

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DriverEvent:
    t: int
    op: str
    edge: Edge | None
    wM: float
    counter_x: float
    counter_m: float
    mu_star: float
    rebuild: bool
    round: bool
    stale: bool = False
    round_failed: bool = False
    mwm_oracle: float | None = None

    def to_json(self) -> dict:
        data = {"t": self.t, "op": self.op, "edge": list(self.edge) if self.edge else None,
                "wM": self.wM, "counterX": self.counter_x, "counterM": self.counter_m,
                "mu_star": self.mu_star, "rebuild": self.rebuild, "round": self.round,
                "stale": self.stale, "round_failed": self.round_failed}
        if self.mwm_oracle is not None:
            data["mwm_oracle"] = self.mwm_oracle
            data["ratio"] = self.wM / self.mwm_oracle if self.mwm_oracle > 0 else 1.0
        return data


@dataclass
class DriverState:
    graph: WeightedGraph
    epsilon: float
    x: FractionalAssignment
    M: Matching = Matching()
    mu_star: float = 0.0
    counter_x: float = 0.0
    counter_m: float = 0.0
    delta: float | None = None
    gamma: float | None = None
    d: float | None = None
    seed: int = 0
    epoch: int = 0
    t: int = 0
    rebuilds: int = 0
    rounds: int = 0
    rounds_since_rebuild: int = 0
    max_rounds_between_rebuilds: int = 0
    round_attempts: int = 0
    round_failures: int = 0
    last_params: EntropyParams | None = None
    oracle_check: bool = False
    trace: list[DriverEvent] = field(default_factory=list)

    @property
    def density(self) -> float:
        return self.d if self.d is not None else default_density(self.graph.n, self.epsilon)

    def counters_ok(self) -> bool:
        """``counter < eps * mu_star`` for both counters (vacuous once ``mu_star = 0``)."""
        if self.mu_star <= 0:
            return True
        bar = self.epsilon * self.mu_star
        return self.counter_x < bar and self.counter_m < bar

    def summary(self) -> dict:
        ratios = [ev.wM / ev.mwm_oracle for ev in self.trace
                  if ev.mwm_oracle is not None and ev.mwm_oracle > 0]
        return {
            "n": self.graph.n, "epsilon": self.epsilon, "events": self.t,
            "rebuilds": self.rebuilds, "rounds": self.rounds,
            "max_rounds_between_rebuilds": self.max_rounds_between_rebuilds,
            "round_attempts": self.round_attempts, "round_failures": self.round_failures,
            "rebuild_bound": rebuild_bound(self.graph.n, self.graph.W, self.epsilon),
            "round_bound": round_bound(self.graph.n, self.epsilon),
            "min_ratio": min(ratios) if ratios else None,
        }

    def write_trace(self, path: str | Path) -> None:
        Path(path).write_text("".join(json.dumps(ev.to_json()) + "\n" for ev in self.trace))


def rebuild_bound(n: int, W: float, epsilon: float, const: float = 8.0) -> float:
    """``const * (1/eps) * log_{1+eps}(n W)``."""
    return const / epsilon * math.log(max(n * W, 2.0)) / math.log1p(epsilon)


def round_bound(n: int, epsilon: float) -> int:
    return math.ceil(3 * n / epsilon**2)


def retry_budget(epsilon: float) -> int:
    return math.ceil(math.log2(1.0 / epsilon)) + 10


def initialize(graph: WeightedGraph, epsilon: float, delta: float | None = None,
               gamma: float | None = None, d: float | None = None, seed: int = 0,
               oracle_check: bool = False) -> DriverState:
    """Zero the counters, then run one rebuild and one rounding."""
    epsilon = check_epsilon(epsilon)
    state = DriverState(graph.copy(), epsilon, FractionalAssignment({}, epsilon), delta=delta,
                        gamma=gamma, d=d, seed=seed, oracle_check=oracle_check)
    rebuild(state)
    round_matching(state)
    _log_event(state, "init", None, True, True)
    return state


def _surrogate_solve(graph: WeightedGraph, params: EntropyParams, warm: dict[Edge, float]
                     ) -> FractionalAssignment:
    # exact odd-set constraints when every component fits, else M_eps then scale down
    if len(graph.active_vertices()) <= FULL_EXACT_CAP:
        return solve_entropy(graph, params, "M_full", x0=warm).x
    y = solve_entropy(graph, params, "M_eps", x0=warm).x
    return scale_into_full(y, params.epsilon)


def rebuild(state: DriverState) -> None:
    """Re-solve the entropy program on the current graph and reset ``counter_x``."""
    G = state.graph
    eps = state.epsilon
    state.rebuilds += 1
    state.rounds_since_rebuild = 0
    state.counter_x = 0.0
    if G.m == 0:
        state.x = FractionalAssignment({}, eps)
        state.mu_star = 0.0
        return
    params = EntropyParams.for_graph(G, eps, state.delta, state.gamma)
    state.last_params = params
    warm = {e: v for e, v in state.x.values.items() if e in G.weights}
    y = _surrogate_solve(G, params, warm)
    state.x = restrict_significant(y, eps, G.n)
    state.mu_star = state.x.weighted_total(G)


def round_matching(state: DriverState) -> bool:
    """Sparsify ``x`` and match inside the sparsifier, resampling on a weak draw.

    A draw is accepted once ``w(M) >= (1 - 6 eps) mu_star - counter_m``; at
    most ``ceil(log2(1/eps)) + 10`` draws are made.  Returns ``False`` if no
    draw was accepted (the last one is kept).
    """
    G = state.graph
    state.rounds += 1
    state.rounds_since_rebuild += 1
    state.max_rounds_between_rebuilds = max(state.max_rounds_between_rebuilds,
                                            state.rounds_since_rebuild)
    target = (1 - 6 * state.epsilon) * state.mu_star - state.counter_m
    for _ in range(retry_budget(state.epsilon)):
        state.epoch += 1
        state.round_attempts += 1
        sp = build_sparsifier(G, state.x, d=state.density, seed=state.seed, epoch=state.epoch)
        state.M = static_match_approx(G.subgraph(sp.S), state.epsilon)
        if state.M.weight >= target - 1e-9:
            return True
    state.round_failures += 1
    log.warning("round: no draw reached %.6g after %d attempts", target,
                retry_budget(state.epsilon))
    return False


def delete_edge(state: DriverState, u: int, v: int) -> DriverEvent:
    """Process one deletion exactly in the order rebuild check, then matching check."""
    e = edge_key(u, v)
    if e not in state.graph.weights:
        raise EdgeNotFound(e)
    w = state.graph.remove_edge(*e)
    if e in state.x.values:
        state.counter_x += w * state.x.values.pop(e)
    did_rebuild = did_round = False
    if state.counter_x >= state.epsilon * state.mu_star:
        rebuild(state)
        did_rebuild = True
    if e in state.M.edges:
        state.M = matching_from_edges(state.graph, [f for f in state.M.edges if f != e])
        state.counter_m += w
    failed = False
    if state.counter_m >= state.epsilon * state.mu_star:
        state.counter_m = 0.0
        failed = not round_matching(state)
        did_round = True
    return _log_event(state, "del", e, did_rebuild, did_round, failed)


def _log_event(state: DriverState, op: str, e: Edge | None, did_rebuild: bool, did_round: bool,
               failed: bool = False) -> DriverEvent:
    oracle = max_weight_matching_exact(state.graph).weight if state.oracle_check else None
    if op != "init":
        state.t += 1
    ev = DriverEvent(state.t, op, e, state.M.weight, state.counter_x, state.counter_m,
                     state.mu_star, did_rebuild, did_round,
                     stale=did_rebuild and not did_round, round_failed=failed,
                     mwm_oracle=oracle)
    state.trace.append(ev)
    return ev


def heaviest_matched_edge(state: DriverState) -> Edge | None:
    """Adversary's choice: heaviest edge of ``M``, else heaviest edge of the graph."""
    pool = state.M.edges or tuple(state.graph.weights)
    if not pool:
        return None
    return max(pool, key=lambda f: (state.graph.weights[f], f))


def run_adversary(state: DriverState, max_steps: int | None = None) -> list[DriverEvent]:
    """Delete the heaviest matched edge until the graph is empty."""
    out = []
    while state.graph.m and (max_steps is None or len(out) < max_steps):
        e = heaviest_matched_edge(state)
        out.append(delete_edge(state, *e))
    return out
