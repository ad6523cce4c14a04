"""Independent reference computations used to check the main modules.

* :func:`enumerate_matchings` is a bitmask dynamic program over vertex subsets
  (no blossom code involved).
* :func:`reference_entropy_opt` solves the entropy program with an
  exponential-cone solver over *all* odd subsets and certifies the result with
  a Lagrangian dual bound.
* :func:`monte_carlo_sparsifier` repeats the sampling phase many times with
  per-trial seeds and reports frequencies and covariances with standard errors.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal

import cvxpy as cp
import numpy as np
from scipy import sparse

from .entropy import LN2, EntropyParams, g_value
from .graph import Edge, FractionalAssignment, WeightedGraph
from .polytope import OddSet, Polytope, all_odd_sets, constraint_system, odd_set_cap
from .sparsifier import (
    color_all,
    default_density,
    edge_inclusion_bounds,
    fisher_yates_batch,
    make_rng,
    sample_size,
    size_bound,
)
from .static import max_cardinality_matching

Method = Literal["enumeration", "blossom-cross-check", "high-precision-solve", "monte-carlo"]

ENUM_CAP = 16
REF_FULL_CAP = 12
REF_EPS_CAP = 40
REF_TOL = 1e-8


class OracleFailure(RuntimeError):
    """The reference computation could not certify its answer."""


@dataclass(frozen=True)
class OracleReport:
    quantity: str
    value: float
    method: Method
    tolerance: float = 0.0

    def to_json(self) -> dict:
        return {"quantity": self.quantity, "value": self.value, "method": self.method,
                "tolerance": self.tolerance}


# ---------------------------------------------------------------- enumeration


@dataclass(frozen=True)
class EnumerationResult:
    max_cardinality: int
    max_weight: float
    count: int


def enumerate_matchings(graph: WeightedGraph) -> EnumerationResult:
    """Exhaustive matching statistics for ``n <= 16``.

    The lowest vertex of the remaining set is either left unmatched or paired
    with a remaining neighbor; memoized over the remaining-vertex bitmask.
    """
    if graph.n > ENUM_CAP:
        raise ValueError(f"enumeration supports n <= {ENUM_CAP}, got {graph.n}")
    nbrs = [[(u, graph.weights[(min(u, v), max(u, v))]) for u in sorted(graph.neighbors(v))]
            for v in range(graph.n)]

    @lru_cache(maxsize=None)
    def solve(mask: int) -> tuple[int, float, int]:
        if mask == 0:
            return (0, 0.0, 1)
        v = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << v)
        card, weight, count = solve(rest)
        for u, w in nbrs[v]:
            if rest >> u & 1:
                c2, w2, n2 = solve(rest & ~(1 << u))
                card = max(card, c2 + 1)
                weight = max(weight, w2 + w)
                count += n2
        return (card, weight, count)

    card, weight, count = solve((1 << graph.n) - 1)
    return EnumerationResult(card, weight, count)


# ------------------------------------------------------------ entropy reference


@dataclass
class ReferenceSolution:
    x: dict[Edge, float]
    g: float
    dual_bound: float
    gap: float
    y: dict[int, float]
    z: dict[OddSet, float]
    s: dict[Edge, float]
    polytope: str

    @property
    def certified(self) -> bool:
        return self.gap <= REF_TOL * (1.0 + abs(self.g))

    def report(self) -> OracleReport:
        return OracleReport("entropy_optimum", self.g, "high-precision-solve",
                            REF_TOL * (1.0 + abs(self.g)))


def _reference_odd_sets(graph: WeightedGraph, polytope: Polytope, epsilon: float) -> list[OddSet]:
    if polytope == "P":
        return []
    vs = graph.active_vertices()
    if polytope == "M_full":
        if graph.n > REF_FULL_CAP:
            raise ValueError(f"full-polytope reference supports n <= {REF_FULL_CAP}")
        top = None
    else:
        if graph.n > REF_EPS_CAP:
            raise ValueError(f"M_eps reference supports n <= {REF_EPS_CAP}")
        top = odd_set_cap(epsilon)
    # every odd subset, connected or not; redundant rows are pruned later
    return [B for B in all_odd_sets(vs, top)
            if len(graph.induced_edges(B.vertices)) > B.bound]


def _dual_value(lam: np.ndarray, A, b: np.ndarray, a: np.ndarray, c: np.ndarray
                ) -> tuple[float, np.ndarray]:
    """Lagrangian bound ``max_{x>=0} g(x) - lam.(Ax - b)`` and its maximizer."""
    s = A.T @ lam
    xl = np.exp(np.minimum((a - s) / c - 1.0, 700.0))
    return float(lam @ b + np.dot(c, xl)), xl


def _feasible_scale(x: np.ndarray, A, b: np.ndarray) -> np.ndarray:
    x = np.maximum(x, 0.0)
    load = A @ x
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.where(load > b, b / load, 1.0)
    return x * float(min(1.0, ratio.min(initial=1.0)))


def reference_entropy_opt(graph: WeightedGraph, params: EntropyParams,
                          polytope: Polytope = "M_eps", max_iter: int = 10_000_000
                          ) -> ReferenceSolution:
    """High-precision optimum of ``g`` with a certified duality gap.

    With ``c = delta w / ln 2`` and ``a = w (1 + delta log2(gamma / w))`` the
    objective is ``a.x + c.entr(x)``.  For multipliers ``lam >= 0`` the inner
    maximum is attained at ``x = exp((a - A'lam)/c - 1)`` and equals
    ``lam.b + sum c x``, an upper bound on the optimum.  The gap between that
    bound (at the conic solver's multipliers) and the best feasible primal
    point is the certificate; looser solver settings are tried if it does
    not close.
    """
    if params.delta <= 0:
        raise ValueError("reference solve needs delta > 0")
    edges = graph.edges()
    if not edges:
        return ReferenceSolution({}, 0.0, 0.0, 0.0, {}, {}, {}, polytope)
    w = np.array([graph.weights[e] for e in edges], dtype=float)
    odd = _reference_odd_sets(graph, polytope, params.epsilon)
    A, b, labels = constraint_system(edges, odd)
    delta, gamma = params.delta, params.gamma
    a = w * (1.0 + delta * np.log2(gamma / w))
    c = delta * w / LN2

    xv = cp.Variable(len(edges), nonneg=True)
    cons = [A @ xv <= b]
    prob = cp.Problem(cp.Maximize(a @ xv + cp.sum(cp.multiply(c, cp.entr(xv)))), cons)
    best = None
    for settings in _CLARABEL_SETTINGS:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                prob.solve(solver=cp.CLARABEL, max_iter=min(max_iter, 10_000), **settings)
        except cp.error.SolverError:
            continue
        if xv.value is None or cons[0].dual_value is None:
            continue
        sol = _certify(np.asarray(xv.value, dtype=float),
                       np.maximum(np.asarray(cons[0].dual_value, dtype=float), 0.0),
                       edges, w, A, b, labels, a, c, params, polytope)
        if sol.certified:
            return sol
        if best is None or sol.gap < best.gap:
            best = sol
    if best is None:
        raise OracleFailure(f"conic solve returned status {prob.status}")
    raise OracleFailure(f"duality gap {best.gap:.3e} not closed (g={best.g})")


# Tight first: the multipliers must satisfy complementary slackness closely,
# not just certify the bound.  "Inaccurate" statuses are fine since the
# certificate is recomputed here.
_CLARABEL_SETTINGS = tuple(
    {"tol_gap_abs": t, "tol_gap_rel": t, "tol_feas": t, "tol_ktratio": t}
    for t in (1e-12, 1e-10, 1e-8)
)


def _certify(x_conic, lam, edges, w, A, b, labels, a, c, params, polytope) -> ReferenceSolution:
    bound, x_dual = _dual_value(lam, A, b, a, c)
    delta, gamma = params.delta, params.gamma
    best_x, best_g = None, -math.inf
    for cand in (x_conic, x_dual):
        if not np.all(np.isfinite(cand)):
            continue
        xf = _feasible_scale(cand, A, b)
        gv = g_value(xf, w, delta, gamma)
        if gv > best_g:
            best_x, best_g = xf, gv
    s_vec = A.T @ lam
    return ReferenceSolution(
        x={e: float(v) for e, v in zip(edges, best_x) if v > 0},
        g=best_g, dual_bound=bound, gap=max(bound - best_g, 0.0),
        y={lab: float(v) for lab, v in zip(labels, lam) if isinstance(lab, int)},
        z={lab: float(v) for lab, v in zip(labels, lam) if isinstance(lab, OddSet) and v > 0},
        s={e: float(v) for e, v in zip(edges, s_vec)},
        polytope=polytope,
    )



# ------------------------------------------------------------------ Monte Carlo


@dataclass
class PairStats:
    """Empirical covariances of indicator pairs with ``sigma = sqrt(f_ab (1 - f_ab) / T)``."""

    pairs: int
    violations: int
    max_z: float
    worst: tuple | None = None

    def to_json(self) -> dict:
        return {"pairs": self.pairs, "violations": self.violations, "max_z": self.max_z,
                "worst": None if self.worst is None else [list(p) if isinstance(p, tuple)
                                                          else p for p in self.worst]}


@dataclass
class MonteCarloReport:
    trials: int
    master_seed: int
    d: float
    epsilon: float
    edges: list[Edge]
    x: list[float]
    frequency: np.ndarray
    sigma: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    vertex_pairs: PairStats | None = None
    matching_pairs: PairStats | None = None
    witness: dict[str, float] = field(default_factory=dict)
    size_max: int = 0
    size_limit: float = math.inf
    mu_s_ok: float | None = None

    @property
    def frequency_violations(self) -> list[Edge]:
        bad = []
        for j, e in enumerate(self.edges):
            f, s = self.frequency[j], self.sigma[j]
            if self.x[j] > 1.0 / self.d:
                if f != 1.0:
                    bad.append(e)
            elif not (self.lo[j] - 3 * s <= f <= self.hi[j] + 3 * s):
                bad.append(e)
        return bad

    def to_json(self) -> dict:
        rows = [[u, v, self.x[j], float(self.frequency[j]), float(self.sigma[j]),
                 float(self.lo[j]), float(self.hi[j])] for j, (u, v) in enumerate(self.edges)]
        return {
            "trials": self.trials, "master_seed": self.master_seed, "d": self.d,
            "epsilon": self.epsilon,
            "columns": ["u", "v", "x", "freq", "sigma", "lo", "hi"],
            "frequencies": rows,
            "frequency_violations": [list(e) for e in self.frequency_violations],
            "vertex_pairs": self.vertex_pairs.to_json() if self.vertex_pairs else None,
            "matching_pairs": self.matching_pairs.to_json() if self.matching_pairs else None,
            "witness": self.witness, "size_max": self.size_max, "size_limit": self.size_limit,
            "mu_s_ok": self.mu_s_ok,
        }


def _trial_picks(specs: list[tuple[int, int]], master_seed: int, trials: list[int]
                 ) -> list[np.ndarray]:
    """Swap targets per random class, drawn exactly as ``draw_samples`` draws them.

    Trial ``t`` reads the stream seeded by ``(master_seed, t)``, consuming the
    classes in ascending order, so trial ``t`` reproduces
    ``build_sparsifier(seed=master_seed, epoch=t)``.
    """
    out = [np.empty((len(trials), k), dtype=np.int64) for _, k in specs]
    ranges = [np.arange(k) for _, k in specs]
    for r, t in enumerate(trials):
        rng = make_rng(master_seed, t)
        for b, (palette, _) in enumerate(specs):
            out[b][r] = rng.integers(ranges[b], palette)
    return out


def _all_picks(specs, master_seed: int, trials: int, workers: int) -> list[np.ndarray]:
    order = list(range(trials))
    if workers <= 1 or trials < 2 * workers:
        return _trial_picks(specs, master_seed, order)
    chunks = [order[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(_trial_picks, [specs] * workers, [master_seed] * workers, chunks))
    out = [np.empty((trials, k), dtype=np.int64) for _, k in specs]
    for c, part in zip(chunks, parts):
        for b in range(len(specs)):
            out[b][c] = part[b]
    return out


def _pair_stats(ind: np.ndarray, pairs: list[tuple[int, int]], names: list) -> PairStats:
    if not pairs:
        return PairStats(0, 0, 0.0)
    T = ind.shape[0]
    counts = ind.sum(axis=0).astype(np.int64)
    ia = np.array([p[0] for p in pairs])
    ib = np.array([p[1] for p in pairs])
    joint = np.einsum("ti,ti->i", ind[:, ia], ind[:, ib], dtype=np.int64)
    # integer numerator keeps constant indicators at exactly zero covariance
    cov = (joint * T - counts[ia] * counts[ib]) / float(T) ** 2
    fj = joint / T
    sig = np.sqrt(fj * (1 - fj) / T)
    viol = cov > 3 * sig
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sig > 0, cov / sig, np.where(cov > 0, np.inf, 0.0))
    k = int(np.argmax(z))
    return PairStats(len(pairs), int(viol.sum()), float(z[k]),
                     (names[ia[k]], names[ib[k]], float(cov[k]), float(sig[k])))


def monte_carlo_sparsifier(graph: WeightedGraph, x: FractionalAssignment, d: float | None = None,
                           trials: int = 1000, master_seed: int = 0,
                           odd_sets: list[OddSet] | None = None, mu: int | None = None,
                           covariances: bool = True, witness: bool = False,
                           measure_mu_s: bool = False, workers: int = 1) -> MonteCarloReport:
    """Repeat the sampling phase ``trials`` times on one fixed coloring.

    Trial ``t`` uses the stream seeded by ``(master_seed, t)``, so results are
    the same for every ``workers`` value.  ``odd_sets`` feeds both the
    matching-pair covariances and the witness odd-set check.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    eps = x.epsilon
    d = default_density(graph.n, eps) if d is None else d
    values, buckets, edge_bucket = color_all(graph, x)
    edges = sorted(edge_bucket)
    index = {e: j for j, e in enumerate(edges)}
    xs = np.array([values[e] for e in edges], dtype=float)
    m = len(edges)

    random_buckets = sorted(i for i, col in buckets.items()
                            if sample_size(i, d, eps) < col.palette)
    specs = [(buckets[i].palette, sample_size(i, d, eps)) for i in random_buckets]
    picks = _all_picks(specs, master_seed, trials, workers)

    # indicator columns: every edge, and every nonempty color class of a random bucket
    inc = np.ones((trials, m), dtype=np.uint8)
    class_names: list[tuple[int, int]] = []
    class_blocks = []
    for i, (palette, k), pk in zip(random_buckets, specs, picks):
        col = buckets[i]
        chosen = fisher_yates_batch(palette, pk)
        used = sorted(set(col.colors.values()))
        slot = np.full(palette, -1, dtype=np.int64)
        slot[used] = np.arange(len(used))
        hit = np.zeros((trials, len(used) + 1), dtype=np.uint8)
        hit[np.repeat(np.arange(trials), k), slot[chosen].ravel() + 1] = 1
        hit = hit[:, 1:]
        for e, c in col.colors.items():
            inc[:, index[e]] = hit[:, slot[c]]
        class_names.extend((i, c) for c in used)
        class_blocks.append(hit)
    cls = np.hstack(class_blocks) if class_blocks else np.zeros((trials, 0), dtype=np.uint8)
    class_cols = {name: j for j, name in enumerate(class_names)}

    freq = inc.mean(axis=0)
    sigma = np.sqrt(freq * (1 - freq) / trials)
    bounds = [edge_inclusion_bounds(v, d, eps) for v in xs]
    report = MonteCarloReport(trials, master_seed, float(d), eps, edges, xs.tolist(), freq, sigma,
                              np.array([b[0] for b in bounds]), np.array([b[1] for b in bounds]))

    if covariances:
        rand_edges = [j for j, e in enumerate(edges) if edge_bucket[e] in random_buckets]
        rand_set = set(rand_edges)
        pairs = set()
        incident: dict[int, list[int]] = {}
        for j in rand_edges:
            for v in edges[j]:
                incident.setdefault(v, []).append(j)
        for js in incident.values():
            pairs.update(itertools.combinations(sorted(js), 2))
        report.vertex_pairs = _pair_stats(inc, sorted(pairs), edges)
        cpairs = set()
        for B in odd_sets or ():
            inside = {class_cols[(edge_bucket[edges[j]], buckets[edge_bucket[edges[j]]]
                                  .colors[edges[j]])]
                      for e in graph.induced_edges(B.vertices)
                      if (j := index.get(e)) is not None and j in rand_set}
            cpairs.update(itertools.combinations(sorted(inside), 2))
        report.matching_pairs = _pair_stats(cls, sorted(cpairs), class_names)

    if witness or measure_mu_s:
        _witness_stats(report, graph, edges, xs, inc, d, eps, odd_sets or [], mu, measure_mu_s)
    report.size_max = int(inc.sum(axis=1).max(initial=0))
    if mu is not None:
        report.size_limit = size_bound(d, mu, graph.n, eps)
    return report


def _witness_stats(report, graph, edges, xs, inc, d, eps, odd_sets, mu, measure_mu_s):
    trials = inc.shape[0]
    m = len(edges)
    small = max(0.0, 1.0 - 4.0 * eps) / d
    big = xs >= 1.0 / d
    Y = np.where(big[None, :], xs[None, :], small * inc)
    V = sparse.csr_matrix((np.ones(2 * m), ([u for u, _ in edges] + [v for _, v in edges],
                                            list(range(m)) * 2)), shape=(graph.n, m))
    xv, yv = V @ xs, (V @ Y.T).T
    tol = 1e-9
    deg_ok = np.all((yv >= (1 - eps) * xv - eps - tol) & (yv <= (1 - eps) * xv + eps + tol),
                    axis=1)
    index = {e: j for j, e in enumerate(edges)}
    rows, cols = [], []
    for r, B in enumerate(odd_sets):
        for e in graph.induced_edges(B.vertices):
            if e in index:
                rows.append(r)
                cols.append(index[e])
    if odd_sets:
        O = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(odd_sets), m))
        sizes = np.array([len(B) for B in odd_sets], dtype=float)
        ox, oy = O @ xs, (O @ Y.T).T
        odd_ok = np.all((oy >= (1 - eps) * ox - eps * (sizes - 1) / 2 - tol)
                        & (oy <= (1 - eps) * ox + eps * sizes / 2 + tol), axis=1)
    else:
        odd_ok = np.ones(trials, dtype=bool)
    total_x = float(math.fsum(xs))
    value_ok = Y.sum(axis=1) >= (1 - 8 * eps) * total_x - tol
    premise = mu is not None and total_x >= (1 - eps) * mu - tol
    report.witness = {
        "violation_rate": float(np.mean(~(deg_ok & odd_ok))),
        "degree_violation_rate": float(np.mean(~deg_ok)),
        "odd_set_violation_rate": float(np.mean(~odd_ok)),
        "value_rate": float(np.mean(value_ok)),
        "value_premise": bool(premise),
        "sum_x": total_x,
    }
    if measure_mu_s:
        passing = np.flatnonzero(deg_ok & odd_ok)
        ok = 0
        for t in passing:
            S = graph.subgraph([edges[j] for j in np.flatnonzero(inc[t])])
            if max_cardinality_matching(S).cardinality >= (1 - 3 * eps) * total_x - tol:
                ok += 1
        report.mu_s_ok = ok / len(passing) if len(passing) else 1.0

