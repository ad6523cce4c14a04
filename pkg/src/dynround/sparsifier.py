"""Color-and-sample sparsification of a fractional matching.

Edges are grouped into weight classes by ``bucket_index``.  Each class is
properly edge colored with a palette of ``2*ceil((1+eps)^i)`` colors, a uniform
subset of the palette is sampled without replacement, and the sparsifier ``S``
is the union of the sampled color classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import (
    VALUE_TOL,
    Edge,
    EdgeNotFound,
    FractionalAssignment,
    GraphError,
    UpdateEvent,
    WeightedGraph,
    bucket_index,
    prune_low,
    prune_threshold,
    vertex_masses,
)
from .polytope import odd_set_sums


class InvalidFractionalMatching(ValueError):
    """Degree bound violated, so a weight class cannot be colored."""


def _ceil(value: float) -> int:
    nearest = round(value)
    if abs(value - nearest) < 1e-9:
        return int(nearest)
    return math.ceil(value)


def degree_cap(i: int, epsilon: float) -> int:
    return _ceil((1.0 + epsilon) ** i)


def palette_size(i: int, epsilon: float) -> int:
    return 2 * degree_cap(i, epsilon)


def sample_size(i: int, d: float, epsilon: float) -> int:
    return min(2 * _ceil(d * (1.0 + epsilon)), palette_size(i, epsilon))


def default_density(n: int, epsilon: float) -> int:
    """``ceil(ln n / eps^4)``, at least 1."""
    return max(1, math.ceil(math.log(max(n, 2)) / epsilon**4))


def make_rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


@dataclass
class BucketColoring:
    """Proper edge coloring of one weight class, maintained greedily."""

    bucket: int
    palette: int
    colors: dict[Edge, int] = field(default_factory=dict)
    _at: dict[int, dict[int, Edge]] = field(default_factory=dict, repr=False)

    def add(self, e: Edge) -> int:
        u, v = e
        used = self._at.get(u, {}).keys() | self._at.get(v, {}).keys()
        c = next((c for c in range(self.palette) if c not in used), None)
        if c is None:
            raise InvalidFractionalMatching(
                f"no free color for {e} in bucket {self.bucket} (palette {self.palette})")
        self.colors[e] = c
        self._at.setdefault(u, {})[c] = e
        self._at.setdefault(v, {})[c] = e
        return c

    def remove(self, e: Edge) -> int:
        c = self.colors.pop(e)
        for v in e:
            del self._at[v][c]
        return c

    def degree(self, v: int) -> int:
        return len(self._at.get(v, ()))

    def classes(self) -> dict[int, list[Edge]]:
        out: dict[int, list[Edge]] = {}
        for e, c in sorted(self.colors.items()):
            out.setdefault(c, []).append(e)
        return out

    def is_proper(self) -> bool:
        seen: set[tuple[int, int]] = set()
        for (u, v), c in self.colors.items():
            if not 0 <= c < self.palette or (u, c) in seen or (v, c) in seen:
                return False
            seen.add((u, c))
            seen.add((v, c))
        return True


def color_bucket(edges: list[Edge], palette: int, bucket: int = 0,
                 epsilon: float | None = None) -> BucketColoring:
    """Greedy first-free-color edge coloring of one weight class.

    When ``epsilon`` is given the class is checked against the degree bound
    ``ceil((1+eps)^bucket)`` implied by the vertex constraints.
    """
    if epsilon is not None:
        cap = degree_cap(bucket, epsilon)
        deg: dict[int, int] = {}
        for u, v in edges:
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
        worst = max(deg.values(), default=0)
        if worst > cap:
            raise InvalidFractionalMatching(
                f"bucket {bucket} has a vertex of degree {worst} > {cap}")
    coloring = BucketColoring(bucket, palette)
    for e in sorted(edges):
        coloring.add(e)
    return coloring


def sample_colors(palette: int, k: int, rng: np.random.Generator) -> frozenset[int]:
    """Uniform ``k``-subset of ``range(palette)`` by a partial Fisher-Yates shuffle."""
    if k >= palette:
        return frozenset(range(palette))
    if k <= 0:
        return frozenset()
    picks = rng.integers(np.arange(k), palette).tolist()
    # sparse view of the shuffled array: only displaced slots are stored
    swapped: dict[int, int] = {}
    get = swapped.get
    chosen = []
    for j, t in enumerate(picks):
        chosen.append(get(t, t))
        swapped[t] = get(j, j)
    return frozenset(chosen)


def fisher_yates_batch(palette: int, picks: np.ndarray, chunk_cells: int = 1 << 22
                       ) -> np.ndarray:
    """Row-wise partial Fisher-Yates shuffles driven by given swap targets.

    ``picks[r, j]`` is the swap target of step ``j`` in row ``r`` (a value in
    ``[j, palette)``); row ``r`` of the result equals the ordered choice
    :func:`sample_colors` makes from the same draws.  Rows are processed in
    chunks of at most ``chunk_cells`` array cells.
    """
    T, k = picks.shape
    out = np.empty((T, k), dtype=np.int64)
    step = max(1, chunk_cells // max(palette, 1))
    for lo in range(0, T, step):
        block = picks[lo:lo + step]
        rows = np.arange(block.shape[0])
        arr = np.tile(np.arange(palette, dtype=np.int64), (block.shape[0], 1))
        for j in range(k):
            t = block[:, j]
            held = arr[rows, t]
            arr[rows, t] = arr[:, j]
            arr[:, j] = held
        out[lo:lo + step] = arr[:, :k]
    return out


def edge_inclusion_bounds(x_e: float, d: float, epsilon: float) -> tuple[float, float]:
    """Bounds on ``Pr[e in S]``: ``min(1, x d)/(1+eps)^2`` and ``min(1, x d)(1+eps)``."""
    if x_e <= 0:
        return (0.0, 0.0)
    if x_e > 1.0 / d:
        return (1.0, 1.0)
    base = min(1.0, x_e * d)
    return (base / (1.0 + epsilon) ** 2, min(1.0, base * (1.0 + epsilon)))


def size_bound(d: float, mu: int, n: int, epsilon: float, const: float = 16.0) -> float:
    """``const * d * mu(G) * ln(n/eps)``: the allowed number of sparsifier edges."""
    return const * d * mu * math.log(max(n, 2) / epsilon)


@dataclass(frozen=True)
class MembershipDelta:
    added: tuple[Edge, ...] = ()
    removed: tuple[Edge, ...] = ()

    @property
    def changed(self) -> bool:
        return bool(self.added or self.removed)


@dataclass
class SparsifierState:
    n: int
    epsilon: float
    d: float
    seed: int
    epoch: int
    edges: set[Edge]
    x: dict[Edge, float]
    buckets: dict[int, BucketColoring]
    sampled: dict[int, frozenset[int]]
    edge_bucket: dict[Edge, int]
    S: set[Edge]

    def contains(self, e: Edge) -> bool:
        return e in self.S

    def in_sample(self, e: Edge) -> bool:
        i = self.edge_bucket.get(e)
        return i is not None and self.buckets[i].colors[e] in self.sampled[i]

    def _ensure_bucket(self, i: int) -> BucketColoring:
        if i not in self.buckets:
            self.buckets[i] = BucketColoring(i, palette_size(i, self.epsilon))
            # a class born mid-epoch draws from its own stream
            rng = make_rng(self.seed, self.epoch, i)
            self.sampled[i] = sample_colors(
                palette_size(i, self.epsilon), sample_size(i, self.d, self.epsilon), rng)
        return self.buckets[i]

    def is_consistent(self) -> bool:
        if not all(c.is_proper() for c in self.buckets.values()):
            return False
        expected = {e for e in self.edge_bucket if self.in_sample(e)}
        forced = all(e in self.S for e, v in self.x.items()
                     if v > 1.0 / self.d and e in self.edge_bucket)
        return expected == self.S and forced

    def matching_classes(self) -> dict[tuple[int, int], list[Edge]]:
        """Nonempty color classes keyed by ``(bucket, color)``."""
        out = {}
        for i, coloring in sorted(self.buckets.items()):
            for c, es in coloring.classes().items():
                out[(i, c)] = es
        return out

    def to_json(self) -> dict:
        buckets = {}
        for i, coloring in sorted(self.buckets.items()):
            buckets[str(i)] = {
                "palette": coloring.palette,
                "sampled_colors": sorted(self.sampled[i]),
                "edges": [[u, v, c] for (u, v), c in sorted(coloring.colors.items())],
            }
        return {"d": self.d, "epsilon": self.epsilon, "seed": self.seed, "epoch": self.epoch,
                "buckets": buckets, "S": [list(e) for e in sorted(self.S)]}


def _check_degree_feasible(x: FractionalAssignment, n: int) -> None:
    masses = vertex_masses(x, n)
    worst = max(masses, default=0.0)
    if worst > 1.0 + VALUE_TOL:
        v = masses.index(worst)
        raise InvalidFractionalMatching(f"vertex {v} carries mass {worst} > 1")


def color_all(graph: WeightedGraph, x: FractionalAssignment
              ) -> tuple[dict[Edge, float], dict[int, BucketColoring], dict[Edge, int]]:
    """Prune and color every weight class; no randomness involved."""
    x.check_support(graph)
    _check_degree_feasible(x, graph.n)
    kept = prune_low(x, graph.n)
    eps = x.epsilon
    groups: dict[int, list[Edge]] = {}
    for e, val in kept.values.items():
        groups.setdefault(bucket_index(val, eps), []).append(e)
    buckets = {}
    edge_bucket = {}
    for i in sorted(groups):
        buckets[i] = color_bucket(groups[i], palette_size(i, eps), i, eps)
        for e in groups[i]:
            edge_bucket[e] = i
    return dict(kept.values), buckets, edge_bucket


def draw_samples(buckets: dict[int, BucketColoring], d: float, epsilon: float,
                 seed: int, epoch: int = 0) -> dict[int, frozenset[int]]:
    """Sampled color ids per class; classes consume one stream in ascending order."""
    rng = make_rng(seed, epoch)
    return {i: sample_colors(buckets[i].palette, sample_size(i, d, epsilon), rng)
            for i in sorted(buckets)}


def build_sparsifier(graph: WeightedGraph, x: FractionalAssignment, d: float | None = None,
                     seed: int = 0, epoch: int = 0) -> SparsifierState:
    """Run the coloring and sampling phases and assemble ``S``."""
    eps = x.epsilon
    if d is None:
        d = default_density(graph.n, eps)
    if d < 1:
        raise ValueError(f"sampling density d must be >= 1, got {d}")
    values, buckets, edge_bucket = color_all(graph, x)
    sampled = draw_samples(buckets, d, eps, seed, epoch)
    S = {e for e, i in edge_bucket.items() if buckets[i].colors[e] in sampled[i]}
    return SparsifierState(graph.n, eps, float(d), seed, epoch, set(graph.weights),
                           values, buckets, sampled, edge_bucket, S)


def update_sparsifier(state: SparsifierState, event: UpdateEvent) -> MembershipDelta:
    """Apply one update; recolor greedily and re-read membership from the sampled flags."""
    e = event.edge
    if e not in state.edges:
        raise EdgeNotFound(e)
    was_in = e in state.S
    old_bucket = state.edge_bucket.get(e)
    val = 0.0 if event.kind == "del" else float(event.x)
    live = val > prune_threshold(state.epsilon, state.n)
    new_bucket = bucket_index(val, state.epsilon) if live else None

    if new_bucket is not None and new_bucket != old_bucket:
        cap = degree_cap(new_bucket, state.epsilon)
        coloring = state._ensure_bucket(new_bucket)
        for v in e:
            if coloring.degree(v) + 1 > cap:
                raise InvalidFractionalMatching(
                    f"vertex {v} would exceed degree {cap} in bucket {new_bucket}")

    if event.kind == "del":
        state.edges.discard(e)
    if live:
        state.x[e] = val
    else:
        state.x.pop(e, None)
    if new_bucket != old_bucket:
        if old_bucket is not None:
            state.buckets[old_bucket].remove(e)
            del state.edge_bucket[e]
        if new_bucket is not None:
            state.buckets[new_bucket].add(e)
            state.edge_bucket[e] = new_bucket

    now_in = state.in_sample(e)
    if now_in:
        state.S.add(e)
    else:
        state.S.discard(e)
    if was_in and not now_in:
        return MembershipDelta(removed=(e,))
    if now_in and not was_in:
        return MembershipDelta(added=(e,))
    return MembershipDelta()


def witness_y(state: SparsifierState, x: FractionalAssignment | dict[Edge, float] | None = None,
              d: float | None = None, epsilon: float | None = None) -> dict[Edge, float]:
    """Fractional matching supported on ``S`` used to certify value preservation.

    Big edges (``x >= 1/d``) keep their value; sampled small edges get
    ``(1 - 4 eps)/d``; everything else is zero.
    """
    values = state.x if x is None else (x.values if isinstance(x, FractionalAssignment) else x)
    d = state.d if d is None else d
    eps = state.epsilon if epsilon is None else epsilon
    small = max(0.0, 1.0 - 4.0 * eps) / d
    y: dict[Edge, float] = {}
    for e, val in values.items():
        if val >= 1.0 / d:
            y[e] = val
        elif e in state.S and small > 0:
            y[e] = small
    return y


def witness_checks(x: dict[Edge, float], y: dict[Edge, float], epsilon: float,
                   odd_sets, mu: int | None = None, tol: float = VALUE_TOL) -> dict[str, bool]:
    """Evaluate the degree (a), odd-set (c) and value properties of a witness."""
    eps = epsilon
    xv: dict[int, float] = {}
    yv: dict[int, float] = {}
    for (u, v), val in x.items():
        xv[u] = xv.get(u, 0.0) + val
        xv[v] = xv.get(v, 0.0) + val
    for (u, v), val in y.items():
        yv[u] = yv.get(u, 0.0) + val
        yv[v] = yv.get(v, 0.0) + val
    degree_ok = True
    for v in set(xv) | set(yv):
        a, b = xv.get(v, 0.0), yv.get(v, 0.0)
        if not ((1 - eps) * a - eps - tol <= b <= (1 - eps) * a + eps + tol):
            degree_ok = False
            break
    odd_ok = True
    sets = list(odd_sets)
    for B, sx, sy in zip(sets, odd_set_sums(x, sets), odd_set_sums(y, sets)):
        lo = (1 - eps) * sx - eps * (len(B) - 1) / 2
        hi = (1 - eps) * sx + eps * len(B) / 2
        if not (lo - tol <= sy <= hi + tol):
            odd_ok = False
            break
    total_x = math.fsum(x.values())
    total_y = math.fsum(y.values())
    out = {"degree": degree_ok, "odd_set": odd_ok,
           "value": total_y >= (1 - 8 * eps) * total_x - tol}
    if mu is not None:
        out["value_premise"] = total_x >= (1 - eps) * mu - tol
    return out

