"""Entropy-regularized fractional matching.

The objective is

    g(x) = sum_e w(e) x(e) + delta * sum_e w(e) x(e) log2(gamma / (w(e) x(e)))

maximized over a matching polytope (``M_eps`` or the full polytope).  Logs are
base 2.  Since ``d/dx [x log2(c/x)] = log2(c/x) - 1/ln 2``, the exact
stationarity condition carries ``delta/ln 2`` where the natural-log version
would carry ``delta``; :func:`stationary_s` and :func:`duality_identity` use
the exact form, :func:`compute_s_from_primal` the closed-form inversion of
``x = 2^(1/delta - 1 - s/(delta w) + log2(gamma/w))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .graph import Edge, FractionalAssignment, WeightedGraph, check_epsilon
from .polytope import OddSet, Polytope, constraint_system, odd_sets_for
from .static import max_weight_matching_exact

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
X_FLOOR = 1e-12


class SolverFailure(RuntimeError):
    """Iteration budget exhausted before the duality gap closed."""

    def __init__(self, message: str, x: np.ndarray, gap: float):
        super().__init__(message)
        self.x = x
        self.gap = gap


def max_delta(n: int, W: float, epsilon: float) -> float:
    """Largest admissible regularization weight, ``eps / (8 log2(n^4 W / eps))``."""
    arg = max(n, 2) ** 4 * max(W, 1.0) / epsilon
    return epsilon / (8.0 * math.log2(arg))


@dataclass(frozen=True)
class EntropyParams:
    delta: float
    gamma: float
    epsilon: float
    W: float

    def __post_init__(self) -> None:
        check_epsilon(self.epsilon)
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")

    @classmethod
    def for_graph(cls, graph: WeightedGraph, epsilon: float, delta: float | None = None,
                  gamma: float | None = None) -> EntropyParams:
        """Defaults: the largest compliant ``delta`` and ``gamma = mwm(G)``."""
        if delta is None:
            delta = max_delta(graph.n, graph.W, epsilon)
        if gamma is None:
            gamma = max(max_weight_matching_exact(graph).weight, 1.0)
        return cls(float(delta), float(gamma), float(epsilon), float(graph.W))

    def violations(self, n: int, mwm: float | None = None, m: int | None = None) -> list[str]:
        out = []
        if self.delta > max_delta(n, self.W, self.epsilon) * (1 + 1e-12):
            out.append(f"delta={self.delta} exceeds {max_delta(n, self.W, self.epsilon)}")
        if mwm is not None and self.gamma < mwm * (1 - 1e-12):
            out.append(f"gamma={self.gamma} below mwm={mwm}")
        if mwm is not None and m is not None and self.gamma > m * mwm * (1 + 1e-12):
            out.append(f"gamma={self.gamma} above m*mwm={m * mwm}")
        return out

    def to_json(self) -> dict:
        return {"delta": self.delta, "gamma": self.gamma, "epsilon": self.epsilon, "W": self.W}


def _xlog(w: np.ndarray, x: np.ndarray, gamma: float) -> np.ndarray:
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    wx = w[pos] * x[pos]
    # log difference, not log of a ratio: gamma/wx overflows for denormal wx
    out[pos] = wx * (math.log2(gamma) - np.log2(wx))
    return out


def g_value(x: np.ndarray, w: np.ndarray, delta: float, gamma: float) -> float:
    return float(np.dot(w, x) + delta * _xlog(w, x, gamma).sum())


def g_gradient(x: np.ndarray, w: np.ndarray, delta: float, gamma: float) -> np.ndarray:
    xs = np.maximum(x, X_FLOOR)
    return w + delta * w * (np.log2(gamma / (w * xs)) - 1.0 / LN2)


def objective_g(x: FractionalAssignment | dict[Edge, float], w: dict[Edge, float] | WeightedGraph,
                delta: float, gamma: float) -> float:
    """Evaluate ``g`` with the convention ``0 log 0 = 0``."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    values = x.values if isinstance(x, FractionalAssignment) else x
    weights = w.weights if isinstance(w, WeightedGraph) else w
    edges = sorted(values)
    xs = np.array([values[e] for e in edges], dtype=float)
    if np.any(xs < 0):
        raise ValueError("x must be nonnegative")
    ws = np.array([weights[e] for e in edges], dtype=float)
    return g_value(xs, ws, delta, gamma)


def compute_s_from_primal(x_star: FractionalAssignment | dict[Edge, float],
                          w: dict[Edge, float] | WeightedGraph, params: EntropyParams
                          ) -> dict[Edge, float]:
    """Invert the closed form: ``s = w (1 - delta + delta log2(gamma / (w x)))``.

    Edges with ``x = 0`` have no finite dual and are omitted.
    """
    values = x_star.values if isinstance(x_star, FractionalAssignment) else x_star
    weights = w.weights if isinstance(w, WeightedGraph) else w
    d, gam = params.delta, params.gamma
    return {e: weights[e] * (1.0 - d + d * math.log2(gam / (weights[e] * x)))
            for e, x in sorted(values.items()) if x > 0}


def stationary_s(x_star: FractionalAssignment | dict[Edge, float],
                 w: dict[Edge, float] | WeightedGraph, params: EntropyParams
                 ) -> dict[Edge, float]:
    """Exact gradient of ``g``: ``w (1 - delta/ln2 + delta log2(gamma / (w x)))``."""
    values = x_star.values if isinstance(x_star, FractionalAssignment) else x_star
    weights = w.weights if isinstance(w, WeightedGraph) else w
    d, gam = params.delta, params.gamma
    return {e: weights[e] * (1.0 - d / LN2 + d * math.log2(gam / (weights[e] * x)))
            for e, x in sorted(values.items()) if x > 0}


@dataclass
class DualBoundReport:
    lower_violations: list[Edge]
    upper_violations: list[Edge]
    min_ratio: float
    max_significant_ratio: float

    @property
    def ok(self) -> bool:
        return not self.lower_violations and not self.upper_violations

    def to_json(self) -> dict:
        return {"ok": self.ok, "lower_violations": [list(e) for e in self.lower_violations],
                "upper_violations": [list(e) for e in self.upper_violations],
                "min_ratio": self.min_ratio, "max_significant_ratio": self.max_significant_ratio}


def verify_dual_bounds(s: dict[Edge, float], w: dict[Edge, float] | WeightedGraph,
                       x_star: FractionalAssignment | dict[Edge, float], epsilon: float,
                       n: int, tol: float = 1e-6) -> DualBoundReport:
    """Check ``s_e >= (1-eps) w(e)`` everywhere and ``s_e <= (1+eps) w(e)`` on significant edges."""
    weights = w.weights if isinstance(w, WeightedGraph) else w
    values = x_star.values if isinstance(x_star, FractionalAssignment) else x_star
    cut = significance_threshold(epsilon, n)
    lower, upper = [], []
    min_ratio, max_ratio = math.inf, -math.inf
    for e, se in sorted(s.items()):
        ratio = se / weights[e]
        min_ratio = min(min_ratio, ratio)
        if ratio < 1 - epsilon - tol:
            lower.append(e)
        if values.get(e, 0.0) >= cut:
            max_ratio = max(max_ratio, ratio)
            if ratio > 1 + epsilon + tol:
                upper.append(e)
    return DualBoundReport(lower, upper, min_ratio, max_ratio)


def significance_threshold(epsilon: float, n: int) -> float:
    return epsilon / (3.0 * max(n, 1))


def restrict_significant(x: FractionalAssignment, epsilon: float | None = None,
                         n: int | None = None) -> FractionalAssignment:
    """Keep only edges with ``x(e) >= eps / (3n)``."""
    eps = x.epsilon if epsilon is None else epsilon
    if n is None:
        n = 1 + max((v for e in x.values for v in e), default=0)
    cut = significance_threshold(eps, n)
    return FractionalAssignment({e: v for e, v in x.values.items() if v >= cut}, x.epsilon)


def distance_from_optimum_bound(g_gap: float, delta: float, mwm: float) -> float:
    """Upper bound on ``sum w |z - x*|`` implied by an objective gap (strong concavity)."""
    if g_gap < 0:
        log.warning("negative objective gap %g clamped to 0", g_gap)
        g_gap = 0.0
    if g_gap == 0:
        return 0.0
    return math.sqrt(g_gap * mwm / delta)


# ------------------------------------------------------------------ projection


def project_ldp(v: np.ndarray, A: np.ndarray, b: np.ndarray, lower: float = 0.0,
                warm: np.ndarray | None = None) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{p : A p <= b, p >= lower}`` (dense ``A``).

    Solved as a least-distance program through Lawson-Hanson NNLS over a
    working set of rows.  The set starts from ``warm`` (a boolean row mask,
    typically the rows active at the previous iterate) and grows by the most
    violated rows until the result is feasible.  Extra rows only tighten the
    subproblem, so a feasible subproblem solution is the exact projection.
    """
    m = v.size
    rows = A.shape[0]
    work = np.zeros(rows, dtype=bool) if warm is None else warm.copy()
    low = v < lower
    p = np.maximum(v, lower)
    slack = 1e-11 * (1.0 + float(np.abs(v).max(initial=0.0)))
    eye = np.eye(m)
    for _ in range(rows + m + 1):
        if work.any() or low.any():
            G = np.vstack([-A[work], eye[low]])
            h = np.concatenate([A[work] @ v - b[work], lower - v[low]])
            E = np.vstack([G.T, h[None, :]])
            f = np.zeros(m + 1)
            f[-1] = 1.0
            u, _ = optimize.nnls(E, f, maxiter=50 * E.shape[1] + 100)
            r = E @ u - f
            if abs(r[-1]) < 1e-14:
                raise SolverFailure("projection target set is empty", v, math.inf)
            p = v - r[:m] / r[-1]
        over = A @ p - b
        viol_rows = over > slack
        viol_low = p < lower - slack
        if not viol_rows.any() and not viol_low.any():
            return _repair(np.maximum(p, lower), A, b, lower)
        fresh = np.flatnonzero(viol_rows & ~work)
        fresh_low = viol_low & ~low
        if fresh.size == 0 and not fresh_low.any():
            # every violated row is already in the working set: NNLS round-off
            return _repair(np.maximum(p, lower), A, b, lower)
        batch = max(8, fresh.size // 64)
        work[fresh[np.argsort(-over[fresh])[:batch]]] = True
        low |= fresh_low
    raise SolverFailure("projection working set did not settle", v, math.inf)


def _repair(p: np.ndarray, A: np.ndarray, b: np.ndarray, lower: float) -> np.ndarray:
    """Shrink toward ``lower`` just enough to remove round-off violations."""
    over = A @ p - b
    if over.max(initial=-1.0) <= 0:
        return p
    base = A @ np.full(p.size, lower)
    with np.errstate(divide="ignore", invalid="ignore"):
        room = np.where(over > 0, (b - base) / (A @ p - base), 1.0)
    return lower + (p - lower) * float(min(1.0, room.min()))


# ---------------------------------------------------------------------- solver


@dataclass
class EntropySolution:
    x: FractionalAssignment
    value: float
    gap: float
    iterations: int
    polytope: str
    params: EntropyParams
    history: list[float] = field(default_factory=list)
    odd_sets: list[OddSet] = field(default_factory=list)

    @property
    def relative_gap(self) -> float:
        return self.gap / max(abs(self.value), 1e-300)

    def to_json(self) -> dict:
        return {"x": [[u, v, val] for (u, v), val in sorted(self.x.values.items())],
                "g": self.value, "gap": self.gap, "iterations": self.iterations,
                "polytope": self.polytope, "params": self.params.to_json()}


class _Problem:
    """Edge arrays and constraint rows for one instance."""

    def __init__(self, graph: WeightedGraph, polytope: Polytope, epsilon: float):
        self.edges = graph.edges()
        self.w = np.array([graph.weights[e] for e in self.edges], dtype=float)
        self.odd_sets = odd_sets_for(self.edges, polytope, epsilon)
        A, b, labels = constraint_system(self.edges, self.odd_sets)
        self.A_sparse = A
        self.A = A.toarray()
        self.b = b
        self.labels = labels

    def lmo(self, c: np.ndarray, lower: float) -> np.ndarray:
        """Maximize ``c . v`` over the (floor-shifted) polytope."""
        b = self.b - self.A_sparse @ np.full(len(self.edges), lower)
        res = optimize.linprog(-c, A_ub=self.A_sparse, b_ub=b, bounds=(0, None),
                               method="highs")
        if res.status != 0:
            raise SolverFailure(f"linear oracle failed: {res.message}", c, math.inf)
        return res.x + lower


def solve_entropy(graph: WeightedGraph, params: EntropyParams, polytope: Polytope = "M_eps",
                  tol: float | None = None, max_iter: int = 100_000, check_every: int = 5,
                  x0: dict[Edge, float] | None = None) -> EntropySolution:
    """Projected gradient ascent on ``g`` with a Frank-Wolfe duality-gap stop.

    Stops once ``max_v grad . (v - x) <= tol * g(x)`` (default ``tol = eps/4``).
    That gap bounds ``g* - g(x)`` from above, so on return
    ``g(x) >= (1 - tol) g*``.
    """
    eps = params.epsilon
    tol = eps / 4 if tol is None else tol
    if graph.m == 0:
        return EntropySolution(FractionalAssignment({}, eps), 0.0, 0.0, 0, polytope, params)
    prob = _Problem(graph, polytope, eps)
    w, A, b = prob.w, prob.A, prob.b
    delta, gamma = params.delta, params.gamma
    m = len(prob.edges)
    lower = X_FLOOR
    shifted_b = b - A @ np.full(m, lower)

    def value(z):
        return g_value(z, w, delta, gamma)

    x = np.full(m, lower)
    if x0:
        start = np.array([x0.get(e, 0.0) for e in prob.edges], dtype=float)
        x = lower + project_ldp(np.maximum(start - lower, 0.0), A, shifted_b)
    gx = value(x)
    history = [gx]
    step = 1.0 / max(float(w.max()), 1.0)
    gap = math.inf
    it = 0
    while it < max_iter:
        it += 1
        grad = g_gradient(x, w, delta, gamma)
        warm = (A @ x - b) > -1e-9
        step = min(step * 2.0, 1e6)
        while True:
            cand = lower + project_ldp(x + step * grad - lower, A, shifted_b, warm=warm)
            diff = cand - x
            g_new = value(cand)
            if g_new >= gx + grad @ diff - (diff @ diff) / (2 * step) - 1e-15 * abs(gx):
                break
            step *= 0.5
            if step < 1e-18:
                break
        moved = float(np.abs(diff).max()) if diff.size else 0.0
        if g_new >= gx:
            x, gx = cand, g_new
            history.append(gx)
        if it % check_every == 0 or moved < 1e-15:
            grad = g_gradient(x, w, delta, gamma)
            vertex = prob.lmo(grad, lower)
            gap = max(float(grad @ (vertex - x)), 0.0)
            if gap <= tol * max(abs(gx), 1e-300):
                break
            if moved < 1e-15:
                # stalled on a face: a Frank-Wolfe step keeps the iterate moving
                direction = vertex - x
                t = _fw_line_search(x, direction, w, delta, gamma)
                if t > 0:
                    x = x + t * direction
                    gx = value(x)
                    history.append(gx)
    else:
        raise SolverFailure(f"no convergence in {max_iter} iterations (gap {gap:.3e})", x, gap)

    values = {e: float(v) for e, v in zip(prob.edges, x) if v > 0}
    return EntropySolution(FractionalAssignment(values, eps), gx, gap, it, polytope, params,
                           history, prob.odd_sets)


def _fw_line_search(x, direction, w, delta, gamma) -> float:
    def neg(t):
        return -g_value(x + t * direction, w, delta, gamma)

    res = optimize.minimize_scalar(neg, bounds=(0.0, 1.0), method="bounded",
                                   options={"xatol": 1e-12})
    return float(res.x) if -res.fun >= -neg(0.0) else 0.0


# ---------------------------------------------------------------------- duals


@dataclass
class DualSolution:
    y: dict[int, float]
    z: dict[OddSet, float]
    s: dict[Edge, float]
    residual: float
    primal_value: float
    dual_value: float
    identity_value: float
    w_star: float

    def to_json(self) -> dict:
        return {
            "y": {str(v): val for v, val in sorted(self.y.items())},
            "z": [[list(B.vertices), val] for B, val in sorted(self.z.items())],
            "s": [[u, v, val] for (u, v), val in sorted(self.s.items())],
            "residual": self.residual, "primal_value": self.primal_value,
            "dual_value": self.dual_value, "identity_value": self.identity_value,
            "w_star": self.w_star,
        }


def duality_identity(x: np.ndarray, w: np.ndarray, delta: float, y_total: float,
                     z_total: float) -> float:
    """``(delta/ln2) sum w x + sum y + sum z (|B|-1)/2``: equals ``g(x*)`` at optimum."""
    return float(delta / LN2 * np.dot(w, x) + y_total + z_total)


def extract_duals(graph: WeightedGraph, x: FractionalAssignment, params: EntropyParams,
                  polytope: Polytope = "M_eps", active_tol: float = 1e-7,
                  support_tol: float = 1e-7) -> DualSolution:
    """Recover ``y, z >= 0`` with ``y_u + y_v + sum z_B`` matching the stationary ``s``.

    Nonnegative least squares over the constraints active at ``x``; the fit is
    restricted to edges carrying value, and its residual is reported.
    """
    eps = params.epsilon
    edges = graph.edges()
    w = np.array([graph.weights[e] for e in edges], dtype=float)
    xs = np.array([x[e] for e in edges], dtype=float)
    odd = odd_sets_for(edges, polytope, eps)
    A, b, labels = constraint_system(edges, odd)
    A = A.toarray()
    active = (b - A @ xs) <= active_tol
    support = xs > support_tol
    s_target = g_gradient(xs, w, params.delta, params.gamma)
    lam = np.zeros(len(b))
    if active.any() and support.any():
        sub = A.T[np.ix_(support, active)]
        sol, _ = optimize.nnls(sub, s_target[support], maxiter=50 * sub.shape[1] + 100)
        lam[active] = sol
    fitted = A.T @ lam
    residual = float(np.linalg.norm(fitted[support] - s_target[support]))
    y = {lab: float(val) for lab, val in zip(labels, lam) if isinstance(lab, int)}
    z = {lab: float(val) for lab, val in zip(labels, lam)
         if isinstance(lab, OddSet) and val > 0}
    s = {e: float(v) for e, v in zip(edges, fitted)}
    y_total = sum(y.values())
    z_total = sum(val * B.bound for B, val in z.items())
    return DualSolution(
        y=y, z=z, s=s, residual=residual,
        primal_value=g_value(xs, w, params.delta, params.gamma),
        dual_value=y_total + z_total,
        identity_value=duality_identity(xs, w, params.delta, y_total, z_total),
        w_star=float(np.dot(w, xs)),
    )


def modified_vs_small_polytope_gap(graph: WeightedGraph, params: EntropyParams,
                                   tol: float = 1e-7) -> tuple[float, float]:
    """Optimal values over the full polytope (Y) and over ``M_eps`` (Z).

    Raises ``AssertionError`` if ``Y >= (1 - eps) Z`` fails beyond solver accuracy.
    """
    full = solve_entropy(graph, params, "M_full", tol=tol)
    small = solve_entropy(graph, params, "M_eps", tol=tol)
    Y, Z = full.value, small.value
    if Y + full.gap < (1 - params.epsilon) * Z - 1e-12:
        raise AssertionError(f"Y={Y} < (1-eps) Z={Z}")
    return Y, Z
