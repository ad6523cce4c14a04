import math

import numpy as np
import pytest

from dynround.entropy import (
    EntropyParams,
    compute_s_from_primal,
    distance_from_optimum_bound,
    duality_identity,
    extract_duals,
    g_gradient,
    g_value,
    max_delta,
    modified_vs_small_polytope_gap,
    objective_g,
    restrict_significant,
    solve_entropy,
    stationary_s,
    verify_dual_bounds,
)
from dynround.generators import weighted_random
from dynround.graph import FractionalAssignment, WeightedGraph
from dynround.oracle import reference_entropy_opt
from dynround.polytope import check_membership
from dynround.static import max_weight_matching_exact

EDGE = WeightedGraph.from_edges(2, [(0, 1)])
TRI = WeightedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def test_objective_examples():
    assert objective_g({(0, 1): 1.0}, {(0, 1): 1.0}, 0.3, 1.0) == pytest.approx(1.0)
    assert objective_g({}, {(0, 1): 1.0}, 0.3, 1.0) == 0.0
    assert objective_g({(0, 1): 0.0}, {(0, 1): 1.0}, 0.3, 1.0) == 0.0
    assert objective_g({(0, 1): 0.5}, {(0, 1): 2.0}, 0.1, 4.0) == pytest.approx(1.2)
    with pytest.raises(ValueError):
        objective_g({(0, 1): 0.5}, {(0, 1): 2.0}, 0.1, 0.0)


def test_gradient_matches_finite_difference():
    rng = np.random.default_rng(0)
    w = rng.uniform(1, 5, 6)
    x = rng.uniform(0.05, 0.9, 6)
    h = 1e-6
    num = np.array([(g_value(x + h * np.eye(6)[i], w, 0.2, 3.0)
                     - g_value(x - h * np.eye(6)[i], w, 0.2, 3.0)) / (2 * h) for i in range(6)])
    assert np.allclose(num, g_gradient(x, w, 0.2, 3.0), rtol=1e-6)


def test_single_edge_solve_against_grid():
    params = EntropyParams(0.1, 1.0, 0.25, 1.0)
    sol = solve_entropy(EDGE, params, "M_full", tol=1e-12)
    grid = np.linspace(1e-9, 1, 200001)
    vals = grid + 0.1 * grid * np.log2(1.0 / grid)
    best = grid[int(np.argmax(vals))]
    assert sol.x[(0, 1)] == pytest.approx(best, abs=1e-5)
    assert sol.value == pytest.approx(vals.max(), abs=1e-6)
    assert sol.value == pytest.approx(g_value(np.array([best]), np.array([1.0]), 0.1, 1.0))


def test_triangle_odd_set_enforced():
    params = EntropyParams(0.05, 1.0, 1 / 3, 1.0)
    sol = solve_entropy(TRI, params, "M_eps", tol=1e-9)
    assert sol.x.total() <= 1 + 1e-9
    ref = reference_entropy_opt(TRI, params, "M_eps")
    assert sum(ref.x.values()) == pytest.approx(1.0, abs=1e-6)
    assert sol.value >= (1 - 1e-6) * ref.g


@pytest.mark.parametrize("seed", range(4))
def test_solution_bounded_by_mwm(seed):
    G = weighted_random(9, 0.45, seed, W=8)
    eps = 0.1
    params = EntropyParams.for_graph(G, eps)
    mwm = max_weight_matching_exact(G).weight
    assert params.violations(G.n, mwm, G.m) == []
    sol = solve_entropy(G, params, "M_full")
    assert check_membership(sol.x, "M_full").member
    assert sol.value <= (1 + eps) * mwm
    ref = reference_entropy_opt(G, params, "M_full")
    assert sol.value >= (1 - eps) * ref.g
    assert ref.g >= sol.value - 1e-6


def test_s_from_primal_examples():
    params = EntropyParams(1e-12, 2.0, 0.1, 1.0)
    assert compute_s_from_primal({(0, 1): 0.3}, {(0, 1): 4.0}, params)[(0, 1)] \
        == pytest.approx(4.0)
    params = EntropyParams(0.05, 2.0, 0.1, 1.0)
    s = compute_s_from_primal({(0, 1): 0.5}, {(0, 1): 4.0}, params)
    assert s[(0, 1)] == pytest.approx(4.0 * 0.95)
    s = compute_s_from_primal({(0, 1): 0.25, (1, 2): 0.0}, {(0, 1): 1.0, (1, 2): 1.0}, params)
    assert s == {(0, 1): pytest.approx(1.10)}


def test_stationary_s_is_the_gradient():
    params = EntropyParams(0.05, 2.0, 0.1, 1.0)
    s = stationary_s({(0, 1): 0.25}, {(0, 1): 1.0}, params)
    grad = g_gradient(np.array([0.25]), np.array([1.0]), 0.05, 2.0)[0]
    assert s[(0, 1)] == pytest.approx(grad)


def test_dual_bound_examples():
    w = {(0, 1): 2.0, (1, 2): 3.0}
    x = {(0, 1): 0.5, (1, 2): 0.5}
    assert verify_dual_bounds(dict(w), w, x, 0.1, 3).ok
    bad = verify_dual_bounds({e: 0.5 * v for e, v in w.items()}, w, x, 0.1, 3)
    assert bad.lower_violations == sorted(w)


@pytest.mark.parametrize("seed", range(3))
def test_dual_bounds_at_reference_optimum(seed):
    G = weighted_random(8 + seed, 0.4, 40 + seed, W=6)
    eps = 0.2
    params = EntropyParams.for_graph(G, eps)
    ref = reference_entropy_opt(G, params, "M_full")
    rep = verify_dual_bounds(ref.s, G, ref.x, eps, G.n)
    assert rep.ok
    edges = G.edges()
    w = np.array([G.weights[e] for e in edges])
    xs = np.array([ref.x.get(e, 0.0) for e in edges])
    z_total = sum(v * B.bound for B, v in ref.z.items())
    ident = duality_identity(xs, w, params.delta, sum(ref.y.values()), z_total)
    assert ident == pytest.approx(ref.g, rel=1e-6)


def test_restrict_significant_examples():
    x = FractionalAssignment({(0, 1): 0.5, (2, 3): 0.2}, 0.3)
    assert restrict_significant(x, n=10).values == x.values
    y = FractionalAssignment({(0, 1): 0.5, (2, 3): 0.009}, 0.3)
    assert set(restrict_significant(y, 0.3, 10).values) == {(0, 1)}


def test_distance_bound_examples():
    assert distance_from_optimum_bound(0.0, 0.1, 5.0) == 0.0
    assert distance_from_optimum_bound(0.1 * 5.0, 0.1, 5.0) == pytest.approx(5.0)
    assert distance_from_optimum_bound(-1.0, 0.1, 5.0) == 0.0


def test_distance_bound_holds_for_solver_iterate():
    G = weighted_random(8, 0.5, 3, W=5)
    params = EntropyParams.for_graph(G, 0.2)
    mwm = max_weight_matching_exact(G).weight
    ref = reference_entropy_opt(G, params, "M_full")
    sol = solve_entropy(G, params, "M_full")
    gap = max(ref.g - sol.value, 0.0)
    measured = sum(G.weights[e] * abs(sol.x[e] - ref.x.get(e, 0.0)) for e in G.edges())
    assert measured <= distance_from_optimum_bound(gap, params.delta, mwm) + 1e-6


def test_polytope_gap_examples():
    params = EntropyParams(0.02, 2.0, 1 / 3, 1.0)
    Y, Z = modified_vs_small_polytope_gap(EDGE, params)
    assert Y == pytest.approx(Z, rel=1e-6)
    square = WeightedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    Y, Z = modified_vs_small_polytope_gap(square, EntropyParams(0.02, 2.0, 1 / 3, 1.0))
    assert Y == pytest.approx(Z, rel=1e-6)
    Y, Z = modified_vs_small_polytope_gap(TRI, params)
    assert Y >= (1 - params.epsilon) * Z


def test_extract_duals_fit_near_reference():
    G = weighted_random(7, 0.5, 11, W=4)
    params = EntropyParams.for_graph(G, 0.2)
    sol = solve_entropy(G, params, "M_full", tol=1e-9)
    duals = extract_duals(G, sol.x, params, "M_full")
    assert all(v >= 0 for v in duals.y.values()) and all(v >= 0 for v in duals.z.values())
    assert duals.identity_value == pytest.approx(duals.primal_value, rel=1e-3)


def test_max_delta_formula():
    assert max_delta(10, 1.0, 0.5) == pytest.approx(0.5 / (8 * math.log2(10**4 / 0.5)))
