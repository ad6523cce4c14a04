import math

import pytest

from corpus import matching_mixture
from dynround import rounding
from dynround.generators import random_fractional, random_gnp
from dynround.graph import FractionalAssignment, UpdateEvent, WeightedGraph
from dynround.static import max_cardinality_matching


def _path_instance():
    # 0-1-2-3-4-5 with x on alternate edges; (1, 2) and (3, 4) carry nothing
    G = WeightedGraph.from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])
    x = FractionalAssignment({(0, 1): 1.0, (2, 3): 1.0, (4, 5): 1.0}, 0.1)
    return G, x


def test_init_integral_x():
    G, x = _path_instance()
    st = rounding.init(G, x, d=4, seed=0)
    assert set(x.support()) <= st.sparsifier.S
    assert len(st.M) == x.total() == 3
    assert st.matching_ok()


def test_init_empty():
    G, _ = _path_instance()
    st = rounding.init(G, FractionalAssignment({}, 0.1), d=4)
    assert st.M == set() and st.sum_x == 0


def test_init_does_not_alias_inputs():
    G, x = _path_instance()
    st = rounding.init(G, x, d=4)
    rounding.on_update(st, UpdateEvent.delete(0, 1))
    assert G.has_edge(0, 1) and (0, 1) in x.values


def test_delete_outside_support_and_matching_is_noop():
    G, x = _path_instance()
    st = rounding.init(G, x, d=4)
    before = set(st.M)
    delta = rounding.on_update(st, UpdateEvent.delete(1, 2))
    assert not delta.recompute and not delta.dropped_from_m and not delta.membership.changed
    assert st.M == before and delta.matching_size == 3


def test_delete_matched_edge_above_threshold():
    G = WeightedGraph.from_edges(10, [(2 * i, 2 * i + 1) for i in range(5)])
    x = FractionalAssignment({e: 0.9 for e in G.edges()}, 0.1)
    st = rounding.init(G, x, d=4)
    assert len(st.M) == 5
    delta = rounding.on_update(st, UpdateEvent.delete(0, 1))
    # 4 > (1 - 0.2) * 3.6
    assert delta.dropped_from_m and not delta.recompute and len(st.M) == 4


def test_constant_probability_clause():
    eps = 0.25
    G = random_gnp(20, 0.3, seed=8)
    x = matching_mixture(G, eps, seed=8)
    mu = max_cardinality_matching(G).cardinality
    assert x.total() >= (1 - eps) * mu
    hits = 0
    for seed in range(1000):
        st = rounding.init(G, x, seed=seed)
        hits += len(st.M) >= (1 - 3 * eps) * x.total()
    assert hits / 1000 >= 0.35


@pytest.mark.parametrize("seed", range(5))
def test_adversarial_stream_recompute_spacing(seed):
    """Deleting matched edges only: recomputes are ceil(eps * sum x) deletions apart.

    ``sum x`` is taken at the previous recompute, since it shrinks as the
    stream runs.
    """
    eps = 0.2
    G = random_gnp(40, 0.15, seed=seed)
    x = random_fractional(G, eps, seed=seed, low=0.05)
    st = rounding.init(G, x, d=16, seed=2)
    base = st.sum_x_at_recompute
    window = st.sum_x_at_recompute
    updates = last = 0
    while st.M:
        d = rounding.on_update(st, UpdateEvent.delete(*min(st.M)))
        updates += 1
        assert st.matching_ok()
        assert rounding.cached_sum_drift(st) < 1e-9
        if d.recompute:
            assert updates - last >= math.ceil(eps * window)
            # right after a recompute M is a maximum matching of S
            mu_s = max_cardinality_matching(st.graph.subgraph(st.sparsifier.S)).cardinality
            assert len(st.M) >= (1 - eps) * mu_s
            last, window = updates, st.sum_x_at_recompute
    assert st.recomputes >= 1
    assert st.recomputes <= rounding.recompute_budget(updates, eps, base)


def test_setx_updates_keep_invariants():
    eps = 0.2
    G = random_gnp(25, 0.2, seed=1)
    x = random_fractional(G, eps, seed=1)
    st = rounding.init(G, x, d=10, seed=4)
    for k, e in enumerate(sorted(x.values)[:30]):
        rounding.on_update(st, UpdateEvent.set_x(*e, st.x.values[e] / 2))
        assert st.matching_ok()
        assert math.isclose(st.sum_x, st.x.total(), abs_tol=1e-9)
    assert st.sparsifier.is_consistent()


def test_trace_written(tmp_path):
    G, x = _path_instance()
    st = rounding.init(G, x, d=4)
    rounding.on_update(st, UpdateEvent.delete(0, 1))
    st.write_trace(tmp_path / "t.jsonl")
    line = (tmp_path / "t.jsonl").read_text().splitlines()[0]
    assert '"|M|"' in line and '"recompute"' in line


def test_recompute_budget_edge_cases():
    assert rounding.recompute_budget(10, 0.1, 0.0) == math.inf
    assert rounding.recompute_budget(10, 0.1, 5.0) == pytest.approx(21.0)
