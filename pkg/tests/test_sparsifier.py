import numpy as np
import pytest

from dynround.generators import random_fractional, random_gnp
from dynround.graph import FractionalAssignment, UpdateEvent, WeightedGraph, bucket_index
from dynround.sparsifier import (
    InvalidFractionalMatching,
    build_sparsifier,
    color_bucket,
    default_density,
    edge_inclusion_bounds,
    fisher_yates_batch,
    make_rng,
    palette_size,
    sample_colors,
    sample_size,
    update_sparsifier,
    witness_checks,
    witness_y,
)


def test_color_bucket_examples():
    assert color_bucket([(0, 1)], 2).colors == {(0, 1): 0}
    tri = color_bucket([(0, 1), (1, 2), (0, 2)], 4)
    assert len(set(tri.colors.values())) == 3 and tri.is_proper()
    star = color_bucket([(0, k) for k in range(1, 6)], 10)
    assert len(set(star.colors.values())) == 5


def test_color_bucket_degree_check():
    # bucket 1 with eps 0.25 admits degree ceil(1.25) = 2
    with pytest.raises(InvalidFractionalMatching):
        color_bucket([(0, 1), (0, 2), (0, 3)], palette_size(1, 0.25), 1, 0.25)


def test_sample_size_example():
    assert palette_size(5, 0.5) == 16
    assert sample_size(5, 2, 0.5) == 6
    picked = sample_colors(16, 6, make_rng(0))
    assert len(picked) == 6 and picked <= set(range(16))


def test_saturated_sample_takes_everything():
    rng = make_rng(1)
    state = rng.bit_generator.state
    assert sample_colors(8, 8, rng) == frozenset(range(8))
    assert sample_colors(8, 20, rng) == frozenset(range(8))
    # saturated classes leave the stream untouched
    assert rng.bit_generator.state == state


def test_sample_colors_uniform_marginals():
    counts = np.zeros(10)
    rng = make_rng(5)
    for _ in range(20000):
        for c in sample_colors(10, 3, rng):
            counts[c] += 1
    freq = counts / 20000
    assert np.all(np.abs(freq - 0.3) < 4 * np.sqrt(0.3 * 0.7 / 20000))


def test_fisher_yates_batch_matches_scalar():
    palette, k, T = 37, 11, 50
    rows = []
    picks = np.empty((T, k), dtype=np.int64)
    for t in range(T):
        picks[t] = make_rng(9, t).integers(np.arange(k), palette)
        rows.append(sample_colors(palette, k, make_rng(9, t)))
    got = fisher_yates_batch(palette, picks, chunk_cells=palette * 7)
    assert [frozenset(r.tolist()) for r in got] == rows
    assert all(len(set(r.tolist())) == k for r in got)


def test_edge_inclusion_bounds_examples():
    assert edge_inclusion_bounds(0.5, 4, 0.25) == (1.0, 1.0)
    lo, hi = edge_inclusion_bounds(0.1, 4, 0.25)
    assert lo == pytest.approx(0.256) and hi == pytest.approx(0.5)
    assert edge_inclusion_bounds(0.0, 4, 0.25) == (0.0, 0.0)


def test_build_examples():
    G = WeightedGraph.from_edges(4, [(0, 1), (2, 3), (1, 2)])
    big = FractionalAssignment({(0, 1): 0.6, (2, 3): 0.6, (1, 2): 0.3}, 0.25)
    assert build_sparsifier(G, big, d=4, seed=0).S == set(G.edges())
    assert build_sparsifier(G, FractionalAssignment({}, 0.25), d=4).S == set()

    H = random_gnp(40, 0.3, seed=2)
    x = random_fractional(H, 0.25, seed=2)
    a = build_sparsifier(H, x, d=16, seed=11)
    b = build_sparsifier(H, x, d=16, seed=11)
    assert a.S == b.S and a.to_json() == b.to_json()
    assert a.is_consistent()
    assert build_sparsifier(H, x, d=16, seed=12).S != a.S


def test_build_rejects_overloaded_vertex():
    G = WeightedGraph.from_edges(3, [(0, 1), (0, 2)])
    x = FractionalAssignment({(0, 1): 0.7, (0, 2): 0.7}, 0.25)
    with pytest.raises(InvalidFractionalMatching):
        build_sparsifier(G, x, d=4)


def test_default_density():
    assert default_density(100, 0.2) == 2879


def _small_instance():
    G = random_gnp(30, 0.3, seed=4)
    return G, random_fractional(G, 0.25, seed=4)


def test_update_delete_in_s():
    G, x = _small_instance()
    sp = build_sparsifier(G, x, d=8, seed=3)
    e = sorted(sp.S)[0]
    delta = update_sparsifier(sp, UpdateEvent.delete(*e))
    assert delta.removed == (e,) and delta.added == ()
    assert e not in sp.S and sp.is_consistent()


def test_update_setx_across_buckets_into_sampled_class():
    G, x = _small_instance()
    d = 8
    sp = build_sparsifier(G, x, d=d, seed=3)

    def room(e):
        return 1.0 - max(sum(v for f, v in x.values.items() if u in f and f != e) for u in e)

    # any value above 1/d lands in a saturated class, so its new color is sampled
    e = next(e for e in sorted(x.values) if e not in sp.S and room(e) > 1.5 / d)
    new = room(e)
    assert bucket_index(new, 0.25) != sp.edge_bucket[e]
    delta = update_sparsifier(sp, UpdateEvent.set_x(*e, new))
    assert delta.added == (e,) and e in sp.S and sp.is_consistent()


def test_update_setx_same_bucket_no_change():
    G, x = _small_instance()
    sp = build_sparsifier(G, x, d=8, seed=3)
    e = sorted(x.values)[0]
    i = sp.edge_bucket[e]
    lo = 1.25 ** -i
    new = (lo + x.values[e]) / 2
    assert bucket_index(new, 0.25) == i
    before = set(sp.S)
    delta = update_sparsifier(sp, UpdateEvent.set_x(*e, new))
    assert not delta.changed and sp.S == before


def test_random_update_stream_stays_consistent():
    G, x = _small_instance()
    sp = build_sparsifier(G, x, d=8, seed=3)
    rng = np.random.default_rng(0)
    live = dict(x.values)
    for step in range(60):
        e = sorted(live)[int(rng.integers(len(live)))]
        if step % 3 == 0:
            update_sparsifier(sp, UpdateEvent.delete(*e))
            del live[e]
        else:
            val = live[e] * float(rng.uniform(0.3, 1.0))
            update_sparsifier(sp, UpdateEvent.set_x(*e, val))
            live[e] = val
        assert sp.is_consistent()


def test_witness_examples():
    G = WeightedGraph.from_edges(2, [(0, 1)])
    big = build_sparsifier(G, FractionalAssignment({(0, 1): 0.9}, 0.1), d=4)
    assert witness_y(big) == {(0, 1): 0.9}

    small = FractionalAssignment({(0, 1): 0.005}, 0.1)
    outcomes = {}
    for seed in range(40):
        sp = build_sparsifier(G, small, d=100, seed=seed)
        outcomes[(0, 1) in sp.S] = witness_y(sp).get((0, 1), 0.0)
    assert outcomes[True] == pytest.approx(0.006)
    assert outcomes[False] == 0.0


def test_witness_checks_shape():
    G, x = _small_instance()
    sp = build_sparsifier(G, x, d=16, seed=1)
    out = witness_checks(x.values, witness_y(sp, x), 0.25, [], mu=10)
    assert set(out) == {"degree", "odd_set", "value", "value_premise"}
