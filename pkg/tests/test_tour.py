"""Euler tour: bit-exact agreement with the centralized walk."""
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congest_light.engine import RoundEngine
from congest_light.fragments import compute_fragments
from congest_light.graphs import WeightedGraph, generate, mst_oracle
from congest_light.primitives import build_bfs_tree
from congest_light.tour import (SCALE, dfs_intervals, euler_tour,
                                euler_tour_oracle, global_tour_lengths,
                                local_tour_lengths, scaled,
                                unweighted_indices)


def distributed_tour(g, root=0, seed=0):
    engine = RoundEngine(g, seed=seed)
    deco, m1 = compute_fragments(engine, root=root, seed=seed)
    tour, lengths, m2 = euler_tour(engine, deco)
    return tour, lengths, m1.merge(m2)


def assert_exact_match(g, root=0, seed=0):
    tour, lengths, metrics = distributed_tour(g, root=root, seed=seed)
    oracle = euler_tour_oracle(g, root=root)
    assert tour.views == oracle.views
    assert tour.length_int == oracle.length_int
    mst = mst_oracle(g, root=root)
    assert tour.length_int == 2 * sum(scaled(w) for _, _, w in mst.edges)
    assert metrics.violation_count == 0, metrics.violation_examples
    return tour, metrics


def test_scaled_is_exact_for_normalized_weights():
    for w in (1.0, 1.5, 2.0, 3.75, 1000.0, 1.0000000000000002):
        i = scaled(w)
        assert Fraction(i, SCALE) == Fraction(w)
    with pytest.raises(ValueError):
        scaled(2.0 ** -60)  # below the scale's resolution


def test_unit_path_worked_example():
    g = WeightedGraph(3, [(0, 1, 1.0), (1, 2, 1.0)])
    engine = RoundEngine(g, seed=0)
    deco, _ = compute_fragments(engine)
    lengths, _ = local_tour_lengths(engine, deco)
    lengths, _ = global_tour_lengths(engine, deco, lengths)
    assert [lengths.global_length(v) for v in range(3)] == [4.0, 2.0, 0.0]
    tour, _ = dfs_intervals(engine, deco, lengths)
    assert tour.sequence() == [0, 1, 2, 1, 0]
    flat = sorted((a.index, a.time)
                  for view in tour.views for a in view.appearances)
    assert flat == [(0, 0.0), (1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0)]
    assert tour.length == 4.0


def test_unit_star_worked_example():
    g = WeightedGraph(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)])
    tour, _, _ = distributed_tour(g)
    for leaf, want in ((1, [1]), (2, [3]), (3, [5])):
        assert [a.index for a in tour.views[leaf].appearances] == want
    assert [a.index for a in tour.views[0].appearances] == [0, 2, 4, 6]
    assert sorted(a.index for v in tour.views for a in v.appearances) == list(range(7))


def test_appearance_counts_match_tree_degree():
    g = generate("random_weighted", seed=8, n=120)
    tour, _, _ = distributed_tour(g)
    mst = mst_oracle(g)
    for v in range(g.n):
        deg = len(mst.children[v]) + (1 if v != tour.root else 0)
        want = deg + 1 if v == tour.root else deg
        assert len(tour.views[v].appearances) == want


def test_times_nondecreasing_and_anchored():
    g = generate("random_weighted", seed=2, n=90)
    tour, _, _ = distributed_tour(g)
    times = [-1] * (2 * g.n - 1)
    for view in tour.views:
        for a in view.appearances:
            assert times[a.index] == -1
            times[a.index] = a.time_int
    assert times[0] == 0
    assert times[-1] == tour.length_int
    assert all(x <= y for x, y in zip(times, times[1:]))


def test_walk_neighbors_are_consistent():
    g = generate("random_tree", seed=3, n=60)
    tour, _, _ = distributed_tour(g)
    seq = tour.sequence()
    for view in tour.views:
        for j, a in enumerate(view.appearances):
            prev = view.prev_vertex[j]
            nxt = view.next_vertex[j]
            assert (seq[a.index - 1] if a.index else None) == prev
            after = seq[a.index + 1] if a.index < len(seq) - 1 else None
            assert after == nxt


def test_global_lengths_dominate_local():
    g = generate("random_weighted", seed=12, n=100)
    engine = RoundEngine(g, seed=12)
    deco, _ = compute_fragments(engine, seed=12)
    lengths, _ = local_tour_lengths(engine, deco)
    lengths, _ = global_tour_lengths(engine, deco, lengths)
    root_frag = deco.frag_of[deco.root]
    mst = mst_oracle(g)
    assert lengths.global_int[deco.root] == 2 * sum(scaled(w)
                                                    for _, _, w in mst.edges)
    for v in range(g.n):
        assert lengths.global_int[v] >= lengths.local_int[v]
    # fragment-local view of the root fragment equals its internal tour
    assert lengths.root_global[root_frag] == (
        lengths.global_int[deco.root], lengths.global_idx[deco.root])


def test_unweighted_indices_match_weighted_positions():
    g = generate("random_weighted", seed=21, n=80)
    engine = RoundEngine(g, seed=21)
    deco, _ = compute_fragments(engine, seed=21)
    lengths, _ = local_tour_lengths(engine, deco)
    lengths, _ = global_tour_lengths(engine, deco, lengths)
    idx, _ = unweighted_indices(engine, deco, lengths)
    tour, _ = dfs_intervals(engine, deco, lengths)
    for v, view in enumerate(tour.views):
        assert tuple(a.index for a in view.appearances) == idx[v]


@pytest.mark.parametrize("kind,params", [
    ("path", dict(n=2)),
    ("path", dict(n=57)),
    ("star", dict(n=34)),
    ("grid", dict(rows=7, cols=11)),
    ("random_tree", dict(n=160)),
    ("random_weighted", dict(n=130)),
])
def test_exact_on_families(kind, params):
    for seed in (0, 1):
        g = generate(kind, seed=seed, **params)
        assert_exact_match(g, seed=seed)


def test_exact_from_nonzero_root():
    g = generate("random_weighted", seed=17, n=110)
    assert_exact_match(g, root=29, seed=17)


def test_shared_bfs_tree_gives_same_tour():
    g = generate("random_tree", seed=5, n=140)
    engine = RoundEngine(g, seed=5)
    tree, _ = build_bfs_tree(engine, 0)
    deco, _ = compute_fragments(engine, tree=tree, seed=5)
    tour_a, _, _ = euler_tour(engine, deco, tree=tree)
    tour_b, _, _ = euler_tour(engine, deco)
    assert tour_a == tour_b


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_random_trees_match_oracle(data):
    n = data.draw(st.integers(min_value=2, max_value=120), label="n")
    seed = data.draw(st.integers(min_value=0, max_value=2 ** 20), label="seed")
    g = generate("random_tree", seed=seed, n=n)
    assert_exact_match(g, seed=seed & 0xFF)


@settings(max_examples=15, deadline=None)
@given(st.data())
def test_random_graphs_match_oracle(data):
    n = data.draw(st.integers(min_value=2, max_value=90), label="n")
    seed = data.draw(st.integers(min_value=0, max_value=2 ** 20), label="seed")
    g = generate("random_weighted", seed=seed, n=n)
    assert_exact_match(g, seed=seed & 0xFF)


def test_tour_to_json():
    g = generate("grid", seed=0, rows=3, cols=4)
    tour, _, _ = distributed_tour(g)
    blob = tour.to_json()
    assert blob["n"] == g.n
    assert blob["index_length"] == 2 * g.n - 2
    assert len(blob["appearances"]) == g.n
