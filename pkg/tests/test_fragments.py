"""Fragment decomposition: exact MST recovery and the size/diameter caps."""
import math

import pytest

from congest_light.engine import RoundEngine
from congest_light.fragments import (FragmentDecomposition, compute_fragments,
                                     growth_thresholds)
from congest_light.graphs import generate, mst_oracle


def build(g, seed=0, root=0):
    engine = RoundEngine(g, seed=seed)
    deco, metrics = compute_fragments(engine, root=root, seed=seed)
    return deco, metrics


def check_shape(g, deco, root=0):
    n = g.n
    assert len(deco.frag_of) == n
    assert deco.root == root
    assert deco.frag_of[root] in deco.roots
    # designated roots name their fragments
    for r in deco.roots:
        assert deco.frag_of[r] == r
        assert deco.parent_in_frag[r] == -1
    # parent pointers stay inside the fragment and step one level up
    for v in range(n):
        p = deco.parent_in_frag[v]
        if p >= 0:
            assert deco.frag_of[p] == deco.frag_of[v]
            assert deco.depth_in_frag[v] == deco.depth_in_frag[p] + 1
        else:
            assert deco.depth_in_frag[v] == 0
    # fragment tree reaches every fragment
    reach = {deco.frag_of[root]}
    kids = deco.frag_children()
    stack = [deco.frag_of[root]]
    while stack:
        f = stack.pop()
        for c in kids[f]:
            assert c not in reach
            reach.add(c)
            stack.append(c)
    assert reach == set(deco.roots)


FAMILIES = [
    ("path", dict(n=2)),
    ("path", dict(n=9)),
    ("path", dict(n=120)),
    ("star", dict(n=41)),
    ("grid", dict(rows=9, cols=10)),
    ("random_tree", dict(n=230)),
    ("random_weighted", dict(n=60)),
    ("random_weighted", dict(n=240)),
]


@pytest.mark.parametrize("kind,params", FAMILIES)
def test_exact_mst_and_caps(kind, params):
    for seed in (0, 1):
        g = generate(kind, seed=seed, **params)
        deco, metrics = build(g, seed=seed)
        mst = mst_oracle(g)
        assert deco.tree_edges() == mst.edge_set()
        check_shape(g, deco)
        s = math.isqrt(max(1, g.n - 1)) + 1
        assert deco.fragment_count <= 4 * s + 8
        assert all(deco.hop_diameter(f) <= 4 * s for f in deco.roots)
        assert metrics.violation_count == 0, metrics.violation_examples


def test_external_edges_name_their_fragments():
    g = generate("random_weighted", seed=5, n=150)
    deco, _ = build(g, seed=5)
    for u, v, fu, fv, w in deco.external_edges:
        assert deco.frag_of[u] == fu and deco.frag_of[v] == fv
        assert fu != fv
        assert w == g.weight(u, v)
        # the child fragment is named after its endpoint of this edge
        if deco.frag_parent[fv] == fu:
            assert fv == v
        else:
            assert deco.frag_parent[fu] == fv and fu == u


def test_deterministic_across_runs():
    g = generate("random_weighted", seed=3, n=90)
    a, ma = build(g, seed=11)
    b, mb = build(g, seed=11)
    assert a == b
    assert ma.rounds_used == mb.rounds_used
    assert ma.total_messages == mb.total_messages


def test_seed_changes_partition_not_tree():
    g = generate("random_weighted", seed=4, n=90)
    a, _ = build(g, seed=1)
    b, _ = build(g, seed=2)
    assert a.tree_edges() == b.tree_edges()


def test_nonroot_base_vertex():
    g = generate("random_weighted", seed=9, n=70)
    root = 13
    deco, _ = build(g, seed=9, root=root)
    mst = mst_oracle(g, root=root)
    assert deco.tree_edges() == mst.edge_set()
    check_shape(g, deco, root=root)


def test_allowed_filter_restricts_merges():
    """Restricting merge edges to a spanning subgraph yields that subgraph's MST."""
    g = generate("random_weighted", seed=6, n=80)
    mst = mst_oracle(g)
    # allowed set: the MST plus a few extra edges, all by adjacency
    extra = [e for e in sorted(g.edges)[:40]]
    keep = mst.edge_set() | {(min(u, v), max(u, v)) for u, v, _ in extra}
    allowed = [set() for _ in range(g.n)]
    for u, v in keep:
        allowed[u].add(v)
        allowed[v].add(u)
    engine = RoundEngine(g, seed=6)
    deco, _ = compute_fragments(engine, seed=6, allowed=allowed)
    # the MST of the restricted subgraph is the global MST here
    assert deco.tree_edges() == mst.edge_set()
    check_shape(g, deco)


def test_growth_thresholds_monotone():
    last = 0
    for n in (2, 10, 100, 1000, 10000):
        size_cap, radius_cap, depth_guard, phase_cap = growth_thresholds(n)
        assert size_cap >= 2 and radius_cap >= 1
        assert depth_guard >= size_cap
        assert phase_cap > math.log2(n)
        assert size_cap >= last
        last = size_cap


def test_to_json_round_trips_fields():
    g = generate("grid", seed=0, rows=4, cols=5)
    deco, _ = build(g)
    blob = deco.to_json()
    assert blob["fragment_count"] == deco.fragment_count
    assert len(blob["frag_of"]) == g.n
    restored = FragmentDecomposition(
        root=blob["root"],
        frag_of=tuple(blob["frag_of"]),
        parent_in_frag=tuple(blob["parent_in_frag"]),
        depth_in_frag=tuple(blob["depth_in_frag"]),
        roots=tuple(blob["roots"]),
        external_edges=tuple(tuple(e) for e in blob["external_edges"]),
        frag_parent={int(k): v for k, v in blob["frag_parent"].items()},
    )
    assert restored == deco
