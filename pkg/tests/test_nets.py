"""Nets: LE lists, admission and pruning, covering/separation audits."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import congest_light.nets as nets_module
from congest_light.engine import RoundEngine, payload_words
from congest_light.graphs import WeightedGraph, apsp_oracle, generate
from congest_light.nets import (DEVIATION_LE, ENTRIES_PER_MESSAGE, LeList,
                                NetIterationCapError, NetState, Permutation,
                                PERM_LABEL, compute_le_lists, construct_net,
                                halving_experiment, iteration_cap,
                                le_lists_oracle, net_iteration, net_loop,
                                relaxation_distances)
from congest_light.rng import perm_key


def clique(n, w=1.0):
    return WeightedGraph(n, [(i, j, w)
                             for i in range(n) for j in range(i + 1, n)])


def rank_order(seed, vertices):
    return sorted(vertices, key=lambda v: perm_key(seed, PERM_LABEL, v))


# ---------------------------------------------------------------------------
# LE lists
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind,params,seed", [
    ("path", dict(n=12), 1),
    ("grid", dict(rows=4, cols=5), 2),
    ("random_weighted", dict(n=60), 3),
    ("random_weighted", dict(n=90, p=0.2), 4),
])
def test_le_lists_match_oracle(kind, params, seed):
    g = generate(kind, seed=seed, **params)
    engine = RoundEngine(g, seed=seed, strict=True)
    _perm, lists, _dh, metrics = compute_le_lists(engine, range(g.n), 17, 0.1)
    want = le_lists_oracle(g, range(g.n), 17)
    assert [le.entries for le in lists] == [le.entries for le in want]
    assert metrics.violation_count == 0
    assert DEVIATION_LE in metrics.deviations


def test_le_singleton_active_set():
    g = generate("path", n=5)
    engine = RoundEngine(g, seed=0, strict=True)
    _perm, lists, dh, _ = compute_le_lists(engine, [2], 9, 0.0)
    assert lists[2].entries == ((2, 0.0),)
    for v in range(5):
        assert lists[v].entries == ((2, dh(2, v)),)


def test_le_hand_unrolled_on_path():
    g = generate("path", n=3)
    seed = next(s for s in range(1000) if rank_order(s, range(3)) == [1, 0, 2])
    engine = RoundEngine(g, seed=5, strict=True)
    perm, lists, _dh, _ = compute_le_lists(engine, range(3), seed, 0.0)
    assert perm.order == (1, 0, 2)
    assert perm.first() == 1
    assert lists[2].entries == ((2, 0.0), (1, 1.0))
    assert lists[1].entries == ((1, 0.0),)
    assert lists[0].entries == ((0, 0.0), (1, 1.0))


def test_le_lists_random_500_exact():
    g = generate("random_weighted", seed=11, n=500)
    engine = RoundEngine(g, seed=11, strict=True)
    perm, lists, _dh, metrics = compute_le_lists(engine, range(g.n), 23, 0.25)
    want = le_lists_oracle(g, range(g.n), 23)
    assert all(lists[v].entries == want[v].entries for v in range(g.n))
    champion = perm.first()
    assert all(le.entries[-1][0] == champion for le in lists)
    assert max(len(le.entries) for le in lists) <= 6 * math.ceil(math.log(500))
    assert metrics.violation_count == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(4, 28),
       gseed=st.integers(0, 50))
def test_le_dominance_property(seed, n, gseed):
    g = generate("random_weighted", seed=gseed, n=n)
    active = list(range(0, n, 2)) if n % 4 == 0 else list(range(n))
    lists = le_lists_oracle(g, active, seed)
    keys = {u: perm_key(seed, PERM_LABEL, u) for u in active}
    champion = min(active, key=lambda u: keys[u])
    for le in lists:
        ds = [d for _u, d in le.entries]
        ks = [keys[u] for u, _d in le.entries]
        assert ds == sorted(ds) and len(set(ds)) == len(ds)
        assert ks == sorted(ks, reverse=True)
        assert le.entries[-1][0] == champion
        if le.vertex in set(active):
            assert le.entries[0] == (le.vertex, 0.0)


def test_le_list_helpers():
    le = LeList(vertex=7, entries=((7, 0.0), (3, 2.0), (1, 5.0)))
    assert le.nearest_within(0.0) == 7
    assert le.nearest_within(2.0) == 3
    assert le.nearest_within(10.0) == 1
    assert le.nearest_within(-1.0) is None
    assert le.is_local_minimum(1.9)
    assert not le.is_local_minimum(2.0)
    assert LeList(vertex=4, entries=((4, 0.0),)).is_local_minimum(1e9)


def test_permutation_bijective_and_reproducible():
    p = Permutation.over(range(40), 123)
    assert p.order == Permutation.over(range(40), 123).order
    assert sorted(p.order) == list(range(40))
    assert [p.rank[v] for v in p.order] == list(range(40))
    assert len(p) == 40 and p.first() == p.order[0]
    assert Permutation.over(range(40), 124).order != p.order


def test_le_lists_validation():
    g = generate("path", n=4)
    engine = RoundEngine(g, seed=0)
    with pytest.raises(ValueError):
        compute_le_lists(engine, [], 1, 0.1)
    with pytest.raises(ValueError):
        compute_le_lists(engine, [0], 1, 1.0)
    with pytest.raises(ValueError):
        compute_le_lists(engine, [0], 1, -0.01)


def test_le_message_batches_fit_the_word_budget():
    batch = tuple((i, float(i)) for i in range(ENTRIES_PER_MESSAGE))
    assert payload_words(batch) <= 8


def test_relaxation_distances_agree_with_apsp():
    g = generate("random_weighted", seed=13, n=50)
    rows = relaxation_distances(g, range(g.n))
    oracle = apsp_oracle(g)
    for u in range(g.n):
        assert rows[u, u] == 0.0
        for v in range(g.n):
            assert rows[u, v] == pytest.approx(oracle.d(u, v), abs=1e-9)


# ---------------------------------------------------------------------------
# single iterations
# ---------------------------------------------------------------------------

def test_iteration_two_distant_vertices_both_join():
    g = generate("path", n=4)
    engine = RoundEngine(g, seed=2, strict=True)
    state = NetState(active=(0, 3), net=(), iteration=0)
    nxt, metrics = net_iteration(engine, state, 2.0, 0.1, seed_i=77)
    assert nxt.net == (0, 3)
    assert nxt.active == ()
    assert nxt.iteration == 1 and nxt.done()
    assert metrics.violation_count == 0


def test_iteration_clique_admits_exactly_the_order_minimum():
    g = clique(12)
    engine = RoundEngine(g, seed=3, strict=True)
    state = NetState(active=tuple(range(12)), net=(), iteration=0)
    nxt, _ = net_iteration(engine, state, 1.5, 0.2, seed_i=41)
    assert nxt.net == (rank_order(41, range(12))[0],)
    assert nxt.active == ()


def test_iteration_join_decisions_match_oracle():
    g = generate("random_weighted", seed=21, n=500)
    engine = RoundEngine(g, seed=21)
    oracle = apsp_oracle(g)
    width = float(np.quantile(oracle.matrix, 0.3))
    state = NetState(active=tuple(range(g.n)), net=(), iteration=0)
    nxt, _ = net_iteration(engine, state, width, 0.1, seed_i=5)
    lists = le_lists_oracle(g, range(g.n), 5)
    want = tuple(sorted(v for v in range(g.n)
                        if lists[v].is_local_minimum(width)))
    assert want and nxt.net == want
    for i, x in enumerate(want):
        for y in want[i + 1:]:
            assert oracle.d(x, y) > width - 1e-9
    assert set(nxt.active).isdisjoint(nxt.net)
    assert set(nxt.active) < set(range(g.n))
    assert nxt.tree is not None


# ---------------------------------------------------------------------------
# the full loop
# ---------------------------------------------------------------------------

def test_construct_net_on_path_is_audited_exactly():
    g = generate("path", n=65)          # 64 unit edges
    engine = RoundEngine(g, seed=11, strict=True)
    width, delta = 4.0, 0.1
    net, metrics = construct_net(engine, g, width, delta)
    oracle = apsp_oracle(g)
    cover = max(min(oracle.d(x, y) for y in net) for x in range(g.n))
    sep = min(oracle.d(x, y) for x in net for y in net if x != y)
    assert cover <= (1 + delta) * width + 1e-9
    assert sep > width / (1 + delta) - 1e-9
    assert math.ceil(64 / ((1 + delta) * 2 * width)) <= len(net) <= 64
    assert list(net) == sorted(net)
    assert metrics.violation_count == 0
    again, _ = construct_net(RoundEngine(g, seed=11), g, width, delta)
    assert again == net


def test_net_loop_reports_iterations():
    g = generate("random_weighted", seed=6, n=48)
    engine = RoundEngine(g, seed=9)
    state, _ = net_loop(engine, g, 30.0, 0.3)
    assert state.done() and state.net
    assert 1 <= state.iteration <= iteration_cap(48)
    assert state.tree is not None


def test_construct_net_below_min_distance_keeps_everyone():
    g = generate("random_weighted", seed=7, n=30)
    engine = RoundEngine(g, seed=3, strict=True)
    net, _ = construct_net(engine, g, 0.5, 0.2)
    assert net == tuple(range(30))


def test_construct_net_huge_width_collapses_to_one_point():
    g = generate("path", n=16)
    engine = RoundEngine(g, seed=4, strict=True)
    net, _ = construct_net(engine, g, 40.0, 0.2)
    assert len(net) == 1
    oracle = apsp_oracle(g)
    assert max(oracle.d(net[0], x) for x in range(16)) <= 1.2 * 40.0


def test_construct_net_validation():
    g = generate("path", n=6)
    other = generate("path", n=6)
    engine = RoundEngine(g, seed=0)
    with pytest.raises(ValueError):
        construct_net(engine, other, 1.0, 0.1)
    for width, delta in [(0.0, 0.1), (-2.0, 0.1), (1.0, 0.0), (1.0, 1.0)]:
        with pytest.raises(ValueError):
            construct_net(engine, g, width, delta)
    with pytest.raises(ValueError):
        net_iteration(engine, NetState(active=(), net=(), iteration=0),
                      1.0, 0.1, 1)


def test_cap_overrun_raises_with_partial_state(monkeypatch):
    g = generate("path", n=65)
    engine = RoundEngine(g, seed=11)
    monkeypatch.setattr(nets_module, "iteration_cap", lambda n: 1)
    with pytest.raises(NetIterationCapError) as err:
        construct_net(engine, g, 4.0, 0.1)
    state = err.value.state
    assert state.iteration == 1
    assert state.net and state.active
    assert set(state.net).isdisjoint(state.active)


def test_iteration_cap_floor_and_growth():
    assert iteration_cap(1) == 8
    assert iteration_cap(2) == 8
    assert iteration_cap(256) == 64
    assert iteration_cap(1000) >= iteration_cap(256)


# ---------------------------------------------------------------------------
# decay experiment
# ---------------------------------------------------------------------------

def test_halving_no_close_pairs_ends_in_one_iteration():
    g = generate("path", n=10)
    stats = halving_experiment(g, 0.5, 0.1, range(20))
    assert stats.iterations == (1,) * 20
    assert stats.counts == ((0,),) * 20
    assert stats.worst_ratio() == 0.0


def test_halving_clique_decay():
    g = clique(50)
    stats = halving_experiment(g, 2.0, 0.1, range(100))
    assert stats.seeds == 100
    assert all(c[0] == 50 * 49 // 2 for c in stats.counts)
    assert stats.worst_ratio() <= 7 / 8
    assert stats.max_iterations() <= iteration_cap(50)


def test_halving_random_graph_decays_geometrically():
    g = generate("random_weighted", seed=8, n=40, p=0.5, wmax=3.0)
    stats = halving_experiment(g, 2.0, 0.1, range(100))
    ratios = stats.pooled_ratios()
    assert ratios and max(ratios) <= 7 / 8
    payload = stats.to_json()
    assert payload["max_iterations"] == stats.max_iterations()
    assert payload["ratios"] == list(ratios)


def test_halving_path_iterations_within_cap():
    g = generate("path", n=64)
    stats = halving_experiment(g, 4.0, 0.1, range(100))
    assert stats.max_iterations() <= iteration_cap(64)
    assert min(stats.iterations) >= 1
    with pytest.raises(ValueError):
        halving_experiment(g, 0.0, 0.1, range(2))
