"""Distributed net construction: LE lists, local-minimum admission, pruning.

A ((1+delta)*width, width/(1+delta))-net is grown over rounds of a simple
loop. Each iteration draws a fresh shared random order, computes per-vertex
LE lists (the undominated (vertex, distance) pairs where every farther entry
improves the order rank), admits the vertices that are rank-minimal within
their width-neighborhood, and deactivates everything a closest-source
distance tree places within (1+delta)*width of the new points. The loop
whittles the active set down to nothing in O(log n) iterations with high
probability; a cap turns the unlucky tail into a retryable error.

LE lists are computed by dominance-filtered relaxation carrying exact graph
distances, so the implied metric has no slack of its own; the delta
parameter still shapes the admission and pruning radii.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .engine import NodeProgram, RoundEngine, RoundMetrics
from .graphs import DistanceOracle, WeightedGraph, apsp_oracle
from .primitives import broadcast_from_root, build_bfs_tree
from .rng import hash64, perm_key
from .slt import ApproxSpt, approx_spt

PERM_LABEL = "net-perm"
ITERATION_CAP_FACTOR = 8
# entries are (id, distance) pairs, two words each, four to a message
ENTRIES_PER_MESSAGE = 4

DEVIATION_LE = ("nets: LE lists come from dominance-filtered exact "
                "relaxation, not a hopset pipeline; rounds grow with the "
                "shortest-path hop radius times the list length")


class NetIterationCapError(RuntimeError):
    """The net loop exceeded its iteration budget; carries partial state."""

    def __init__(self, message: str, state: "NetState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class Permutation:
    """Shared random order over a vertex set, derived from one seed word."""

    seed: int
    order: tuple
    rank: dict

    @classmethod
    def over(cls, vertices, seed: int) -> "Permutation":
        order = tuple(sorted(vertices, key=lambda v: perm_key(seed, PERM_LABEL, v)))
        return cls(seed=seed, order=order,
                   rank={v: i for i, v in enumerate(order)})

    def __len__(self) -> int:
        return len(self.order)

    def first(self):
        return self.order[0]


@dataclass(frozen=True)
class LeList:
    """Undominated (vertex, distance) pairs for one vertex, nearest first."""

    vertex: int
    entries: tuple

    def nearest_within(self, radius: float):
        """The order-minimal vertex among entries at distance <= radius."""
        best = None
        for u, d in self.entries:
            if d <= radius:
                best = u
        return best

    def is_local_minimum(self, radius: float) -> bool:
        return all(u == self.vertex or d > radius for u, d in self.entries)


@dataclass(frozen=True)
class NetState:
    """Loop state: who is still active, who was admitted, the last pruning tree."""

    active: tuple
    net: tuple
    iteration: int
    tree: ApproxSpt | None = None

    def done(self) -> bool:
        return not self.active


class _GraphMetric:
    """Exact-distance handle for audits; built lazily on first use."""

    def __init__(self, g: WeightedGraph):
        self._g = g
        self._oracle: DistanceOracle | None = None

    def __call__(self, u: int, v: int) -> float:
        if self._oracle is None:
            self._oracle = apsp_oracle(self._g)
        return self._oracle.d(u, v)


class _LeProgram(NodeProgram):
    """Dominance-filtered relaxation of (id, distance) entries.

    Every vertex keeps the Pareto frontier of (order key, distance) over the
    entries it has seen; admitted improvements queue up and leave in batches
    small enough for the word budget, addressed to every neighbor. Inactive
    vertices hold no entry of their own but still relay, since shortest
    paths run through them.
    """

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        active, seed, self.radius = ctx.inputs
        self.seed = seed
        self.entries: dict[int, float] = {}
        self.keys = {self.node: perm_key(seed, PERM_LABEL, self.node)}
        self.queue: deque = deque()
        if active:
            self.entries[self.node] = 0.0
            self.queue.append(self.node)
        self._flush(ctx)

    def _key(self, u: int):
        k = self.keys.get(u)
        if k is None:
            k = perm_key(self.seed, PERM_LABEL, u)
            self.keys[u] = k
        return k

    def _admit(self, u: int, d: float) -> bool:
        if self.radius is not None and d > self.radius:
            return False
        old = self.entries.get(u)
        if old is not None and old <= d:
            return False
        ku = self._key(u)
        for w, dw in self.entries.items():
            if w != u and dw <= d and self._key(w) < ku:
                return False
        for w in [w for w, dw in self.entries.items()
                  if w != u and d <= dw and ku < self._key(w)]:
            del self.entries[w]
        self.entries[u] = d
        return True

    def on_round(self, ctx, inbox):
        changed = set()
        for frm, _ch, batch in inbox:
            w = ctx.weight(frm)
            for u, d in batch:
                if self._admit(u, d + w):
                    changed.add(u)
        for u in changed:
            self.queue.append(u)
        self._flush(ctx)

    def _flush(self, ctx):
        batch = []
        while self.queue and len(batch) < ENTRIES_PER_MESSAGE:
            u = self.queue.popleft()
            if u in self.entries:      # skip entries dominated meanwhile
                batch.append((u, self.entries[u]))
        if batch:
            for nb in ctx.neighbors:
                if self.radius is None:
                    payload = tuple(batch)
                else:
                    w = ctx.weight(nb)
                    payload = tuple((u, d) for u, d in batch
                                    if d + w <= self.radius)
                if payload:
                    ctx.send(nb, payload)
        if self.queue:
            ctx.wake()
        ctx.out = tuple(sorted(self.entries.items(),
                               key=lambda e: (e[1], self._key(e[0]))))


def compute_le_lists(engine: RoundEngine, active, seed: int, delta: float,
                     radius: float | None = None,
                     ) -> tuple[Permutation, list[LeList], _GraphMetric,
                                RoundMetrics]:
    """LE lists of the active set under a fresh shared order.

    The seed travels from the root as a single broadcast word, every vertex
    derives order keys locally, and the relaxation settles to the exact
    lists. delta is accepted for interface parity with approximate-metric
    producers; the relaxation is exact so it never loosens anything. A radius
    truncates each list to its entries at distance <= radius, which the
    relaxation then computes without ever leaving the radius ball: entries
    and their possible dominators travel the same shortest paths, so the
    truncated lists are exact prefixes of the full ones.
    """
    active = frozenset(active)
    if not active:
        raise ValueError("active set must be nonempty")
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    if radius is not None and not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    g = engine.graph
    metrics = RoundMetrics()
    tree, m = build_bfs_tree(engine, min(active))
    metrics = metrics.merge(m)
    _, m = broadcast_from_root(engine, tree, [seed])
    metrics = metrics.merge(m)
    res = engine.run(lambda v: _LeProgram(v),
                     inputs=[(v in active, seed, radius) for v in range(g.n)])
    metrics = metrics.merge(res.metrics).with_deviation(DEVIATION_LE)
    lists = [LeList(vertex=v, entries=tuple(res.outputs[v]))
             for v in range(g.n)]
    return Permutation.over(active, seed), lists, _GraphMetric(g), metrics


def relaxation_distances(g: WeightedGraph, sources) -> np.ndarray:
    """Fixpoint of edge relaxation from each source, one matrix row apiece.

    Sweeps scatter-minimums over the edge list until nothing changes. The
    fixpoint is the minimum over paths of the source-outward float sum, the
    same quantity the engine relaxations settle to, so the values match them
    bit for bit where plain Dijkstra can drift by rounding.
    """
    sources = list(sources)
    us = np.fromiter((u for u, _v, _w in g.edges), dtype=np.int64, count=g.m)
    vs = np.fromiter((v for _u, v, _w in g.edges), dtype=np.int64, count=g.m)
    ws = np.fromiter((w for _u, _v, w in g.edges), dtype=np.float64, count=g.m)
    heads = np.concatenate([us, vs])
    tails = np.concatenate([vs, us])
    ws2 = np.concatenate([ws, ws])
    dist = np.full((g.n, len(sources)), np.inf)
    dist[sources, np.arange(len(sources))] = 0.0
    while True:
        prev = dist.copy()
        np.minimum.at(dist, tails, dist[heads] + ws2[:, None])
        if np.array_equal(prev, dist):
            return dist.T


def le_lists_oracle(g: WeightedGraph, active, seed: int,
                    radius: float | None = None) -> list[LeList]:
    """Brute-force LE lists: per vertex, keep the running order minimum while
    sweeping the active set by (distance, key). A radius truncates each list
    to its entries at distance <= radius."""
    active = sorted(active)
    dist = relaxation_distances(g, active)
    keys = {u: perm_key(seed, PERM_LABEL, u) for u in active}
    lists = []
    for v in range(g.n):
        col = {u: float(dist[i, v]) for i, u in enumerate(active)}
        swept = sorted(active, key=lambda u: (col[u], keys[u]))
        entries = []
        best = None
        for u in swept:
            if radius is not None and col[u] > radius:
                continue
            if best is None or keys[u] < best:
                best = keys[u]
                entries.append((u, col[u]))
        lists.append(LeList(vertex=v, entries=tuple(entries)))
    return lists


class _BoundedReachProgram(NodeProgram):
    """Closest-source relaxation truncated at a distance cut.

    Each vertex keeps one (distance, parent) pair for its nearest source and
    forwards improvements only along edges that stay within the cut, so the
    exploration never leaves the cut ball and a message is a single word.
    Vertices farther than the cut from every source keep an infinite
    distance; within the cut the fixpoint distances are exact.
    """

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        is_source, self.cut = ctx.inputs
        self.dist = 0.0 if is_source else math.inf
        self.parent = -1
        if is_source:
            self._push(ctx)
        ctx.out = (self.dist, self.parent)

    def on_round(self, ctx, inbox):
        improved = False
        for frm, _ch, d in inbox:
            nd = d + ctx.weight(frm)
            if nd < self.dist:
                self.dist = nd
                self.parent = frm
                improved = True
        if improved:
            self._push(ctx)
        ctx.out = (self.dist, self.parent)

    def _push(self, ctx):
        for nb in ctx.neighbors:
            if self.dist + ctx.weight(nb) <= self.cut:
                ctx.send(nb, self.dist)


def net_iteration(engine: RoundEngine, state: NetState, width: float,
                  delta: float, seed_i: int, bounded: bool = False,
                  ) -> tuple[NetState, RoundMetrics]:
    """One admission-and-pruning pass over the active vertices.

    Rank-minimal vertices within their width-neighborhood join the net; a
    closest-source distance tree rooted at the new points then deactivates
    everything within (1+delta)*width, the new points included. In bounded
    mode both phases stop exploring at their decision radii, which changes
    no admission or pruning outcome but keeps the work proportional to the
    ball sizes rather than the graph; the returned tree then reports
    infinity beyond the cut instead of a full closest-source forest.
    """
    if not state.active:
        raise ValueError("net_iteration needs a nonempty active set")
    active = frozenset(state.active)
    cut = (1.0 + delta) * width
    perm, lists, _dh, metrics = compute_le_lists(
        engine, active, seed_i, delta, radius=width if bounded else None)
    joined = tuple(sorted(v for v in active
                          if lists[v].is_local_minimum(width)))
    # the globally rank-first active vertex has no competitor at any radius
    joined_set = set(joined)
    if bounded:
        g = engine.graph
        res = engine.run(lambda v: _BoundedReachProgram(v),
                         inputs=[(v in joined_set, cut) for v in range(g.n)])
        tree = ApproxSpt(root=joined[0], eps=delta,
                         parent=tuple(res.outputs[v][1] for v in range(g.n)),
                         dist=tuple(res.outputs[v][0] for v in range(g.n)))
        metrics = metrics.merge(res.metrics)
    else:
        tree, m = approx_spt(engine, joined[0], delta, sources=joined)
        metrics = metrics.merge(m)
    survivors = tuple(v for v in state.active
                      if v not in joined_set and tree.dist[v] > cut)
    new_state = NetState(active=survivors,
                         net=tuple(sorted(state.net + joined)),
                         iteration=state.iteration + 1,
                         tree=tree)
    return new_state, metrics


def iteration_cap(n: int) -> int:
    return max(ITERATION_CAP_FACTOR,
               math.ceil(ITERATION_CAP_FACTOR * math.log2(max(n, 2))))


def net_loop(engine: RoundEngine, g: WeightedGraph, width: float,
             delta: float, bounded: bool = False, salt: int = 0,
             ) -> tuple[NetState, RoundMetrics]:
    """Repeat admission and pruning until every vertex is settled.

    Returns the final loop state, whose net field holds the points and whose
    iteration field counts the passes. Iteration seeds derive from the engine
    seed and the salt, so a run is reproducible and callers looping over many
    widths can decorrelate the orders by salting with the loop index; if the
    loop overruns the O(log n) cap the error carries the partial state and a
    fresh engine seed retries it.
    """
    if g is not engine.graph:
        raise ValueError("engine and graph disagree; build the engine on g")
    if not width > 0:
        raise ValueError(f"width must be positive, got {width}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    state = NetState(active=tuple(range(g.n)), net=(), iteration=0)
    metrics = RoundMetrics()
    cap = iteration_cap(g.n)
    while not state.done():
        if state.iteration >= cap:
            raise NetIterationCapError(
                f"net loop still active after {cap} iterations; "
                f"retry with a fresh engine seed", state)
        seed_i = hash64(engine.seed, "net-seed", salt, state.iteration)
        state, m = net_iteration(engine, state, width, delta, seed_i,
                                 bounded=bounded)
        metrics = metrics.merge(m)
    return state, metrics


def construct_net(engine: RoundEngine, g: WeightedGraph, width: float,
                  delta: float, bounded: bool = False, salt: int = 0,
                  ) -> tuple[tuple, RoundMetrics]:
    """The net points alone; see net_loop for the stateful form."""
    state, metrics = net_loop(engine, g, width, delta,
                              bounded=bounded, salt=salt)
    return state.net, metrics


# ---------------------------------------------------------------------------
# centralized decay experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HalvingStats:
    """Active-pair decay across seeds: counts per iteration and pooled ratios."""

    width: float
    delta: float
    seeds: int
    counts: tuple           # one tuple of |pairs| per seed, index = iteration
    iterations: tuple       # loop length per seed

    def pooled_ratios(self) -> tuple:
        """Per-transition mean ratio sum(next)/sum(prev) across seeds."""
        depth = max((len(c) for c in self.counts), default=0)
        ratios = []
        for i in range(depth - 1):
            prev = sum(c[i] for c in self.counts if len(c) > i)
            nxt = sum(c[i + 1] for c in self.counts if len(c) > i + 1)
            if prev > 0:
                ratios.append(nxt / prev)
        return tuple(ratios)

    def worst_ratio(self) -> float:
        return max(self.pooled_ratios(), default=0.0)

    def max_iterations(self) -> int:
        return max(self.iterations, default=0)

    def to_json(self) -> dict:
        return {"width": self.width, "delta": self.delta, "seeds": self.seeds,
                "ratios": list(self.pooled_ratios()),
                "max_iterations": self.max_iterations()}


def halving_experiment(g: WeightedGraph, width: float, delta: float,
                       seeds) -> HalvingStats:
    """Centralized replay of the net loop counting surviving close pairs.

    For each seed the loop runs with exact distances and the same shared
    order derivation as the engine path; the statistic is the number of
    still-active vertex pairs within the width at each iteration, whose
    pooled per-iteration decay the analysis bounds by a constant factor.
    """
    if not width > 0:
        raise ValueError(f"width must be positive, got {width}")
    oracle = apsp_oracle(g)
    cap = iteration_cap(g.n)
    all_counts = []
    all_iters = []
    close = {v: [u for u in range(g.n)
                 if u != v and oracle.d(u, v) <= width] for v in range(g.n)}
    for seed in seeds:
        active = set(range(g.n))
        counts = []
        it = 0
        while active:
            if it >= cap:
                break
            counts.append(sum(1 for v in active for u in close[v]
                              if u > v and u in active))
            keys = {v: perm_key(hash64(seed, "net-seed", it), PERM_LABEL, v)
                    for v in active}
            joined = [v for v in active
                      if all(keys[v] <= keys[u] for u in close[v]
                             if u in active)]
            cut = (1.0 + delta) * width
            near = set(joined)
            for v in list(active):
                if any(oracle.d(v, y) <= cut for y in joined):
                    near.add(v)
            active -= near
            it += 1
        all_counts.append(tuple(counts))
        all_iters.append(it)
    return HalvingStats(width=width, delta=delta, seeds=len(all_counts),
                        counts=tuple(all_counts), iterations=tuple(all_iters))
