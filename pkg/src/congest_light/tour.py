"""Distributed Euler tour of the minimum spanning tree.

The traversal is the preorder walk of the rooted tree with children visited
in ascending id order; every edge is walked twice, so the walk has 2n-1
vertex appearances, and each appearance has a weighted visit time plus an
integer position index.

The computation runs in three stages, each parallel across fragments:

1. local lengths: bottom-up within each fragment, a vertex folds its
   fragment-internal children into twice the weight of its local subtree;
2. global lengths: fragment roots ship their local lengths to the
   coordinator, the list is broadcast, every vertex derives the global
   subtree length of every fragment root locally, and a second bottom-up
   pass folds whole-tree children (internal plus hanging fragment roots);
3. intervals: top-down within each fragment, a vertex splits its interval
   among its children; hanging fragment roots receive their interval but do
   not restart their own assignment. The per-fragment start shifts are then
   assembled at the coordinator from one streamed pair per fragment and
   re-broadcast.

All times are computed in exact integer arithmetic: weights at least 1 are
dyadic rationals, so weight * 2**52 is an exact integer. The distributed
result is therefore bit-identical to the centralized reference regardless of
summation order, and the total length equals exactly twice the tree weight.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .engine import NodeProgram, RoundEngine, RoundMetrics
from .fragments import FragmentDecomposition
from .graphs import WeightedGraph, mst_oracle
from .primitives import (BfsTree, broadcast_from_root, build_bfs_tree,
                         collect_to_root)

SCALE_BITS = 52
SCALE = 1 << SCALE_BITS


def scaled(w: float) -> int:
    """Exact integer representation of a weight, w * 2**52.

    Every float at least 1 has an exact dyadic expansion whose denominator
    divides 2**52, so this conversion is lossless.
    """
    fr = Fraction(w)
    num = fr.numerator * SCALE
    if num % fr.denominator:
        raise ValueError(f"weight {w} is not representable at scale 2**{SCALE_BITS}")
    return num // fr.denominator


@dataclass(frozen=True)
class Appearance:
    index: int        # position in the walk, 0 .. 2n-2
    time: float       # weighted visit time
    time_int: int     # exact scaled time (time = time_int / 2**52)


@dataclass
class TourView:
    """Everything one vertex ends up knowing about its tour appearances."""
    vertex: int
    parent: int                       # tree parent, -1 at the root
    rank: int                         # position among parent's children, -1 at root
    tree_children: tuple[int, ...]    # ascending
    appearances: tuple[Appearance, ...]
    prev_vertex: tuple[int | None, ...]   # walk neighbor one index earlier
    next_vertex: tuple[int | None, ...]   # walk neighbor one index later


@dataclass
class EulerTour:
    root: int
    n: int
    views: tuple[TourView, ...]
    length_int: int                # scaled total weighted length
    index_length: int              # 2n-2

    @property
    def length(self) -> float:
        return self.length_int / SCALE

    def appearance_count(self) -> int:
        return sum(len(v.appearances) for v in self.views)

    def sequence(self) -> list[int]:
        """The walk as a vertex sequence, reconstructed from appearance indices."""
        seq: list[int] = [-1] * (self.index_length + 1)
        for view in self.views:
            for app in view.appearances:
                seq[app.index] = view.vertex
        return seq

    def to_json(self) -> dict:
        return {
            "root": self.root,
            "n": self.n,
            "length": self.length,
            "index_length": self.index_length,
            "appearances": {
                str(v.vertex): [[a.index, a.time] for a in v.appearances]
                for v in self.views
            },
        }


@dataclass
class TourLengths:
    """Per-vertex local (fragment-internal) and global subtree tour lengths."""
    local_int: tuple[int, ...]
    local_idx: tuple[int, ...]
    global_int: tuple[int, ...] | None = None
    global_idx: tuple[int, ...] | None = None
    root_global: dict | None = None       # fragment root -> (g_int, g_idx)
    child_global: tuple | None = None     # per vertex: ((child, g_int, g_idx), ...)
    shifts: dict | None = None            # fragment root -> (shift_int, shift_idx)

    def local_length(self, v: int) -> float:
        return self.local_int[v] / SCALE

    def global_length(self, v: int) -> float:
        if self.global_int is None:
            raise ValueError("global lengths not computed yet")
        return self.global_int[v] / SCALE


# ---------------------------------------------------------------------------
# tree structure helpers derived from the fragment decomposition
# ---------------------------------------------------------------------------


def _tree_structure(deco: FragmentDecomposition):
    """Per-vertex internal children, hanging external children, tree parents."""
    n = len(deco.frag_of)
    internal: list[list[int]] = [[] for _ in range(n)]
    for v, p in enumerate(deco.parent_in_frag):
        if p >= 0:
            internal[p].append(v)
    for kids in internal:
        kids.sort()
    ext: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    tparent = [-1] * n
    for v, p in enumerate(deco.parent_in_frag):
        if p >= 0:
            tparent[v] = p
    for u, v, fu, fv, w in deco.external_edges:
        if deco.frag_parent.get(fv) == fu:
            child_root, attach = fv, u
        else:
            child_root, attach = fu, v
        if child_root not in (u, v):
            raise RuntimeError("external edge endpoint does not name its fragment")
        if attach == child_root:
            attach = u if child_root == v else v
        ext[attach].append((child_root, w))
        tparent[child_root] = attach
    for lst in ext:
        lst.sort()
    return internal, ext, tparent


# ---------------------------------------------------------------------------
# node programs
# ---------------------------------------------------------------------------


class _LenUpProgram(NodeProgram):
    """Bottom-up within a fragment: fold children plus a local base value."""

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        self.parent, self.children, self.base = ctx.inputs
        self.vals: dict[int, tuple[int, int]] = {}
        self.pending = set(self.children)
        if not self.pending:
            self._up(ctx)

    def on_round(self, ctx, inbox):
        for frm, _ch, msg in inbox:
            self.vals[frm] = (msg[0], msg[1])
            self.pending.discard(frm)
        if not self.pending and ctx.out is None:
            self._up(ctx)

    def _up(self, ctx):
        tot_w, tot_u = self.base
        harvest = []
        for c in self.children:
            vw, vu = self.vals[c]
            tot_w += vw + 2 * scaled(ctx.weight(c))
            tot_u += vu + 2
            harvest.append((c, vw, vu))
        ctx.out = (tot_w, tot_u, tuple(harvest))
        if self.parent >= 0:
            ctx.send(self.parent, (tot_w, tot_u))


class _IntervalsProgram(NodeProgram):
    """Top-down within a fragment: split the interval among tree children.

    Fragment roots start at local time zero and never restart on the
    interval that later arrives from their tree parent; that arrival is
    recorded as the root's start within the parent fragment.
    """

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        self.is_frag_root, self.children = ctx.inputs
        self.start: tuple[int, int] | None = None
        self.outer: tuple[int, int] | None = None   # start within parent fragment
        self.rank = -1
        if self.is_frag_root:
            self._assign(ctx, 0, 0)

    def on_round(self, ctx, inbox):
        for frm, _ch, msg in inbox:
            bw, bu, rank = msg
            self.rank = rank
            if self.is_frag_root:
                self.outer = (bw, bu)
            else:
                self._assign(ctx, bw, bu)
            self._publish(ctx)

    def _assign(self, ctx, aw: int, au: int):
        self.start = (aw, au)
        cur_w, cur_u = aw, au
        for rank, (c, gw, gu) in enumerate(self.children):
            w = scaled(ctx.weight(c))
            ctx.send(c, (cur_w + w, cur_u + 1, rank))
            cur_w += gw + 2 * w
            cur_u += gu + 2
        self._publish(ctx)

    def _publish(self, ctx):
        ctx.out = (self.start, self.outer, self.rank)


# ---------------------------------------------------------------------------
# stage drivers
# ---------------------------------------------------------------------------


def local_tour_lengths(engine: RoundEngine, deco: FragmentDecomposition,
                       ) -> tuple[TourLengths, RoundMetrics]:
    """Stage 1: fragment-internal subtree tour lengths, all fragments in parallel."""
    internal, _ext, _tp = _tree_structure(deco)
    n = len(deco.frag_of)
    inputs = [(deco.parent_in_frag[v], tuple(internal[v]), (0, 0)) for v in range(n)]
    res = engine.run(lambda v: _LenUpProgram(v), inputs=inputs)
    return TourLengths(
        local_int=tuple(res.outputs[v][0] for v in range(n)),
        local_idx=tuple(res.outputs[v][1] for v in range(n)),
    ), res.metrics


def global_tour_lengths(engine: RoundEngine, deco: FragmentDecomposition,
                        lengths: TourLengths, tree: BfsTree | None = None,
                        ) -> tuple[TourLengths, RoundMetrics]:
    """Stage 2: whole-tree subtree lengths.

    Fragment roots stream their local lengths to the coordinator, the list is
    broadcast, every vertex locally derives each root's global length from the
    fragment tree, and one more bottom-up pass folds internal children
    together with locally hanging fragment roots.
    """
    internal, ext, _tp = _tree_structure(deco)
    n = len(deco.frag_of)
    metrics = RoundMetrics()
    if tree is None:
        tree, m = build_bfs_tree(engine, deco.root)
        metrics = metrics.merge(m)

    items: list[list] = [[] for _ in range(n)]
    for r in deco.roots:
        items[r] = [(r, (lengths.local_int[r], lengths.local_idx[r]))]
    got, m = collect_to_root(engine, tree, items)
    metrics = metrics.merge(m)
    _, m = broadcast_from_root(engine, tree, [(r, lw, lu) for r, (lw, lu) in got])
    metrics = metrics.merge(m)

    # every vertex can now compute each fragment root's global length locally
    root_local = {r: (lw, lu) for r, (lw, lu) in got}
    kids = deco.frag_children()
    root_global: dict[int, tuple[int, int]] = {}

    def fill(f: int):
        stack = [(f, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                gw, gu = root_local[node]
                for c in kids[node]:
                    cw, cu = root_global[c]
                    ew = scaled(_ext_weight[(node, c)])
                    gw += cw + 2 * ew
                    gu += cu + 2
                root_global[node] = (gw, gu)
            else:
                stack.append((node, True))
                for c in kids[node]:
                    stack.append((c, False))

    _ext_weight = {}
    for u, v, fu, fv, w in deco.external_edges:
        if deco.frag_parent.get(fv) == fu:
            _ext_weight[(fu, fv)] = w
        else:
            _ext_weight[(fv, fu)] = w
    root_frag = deco.frag_of[deco.root]
    fill(root_frag)

    inputs = []
    for v in range(n):
        base_w = base_u = 0
        for r, w in ext[v]:
            gw, gu = root_global[r]
            base_w += gw + 2 * scaled(w)
            base_u += gu + 2
        inputs.append((deco.parent_in_frag[v], tuple(internal[v]), (base_w, base_u)))
    res = engine.run(lambda v: _LenUpProgram(v), inputs=inputs)
    metrics = metrics.merge(res.metrics)

    child_global = []
    for v in range(n):
        per = {c: (gw, gu) for c, gw, gu in res.outputs[v][2]}
        for r, _w in ext[v]:
            per[r] = root_global[r]
        child_global.append(tuple((c,) + per[c] for c in sorted(per)))
    return TourLengths(
        local_int=lengths.local_int,
        local_idx=lengths.local_idx,
        global_int=tuple(res.outputs[v][0] for v in range(n)),
        global_idx=tuple(res.outputs[v][1] for v in range(n)),
        root_global=root_global,
        child_global=tuple(child_global),
    ), metrics


def dfs_intervals(engine: RoundEngine, deco: FragmentDecomposition,
                  lengths: TourLengths, tree: BfsTree | None = None,
                  ) -> tuple[EulerTour, RoundMetrics]:
    """Stage 3: per-fragment interval assignment, shift assembly, appearances."""
    if lengths.child_global is None:
        raise ValueError("global lengths not computed yet")
    _internal, _ext, tparent = _tree_structure(deco)
    n = len(deco.frag_of)
    g = engine.graph
    metrics = RoundMetrics()
    if tree is None:
        tree, m = build_bfs_tree(engine, deco.root)
        metrics = metrics.merge(m)

    is_root = [deco.parent_in_frag[v] == -1 for v in range(n)]
    inputs = [(is_root[v], lengths.child_global[v]) for v in range(n)]
    res = engine.run(lambda v: _IntervalsProgram(v), inputs=inputs)
    metrics = metrics.merge(res.metrics)

    # shifts: each fragment root streams its start within the parent fragment
    items: list[list] = [[] for _ in range(n)]
    for r in deco.roots:
        outer = res.outputs[r][1]
        if outer is not None:
            items[r] = [(r, outer)]
    got, m = collect_to_root(engine, tree, items)
    metrics = metrics.merge(m)
    outer_of = {r: val for r, val in got}
    shifts: dict[int, tuple[int, int]] = {deco.frag_of[deco.root]: (0, 0)}
    kids = deco.frag_children()
    stack = [deco.frag_of[deco.root]]
    while stack:
        f = stack.pop()
        sw, su = shifts[f]
        for c in kids[f]:
            bw, bu = outer_of[c]
            shifts[c] = (sw + bw, su + bu)
            stack.append(c)
    _, m = broadcast_from_root(
        engine, tree, [(f, sw, su) for f, (sw, su) in sorted(shifts.items())])
    metrics = metrics.merge(m)

    # local assembly of appearances
    views = []
    for v in range(n):
        start, _outer, rank = res.outputs[v]
        sw, su = shifts[deco.frag_of[v]]
        aw, au = sw + start[0], su + start[1]
        apps = [Appearance(index=au, time=aw / SCALE, time_int=aw)]
        prevs: list[int | None] = [tparent[v] if tparent[v] >= 0 else None]
        nexts: list[int | None] = []
        child_ids = []
        for c, gw, gu in lengths.child_global[v]:
            child_ids.append(c)
            w = scaled(g.weight(v, c))
            aw += gw + 2 * w
            au += gu + 2
            apps.append(Appearance(index=au, time=aw / SCALE, time_int=aw))
            nexts.append(c)
            prevs.append(c)
        nexts.append(tparent[v] if tparent[v] >= 0 else None)
        views.append(TourView(
            vertex=v, parent=tparent[v], rank=rank,
            tree_children=tuple(child_ids),
            appearances=tuple(apps),
            prev_vertex=tuple(prevs), next_vertex=tuple(nexts)))

    lengths.shifts = shifts
    root_frag = deco.frag_of[deco.root]
    total_int = lengths.root_global[root_frag][0] if lengths.root_global else 0
    return EulerTour(root=deco.root, n=n, views=tuple(views),
                     length_int=total_int, index_length=2 * n - 2), metrics


def unweighted_indices(engine: RoundEngine, deco: FragmentDecomposition,
                       lengths: TourLengths, tree: BfsTree | None = None,
                       ) -> tuple[tuple[tuple[int, ...], ...], RoundMetrics]:
    """Integer walk positions per vertex, the interval pipeline at unit weight."""
    tour, metrics = dfs_intervals(engine, deco, lengths, tree=tree)
    return tuple(tuple(a.index for a in view.appearances)
                 for view in tour.views), metrics


def euler_tour(engine: RoundEngine, deco: FragmentDecomposition,
               tree: BfsTree | None = None,
               ) -> tuple[EulerTour, TourLengths, RoundMetrics]:
    """All three stages composed."""
    metrics = RoundMetrics()
    if tree is None:
        tree, m = build_bfs_tree(engine, deco.root)
        metrics = metrics.merge(m)
    lengths, m = local_tour_lengths(engine, deco)
    metrics = metrics.merge(m)
    lengths, m = global_tour_lengths(engine, deco, lengths, tree=tree)
    metrics = metrics.merge(m)
    tour, m = dfs_intervals(engine, deco, lengths, tree=tree)
    metrics = metrics.merge(m)
    return tour, lengths, metrics


# ---------------------------------------------------------------------------
# centralized reference
# ---------------------------------------------------------------------------


def euler_tour_oracle(g: WeightedGraph, root: int = 0) -> EulerTour:
    """Centralized preorder walk of the minimum spanning tree.

    Uses the same exact integer arithmetic as the distributed pipeline, so
    results agree bit for bit.
    """
    mst = mst_oracle(g, root=root)
    n = g.n
    wint: dict[tuple[int, int], int] = {}
    for u, v, w in mst.edges:
        wint[(u, v)] = wint[(v, u)] = scaled(w)

    sub_w = [0] * n
    sub_u = [0] * n
    order = []
    stack = [root]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(mst.children[v])
    for v in reversed(order):
        for c in mst.children[v]:
            sub_w[v] += sub_w[c] + 2 * wint[(v, c)]
            sub_u[v] += sub_u[c] + 2

    start_w = [0] * n
    start_u = [0] * n
    rank = [-1] * n
    views = []
    for v in order:
        aw, au = start_w[v], start_u[v]
        apps = [Appearance(index=au, time=aw / SCALE, time_int=aw)]
        prevs: list[int | None] = [mst.parent[v] if mst.parent[v] >= 0 else None]
        nexts: list[int | None] = []
        for j, c in enumerate(mst.children[v]):
            w = wint[(v, c)]
            start_w[c] = aw + w
            start_u[c] = au + 1
            rank[c] = j
            aw += sub_w[c] + 2 * w
            au += sub_u[c] + 2
            apps.append(Appearance(index=au, time=aw / SCALE, time_int=aw))
            nexts.append(c)
            prevs.append(c)
        nexts.append(mst.parent[v] if mst.parent[v] >= 0 else None)
        views.append((v, TourView(
            vertex=v, parent=mst.parent[v], rank=rank[v],
            tree_children=tuple(mst.children[v]),
            appearances=tuple(apps),
            prev_vertex=tuple(prevs), next_vertex=tuple(nexts))))
    views.sort()
    return EulerTour(root=root, n=n, views=tuple(v for _, v in views),
                     length_int=sub_w[root], index_length=2 * n - 2)
