"""Distributed minimum spanning tree fragments with bounded size and depth.

Two stages. First, fragments grow by merging along their minimum outgoing
edge under the (weight, smaller id, larger id) total order. Growth proceeds
in phases separated by global quiescence. In each phase a fragment floods a
probe down its tree, every member asks its neighbors which fragment they are
in, the minimum outgoing candidate is converged back to the fragment root,
and a per-phase shared coin decides which fragments attach: a tails fragment
attaches into a heads fragment, and any fragment may attach into a frozen one
while the resulting depth stays bounded. A fragment freezes once its vertex
count or its depth crosses thresholds near sqrt(n)/2 and sqrt(n)/4, which
caps the number of fragments near 4*sqrt(n) and keeps each fragment tree's
hop diameter below 4*sqrt(n).

Concurrent merges in one phase are safe: requests carry the requester's
current fragment id so a request that became internal is refused, mutual
requests across the shared minimum edge resolve toward the smaller endpoint
id, and re-root floods follow tree edges in delivery order so later floods
overwrite earlier ones consistently.

Second, the remaining inter-fragment tree edges are chosen centrally: the
global root repeatedly collects one candidate minimum outgoing edge per
fragment over the BFS tree, contracts components, and finally broadcasts the
chosen external edges so every vertex can build the fragment tree locally and
re-root its fragment at the designated endpoint.

Internal edges plus external edges equal the unique minimum spanning tree of
the (optionally restricted) edge set under the tie-break order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .engine import NodeProgram, RoundEngine, RoundMetrics
from .primitives import BfsTree, broadcast_from_root, build_bfs_tree, collect_to_root
from .rng import hash64

# message tags for the growth stage
(_PROBE, _QWHO, _IAM, _MOE_UP, _GO, _REQ,
 _OK, _NO, _NOINT, _REROOT, _FREEZE) = range(11)


def growth_thresholds(n: int) -> tuple[int, int, int, int]:
    """(size_cap, radius_cap, depth_guard, phase_cap) for an n-vertex graph.

    depth_guard + 2 * radius_cap is at most 2 * ceil(sqrt(n)), so admitted
    attaches keep every fragment's depth below 2 * ceil(sqrt(n)) and the hop
    diameter below 4 * ceil(sqrt(n)). Both freeze thresholds imply frozen
    fragments hold at least about ceil(sqrt(n)) / 4 vertices, so about
    4 * sqrt(n) fragments can exist.
    """
    s = math.isqrt(max(1, n - 1)) + 1
    radius_cap = max(1, s // 4)
    size_cap = max(2, s // 2)
    depth_guard = 2 * s - 2 * radius_cap
    phase_cap = 8 * max(1, math.ceil(math.log2(max(2, n)))) + 8
    return size_cap, radius_cap, depth_guard, phase_cap


@dataclass
class FragmentDecomposition:
    """Harvested global view of the per-vertex fragment state."""
    root: int
    frag_of: tuple[int, ...]          # designated fragment root id per vertex
    parent_in_frag: tuple[int, ...]   # -1 at fragment roots
    depth_in_frag: tuple[int, ...]
    roots: tuple[int, ...]            # sorted designated roots, equal to frag ids
    external_edges: tuple[tuple[int, int, int, int, float], ...]  # (u, v, frag_u, frag_v, w)
    frag_parent: dict                 # fragment tree, frag -> parent frag (-1 at root)

    @property
    def fragment_count(self) -> int:
        return len(self.roots)

    def members(self, frag: int) -> list[int]:
        return [v for v in range(len(self.frag_of)) if self.frag_of[v] == frag]

    def internal_edges(self) -> list[tuple[int, int]]:
        return [(v, p) for v, p in enumerate(self.parent_in_frag) if p >= 0]

    def tree_edges(self) -> set[tuple[int, int]]:
        edges = {(min(u, v), max(u, v)) for u, v in self.internal_edges()}
        edges.update((min(u, v), max(u, v)) for u, v, _, _, _ in self.external_edges)
        return edges

    def frag_children(self) -> dict:
        kids: dict[int, list[int]] = {f: [] for f in self.roots}
        for f, p in self.frag_parent.items():
            if p >= 0:
                kids[p].append(f)
        for f in kids:
            kids[f].sort()
        return kids

    def hop_diameter(self, frag: int) -> int:
        """Hop diameter of the fragment's internal tree (double sweep)."""
        members = self.members(frag)
        adj: dict[int, list[int]] = {v: [] for v in members}
        for v in members:
            p = self.parent_in_frag[v]
            if p >= 0:
                adj[v].append(p)
                adj[p].append(v)

        def far(s):
            seen = {s: 0}
            frontier = [s]
            last, dist = s, 0
            while frontier:
                nxt = []
                for u in frontier:
                    for w in adj[u]:
                        if w not in seen:
                            seen[w] = seen[u] + 1
                            if seen[w] > dist:
                                dist, last = seen[w], w
                            nxt.append(w)
                frontier = nxt
            return last, dist

        a, _ = far(members[0])
        _, d = far(a)
        return d

    def to_json(self) -> dict:
        return {"root": self.root,
                "fragment_count": self.fragment_count,
                "frag_of": list(self.frag_of),
                "parent_in_frag": list(self.parent_in_frag),
                "depth_in_frag": list(self.depth_in_frag),
                "roots": list(self.roots),
                "external_edges": [list(e) for e in self.external_edges],
                "frag_parent": {str(f): p for f, p in self.frag_parent.items()}}


class _GrowthProgram(NodeProgram):
    """One vertex of the phase-synchronized fragment growth stage."""

    def __init__(self, node: int, seed: int, size_cap: int, radius_cap: int,
                 depth_guard: int, phase_cap: int, allowed):
        self.node = node
        self.seed = seed
        self.size_cap = size_cap
        self.radius_cap = radius_cap
        self.depth_guard = depth_guard
        self.phase_cap = phase_cap
        self.allowed = allowed  # neighbor ids usable for merging, None = all

        self.frag = node
        self.parent = -1
        self.children: list[int] = []
        self.depth = 0
        self.frozen = False
        self.phase = -1

        # per-phase scratch
        self._replies: dict[int, tuple[int, bool]] = {}
        self._pending_kids: set[int] = set()
        self._cand: tuple | None = None   # (w, lo, hi, target_frag, target_frozen)
        self._cand_from = -1              # child that supplied the winner, -1 = local
        self._local_target = -1           # neighbor across the local winner edge
        self._size = 0
        self._maxdepth = 0
        self._replied = False
        self._req_sent_to = -1
        self._ignore_ok = False

    # ---------- helpers ----------

    def _neigh(self, ctx):
        if self.allowed is None:
            return ctx.neighbors
        return [u for u in ctx.neighbors if u in self.allowed]

    def _coin(self, frag: int) -> bool:
        return hash64(self.seed, "coin", self.phase, frag) & 1 == 1

    def _publish(self, ctx):
        ctx.out = (self.frag, self.parent, self.depth,
                   tuple(sorted(self.children)), self.frozen)

    def _tree_neighbors(self) -> list[int]:
        out = list(self.children)
        if self.parent >= 0:
            out.append(self.parent)
        return out

    # ---------- phase driver ----------

    def on_start(self, ctx):
        self._publish(ctx)

    def on_quiet(self, ctx):
        self.phase += 1
        self._req_sent_to = -1
        self._ignore_ok = False
        if self.parent == -1 and not self.frozen:
            if self.phase >= self.phase_cap:
                self._freeze(ctx)
            else:
                self._begin(ctx)

    def _begin(self, ctx):
        self._replies = {}
        self._cand = None
        self._cand_from = -1
        self._local_target = -1
        self._size = 1
        self._maxdepth = self.depth
        self._pending_kids = set(self.children)
        self._replied = False
        for c in self.children:
            ctx.send(c, (_PROBE, self.phase))
        neigh = self._neigh(ctx)
        for u in neigh:
            ctx.send(u, (_QWHO,))
        if not neigh and not self._pending_kids:
            self._report(ctx)

    def on_round(self, ctx, inbox):
        for frm, _ch, msg in inbox:
            tag = msg[0]
            if tag == _QWHO:
                ctx.send(frm, (_IAM, self.frag, self.frozen))
            elif tag == _IAM:
                self._replies[frm] = (msg[1], msg[2])
                self._maybe_report(ctx)
            elif tag == _PROBE:
                self.phase = msg[1]
                self._begin(ctx)
            elif tag == _MOE_UP:
                _t, cand, size, maxd = msg
                self._pending_kids.discard(frm)
                self._size += size
                self._maxdepth = max(self._maxdepth, maxd)
                if cand is not None and (self._cand is None
                                         or tuple(cand)[:3] < self._cand[:3]):
                    self._cand = tuple(cand)
                    self._cand_from = frm
                self._maybe_report(ctx)
            elif tag == _GO:
                self._route_go(ctx, msg[1])
            elif tag == _REQ:
                self._handle_req(ctx, frm, msg[1], msg[2])
            elif tag == _OK:
                self._handle_ok(ctx, frm, msg)
            elif tag == _NO:
                self._req_sent_to = -1
                self._freeze(ctx)
            elif tag == _NOINT:
                self._req_sent_to = -1
            elif tag == _REROOT:
                self._adopt(ctx, frm, msg[1], msg[2], msg[3])
            elif tag == _FREEZE:
                if not self.frozen:
                    self.frozen = True
                    self._publish(ctx)
                    for u in self._tree_neighbors():
                        if u != frm:
                            ctx.send(u, (_FREEZE,))

    # ---------- candidate selection ----------

    def _maybe_report(self, ctx):
        if self._replied:
            return
        if len(self._replies) < len(self._neigh(ctx)) or self._pending_kids:
            return
        self._report(ctx)

    def _report(self, ctx):
        self._replied = True
        local = None
        for u in self._neigh(ctx):
            ufrag, ufrozen = self._replies[u]
            if ufrag != self.frag:
                key = (ctx.weight(u), min(self.node, u), max(self.node, u),
                       ufrag, ufrozen)
                if local is None or key[:3] < local[:3]:
                    local = key
        if local is not None and (self._cand is None or local[:3] < self._cand[:3]):
            self._cand = local
            self._cand_from = -1
            self._local_target = local[2] if local[1] == self.node else local[1]
        if self.parent >= 0:
            ctx.send(self.parent, (_MOE_UP, self._cand, self._size, self._maxdepth))
        else:
            self._decide(ctx)

    def _decide(self, ctx):
        radius = self._maxdepth - self.depth
        if self._size >= self.size_cap or radius >= self.radius_cap:
            self._freeze(ctx)
            return
        if self._cand is None:
            self._freeze(ctx)   # no outgoing edge left anywhere
            return
        tfrag, tfrozen = self._cand[3], self._cand[4]
        if tfrozen or (self._coin(tfrag) and not self._coin(self.frag)):
            self._route_go(ctx, radius)

    def _route_go(self, ctx, radius: int):
        if self._cand_from >= 0:
            ctx.send(self._cand_from, (_GO, radius))
        else:
            self._req_sent_to = self._local_target
            ctx.send(self._local_target, (_REQ, radius, self.frag))

    # ---------- attaching ----------

    def _accept(self, ctx, frm: int):
        ctx.send(frm, (_OK, self.frag, self.depth, self.frozen))
        if frm not in self.children:
            self.children.append(frm)
        self._publish(ctx)

    def _handle_req(self, ctx, frm: int, radius: int, req_frag: int):
        if req_frag == self.frag:
            ctx.send(frm, (_NOINT,))
            return
        if frm == self._req_sent_to:
            # mutual request across the shared minimum edge
            if self.node < frm:
                self._ignore_ok = True
                self._accept(ctx, frm)
            return
        if self.frozen and self.depth + 1 + 2 * radius > self.depth_guard:
            ctx.send(frm, (_NO,))
            return
        self._accept(ctx, frm)

    def _handle_ok(self, ctx, frm: int, msg):
        self._req_sent_to = -1
        if self._ignore_ok:
            self._ignore_ok = False
            return
        self._adopt(ctx, frm, msg[1], msg[2], msg[3])

    def _adopt(self, ctx, frm: int, newfrag: int, pdepth: int, pfrozen: bool):
        old = self._tree_neighbors()
        self.frag = newfrag
        self.parent = frm
        self.depth = pdepth + 1
        self.frozen = pfrozen
        self.children = [u for u in old if u != frm]
        for u in self.children:
            ctx.send(u, (_REROOT, newfrag, self.depth, pfrozen))
        self._publish(ctx)

    def _freeze(self, ctx):
        if not self.frozen:
            self.frozen = True
            self._publish(ctx)
            for u in self._tree_neighbors():
                ctx.send(u, (_FREEZE,))


class _MoePhase2Program(NodeProgram):
    """One component-merge iteration: exchange component ids with neighbors,
    then converge the fragment's minimum outgoing candidate to its root."""

    def __init__(self, node: int, allowed):
        self.node = node
        self.allowed = allowed
        self.frag = self.parent = self.comp = None
        self.children = ()
        self._replies: dict[int, tuple[int, int]] = {}
        self._pending: set[int] = set()
        self._cand: tuple | None = None   # (w, lo, hi, u, v, frag_u, frag_v)
        self._done = False

    def _neigh(self, ctx):
        if self.allowed is None:
            return ctx.neighbors
        return [u for u in ctx.neighbors if u in self.allowed]

    def on_start(self, ctx):
        self.frag, self.parent, self.children, self.comp = ctx.inputs
        self._pending = set(self.children)
        neigh = self._neigh(ctx)
        for u in neigh:
            ctx.send(u, (self.comp, self.frag))
        if not neigh and not self._pending:
            self._finish(ctx)

    def on_round(self, ctx, inbox):
        for frm, ch, msg in inbox:
            if ch == 0:
                self._replies[frm] = msg
            else:
                if msg is not None and (self._cand is None
                                        or tuple(msg) < self._cand):
                    self._cand = tuple(msg)
                self._pending.discard(frm)
        if not self._done and not self._pending \
                and len(self._replies) >= len(self._neigh(ctx)):
            self._finish(ctx)

    def _finish(self, ctx):
        self._done = True
        for u in self._neigh(ctx):
            ucomp, ufrag = self._replies[u]
            if ucomp != self.comp:
                w = ctx.weight(u)
                key = (w, min(self.node, u), max(self.node, u),
                       self.node, u, self.frag, ufrag)
                if self._cand is None or key < self._cand:
                    self._cand = key
        if self.parent >= 0:
            ctx.send(self.parent, self._cand, channel=1)
        else:
            ctx.out = self._cand


class _FinalRerootProgram(NodeProgram):
    """Re-root each fragment at its designated vertex and rename the fragment."""

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        _frag, parent, children, designated = ctx.inputs
        self.parent = parent
        self.children = list(children)
        self.newfrag = designated
        if designated == self.node:
            ctx.out = (designated, -1, 0)
            for u in self.children + ([parent] if parent >= 0 else []):
                ctx.send(u, 0)
        else:
            ctx.out = None

    def on_round(self, ctx, inbox):
        if ctx.out is not None:
            return
        frm, _ch, pdepth = inbox[0]
        ctx.out = (self.newfrag, frm, pdepth + 1)
        for u in self.children + ([self.parent] if self.parent >= 0 else []):
            if u != frm:
                ctx.send(u, pdepth + 1)


def compute_fragments(engine: RoundEngine, root: int = 0,
                      tree: BfsTree | None = None, allowed=None,
                      seed: int | None = None,
                      ) -> tuple[FragmentDecomposition, RoundMetrics]:
    """Build the bounded fragment decomposition; see the module docstring.

    allowed optionally restricts merge edges to a per-vertex neighbor set
    (communication still uses every edge); the restricted subgraph must span
    all vertices. The result's internal plus external edges form the minimum
    spanning tree of the restricted edge set under the global tie-break order.
    """
    g = engine.graph
    n = g.n
    seed = engine.seed if seed is None else seed
    size_cap, radius_cap, depth_guard, phase_cap = growth_thresholds(n)

    res = engine.run(lambda v: _GrowthProgram(
        v, seed, size_cap, radius_cap, depth_guard, phase_cap,
        None if allowed is None else allowed[v]))
    metrics = res.metrics
    state = list(res.outputs)  # (frag, parent, depth, children, frozen)

    if tree is None:
        tree, m = build_bfs_tree(engine, root)
        metrics = metrics.merge(m)

    # central completion over the BFS tree
    frag_of = [s[0] for s in state]
    frags = sorted(set(frag_of))
    comp = {f: f for f in frags}
    external: list[tuple] = []

    def find(f):
        while comp[f] != f:
            comp[f] = comp[comp[f]]
            f = comp[f]
        return f

    # Each iteration broadcasts the external edges chosen so far but not yet
    # announced; every vertex then derives the current component of its own
    # fragment with the same union-find the coordinator runs. By the end all
    # vertices hold the complete external edge list, which is exactly the
    # fragment-tree structure they need to finish locally.
    announced = 0
    while True:
        comp_ids = {f: find(f) for f in frags}
        if len(set(comp_ids.values())) == 1:
            break
        if len(external) > announced:
            _, m = broadcast_from_root(
                engine, tree, [tuple(e) for e in external[announced:]])
            metrics = metrics.merge(m)
            announced = len(external)
        inputs = []
        for v in range(n):
            frag, parent, _depth, children, _frozen = state[v]
            inputs.append((frag, parent, children, comp_ids[frag]))
        res = engine.run(lambda v: _MoePhase2Program(
            v, None if allowed is None else allowed[v]), inputs=inputs)
        metrics = metrics.merge(res.metrics)
        items: list[list] = [[] for _ in range(n)]
        for v in range(n):
            if state[v][1] == -1 and res.outputs[v] is not None:
                items[v] = [(state[v][0], tuple(res.outputs[v]))]
        cands, m = collect_to_root(engine, tree, items)
        metrics = metrics.merge(m)
        best: dict[int, tuple] = {}
        for frag, cand in cands:
            c = comp_ids[frag]
            if c not in best or cand < best[c]:
                best[c] = cand
        progress = False
        for c, cand in sorted(best.items()):
            w, _lo, _hi, u, v, frag_u, frag_v = cand
            ru, rv = find(frag_u), find(frag_v)
            if ru != rv:
                comp[ru] = rv
                external.append((u, v, frag_u, frag_v, w))
                progress = True
        if not progress:
            raise RuntimeError("fragment completion stalled")

    # announce the edges chosen in the final iteration
    if len(external) > announced:
        _, m = broadcast_from_root(
            engine, tree, [tuple(e) for e in external[announced:]])
        metrics = metrics.merge(m)

    root_frag = frag_of[root]
    fr_adj: dict[int, list[tuple[int, int]]] = {f: [] for f in frags}
    for u, v, fu, fv, _w in external:
        fr_adj[fu].append((fv, v))
        fr_adj[fv].append((fu, u))
    frag_parent_old: dict[int, int] = {root_frag: -1}
    designated_old: dict[int, int] = {root_frag: root}
    stack = [root_frag]
    while stack:
        f = stack.pop()
        for nf, nv in fr_adj[f]:
            if nf not in frag_parent_old:
                frag_parent_old[nf] = f
                designated_old[nf] = nv   # endpoint inside the child fragment
                stack.append(nf)
    if len(frag_parent_old) != len(frags):
        raise RuntimeError("fragment tree incomplete")

    inputs = []
    for v in range(n):
        frag, parent, _depth, children, _frozen = state[v]
        inputs.append((frag, parent, children, designated_old[frag]))
    res = engine.run(lambda v: _FinalRerootProgram(v), inputs=inputs)
    metrics = metrics.merge(res.metrics)

    rename = {old: designated_old[old] for old in frags}
    frag_parent = {}
    for old, p in frag_parent_old.items():
        frag_parent[rename[old]] = rename[p] if p >= 0 else -1
    ext_final = tuple((u, v, rename[fu], rename[fv], w)
                      for u, v, fu, fv, w in external)

    deco = FragmentDecomposition(
        root=root,
        frag_of=tuple(res.outputs[v][0] for v in range(n)),
        parent_in_frag=tuple(res.outputs[v][1] for v in range(n)),
        depth_in_frag=tuple(res.outputs[v][2] for v in range(n)),
        roots=tuple(sorted(rename.values())),
        external_edges=ext_final,
        frag_parent=frag_parent,
    )
    return deco, metrics
