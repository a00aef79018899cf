"""Reusable distributed building blocks: BFS tree, pipelined tree streams.

The streaming primitives move one batch of items per edge per round, packing
as many items as the word budget allows. Upward streams are merged in sorted
key order, so a parent can forward an item as soon as every child stream is
known to have passed that key; this is what gives the O(items + depth) round
shape that everything downstream leans on.
"""
from __future__ import annotations

from dataclasses import dataclass

from .engine import (NodeProgram, RoundEngine, RoundMetrics, RunResult,
                     payload_words)


class ContractError(ValueError):
    pass


# ---------- BFS tree ----------

@dataclass
class BfsTree:
    root: int
    parent: tuple[int, ...]
    depth: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]

    @property
    def max_depth(self) -> int:
        return max(self.depth)

    def to_json(self) -> dict:
        return {"root": self.root, "parent": list(self.parent),
                "depth": list(self.depth)}


class _BfsProgram(NodeProgram):
    def __init__(self, node: int, root: int):
        self.node = node
        self.root = root
        self.done = node == root

    def on_start(self, ctx):
        if self.node == self.root:
            ctx.out = (-1, 0)
            for u in ctx.neighbors:
                ctx.send(u, 0)

    def on_round(self, ctx, inbox):
        if self.done:
            return
        best_from, best_d = None, None
        for frm, _ch, d in inbox:
            if best_d is None or d < best_d or (d == best_d and frm < best_from):
                best_from, best_d = frm, d
        self.done = True
        ctx.out = (best_from, best_d + 1)
        for u in ctx.neighbors:
            if u != best_from:
                ctx.send(u, best_d + 1)


def build_bfs_tree(engine: RoundEngine, root: int = 0) -> tuple[BfsTree, RoundMetrics]:
    res = engine.run(lambda v: _BfsProgram(v, root))
    parent = []
    depth = []
    for v, out in enumerate(res.outputs):
        if out is None:
            raise ValueError(f"vertex {v} unreachable from root {root}")
        parent.append(out[0])
        depth.append(out[1])
    kids: list[list[int]] = [[] for _ in range(engine.graph.n)]
    for v, p in enumerate(parent):
        if p >= 0:
            kids[p].append(v)
    tree = BfsTree(root, tuple(parent), tuple(depth),
                   tuple(tuple(sorted(k)) for k in kids))
    return tree, res.metrics


# ---------- upward sorted streams ----------

class _UpStream:
    """Per-node merge state for one upward sorted stream.

    Children streams are strictly increasing in key. An item may move up once
    every child has either shown a key past it or finished.
    """

    __slots__ = ("own", "pos", "buf", "open_children", "finished")

    def __init__(self, own_items, children):
        self.own = sorted(own_items)
        self.pos = 0
        self.buf: dict[int, list] = {c: [] for c in children}
        self.open_children = set(children)
        self.finished = False

    def push(self, child: int, item):
        self.buf[child].append(item)

    def close(self, child: int):
        self.open_children.discard(child)

    def pop_ready(self, combine):
        """Return the next (key, value) to emit, or None, or 'end'."""
        if self.finished:
            return None
        for c in self.open_children:
            if not self.buf[c]:
                return None
        heads = []
        if self.pos < len(self.own):
            heads.append(self.own[self.pos])
        for c, q in self.buf.items():
            if q:
                heads.append(q[0])
        if not heads:
            self.finished = True
            return "end"
        key = min(h[0] for h in heads)
        val = None
        have = False
        if self.pos < len(self.own) and self.own[self.pos][0] == key:
            val = self.own[self.pos][1]
            have = True
            self.pos += 1
            while self.pos < len(self.own) and self.own[self.pos][0] == key:
                val = combine(val, self.own[self.pos][1])
                self.pos += 1
        for c, q in self.buf.items():
            if q and q[0][0] == key:
                v = q.pop(0)[1]
                val = combine(val, v) if have else v
                have = True
        return (key, val)


def _first(a, b):
    return a


class _StreamProgram(NodeProgram):
    """Pipelined sorted-stream convergecast, optionally followed by a downcast.

    inputs: list of (key, value) items held at this vertex.
    Message channels: 1 upward item batch, 2 upward end, 3 downward item
    batch, 4 downward end. Items are packed into one message per edge per
    round up to the word budget; a lone oversized item still travels alone.
    End markers only ride on rounds whose batch left a word spare.
    """

    def __init__(self, node: int, tree: BfsTree, combine, downcast: bool,
                 budget: int, upcast: bool = True):
        self.node = node
        self.parent = tree.parent[node]
        self.children = tree.children[node]
        self.combine = combine
        self.downcast = downcast
        self.upcast = upcast
        self.budget = budget
        self.up = None
        self.pending_up = None
        self.up_ended = False
        self.up_end_sent = False
        self.collected: list = []
        self.down_queue: list = []
        self.down_pos = 0
        self.down_end_sent = False
        self.down_done = False

    def on_start(self, ctx):
        if self.upcast:
            self.up = _UpStream(ctx.inputs or [], self.children)
        else:
            # items already sit at the root; skip the upward phase entirely
            self.up = _UpStream([], ())
            self.up.finished = True
            self.up_end_sent = True
            self.collected.extend(ctx.inputs or [])
        ctx.out = self.collected
        self._pump(ctx)

    def on_round(self, ctx, inbox):
        for frm, ch, payload in inbox:
            if ch == 1:
                for item in payload:
                    self.up.push(frm, item)
            elif ch == 2:
                self.up.close(frm)
            elif ch == 3:
                for item in payload:
                    self.down_queue.append(item)
                    self.collected.append(tuple(item))
            elif ch == 4:
                self.down_done = True
        self._pump(ctx)

    def _batch_up(self):
        """Collect ready items into one batch filling the word budget; the end
        marker defers to the next round when no word is left spare."""
        batch: list = []
        words = 0
        cap = self.budget
        while True:
            if self.pending_up is not None:
                nxt, self.pending_up = self.pending_up, None
            else:
                nxt = self.up.pop_ready(self.combine)
                if nxt == "end":
                    self.up_ended = True
                    break
                if nxt is None:
                    break
                nxt = (nxt[0], nxt[1])
            w = payload_words(nxt)
            if batch and words + w > cap:
                self.pending_up = nxt
                break
            batch.append(nxt)
            words += w
        return batch, words

    def _pump(self, ctx):
        if not self.up_end_sent:
            batch, words = self._batch_up()
            drained = self.up_ended and self.pending_up is None
            if self.parent >= 0:
                if batch:
                    ctx.send(self.parent, batch, channel=1, words=words)
                    ctx.wake()
                if drained:
                    if words + 1 <= self.budget:
                        ctx.send(self.parent, None, channel=2)
                        self.up_end_sent = True
                    else:
                        ctx.wake()
            else:
                self.collected.extend(batch)
                if drained:
                    self.up_end_sent = True
                if batch or self.pending_up is not None:
                    ctx.wake()
        if not self.downcast or self.down_end_sent:
            return
        if self.parent < 0:
            if not self.up.finished:
                return
            source, closing = self.collected, True
        else:
            source, closing = self.down_queue, self.down_done
        batch2: list = []
        words = 0
        cap = self.budget
        while self.down_pos < len(source):
            item = source[self.down_pos]
            w = payload_words(item)
            if batch2 and words + w > cap:
                break
            batch2.append((item[0], item[1]))
            words += w
            self.down_pos += 1
        if batch2:
            for c in self.children:
                ctx.send(c, batch2, channel=3, words=words)
            ctx.wake()
        if closing and self.down_pos >= len(source):
            if words + 1 <= self.budget:
                self.down_end_sent = True
                for c in self.children:
                    ctx.send(c, None, channel=4)
            else:
                ctx.wake()


def collect_to_root(engine: RoundEngine, tree: BfsTree, items_per_node,
                    combine=_first) -> tuple[list, RoundMetrics]:
    """Stream (key, value) items to the root, combining values per key."""
    _probe_idempotent(combine, items_per_node)
    res = engine.run(lambda v: _StreamProgram(v, tree, combine, downcast=False,
                                              budget=engine.budget_words),
                     inputs=items_per_node)
    return list(res.outputs[tree.root]), res.metrics


def pipeline_broadcast(engine: RoundEngine, tree: BfsTree,
                       messages) -> tuple[list[list], RoundMetrics]:
    """Deliver every (origin, payload) message to every vertex.

    Items travel keyed by (origin, sequence); after the run every vertex holds
    the full sorted message list. M = 0 short-circuits to nothing at all.
    """
    if not messages:
        return [[] for _ in range(engine.graph.n)], RoundMetrics()
    per_node: list[list] = [[] for _ in range(engine.graph.n)]
    counter: dict[int, int] = {}
    for origin, payload in messages:
        seq = counter.get(origin, 0)
        counter[origin] = seq + 1
        per_node[origin].append(((origin, seq), payload))
    res = engine.run(lambda v: _StreamProgram(v, tree, _first, downcast=True,
                                              budget=engine.budget_words),
                     inputs=per_node)
    out = []
    for v, got in enumerate(res.outputs):
        out.append([payload for _key, payload in sorted(got)])
    return out, res.metrics


def broadcast_from_root(engine: RoundEngine, tree: BfsTree,
                        items) -> tuple[list[list], RoundMetrics]:
    """Pipelined downcast of a list of payloads held at the tree root."""
    if not items:
        return [[] for _ in range(engine.graph.n)], RoundMetrics()
    per_node: list[list] = [[] for _ in range(engine.graph.n)]
    per_node[tree.root] = [((i,), payload) for i, payload in enumerate(items)]
    res = engine.run(lambda v: _StreamProgram(v, tree, _first, downcast=True,
                                              budget=engine.budget_words,
                                              upcast=False),
                     inputs=per_node)
    out = []
    for v, got in enumerate(res.outputs):
        if v == tree.root:
            out.append(list(items))
        else:
            out.append([payload for _key, payload in sorted(got)])
    return out, res.metrics


def convergecast_aggregate(engine: RoundEngine, tree: BfsTree, items_per_node,
                           combine) -> tuple[dict, RoundMetrics]:
    """Per-key aggregation toward the root; combine must be idempotent."""
    _probe_idempotent(combine, items_per_node, required=True)
    got, metrics = collect_to_root(engine, tree, items_per_node, combine)
    return dict(got), metrics


def _probe_idempotent(combine, items_per_node, required: bool = False):
    if combine is _first:
        return
    sample = None
    for items in items_per_node:
        for _k, v in items or ():
            sample = v
            break
        if sample is not None:
            break
    if sample is None:
        return
    try:
        merged = combine(sample, sample)
    except Exception as exc:
        raise ContractError(f"combine probe failed: {exc}") from exc
    if merged != sample:
        raise ContractError(
            "combine is not idempotent: combine(x, x) != x for a sampled item")
