"""Light spanner construction over the round engine.

The spanner is assembled from three ingredients, all keyed to the traversal
length L (twice the spanning-tree weight, a value every vertex knows once
the tour is built):

* edges of weight at most L/n go through a clustered sampling spanner (the
  classic two-phase scheme with per-iteration survival probability
  n**(-1/k)) run directly on the communication graph;
* the remaining edges of weight at most L are split into geometric weight
  scales; each scale contracts to an unweighted cluster graph on which a
  k-round max-propagation protocol decides which cluster pairs to link by
  a single representative edge;
* edges heavier than L are covered by the spanning tree alone.

Scales come in two regimes. While clusters are few, their state lives at
the traversal root and moves by pipelined convergecast/broadcast on the BFS
tree. Once clusters become numerous, the traversal is cut into bounded
communication intervals and every cluster coordinates inside its own
interval; a final global pass then dedupes representative edges so each
chosen cluster pair contributes exactly one edge.

``build_light_spanner`` wires the stages together and retries any stage
whose output exceeds its expected-size budget.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .engine import NodeProgram, RoundEngine, RoundMetrics
from .fragments import compute_fragments
from .graphs import DistanceOracle, WeightedGraph, edge_key
from .primitives import (BfsTree, broadcast_from_root, build_bfs_tree,
                         collect_to_root, convergecast_aggregate)
from .rng import truncated_exp, unit
from .tour import SCALE, EulerTour, euler_tour, scaled

# User-facing eps is divided by this before driving the scale geometry, so
# the chain bound (t+1)*eps*w_i + t*w_i stays within (2k-1)(1+eps_user).
EPS_RESCALE = 6
# Constant in the per-edge stretch guarantee (2k-1)(1+CHAIN_STRETCH_CONST*eps)
# for the internal eps: (1+eps)(1+2eps) <= 1+4*eps whenever eps <= 1/2.
CHAIN_STRETCH_CONST = 4
# Resampling cap for the per-cluster r values (must land below k).
R_VALUE_DRAWS = 64
# Retry acceptance budgets, deliberately loose multiples of the expectations.
LIGHT_SIZE_FACTOR = 8       # |light spanner| <= 8 * k * n^(1+1/k)
SCALE_SIZE_FACTOR = 6       # |scale spanner| <= 6 * N^(1+1/k) + 16
CLUSTER_DEGREE_FACTOR = 8   # per-cluster picks  <= 8 * n^(1/k) * log2(n) + 8


class RetryBudgetError(RuntimeError):
    """A randomized stage kept exceeding its size budget."""


# ---------------------------------------------------------------------------
# edge bucketing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeBuckets:
    """Edges split by weight against the traversal length.

    ``scales[i]`` holds the edges with length/(1+eps)^(i+1) < w <=
    length/(1+eps)^i that are not already light; ``light`` holds weights at
    most length/n; ``heavy`` holds weights above the full length.
    """

    length: float
    eps: float
    n: int
    light: tuple
    scales: tuple
    heavy: tuple

    def scale_weight(self, i: int) -> float:
        return self.length / (1.0 + self.eps) ** i

    def nonempty_scales(self) -> tuple[int, ...]:
        return tuple(i for i, es in enumerate(self.scales) if es)

    def to_json(self) -> dict:
        return {"length": self.length, "eps": self.eps,
                "light": len(self.light), "heavy": len(self.heavy),
                "scales": {i: len(es) for i, es in enumerate(self.scales) if es}}


def bucket_edges(g: WeightedGraph, tour: EulerTour, eps: float) -> EdgeBuckets:
    """Split the edge set by weight; every vertex can do this locally.

    The light threshold wins on overlap so the buckets partition the edges.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    n = g.n
    length = tour.length
    base = 1.0 + eps
    imax = max(0, math.ceil(math.log(n) / math.log(base))) if n >= 2 else 0
    light: list = []
    heavy: list = []
    scales: list[list] = [[] for _ in range(imax + 1)]
    for u, v, w in g.edges:
        if w <= length / n:
            light.append((u, v, w))
        elif w > length:
            heavy.append((u, v, w))
        else:
            guess = math.floor(math.log(length / w) / math.log(base))
            i = max(0, min(imax, int(guess)))
            while i > 0 and w > length / base ** i:
                i -= 1
            while i < imax and w <= length / base ** (i + 1):
                i += 1
            scales[i].append((u, v, w))
    return EdgeBuckets(length=length, eps=eps, n=n, light=tuple(light),
                       scales=tuple(tuple(es) for es in scales),
                       heavy=tuple(heavy))


# ---------------------------------------------------------------------------
# cluster graphs
# ---------------------------------------------------------------------------

def _frac(width: float) -> tuple[int, int]:
    """Exact integer ratio of the scaled cluster width."""
    num, den = float(width * SCALE).as_integer_ratio()
    if num <= 0:
        raise ValueError("cluster width underflowed to zero")
    return num, den


def _ceil_frac(t_int: int, num: int, den: int) -> int:
    return -((-t_int * den) // num)


def _floor_frac(t_int: int, num: int, den: int) -> int:
    return (t_int * den) // num


@dataclass(frozen=True)
class ClusterGraph:
    """Vertex clustering for one weight scale.

    ``cluster_of`` names each vertex's cluster. In the interval regime the
    names are center appearance indices, ``centers`` lists them, and
    ``covering`` maps every appearance index to the center responsible for
    it (the communication intervals are the maximal covering runs).
    """

    scale: int
    case: int
    width: float
    cluster_of: tuple
    centers: tuple = ()
    covering: tuple = ()

    def occupied(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.cluster_of)))

    def cluster_count(self) -> int:
        return len(set(self.cluster_of))

    def members(self) -> dict:
        out: dict = {}
        for v, c in enumerate(self.cluster_of):
            out.setdefault(c, []).append(v)
        return out

    def adjacency(self, edges) -> dict:
        """Unweighted cluster graph over the occupied clusters."""
        adj: dict = {c: set() for c in self.occupied()}
        for u, v, _w in edges:
            a, b = self.cluster_of[u], self.cluster_of[v]
            if a != b:
                adj[a].add(b)
                adj[b].add(a)
        return {c: tuple(sorted(s)) for c, s in adj.items()}

    def intervals(self) -> tuple[tuple[int, int, int], ...]:
        """Maximal (center, first, last) appearance runs, interval regime only."""
        runs: list[tuple[int, int, int]] = []
        for j, c in enumerate(self.covering):
            if runs and runs[-1][0] == c:
                runs[-1] = (c, runs[-1][1], j)
            else:
                runs.append((c, j, j))
        return tuple(runs)

    def to_json(self) -> dict:
        return {"scale": self.scale, "case": self.case, "width": self.width,
                "clusters": self.cluster_count(), "centers": len(self.centers)}


def case1_scale_limit(n: int, k: int, eps: float) -> float:
    """Scales strictly below this value run the globally coordinated regime."""
    return math.log(eps * n ** (k / (2.0 * k + 1.0))) / math.log(1.0 + eps)


def case1_clusters(tour: EulerTour, i: int, eps: float) -> ClusterGraph:
    """Bucket each vertex's earliest appearance time into width eps*w_i."""
    w_i = tour.length / (1.0 + eps) ** i
    width = eps * w_i
    num, den = _frac(width)
    cluster_of = []
    for v in range(tour.n):
        first = min(tour.views[v].appearances, key=lambda a: a.index)
        cluster_of.append(_ceil_frac(first.time_int, num, den))
    return ClusterGraph(scale=i, case=1, width=width,
                        cluster_of=tuple(cluster_of))


def _case2_modulus(n: int, i: int, eps: float) -> int:
    return max(1, math.ceil(eps * n / (1.0 + eps) ** i))


def case2_clusters_oracle(tour: EulerTour, i: int, eps: float,
                          ) -> ClusterGraph:
    """Centralized replay of the interval clustering: centers sit wherever a
    width multiple is crossed or the appearance index hits the modulus, every
    appearance is covered by the nearest center on its left, and each vertex
    joins the cluster covering its earliest appearance."""
    n = tour.n
    w_i = tour.length / (1.0 + eps) ** i
    width = eps * w_i
    num, den = _frac(width)
    q = _case2_modulus(n, i, eps)
    last = tour.index_length
    times = [0] * (last + 1)
    for v in range(n):
        for a in tour.views[v].appearances:
            times[a.index] = a.time_int
    centers = []
    covering = []
    for j in range(last + 1):
        is_center = j % q == 0 or (
            j > 0 and _floor_frac(times[j], num, den)
            > _floor_frac(times[j - 1], num, den))
        if is_center:
            centers.append(j)
        covering.append(centers[-1])
    cluster_of = []
    for v in range(n):
        first = min(tour.views[v].appearances, key=lambda a: a.index)
        cluster_of.append(covering[first.index])
    return ClusterGraph(scale=i, case=2, width=width,
                        cluster_of=tuple(cluster_of),
                        centers=tuple(centers), covering=tuple(covering))


# ---------------------------------------------------------------------------
# the reference max-propagation protocol
# ---------------------------------------------------------------------------

def _better(a: tuple, b: tuple) -> tuple:
    """Argmax order shared by every fold site: larger value, then smaller
    source id; the incumbent wins exact ties."""
    if b[0] > a[0] or (b[0] == a[0] and b[1] < a[1]):
        return b
    return a


_NO_VALUE = (float("-inf"), -1)


def en17_round_protocol(cluster_view: dict, k: int, r_values: dict) -> set:
    """Reference protocol on an abstract unweighted graph.

    Every node starts with value r(x) and source x; for k-1 update rounds
    each node adopts the best of its own state and its neighbors' values
    decremented by one. A node then keeps, for every distinct source it can
    still see at value >= its own minus one, the edge to the smallest such
    neighbor. Returns the chosen edges as sorted pairs.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    nodes = sorted(cluster_view)
    for x in nodes:
        if not r_values[x] < k:
            raise ValueError(
                f"r value {r_values[x]!r} at node {x} is not below k={k}")
    m = {x: float(r_values[x]) for x in nodes}
    s = {x: x for x in nodes}
    for _ in range(k - 1):
        nm: dict = {}
        ns: dict = {}
        for x in nodes:
            best = (m[x], s[x])
            for v in cluster_view[x]:
                best = _better(best, (m[v] - 1.0, s[v]))
            nm[x], ns[x] = best
        m, s = nm, ns
    chosen: set = set()
    for x in nodes:
        per_source: dict = {}
        for v in cluster_view[x]:
            if m[v] >= m[x] - 1.0:
                y = s[v]
                if y not in per_source or v < per_source[y]:
                    per_source[y] = v
        for v in per_source.values():
            chosen.add((x, v) if x < v else (v, x))
    return chosen


def sample_r_values(ids, count: int, k: int, seed: int, scale: int,
                    attempt: int = 0) -> dict:
    """Shared-seed r values: exponential with rate ln(count)/k, resampled
    below k. Every party that knows the seed derives the same values."""
    if count < 2:
        raise ValueError("r values need at least two clusters")
    rate = math.log(count) / k
    return {a: truncated_exp(rate, float(k), R_VALUE_DRAWS,
                             seed, "spanner-r", scale, attempt, a)
            for a in ids}


def case1_oracle(tour: EulerTour, buckets: EdgeBuckets, i: int, k: int,
                 eps: float, seed: int, attempt: int = 0) -> frozenset:
    """Centralized replay of a globally coordinated scale: same clusters,
    same r values, same protocol, same representative choice; returns the
    chosen edges so distributed output can be compared bit for bit."""
    cg = case1_clusters(tour, i, eps)
    edges = buckets.scales[i]
    adj = cg.adjacency(edges)
    if len(adj) <= 1:
        return frozenset()
    ids = sorted(adj)
    r = sample_r_values(ids, len(ids), k, seed, i, attempt)
    m = {a: float(r[a]) for a in ids}
    s = {a: a for a in ids}
    for _ in range(k - 1):
        nm, ns = {}, {}
        for a in ids:
            best = (m[a], s[a])
            for b in adj[a]:
                best = _better(best, (m[b] - 1.0, s[b]))
            nm[a], ns[a] = best
        m, s = nm, ns
    folded: dict = {}
    for u, v, w in edges:
        for x, y in ((u, v), (v, u)):
            a, b = cg.cluster_of[x], cg.cluster_of[y]
            if a == b or not m[b] >= m[a] - 1.0:
                continue
            rep = (x, y) if x < y else (y, x)
            key, cand = (a, s[b]), (b, rep)
            if key not in folded or cand < folded[key]:
                folded[key] = cand
    best_rep: dict = {}
    for (a, _y), (b, rep) in folded.items():
        key = (a, b) if a < b else (b, a)
        if key not in best_rep or rep < best_rep[key]:
            best_rep[key] = rep
    wlook = {(min(u, v), max(u, v)): w for u, v, w in edges}
    return frozenset((u, v, wlook[(u, v)]) for u, v in best_rep.values())


# ---------------------------------------------------------------------------
# node programs
# ---------------------------------------------------------------------------

class _ExchangeProgram(NodeProgram):
    """One-round handshake: inputs are (payload, targets); the outputs
    collect what arrived as sorted (sender, payload) pairs."""

    def __init__(self, node: int):
        self.node = node
        self.got: list = []

    def on_start(self, ctx):
        ctx.out = ()
        if not ctx.inputs:
            return
        payload, targets = ctx.inputs
        for u in targets:
            ctx.send(u, payload)

    def on_round(self, ctx, inbox):
        for frm, _ch, msg in inbox:
            self.got.append((frm, msg))
        ctx.out = tuple(sorted(self.got))


class _MarksProgram(NodeProgram):
    """One-round notifications: ping every vertex listed in the inputs."""

    def __init__(self, node: int):
        self.node = node
        self.got: list = []

    def on_start(self, ctx):
        ctx.out = ()
        for u in ctx.inputs or ():
            ctx.send(u, 1)

    def on_round(self, ctx, inbox):
        for frm, _ch, _msg in inbox:
            self.got.append(frm)
        ctx.out = tuple(sorted(self.got))


class _SumUpProgram(NodeProgram):
    """Integer sum toward the root of a spanning tree."""

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        self.parent, self.pending, self.acc = ctx.inputs
        ctx.out = None
        if self.pending == 0:
            self._flush(ctx)

    def on_round(self, ctx, inbox):
        for _frm, _ch, msg in inbox:
            self.acc += msg
            self.pending -= 1
        if self.pending == 0:
            self._flush(ctx)

    def _flush(self, ctx):
        if self.parent >= 0:
            ctx.send(self.parent, self.acc)
        else:
            ctx.out = self.acc


class _DeclareProgram(NodeProgram):
    """Centers announce themselves rightward along the traversal.

    A token carries the center's appearance index and hops appearance by
    appearance until the next center swallows it and replies, which lets the
    sender mark its appearance as the interval's right end.
    """

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        apps, last = ctx.inputs
        self.last = last
        self.apps = {idx: (nxt, is_center) for idx, nxt, is_center in apps}
        self.cover = {idx: idx for idx, _n, c in apps if c}
        self.rightmost = {idx for idx in self.apps if idx == last}
        for idx, (nxt, is_center) in self.apps.items():
            if is_center and idx < last:
                ctx.send(nxt, (idx + 1, idx))
        self._publish(ctx)

    def on_round(self, ctx, inbox):
        for frm, ch, msg in inbox:
            if ch == 1:
                self.rightmost.add(msg)
                continue
            tgt, center = msg
            nxt, is_center = self.apps[tgt]
            if is_center:
                ctx.send(frm, tgt - 1, channel=1)
                continue
            self.cover[tgt] = center
            if tgt < self.last:
                ctx.send(nxt, (tgt + 1, center))
        self._publish(ctx)

    def _publish(self, ctx):
        ctx.out = (tuple(sorted(self.cover.items())),
                   tuple(sorted(self.rightmost)))


class _IntervalDownProgram(NodeProgram):
    """Push per-interval values from each center rightward to the interval
    end; a vertex records the value arriving at its marked appearance."""

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        apps, last, payloads = ctx.inputs
        self.last = last
        self.apps = {idx: (nxt, is_center, take)
                     for idx, nxt, is_center, take in apps}
        self.taken: dict = {}
        for idx, m, s in payloads:
            nxt, _c, take = self.apps[idx]
            if take:
                self.taken[idx] = (m, s)
            if idx < last:
                ctx.send(nxt, (idx + 1, m, s))
        self._publish(ctx)

    def on_round(self, ctx, inbox):
        for _frm, _ch, msg in inbox:
            tgt, m, s = msg
            nxt, is_center, take = self.apps[tgt]
            if is_center:
                continue
            if take:
                self.taken[tgt] = (m, s)
            if tgt < self.last:
                ctx.send(nxt, (tgt + 1, m, s))
        self._publish(ctx)

    def _publish(self, ctx):
        ctx.out = tuple(sorted(self.taken.items()))


class _IntervalUpProgram(NodeProgram):
    """Fold per-vertex contributions leftward to each interval's center.

    Interval right ends launch a token; every appearance folds its own
    contribution (placed only at the vertex's marked appearance) and passes
    the running best leftward until the center records it.
    """

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        apps, contrib = ctx.inputs
        self.contrib = contrib
        self.apps = {idx: (prv, is_center, is_right, mine)
                     for idx, prv, is_center, is_right, mine in apps}
        self.folded: dict = {}
        for idx, (_p, _c, is_right, _m) in self.apps.items():
            if is_right:
                self._arrive(ctx, idx, _NO_VALUE)
        self._publish(ctx)

    def on_round(self, ctx, inbox):
        for _frm, _ch, msg in inbox:
            tgt, m, s = msg
            self._arrive(ctx, tgt, (m, s))
        self._publish(ctx)

    def _arrive(self, ctx, idx: int, value: tuple):
        prv, is_center, _r, mine = self.apps[idx]
        if mine and self.contrib is not None:
            value = _better(value, self.contrib)
        if is_center:
            self.folded[idx] = _better(self.folded.get(idx, _NO_VALUE), value)
        else:
            ctx.send(prv, (idx - 1, value[0], value[1]))

    def _publish(self, ctx):
        ctx.out = tuple(sorted(self.folded.items()))


class _IntervalStreamProgram(NodeProgram):
    """Stream candidate records leftward to each interval's center.

    Each appearance forwards one queued record per round; a directed tree
    edge hosts exactly one leftward appearance hop, so the word budget is
    safe without arbitration. The run drains by self-wakes.
    """

    def __init__(self, node: int):
        self.node = node

    def on_start(self, ctx):
        apps, records = ctx.inputs
        self.apps = {idx: (prv, is_center, mine)
                     for idx, prv, is_center, mine in apps}
        self.pend: dict[int, deque] = {}
        self.acc: dict[int, list] = {}
        for idx, (_p, _c, mine) in self.apps.items():
            if mine:
                for rec in records:
                    self._arrive(idx, rec)
        self._flush(ctx)

    def on_round(self, ctx, inbox):
        for _frm, _ch, msg in inbox:
            tgt = msg[0]
            self._arrive(tgt, msg[1:])
        self._flush(ctx)

    def _arrive(self, idx: int, rec: tuple):
        if self.apps[idx][1]:
            self.acc.setdefault(idx, []).append(rec)
        else:
            self.pend.setdefault(idx, deque()).append(rec)

    def _flush(self, ctx):
        more = False
        for idx, q in self.pend.items():
            if not q:
                continue
            rec = q.popleft()
            ctx.send(self.apps[idx][0], (idx - 1,) + tuple(rec))
            if q:
                more = True
        if more:
            ctx.wake()
        ctx.out = tuple((idx, tuple(recs))
                        for idx, recs in sorted(self.acc.items()))


# ---------------------------------------------------------------------------
# light-bucket spanner
# ---------------------------------------------------------------------------

def _exchange(engine: RoundEngine, inputs) -> tuple[list, RoundMetrics]:
    res = engine.run(lambda v: _ExchangeProgram(v), inputs=inputs)
    return [dict(got) for got in res.outputs], res.metrics


def baswana_sen(engine: RoundEngine, g_sub, k: int, attempt: int = 0,
                ) -> tuple[tuple, RoundMetrics]:
    """Cluster-sampling spanner of the subgraph g_sub (edge triples).

    Runs k-1 contraction iterations, each sampling surviving clusters with
    probability n**(-1/k); unsampled vertices either hook onto a sampled
    neighbor cluster (keeping every strictly lighter bundle edge) or retire
    after keeping one lightest edge per adjacent cluster. A final sweep adds
    one lightest remaining edge per adjacent cluster. Stretch 2k-1 holds
    deterministically; the size bound holds in expectation.
    """
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    g = engine.graph
    n = g.n
    edges = [(u, v, w) for u, v, w in g_sub]
    for u, v, _w in edges:
        if not g.has_edge(u, v):
            raise ValueError(f"subgraph edge ({u},{v}) missing from the graph")
    if k == 1:
        # a 1-spanner must keep everything
        return tuple(sorted(edges)), RoundMetrics()
    metrics = RoundMetrics()
    prob = n ** (-1.0 / k)
    seed = engine.seed
    cid = list(range(n))
    work: list[dict] = [{} for _ in range(n)]
    for u, v, w in edges:
        work[u][v] = w
        work[v][u] = w
    spanner: set = set()

    def keep(u: int, v: int, w: float):
        spanner.add((u, v, w) if u < v else (v, u, w))

    def swap_ids() -> list[dict]:
        nonlocal metrics
        inputs = [(cid[v], tuple(work[v])) if work[v] else None
                  for v in range(n)]
        nb, m = _exchange(engine, inputs)
        metrics = metrics.merge(m)
        return nb

    nb = swap_ids()
    for it in range(1, k):
        sampled = {c for c in set(cid)
                   if c >= 0 and unit(seed, "bs-sample", attempt, it, c) < prob}
        new_cid = list(cid)
        notify: list[list] = [[] for _ in range(n)]
        for v in range(n):
            if cid[v] < 0:
                continue
            for u in [u for u in work[v] if nb[v].get(u, -1) == cid[v]]:
                del work[v][u]
            if cid[v] in sampled:
                continue
            best: dict = {}
            for u, w in work[v].items():
                c = nb[v][u]
                cand = (edge_key(u, v, w), u, w)
                if c not in best or cand < best[c]:
                    best[c] = cand
            if not best:
                new_cid[v] = -1
                continue
            picked = {c: t for c, t in best.items() if c in sampled}
            if not picked:
                for _key, u, w in best.values():
                    keep(u, v, w)
                new_cid[v] = -1
                notify[v] = list(work[v])
                work[v].clear()
                continue
            cjoin, (kj, uj, wj) = min(picked.items(), key=lambda t: t[1][0])
            keep(uj, v, wj)
            new_cid[v] = cjoin
            resolved = {cjoin}
            for c, (ck, u, w) in best.items():
                if c != cjoin and ck < kj:
                    keep(u, v, w)
                    resolved.add(c)
            for u in [u for u in work[v] if nb[v][u] in resolved]:
                del work[v][u]
                notify[v].append(u)
        cid = new_cid
        res = engine.run(lambda v: _MarksProgram(v), inputs=notify)
        metrics = metrics.merge(res.metrics)
        for v in range(n):
            for u in res.outputs[v]:
                work[v].pop(u, None)
        nb = swap_ids()
    for v in range(n):
        if cid[v] < 0:
            continue
        best = {}
        for u, w in work[v].items():
            c = nb[v].get(u, -1)
            if c < 0 or c == cid[v]:
                continue
            cand = (edge_key(u, v, w), u, w)
            if c not in best or cand < best[c]:
                best[c] = cand
        for _key, u, w in best.values():
            keep(u, v, w)
    return tuple(sorted(spanner)), metrics


# ---------------------------------------------------------------------------
# per-scale simulation, globally coordinated regime
# ---------------------------------------------------------------------------

def _incidence(edges) -> dict:
    inc: dict = {}
    for u, v, w in edges:
        inc.setdefault(u, {})[v] = w
        inc.setdefault(v, {})[u] = w
    return inc


def spanner_scale_case1(engine: RoundEngine, i: int, tour: EulerTour,
                        buckets: EdgeBuckets, k: int, eps: float,
                        tree: BfsTree | None = None, attempt: int = 0,
                        ) -> tuple[tuple, RoundMetrics, ClusterGraph]:
    """One weight scale with few clusters: state at the traversal root.

    Vertices swap cluster ids across the scale's edges, the root samples and
    broadcasts the r values, and every protocol round is one pipelined
    convergecast of candidate values plus one broadcast of refreshed cluster
    states. Selection convergecasts candidate representatives and the root
    dedupes to one edge per chosen cluster pair.
    """
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if not 0.0 < eps < 0.5:
        raise ValueError(f"internal eps must lie in (0, 0.5), got {eps}")
    n = engine.graph.n
    if not 0 <= i < len(buckets.scales):
        raise ValueError(f"scale {i} outside the bucket range")
    if not i < case1_scale_limit(n, k, eps):
        raise ValueError(f"scale {i} belongs to the interval regime")
    cg = case1_clusters(tour, i, eps)
    edges = buckets.scales[i]
    metrics = RoundMetrics()
    if not edges:
        return (), metrics, cg
    if tree is None:
        tree, m = build_bfs_tree(engine, tour.root)
        metrics = metrics.merge(m)
    inc = _incidence(edges)
    cid = cg.cluster_of

    inputs = [((cid[v], tuple(inc[v])) if v in inc else None)
              for v in range(n)]
    nb, m = _exchange(engine, inputs)
    metrics = metrics.merge(m)

    ids_at_root, m = collect_to_root(
        engine, tree, [[(cid[v], 0)] for v in range(n)])
    metrics = metrics.merge(m)
    ids = sorted({key for key, _v in ids_at_root})
    if len(ids) <= 1:
        return (), metrics, cg
    r_values = sample_r_values(ids, len(ids), k, engine.seed, i, attempt)
    _, m = broadcast_from_root(engine, tree, sorted(r_values.items()))
    metrics = metrics.merge(m)

    state = {a: (float(r_values[a]), a) for a in ids}

    def candidate(v: int) -> tuple | None:
        best = None
        for u in inc.get(v, ()):
            b = nb[v].get(u)
            if b is None or b == cid[v]:
                continue
            mb, sb = state[b]
            cand = (mb - 1.0, sb)
            best = cand if best is None else _better(best, cand)
        return best

    for _round in range(k - 1):
        items = [[] for _ in range(n)]
        for v in inc:
            cand = candidate(v)
            if cand is not None:
                items[v].append((cid[v], cand))
        folded, m = convergecast_aggregate(engine, tree, items, _better)
        metrics = metrics.merge(m)
        new_state = {}
        for a in ids:
            best = state[a]
            if a in folded:
                best = _better(best, folded[a])
            new_state[a] = best
        payload = sorted((a, ms[0], ms[1]) for a, ms in new_state.items())
        _, m = broadcast_from_root(engine, tree, payload)
        metrics = metrics.merge(m)
        state = new_state

    items = [[] for _ in range(n)]
    for v in inc:
        a = cid[v]
        ma = state[a][0]
        for u, _w in inc[v].items():
            b = nb[v].get(u)
            if b is None or b == a:
                continue
            if state[b][0] >= ma - 1.0:
                rep = (u, v) if u < v else (v, u)
                items[v].append(((a, state[b][1]), (b, rep)))
    folded, m = convergecast_aggregate(engine, tree, items, min)
    metrics = metrics.merge(m)

    best_rep: dict = {}
    for (a, _y), (b, rep) in folded.items():
        key = (a, b) if a < b else (b, a)
        if key not in best_rep or rep < best_rep[key]:
            best_rep[key] = rep
    reps = sorted(best_rep.values())
    _, m = broadcast_from_root(engine, tree, reps)
    metrics = metrics.merge(m)

    wlook = {(min(u, v), max(u, v)): w for u, v, w in edges}
    picked = tuple(sorted((u, v, wlook[(u, v)]) for u, v in reps))
    return picked, metrics, cg


# ---------------------------------------------------------------------------
# per-scale simulation, interval regime
# ---------------------------------------------------------------------------

def spanner_scale_case2(engine: RoundEngine, i: int, tour: EulerTour,
                        buckets: EdgeBuckets, k: int, eps: float,
                        tree: BfsTree | None = None, attempt: int = 0,
                        ) -> tuple[tuple, RoundMetrics, ClusterGraph]:
    """One weight scale with many clusters: per-interval coordination.

    Centers declare themselves rightward along the traversal, every vertex
    joins the cluster covering its earliest appearance, and each protocol
    round is a neighbor swap plus a leftward fold and rightward push inside
    every communication interval. Chosen representatives take one global
    dedupe pass so every cluster pair keeps a single edge.
    """
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if not 0.0 < eps < 0.5:
        raise ValueError(f"internal eps must lie in (0, 0.5), got {eps}")
    g = engine.graph
    n = g.n
    if not 0 <= i < len(buckets.scales):
        raise ValueError(f"scale {i} outside the bucket range")
    if i < case1_scale_limit(n, k, eps):
        raise ValueError(f"scale {i} belongs to the globally coordinated regime")
    w_i = buckets.scale_weight(i)
    width = eps * w_i
    num, den = _frac(width)
    q = _case2_modulus(n, i, eps)
    last = tour.index_length
    metrics = RoundMetrics()

    # local per-appearance data: index, walk neighbors, centerhood
    app_rows: list[list] = [[] for _ in range(n)]
    chosen_app = [0] * n
    for v in range(n):
        view = tour.views[v]
        first = min(view.appearances, key=lambda a: a.index)
        chosen_app[v] = first.index
        for pos, a in enumerate(view.appearances):
            prv = view.prev_vertex[pos]
            nxt = view.next_vertex[pos]
            if a.index == 0:
                is_center = True
            else:
                prev_t = a.time_int - scaled(g.weight(prv, v))
                is_center = a.index % q == 0 or (
                    _floor_frac(a.time_int, num, den)
                    > _floor_frac(prev_t, num, den))
            app_rows[v].append((a.index, prv, nxt, is_center))

    declare_inputs = [(tuple((idx, nxt, c) for idx, _p, nxt, c in rows), last)
                      for rows in app_rows]
    res = engine.run(lambda v: _DeclareProgram(v), inputs=declare_inputs)
    metrics = metrics.merge(res.metrics)
    cover_of: dict[int, int] = {}
    right_of: set = set()
    for v in range(n):
        got_cover, got_right = res.outputs[v]
        cover_of.update(dict(got_cover))
        right_of.update(got_right)
    covering = tuple(cover_of[j] for j in range(last + 1))
    centers = tuple(sorted({j for j in range(last + 1) if covering[j] == j}))
    cluster_of = tuple(covering[chosen_app[v]] for v in range(n))
    cg = ClusterGraph(scale=i, case=2, width=width, cluster_of=cluster_of,
                      centers=centers, covering=covering)

    edges = buckets.scales[i]
    if not edges:
        return (), metrics, cg
    if tree is None:
        tree, m = build_bfs_tree(engine, tour.root)
        metrics = metrics.merge(m)

    # the protocol rate needs the number of centers, summed up the BFS tree
    own_centers = [sum(1 for _i, _p, _n, c in rows if c) for rows in app_rows]
    sum_inputs = [(tree.parent[v], len(tree.children[v]), own_centers[v])
                  for v in range(n)]
    res = engine.run(lambda v: _SumUpProgram(v), inputs=sum_inputs)
    metrics = metrics.merge(res.metrics)
    n_centers = res.outputs[tree.root]
    _, m = broadcast_from_root(engine, tree, [n_centers])
    metrics = metrics.merge(m)
    if n_centers <= 1:
        return (), metrics, cg

    inc = _incidence(edges)
    host_payloads: dict[int, list] = {}
    r_cache: dict[int, float] = {}
    center_state: dict[int, tuple] = {}
    rate_count = n_centers
    for v in range(n):
        for idx, _p, _nx, is_c in app_rows[v]:
            if is_c:
                r = truncated_exp(math.log(rate_count) / k, float(k),
                                  R_VALUE_DRAWS, engine.seed, "spanner-r",
                                  i, attempt, idx)
                r_cache[idx] = r
                center_state[idx] = (r, idx)
                host_payloads.setdefault(v, []).append(idx)

    down_rows = [tuple((idx, nxt, c, idx == chosen_app[v])
                       for idx, _p, nxt, c in app_rows[v])
                 for v in range(n)]
    up_rows = [tuple((idx, prv, c, idx in right_of, idx == chosen_app[v])
                     for idx, prv, _n, c in app_rows[v])
               for v in range(n)]

    vertex_state: dict[int, tuple] = {}

    def down_sweep() -> None:
        nonlocal metrics
        inputs = []
        for v in range(n):
            payloads = tuple((idx, center_state[idx][0], center_state[idx][1])
                             for idx in host_payloads.get(v, ()))
            inputs.append((down_rows[v], last, payloads))
        res = engine.run(lambda v: _IntervalDownProgram(v), inputs=inputs)
        metrics = metrics.merge(res.metrics)
        for v in range(n):
            for idx, ms in res.outputs[v]:
                if idx == chosen_app[v]:
                    vertex_state[v] = ms

    def swap_states() -> list[dict]:
        nonlocal metrics
        inputs = []
        for v in range(n):
            if v in inc and v in vertex_state:
                mv, sv = vertex_state[v]
                inputs.append(((cluster_of[v], mv, sv), tuple(inc[v])))
            else:
                inputs.append(None)
        nb, m = _exchange(engine, inputs)
        metrics = metrics.merge(m)
        return nb

    down_sweep()
    nb = swap_states()

    for _round in range(k - 1):
        contribs: list = []
        for v in range(n):
            best = None
            if v in inc and v in vertex_state:
                for u in inc[v]:
                    got = nb[v].get(u)
                    if got is None or got[0] == cluster_of[v]:
                        continue
                    cand = (got[1] - 1.0, got[2])
                    best = cand if best is None else _better(best, cand)
            contribs.append(best)
        res = engine.run(lambda v: _IntervalUpProgram(v),
                         inputs=[(up_rows[v], contribs[v]) for v in range(n)])
        metrics = metrics.merge(res.metrics)
        for v in range(n):
            for idx, folded in res.outputs[v]:
                center_state[idx] = _better(center_state[idx], tuple(folded))
        down_sweep()
        nb = swap_states()

    # selection: qualifying sources stream to the centers
    stream_inputs = []
    for v in range(n):
        records: list = []
        if v in inc and v in vertex_state:
            mv = vertex_state[v][0]
            per_b: dict = {}
            for u in inc[v]:
                got = nb[v].get(u)
                if got is None or got[0] == cluster_of[v]:
                    continue
                if got[1] >= mv - 1.0:
                    rep = (u, v) if u < v else (v, u)
                    cand = (got[2], got[0], rep[0], rep[1])
                    if got[0] not in per_b or cand < per_b[got[0]]:
                        per_b[got[0]] = cand
            records = sorted(per_b.values())
        rows = tuple((idx, prv, c, idx == chosen_app[v])
                     for idx, prv, _n, c in app_rows[v])
        stream_inputs.append((rows, tuple(records)))
    res = engine.run(lambda v: _IntervalStreamProgram(v), inputs=stream_inputs)
    metrics = metrics.merge(res.metrics)

    dedupe_items: list[list] = [[] for _ in range(n)]
    for v in range(n):
        for idx, recs in res.outputs[v]:
            a = idx
            per_source: dict = {}
            for y, b, pu, pv in recs:
                cand = (b, (pu, pv))
                if y not in per_source or cand < per_source[y]:
                    per_source[y] = cand
            for b, rep in per_source.values():
                key = (a, b) if a < b else (b, a)
                dedupe_items[v].append((key, rep))
    folded, m = convergecast_aggregate(engine, tree, dedupe_items, min)
    metrics = metrics.merge(m)
    reps = sorted(set(folded.values()))
    _, m = broadcast_from_root(engine, tree, reps)
    metrics = metrics.merge(m)

    wlook = {(min(u, v), max(u, v)): w for u, v, w in edges}
    picked = tuple(sorted((u, v, wlook[(u, v)]) for u, v in reps))
    return picked, metrics, cg


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpannerResult:
    """Final spanner with per-stage edge sets, audits, and retry counts."""

    k: int
    eps: float
    eps_int: float
    root: int
    edges: tuple
    tree_edges: tuple
    light_edges: tuple
    scale_reports: tuple   # (scale, case, edge count, rounds, attempts)
    scale_edges: tuple     # (scale, edge tuple) for the nonempty scales
    retries: tuple
    max_stretch: float | None
    lightness: float
    metrics: RoundMetrics

    def edge_count(self) -> int:
        return len(self.edges)

    def to_json(self) -> dict:
        return {
            "k": self.k, "eps": self.eps, "root": self.root,
            "edges": len(self.edges),
            "tree_edges": len(self.tree_edges),
            "light_edges": len(self.light_edges),
            "lightness": self.lightness,
            "max_stretch": self.max_stretch,
            "rounds_total": self.metrics.rounds_used,
            "per_scale": [{"scale": s, "case": c, "edges": e,
                           "rounds": r, "attempts": t}
                          for s, c, e, r, t in self.scale_reports],
        }


def _retry_budget(n: int) -> int:
    return max(8, math.ceil(4 * math.log2(max(n, 2))))


def _edge_stretch_audit(g: WeightedGraph, edges) -> float:
    h = WeightedGraph(g.n, edges, normalize=False)
    oracle = DistanceOracle(h)
    worst = 1.0
    by_u: dict[int, list] = {}
    for u, v, w in g.edges:
        by_u.setdefault(u, []).append((v, w))
    for u, targets in by_u.items():
        row = oracle.row(u)
        for v, w in targets:
            worst = max(worst, float(row[v]) / w)
    return worst


def build_light_spanner(engine: RoundEngine, g: WeightedGraph, k: int,
                        eps: float, root: int = 0, audit: bool = True,
                        ) -> tuple[SpannerResult, RoundMetrics]:
    """Full pipeline: traversal, light bucket, per-scale cluster spanners.

    eps is the user-facing stretch slack in (0, 1); internally it is divided
    by EPS_RESCALE so the chain bound lands within (2k-1)(1+eps). Every
    randomized stage is retried with fresh randomness while its output
    exceeds the expected-size budget.
    """
    if g is not engine.graph:
        raise ValueError("engine and graph disagree; build the engine on g")
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    n = g.n
    eps_int = eps / EPS_RESCALE
    metrics = RoundMetrics()

    tree, m = build_bfs_tree(engine, root)
    metrics = metrics.merge(m)
    deco, m = compute_fragments(engine, root=root, tree=tree)
    metrics = metrics.merge(m)
    tour, _lengths, m = euler_tour(engine, deco, tree=tree)
    metrics = metrics.merge(m)
    tree_edges = tuple(sorted(
        (u, v, g.weight(u, v)) for u, v in deco.tree_edges()))

    buckets = bucket_edges(g, tour, eps_int)
    budget = _retry_budget(n)
    retries: list = []

    light_cap = math.ceil(LIGHT_SIZE_FACTOR * k * n ** (1.0 + 1.0 / k))
    light_edges: tuple = ()
    for attempt in range(budget):
        light_edges, m = baswana_sen(engine, buckets.light, k,
                                     attempt=attempt)
        metrics = metrics.merge(m)
        if len(light_edges) <= light_cap:
            retries.append(("light", attempt + 1))
            break
    else:
        raise RetryBudgetError(
            f"light bucket exceeded {light_cap} edges {budget} times")

    limit = case1_scale_limit(n, k, eps_int)
    degree_cap = math.ceil(
        CLUSTER_DEGREE_FACTOR * n ** (1.0 / k) * math.log2(max(n, 2))) + 8
    scale_reports: list = []
    scale_edges: list = []
    for i in buckets.nonempty_scales():
        case = 1 if i < limit else 2
        run = spanner_scale_case1 if case == 1 else spanner_scale_case2
        picked: tuple = ()
        for attempt in range(budget):
            picked, m, cg = run(engine, i, tour, buckets, k, eps_int,
                                tree=tree, attempt=attempt)
            metrics = metrics.merge(m)
            occupied = cg.cluster_count()
            size_cap = math.ceil(
                SCALE_SIZE_FACTOR * occupied ** (1.0 + 1.0 / k)) + 16
            degs: dict = {}
            for u, v, _w in picked:
                degs[cg.cluster_of[u]] = degs.get(cg.cluster_of[u], 0) + 1
                degs[cg.cluster_of[v]] = degs.get(cg.cluster_of[v], 0) + 1
            peak = max(degs.values(), default=0)
            if len(picked) <= size_cap and peak <= degree_cap:
                scale_reports.append((i, case, len(picked),
                                      m.rounds_used, attempt + 1))
                retries.append((f"scale-{i}", attempt + 1))
                break
        else:
            raise RetryBudgetError(
                f"scale {i} kept exceeding its size budget {budget} times")
        if picked:
            scale_edges.append((i, picked))

    final: dict = {}
    for u, v, w in tree_edges:
        final[(u, v)] = w
    for u, v, w in light_edges:
        final.setdefault((u, v), w)
    for _i, picked in scale_edges:
        for u, v, w in picked:
            final.setdefault((u, v), w)
    edges = tuple(sorted((u, v, w) for (u, v), w in final.items()))

    tree_weight = sum(w for _u, _v, w in tree_edges)
    lightness = (sum(w for _u, _v, w in edges) / tree_weight
                 if tree_weight else 1.0)
    max_stretch = _edge_stretch_audit(g, edges) if audit else None

    result = SpannerResult(
        k=k, eps=eps, eps_int=eps_int, root=root, edges=edges,
        tree_edges=tree_edges, light_edges=light_edges,
        scale_reports=tuple(scale_reports), scale_edges=tuple(scale_edges),
        retries=tuple(retries), max_stretch=max_stretch,
        lightness=lightness, metrics=metrics)
    return result, metrics
