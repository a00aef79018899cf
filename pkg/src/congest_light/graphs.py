"""Weighted graph model, instance generators, file I/O, and exact reference oracles.

Weights are float64 and every tie-break goes through ``edge_key``, which orders
edges by (weight, smaller endpoint, larger endpoint). All comparisons are exact;
no epsilon fuzz anywhere.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _sp_dijkstra

DEFAULT_POLY_CAP_EXP = 4.0
APSP_DEFAULT_CAP = 4096


class GraphFormatError(ValueError):
    """Malformed edge-list input. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DisconnectedGraphError(ValueError):
    pass


class ApspCapError(ValueError):
    pass


def edge_key(u: int, v: int, w: float) -> tuple[float, int, int]:
    """Total order over edges: weight, then smaller id, then larger id."""
    return (w, u, v) if u < v else (w, v, u)


class WeightedGraph:
    """Simple connected undirected graph with positive float weights.

    Construction normalizes weights so the minimum is exactly 1 and rejects
    instances whose weight spread exceeds n**poly_cap_exp.
    """

    __slots__ = ("n", "edges", "_adj", "_w", "meta", "_csr")

    def __init__(self, n: int, edges, normalize: bool = True,
                 poly_cap_exp: float = DEFAULT_POLY_CAP_EXP, meta: dict | None = None):
        if n < 1:
            raise ValueError("graph needs at least one vertex")
        seen: set[tuple[int, int]] = set()
        clean: list[tuple[int, int, float]] = []
        for u, v, w in edges:
            u, v, w = int(u), int(v), float(w)
            if u == v:
                raise GraphFormatError(f"self loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"edge ({u},{v}) out of range for n={n}")
            if w <= 0 or not math.isfinite(w):
                raise GraphFormatError(f"edge ({u},{v}) has non-positive weight {w}")
            key = (u, v) if u < v else (v, u)
            if key in seen:
                raise GraphFormatError(f"duplicate edge ({key[0]},{key[1]})")
            seen.add(key)
            clean.append((key[0], key[1], w))
        if n > 1 and not clean:
            raise DisconnectedGraphError("no edges")
        if normalize and clean:
            wmin = min(w for _, _, w in clean)
            if wmin != 1.0:
                clean = [(u, v, w / wmin) for u, v, w in clean]
        if clean:
            wmax = max(w for _, _, w in clean)
            cap = float(max(2, n)) ** poly_cap_exp
            if wmax > cap:
                raise ValueError(
                    f"weight spread {wmax:.3g} exceeds n**{poly_cap_exp} = {cap:.3g}; "
                    "raise poly_cap_exp to accept this instance")
        clean.sort(key=lambda e: edge_key(*e))
        self.n = n
        self.edges: tuple[tuple[int, int, float], ...] = tuple(clean)
        adj: list[list[int]] = [[] for _ in range(n)]
        wmap: dict[tuple[int, int], float] = {}
        for u, v, w in clean:
            adj[u].append(v)
            adj[v].append(u)
            wmap[(u, v)] = w
            wmap[(v, u)] = w
        self._adj = tuple(tuple(sorted(a)) for a in adj)
        self._w = wmap
        self.meta = dict(meta or {})
        self._csr = None
        self._check_connected()

    def _check_connected(self):
        seen = bytearray(self.n)
        seen[0] = 1
        stack = [0]
        count = 1
        while stack:
            u = stack.pop()
            for v in self._adj[u]:
                if not seen[v]:
                    seen[v] = 1
                    count += 1
                    stack.append(v)
        if count != self.n:
            missing = [v for v in range(self.n) if not seen[v]]
            raise DisconnectedGraphError(
                f"graph is disconnected; {len(missing)} unreachable vertices, e.g. {missing[:5]}")

    # ---------- accessors ----------

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._adj[v]

    def weight(self, u: int, v: int) -> float:
        return self._w[(u, v)]

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._w

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    @property
    def m(self) -> int:
        return len(self.edges)

    def total_weight(self) -> float:
        return sum(w for _, _, w in self.edges)

    def csr(self) -> csr_matrix:
        if self._csr is None:
            rows, cols, data = [], [], []
            for u, v, w in self.edges:
                rows.append(u); cols.append(v); data.append(w)
                rows.append(v); cols.append(u); data.append(w)
            self._csr = csr_matrix((data, (rows, cols)), shape=(self.n, self.n))
        return self._csr

    def reweighted(self, weight_of) -> "WeightedGraph":
        """Same topology with weights mapped through weight_of(u, v, w)."""
        return WeightedGraph(
            self.n, [(u, v, weight_of(u, v, w)) for u, v, w in self.edges],
            normalize=False, meta=self.meta)

    def to_text(self) -> str:
        lines = [str(self.n)]
        for u, v, w in self.edges:
            lines.append(f"{u} {v} {w!r}")
        return "\n".join(lines) + "\n"


def load_graph(source: str) -> WeightedGraph:
    """Parse the edge-list format: first line n, then one 'u v w' line per edge."""
    text = source
    lines = text.splitlines()
    if not lines:
        raise GraphFormatError("empty input", 1)
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise GraphFormatError(f"expected vertex count, got {lines[0]!r}", 1) from None
    edges = []
    for idx, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GraphFormatError(f"expected 'u v w', got {raw!r}", idx)
        try:
            u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise GraphFormatError(f"could not parse 'u v w' from {raw!r}", idx) from None
        edges.append((u, v, w))
    try:
        return WeightedGraph(n, edges)
    except GraphFormatError:
        raise
    except DisconnectedGraphError:
        raise


def load_graph_file(path) -> WeightedGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_graph(fh.read())


# ---------- generators ----------

def generate(kind: str, seed: int = 0, **params) -> WeightedGraph:
    """Seeded instance generators. Every kind yields a connected instance or raises."""
    rng = random.Random(seed)
    if kind == "path":
        n = int(params.get("n", 8))
        return WeightedGraph(n, [(i, i + 1, 1.0) for i in range(n - 1)],
                             meta={"kind": kind})
    if kind == "star":
        n = int(params.get("n", 8))
        return WeightedGraph(n, [(0, i, 1.0) for i in range(1, n)], meta={"kind": kind})
    if kind == "cycle":
        n = int(params.get("n", 8))
        if n < 3:
            raise ValueError("cycle needs n >= 3")
        edges = [(i, (i + 1) % n, 1.0) for i in range(n)]
        return WeightedGraph(n, edges, meta={"kind": kind})
    if kind == "grid":
        rows = int(params.get("rows", 4))
        cols = int(params.get("cols", params.get("rows", 4)))
        def vid(r, c):
            return r * cols + c
        edges = []
        for r in range(rows):
            for c in range(cols):
                if c + 1 < cols:
                    edges.append((vid(r, c), vid(r, c + 1), 1.0))
                if r + 1 < rows:
                    edges.append((vid(r, c), vid(r + 1, c), 1.0))
        return WeightedGraph(rows * cols, edges, meta={"kind": kind})
    if kind == "random_tree":
        n = int(params.get("n", 64))
        wmax = float(params.get("wmax", 10.0))
        edges = _random_tree_edges(n, rng)
        return WeightedGraph(n, [(u, v, rng.uniform(1.0, wmax)) for u, v in edges],
                             meta={"kind": kind})
    if kind == "random_weighted":
        n = int(params.get("n", 64))
        # default density sits a factor 2 above the ln(n)/n connectivity threshold
        p_default = 1.0 if n <= 8 else min(1.0, 2.0 * math.log(n) / n)
        p = float(params.get("p", p_default))
        wmax = float(params.get("wmax", float(n)))
        for attempt in range(64):
            edges = []
            for u in range(n):
                for v in range(u + 1, n):
                    if rng.random() < p:
                        edges.append((u, v, rng.uniform(1.0, wmax)))
            try:
                return WeightedGraph(n, edges, meta={"kind": kind, "p": p})
            except DisconnectedGraphError:
                continue
        raise DisconnectedGraphError(
            f"random_weighted(n={n}, p={p}) stayed disconnected after 64 attempts; raise p")
    if kind == "unit_square_points":
        n = int(params.get("n", 64))
        radius = float(params.get("radius", 0.3))
        pts = [(rng.random(), rng.random()) for _ in range(n)]
        edges = []
        r2 = radius * radius
        for u in range(n):
            xu, yu = pts[u]
            for v in range(u + 1, n):
                dx = xu - pts[v][0]
                dy = yu - pts[v][1]
                d2 = dx * dx + dy * dy
                if d2 <= r2 and d2 > 0:
                    edges.append((u, v, math.sqrt(d2)))
        try:
            return WeightedGraph(n, edges, meta={"kind": kind, "ddim": 2.0,
                                                 "radius": radius})
        except DisconnectedGraphError:
            raise DisconnectedGraphError(
                f"unit_square_points(n={n}, radius={radius}) sampled a disconnected "
                "instance; increase radius or change the seed")
    raise ValueError(f"unknown generator kind {kind!r}")


def _random_tree_edges(n: int, rng: random.Random) -> list[tuple[int, int]]:
    """Uniform random labelled tree from a random sequence (n >= 1)."""
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    seq = [rng.randrange(n) for _ in range(n - 2)]
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    import heapq
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return edges


# ---------- oracles ----------

@dataclass
class MstResult:
    """Exact minimum spanning tree under the edge_key total order."""
    root: int
    edges: tuple[tuple[int, int, float], ...]
    weight: float
    parent: tuple[int, ...]          # parent[v] per vertex, -1 at the root
    children: tuple[tuple[int, ...], ...]  # ascending id

    def parent_weight(self, g: WeightedGraph, v: int) -> float:
        return g.weight(v, self.parent[v])

    def edge_set(self) -> set[tuple[int, int]]:
        return {(u, v) for u, v, _ in self.edges}

    def to_json(self) -> dict:
        return {"root": self.root, "weight": self.weight,
                "edges": [[u, v, w] for u, v, w in self.edges]}


def mst_oracle(g: WeightedGraph, root: int = 0) -> MstResult:
    """Kruskal with the edge_key tie-break; unique result for any input."""
    parent_dsu = list(range(g.n))

    def find(x):
        while parent_dsu[x] != x:
            parent_dsu[x] = parent_dsu[parent_dsu[x]]
            x = parent_dsu[x]
        return x

    chosen = []
    for u, v, w in sorted(g.edges, key=lambda e: edge_key(*e)):
        ru, rv = find(u), find(v)
        if ru != rv:
            parent_dsu[ru] = rv
            chosen.append((u, v, w))
            if len(chosen) == g.n - 1:
                break
    adj: list[list[tuple[int, float]]] = [[] for _ in range(g.n)]
    for u, v, w in chosen:
        adj[u].append((v, w))
        adj[v].append((u, w))
    par = [-1] * g.n
    kids: list[list[int]] = [[] for _ in range(g.n)]
    stack = [root]
    visited = bytearray(g.n)
    visited[root] = 1
    while stack:
        u = stack.pop()
        for v, _ in sorted(adj[u]):
            if not visited[v]:
                visited[v] = 1
                par[v] = u
                kids[u].append(v)
                stack.append(v)
    for u in range(g.n):
        kids[u].sort()
    return MstResult(root=root,
                     edges=tuple(sorted(chosen, key=lambda e: edge_key(*e))),
                     weight=float(sum(w for _, _, w in chosen)),
                     parent=tuple(par),
                     children=tuple(tuple(k) for k in kids))


def sssp_oracle(g: WeightedGraph, source: int, with_predecessors: bool = False):
    """Exact single-source distances (Dijkstra). Optionally predecessors."""
    if with_predecessors:
        dist, pred = _sp_dijkstra(g.csr(), directed=False, indices=source,
                                  return_predecessors=True)
        return np.asarray(dist), np.asarray(pred)
    return np.asarray(_sp_dijkstra(g.csr(), directed=False, indices=source))


class DistanceOracle:
    """Exact pairwise distances: full matrix for n <= cap, lazy rows above."""

    def __init__(self, g: WeightedGraph, cap: int = APSP_DEFAULT_CAP):
        self.g = g
        self._full = None
        self._rows: dict[int, np.ndarray] = {}
        if g.n <= cap:
            self._full = _sp_dijkstra(g.csr(), directed=False)

    def row(self, u: int) -> np.ndarray:
        if self._full is not None:
            return self._full[u]
        r = self._rows.get(u)
        if r is None:
            r = sssp_oracle(self.g, u)
            self._rows[u] = r
        return r

    def d(self, u: int, v: int) -> float:
        return float(self.row(u)[v])

    @property
    def matrix(self) -> np.ndarray:
        if self._full is None:
            raise ApspCapError(
                f"n={self.g.n} exceeds the full-matrix cap; use sampled pairs via row()")
        return self._full


def apsp_oracle(g: WeightedGraph, cap: int = APSP_DEFAULT_CAP) -> DistanceOracle:
    if g.n > cap:
        raise ApspCapError(
            f"apsp for n={g.n} exceeds cap={cap}; use sampled pairs instead")
    return DistanceOracle(g, cap=cap)


def subgraph_from_edges(g: WeightedGraph, edges) -> WeightedGraph:
    """Subgraph of g on the same vertex set, keeping weights unnormalized."""
    picked = []
    for e in edges:
        u, v = int(e[0]), int(e[1])
        picked.append((u, v, g.weight(u, v)))
    return WeightedGraph(g.n, picked, normalize=False, meta=g.meta)
