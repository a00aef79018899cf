"""Centralized audits: every guarantee becomes a number checked from outside.

Audits look only at the graph and the output handed to them, never at
algorithm internals, so a report certifies what an independent referee
could recompute. Stretch is exact per-edge below the all-pairs cap and
sampled above it with a fixed seed; lightness always comes from the
spanning tree oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .engine import RoundMetrics
from .graphs import DistanceOracle, WeightedGraph, mst_oracle, subgraph_from_edges

SAMPLED_PAIRS_DEFAULT = 100_000
# fixed so repeated sampled audits of the same output agree bit for bit
AUDIT_SEED = 271_828_459


@dataclass(frozen=True)
class AuditReport:
    """Spanner audit: stretch, lightness, and the run's reported costs."""

    mode: str                    # "per_edge" or "sampled_pairs"
    max_stretch: float
    lightness: float
    edge_count: int
    covering_radius: float | None
    min_separation: float | None
    rounds: int
    deviations: tuple

    def to_json(self) -> dict:
        return {"mode": self.mode, "max_stretch": self.max_stretch,
                "lightness": self.lightness, "edge_count": self.edge_count,
                "covering_radius": self.covering_radius,
                "min_separation": self.min_separation,
                "rounds": self.rounds,
                "deviations": list(self.deviations)}


def _edge_pairs(h) -> list:
    if isinstance(h, WeightedGraph):
        return [(u, v) for u, v, _w in h.edges]
    return [(int(e[0]), int(e[1])) for e in h]


def audit_spanner(g: WeightedGraph, h, mode: str = "per_edge",
                  pairs: int = SAMPLED_PAIRS_DEFAULT,
                  metrics: RoundMetrics | None = None) -> AuditReport:
    """Independent stretch and lightness check of a subgraph against g.

    h is a WeightedGraph or an iterable of (u, v, ...) pairs; weights are
    re-read from g, so h must use g's edges. per_edge mode takes the exact
    maximum of d_H(u,v)/w over every edge of g, which bounds the all-pairs
    stretch by the triangle inequality; sampled_pairs draws `pairs` vertex
    pairs with a fixed seed and measures d_H/d_G on those. metrics, when
    given, only fills the report's rounds and deviations fields.
    """
    picked = _edge_pairs(h)
    sub = subgraph_from_edges(g, picked)
    ncomp, _ = connected_components(sub.csr(), directed=False)
    if ncomp != 1:
        raise ValueError("subgraph does not span the graph")
    hmat_oracle = DistanceOracle(sub)
    stretch = 1.0
    if mode == "per_edge":
        by_u: dict[int, list] = {}
        for u, v, w in g.edges:
            by_u.setdefault(u, []).append((v, w))
        for u, targets in by_u.items():
            row = hmat_oracle.row(u)
            for v, w in targets:
                stretch = max(stretch, float(row[v]) / w)
    elif mode == "sampled_pairs":
        if pairs < 1:
            raise ValueError(f"need at least one sampled pair, got {pairs}")
        rng = np.random.default_rng(AUDIT_SEED)
        us = rng.integers(0, g.n, size=pairs)
        vs = rng.integers(0, g.n, size=pairs)
        keep = us != vs
        us, vs = us[keep], vs[keep]
        g_oracle = DistanceOracle(g)
        for u in np.unique(us):
            sel = vs[us == u]
            hrow = hmat_oracle.row(int(u))[sel]
            grow = g_oracle.row(int(u))[sel]
            stretch = max(stretch, float(np.max(hrow / grow)))
    else:
        raise ValueError(f"unknown audit mode {mode!r}")
    if math.isinf(stretch):
        raise ValueError("subgraph does not span the graph")
    weight = sum(g.weight(u, v) for u, v in picked)
    return AuditReport(
        mode=mode, max_stretch=stretch,
        lightness=weight / mst_oracle(g).weight,
        edge_count=len(picked),
        covering_radius=None, min_separation=None,
        rounds=metrics.rounds_used if metrics is not None else 0,
        deviations=tuple(metrics.deviations) if metrics is not None else ())


@dataclass(frozen=True)
class NetAuditReport:
    """Covering/separation audit with the extremal witnesses."""

    ok: bool
    covering_radius: float
    worst_vertex: int            # the vertex farthest from the net
    min_separation: float
    closest_pair: tuple | None   # the two nearest net points
    cover_violations: tuple      # vertices beyond the covering bound
    separation_violations: tuple  # net pairs at or below the separation bound

    def to_json(self) -> dict:
        return {"ok": self.ok, "covering_radius": self.covering_radius,
                "worst_vertex": self.worst_vertex,
                "min_separation": self.min_separation,
                "closest_pair": (list(self.closest_pair)
                                 if self.closest_pair else None),
                "cover_violations": [list(p) for p in self.cover_violations],
                "separation_violations": [list(p) for p in
                                          self.separation_violations]}


def audit_net(g: WeightedGraph, net, cover_bound: float, sep_bound: float,
              oracle: DistanceOracle | None = None) -> NetAuditReport:
    """Check a point set covers within cover_bound and separates past
    sep_bound, reporting the extremal vertex and pair either way.

    Passing means every vertex sits within cover_bound of the net and every
    net pair is strictly farther apart than sep_bound.
    """
    pts = tuple(sorted({int(x) for x in net}))
    if not pts:
        raise ValueError("net must be nonempty")
    oracle = oracle if oracle is not None else DistanceOracle(g)
    dmat = oracle.matrix
    idx = np.fromiter(pts, dtype=np.int64, count=len(pts))
    to_net = dmat[:, idx].min(axis=1)
    worst = int(np.argmax(to_net))
    covering = float(to_net[worst])
    cover_violations = tuple((int(v), float(to_net[v]))
                             for v in np.flatnonzero(to_net > cover_bound))
    if len(idx) >= 2:
        sub = dmat[np.ix_(idx, idx)].copy()
        np.fill_diagonal(sub, np.inf)
        flat = int(np.argmin(sub))
        a, b = divmod(flat, len(idx))
        separation = float(sub[a, b])
        closest = (pts[a], pts[b])
        bad = np.argwhere(np.triu(sub <= sep_bound))
        separation_violations = tuple(
            (pts[i], pts[j], float(sub[i, j])) for i, j in bad)
    else:
        separation = math.inf
        closest = None
        separation_violations = ()
    return NetAuditReport(
        ok=covering <= cover_bound and separation > sep_bound,
        covering_radius=covering, worst_vertex=worst,
        min_separation=separation, closest_pair=closest,
        cover_violations=cover_violations,
        separation_violations=separation_violations)
