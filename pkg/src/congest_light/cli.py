"""Command-line front door: generate, run, audit, and sweep.

Single runs print JSON to stdout; bench sweeps emit CSV with a fixed column
order. Identical command lines produce identical output: instances are
seeded, engines are deterministic, and sampled audits use a fixed seed.

Exit codes: 0 success, 2 an audit failed, 3 the engine hit its round cap,
64 bad usage.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .doubling import (DOUBLING_EPS_LIMIT, DOUBLING_EPS_RESCALE,
                       build_doubling_spanner, mst_weight_estimator)
from .engine import NonterminationError, RoundEngine
from .fragments import compute_fragments
from .graphs import WeightedGraph, generate, load_graph_file
from .nets import net_loop
from .slt import build_slt, lightness_tradeoff
from .spanner import build_light_spanner
from .tour import euler_tour
from .verify import SAMPLED_PAIRS_DEFAULT, audit_net, audit_spanner

BENCH_COLUMNS = ("n", "seed", "rounds", "lightness", "max_stretch", "edges")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems as exit code 64."""

    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--rounds-cap", type=int, default=None)
    shared.add_argument("--strict-congest", action="store_true")

    top = _Parser(prog="congest-light", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[shared],
                       help="print a generated instance as edge-list text")
    p.add_argument("--kind", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--wmax", type=float)
    p.add_argument("--radius", type=float)

    p = sub.add_parser("tour", parents=[shared],
                       help="fragments plus traversal; reports the length")
    p.add_argument("--input", required=True)
    p.add_argument("--root", type=int, default=0)

    p = sub.add_parser("slt", parents=[shared],
                       help="shallow-light tree, or its inverse regime")
    p.add_argument("--input", required=True)
    p.add_argument("--root", type=int, default=0)
    p.add_argument("--eps", type=float)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("spanner", parents=[shared],
                       help="light spanner for a stretch parameter k")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser("net", parents=[shared],
                       help="covering/separated point set at a width")
    p.add_argument("--input", required=True)
    p.add_argument("--delta", type=float, required=True,
                   help="net width (covering scale)")
    p.add_argument("--slack", type=float, required=True,
                   help="multiplicative slack in (0, 1)")

    p = sub.add_parser("doubling", parents=[shared],
                       help="scale-ladder spanner plus the weight estimate")
    p.add_argument("--input", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--pairs", type=int, default=SAMPLED_PAIRS_DEFAULT)

    p = sub.add_parser("audit", parents=[shared],
                       help="independent audit of a subgraph or a net")
    p.add_argument("--input", required=True)
    p.add_argument("--edges", help="edge-list file of the subgraph to audit")
    p.add_argument("--net", help="comma-separated net vertex ids")
    p.add_argument("--mode", choices=["per_edge", "sampled_pairs"],
                   default="per_edge")
    p.add_argument("--pairs", type=int, default=SAMPLED_PAIRS_DEFAULT)
    p.add_argument("--stretch-bound", type=float)
    p.add_argument("--lightness-bound", type=float)
    p.add_argument("--cover", type=float)
    p.add_argument("--sep", type=float)

    p = sub.add_parser("bench", parents=[shared],
                       help="sweep an algorithm over n and seeds; CSV out")
    p.add_argument("--algo", required=True,
                   choices=["spanner", "slt", "tour", "doubling"])
    p.add_argument("--n", required=True,
                   help="comma-separated instance sizes")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--kind", default="random_weighted")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--gamma", type=float)
    p.add_argument("--audit", action="store_true",
                   help="run the exact stretch audit per cell")
    p.add_argument("--out", help="CSV file path; stdout when omitted")
    return top


def _engine(g: WeightedGraph, args) -> RoundEngine:
    kw = {"seed": args.seed, "strict": args.strict_congest}
    if args.rounds_cap is not None:
        kw["rounds_cap"] = args.rounds_cap
    return RoundEngine(g, **kw)


def _emit(blob: dict) -> None:
    sys.stdout.write(json.dumps(blob) + "\n")


def _cmd_gen(args) -> int:
    params = {}
    for name in ("n", "rows", "cols", "p", "wmax", "radius"):
        value = getattr(args, name)
        if value is not None:
            params[name] = value
    g = generate(args.kind, seed=args.seed, **params)
    out = [str(g.n)]
    out.extend(f"{u} {v} {w!r}" for u, v, w in g.edges)
    sys.stdout.write("\n".join(out) + "\n")
    return 0


def _cmd_tour(args) -> int:
    g = load_graph_file(args.input)
    engine = _engine(g, args)
    deco, metrics = compute_fragments(engine, root=args.root)
    walk, _lengths, m = euler_tour(engine, deco)
    metrics = metrics.merge(m)
    _emit({"root": args.root, "n": g.n, "length": walk.length,
           "mst_weight": walk.length / 2.0,
           "index_length": walk.index_length,
           "rounds": metrics.rounds_used,
           "messages": metrics.total_messages})
    return 0


def _cmd_slt(args) -> int:
    if (args.eps is None) == (args.gamma is None):
        raise _UsageError("slt needs exactly one of --eps or --gamma")
    g = load_graph_file(args.input)
    engine = _engine(g, args)
    if args.gamma is not None:
        result = lightness_tradeoff(engine, args.root, args.gamma)
    else:
        result, _metrics = build_slt(engine, args.root, args.eps)
    _emit(result.to_json())
    return 0


def _cmd_spanner(args) -> int:
    g = load_graph_file(args.input)
    engine = _engine(g, args)
    result, _metrics = build_light_spanner(engine, g, args.k, args.eps)
    _emit(result.to_json())
    return 0


def _cmd_net(args) -> int:
    g = load_graph_file(args.input)
    engine = _engine(g, args)
    state, metrics = net_loop(engine, g, args.delta, args.slack)
    report = audit_net(g, state.net,
                       cover_bound=(1.0 + args.slack) * args.delta,
                       sep_bound=args.delta / (1.0 + args.slack))
    _emit({"net_points": list(state.net),
           "covering_radius": report.covering_radius,
           "min_separation": report.min_separation,
           "iterations": state.iteration,
           "rounds": metrics.rounds_used})
    return 0 if report.ok else 2


def _cmd_doubling(args) -> int:
    eps_int = args.eps / DOUBLING_EPS_RESCALE
    if not 0.0 < eps_int < DOUBLING_EPS_LIMIT:
        raise _UsageError(
            f"--eps must lie in (0, {DOUBLING_EPS_RESCALE * DOUBLING_EPS_LIMIT})"
            f", got {args.eps}")
    g = load_graph_file(args.input)
    engine = _engine(g, args)
    edges, ladder, metrics = build_doubling_spanner(engine, g, eps_int,
                                                    audit=False)
    report = audit_spanner(g, edges, mode="sampled_pairs", pairs=args.pairs,
                           metrics=metrics)
    estimate = mst_weight_estimator(engine, g, args.alpha)
    _emit({"stretch_sampled_max": report.max_stretch,
           "lightness": ladder.lightness,
           "edges": ladder.edge_count,
           "per_scale": ladder.per_scale_json(),
           "psi": estimate.to_json()})
    ok = report.max_stretch <= 1.0 + args.eps and estimate.holds()
    return 0 if ok else 2


def _cmd_audit(args) -> int:
    if (args.edges is None) == (args.net is None):
        raise _UsageError("audit needs exactly one of --edges or --net")
    g = load_graph_file(args.input)
    if args.edges is not None:
        try:
            h = load_graph_file(args.edges)
            report = audit_spanner(g, h.edges, mode=args.mode,
                                   pairs=args.pairs)
        except ValueError as exc:
            _emit({"error": str(exc)})
            return 2
        _emit(report.to_json())
        if args.stretch_bound is not None \
                and report.max_stretch > args.stretch_bound:
            return 2
        if args.lightness_bound is not None \
                and report.lightness > args.lightness_bound:
            return 2
        return 0
    if args.cover is None or args.sep is None:
        raise _UsageError("net audits need --cover and --sep bounds")
    net = [int(x) for x in args.net.split(",") if x.strip()]
    report = audit_net(g, net, cover_bound=args.cover, sep_bound=args.sep)
    _emit(report.to_json())
    return 0 if report.ok else 2


def _bench_cell(args, n: int, seed: int) -> dict:
    g = generate(args.kind, seed=seed, n=n)
    engine = RoundEngine(g, seed=seed, strict=args.strict_congest)
    if args.algo == "spanner":
        result, metrics = build_light_spanner(engine, g, args.k, args.eps,
                                              audit=args.audit)
        return {"n": n, "seed": seed, "rounds": metrics.rounds_used,
                "lightness": result.lightness,
                "max_stretch": result.max_stretch,
                "edges": len(result.edges)}
    if args.algo == "slt":
        if args.gamma is not None:
            result = lightness_tradeoff(engine, 0, args.gamma)
            rounds = result.metrics.rounds_used
        else:
            result, m = build_slt(engine, 0, args.eps)
            rounds = m.rounds_used
        return {"n": n, "seed": seed, "rounds": rounds,
                "lightness": result.lightness,
                "max_stretch": result.stretch_max, "edges": g.n - 1}
    if args.algo == "tour":
        deco, metrics = compute_fragments(engine)
        _walk, _lengths, m = euler_tour(engine, deco)
        metrics = metrics.merge(m)
        return {"n": n, "seed": seed, "rounds": metrics.rounds_used,
                "lightness": None, "max_stretch": None, "edges": g.n - 1}
    eps_int = args.eps / DOUBLING_EPS_RESCALE
    edges, ladder, metrics = build_doubling_spanner(engine, g, eps_int,
                                                    audit=args.audit)
    return {"n": n, "seed": seed, "rounds": metrics.rounds_used,
            "lightness": ladder.lightness, "max_stretch": ladder.max_stretch,
            "edges": ladder.edge_count}


def _cmd_bench(args) -> int:
    try:
        sizes = [int(x) for x in args.n.split(",") if x.strip()]
    except ValueError:
        raise _UsageError(f"--n wants comma-separated integers, got {args.n!r}")
    if not sizes or args.seeds < 1:
        raise _UsageError("need at least one size and one seed")
    if args.algo == "doubling" \
            and not 0.0 < args.eps / DOUBLING_EPS_RESCALE < DOUBLING_EPS_LIMIT:
        raise _UsageError(
            f"--eps must lie in (0, {DOUBLING_EPS_RESCALE * DOUBLING_EPS_LIMIT})"
            f" for doubling, got {args.eps}")
    cells = [(n, s) for n in sizes for s in range(args.seeds)]
    threads = max(1, int(os.environ.get("CONGEST_LIGHT_THREADS", "1")))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda c: _bench_cell(args, *c), cells))
    else:
        rows = [_bench_cell(args, n, s) for n, s in cells]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row[k] is None else row[k])
                         for k in BENCH_COLUMNS})
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


_COMMANDS = {"gen": _cmd_gen, "tour": _cmd_tour, "slt": _cmd_slt,
             "spanner": _cmd_spanner, "net": _cmd_net,
             "doubling": _cmd_doubling, "audit": _cmd_audit,
             "bench": _cmd_bench}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        parser.print_usage(sys.stderr)
        return 64
    except NonterminationError as exc:
        sys.stderr.write(f"round cap exceeded: {exc}\n")
        return 3
    except ValueError as exc:
        # bad parameter values surface the same way as bad flags
        sys.stderr.write(f"usage error: {exc}\n")
        return 64


if __name__ == "__main__":
    sys.exit(main())
