"""Round-synchronous message-passing executor with per-edge word accounting.

Execution model
---------------
Every vertex hosts one NodeProgram. A program only sees its Ctx: its own id,
its incident edges, its inbox, and its private seeded rng. Rounds are
synchronous: messages sent in round r are delivered at the start of round r+1.
Nodes are stepped in ascending id order and inboxes arrive sorted by sender id,
so runs are deterministic given (graph, seed, programs).

Word accounting charges each payload against a per-directed-edge per-round
budget. The default mode only records violations (so substitute subroutines
that are chattier than one constant-size message per edge still run, with the
overage reported); strict mode raises instead.

A program that has nothing buffered is not stepped. When the whole network is
silent the engine offers every program an on_quiet callback before declaring
termination. That callback stands in for a distributed termination-detection
gadget and is metered at the one round the follow-up messages occupy, not the
O(diameter) a real detection wave would cost; results that rely on it carry a
deviation note.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .rng import hash64

DEFAULT_BUDGET_WORDS = 8
DEFAULT_ROUNDS_CAP = 2_000_000
VIOLATION_EXAMPLE_CAP = 16

DEVIATION_BARRIER = ("engine: quiescence barriers metered at one round instead "
                     "of an O(D) detection wave")


class CongestionViolation(RuntimeError):
    def __init__(self, round_no: int, frm: int, to: int, words: int, budget: int):
        self.round_no, self.frm, self.to, self.words = round_no, frm, to, words
        super().__init__(
            f"edge ({frm}->{to}) carried {words} words in round {round_no}, "
            f"budget is {budget}")


class NonterminationError(RuntimeError):
    def __init__(self, rounds: int, outputs=None):
        self.rounds = rounds
        self.outputs = outputs
        super().__init__(f"no termination after {rounds} rounds")


def payload_words(payload) -> int:
    """Words occupied by a payload: scalars cost one, containers sum their items."""
    t = type(payload)
    if t is int or t is float or t is bool or payload is None:
        return 1
    if t is str:
        return max(1, (len(payload) + 7) // 8)
    if t is tuple or t is list:
        total = 0
        for x in payload:
            tx = type(x)
            if tx is int or tx is float or tx is bool or x is None:
                total += 1
            elif tx is tuple or tx is list:
                total += payload_words(x)
            elif tx is str:
                total += max(1, (len(x) + 7) // 8)
            else:
                total += _payload_words_odd(x)
        return total
    return _payload_words_odd(payload)


def _payload_words_odd(payload) -> int:
    """Subclass instances of the supported types still count; others refuse."""
    if isinstance(payload, (bool, int, float)):
        return 1
    if isinstance(payload, str):
        return max(1, (len(payload) + 7) // 8)
    if isinstance(payload, (tuple, list)):
        return payload_words(tuple(payload))
    raise TypeError(f"unsupported payload type {type(payload).__name__}")


@dataclass
class RoundMetrics:
    rounds_used: int = 0
    total_messages: int = 0
    max_words_per_edge_round: int = 0
    violation_count: int = 0
    violation_examples: list = field(default_factory=list)
    deviations: tuple = ()

    def merge(self, other: "RoundMetrics") -> "RoundMetrics":
        """Sequential composition: rounds add, peaks take the max."""
        ex = (self.violation_examples + other.violation_examples)[:VIOLATION_EXAMPLE_CAP]
        dev = list(self.deviations)
        for d in other.deviations:
            if d not in dev:
                dev.append(d)
        return RoundMetrics(
            rounds_used=self.rounds_used + other.rounds_used,
            total_messages=self.total_messages + other.total_messages,
            max_words_per_edge_round=max(self.max_words_per_edge_round,
                                         other.max_words_per_edge_round),
            violation_count=self.violation_count + other.violation_count,
            violation_examples=ex,
            deviations=tuple(dev),
        )

    def with_deviation(self, *notes: str) -> "RoundMetrics":
        dev = list(self.deviations)
        for d in notes:
            if d not in dev:
                dev.append(d)
        self.deviations = tuple(dev)
        return self

    def to_json(self) -> dict:
        return {"rounds": self.rounds_used,
                "messages": self.total_messages,
                "max_words_per_edge_round": self.max_words_per_edge_round,
                "budget_violations": self.violation_count,
                "deviations": list(self.deviations)}


class NodeProgram:
    """Base class; subclasses override any subset of the three hooks."""

    def on_start(self, ctx):
        pass

    def on_round(self, ctx, inbox):
        pass

    # on_quiet intentionally absent here: the engine only calls it on programs
    # that define it, so silent programs terminate without an extra sweep.


class Ctx:
    """The only handle a program gets; everything visible through it is local."""

    __slots__ = ("node", "neighbors", "inputs", "out", "round",
                 "_wmap", "_outbox", "_wake", "_rng", "_seed")

    def __init__(self, node: int, neighbors: tuple[int, ...], wmap: dict,
                 seed: int, inputs):
        self.node = node
        self.neighbors = neighbors
        self.inputs = inputs
        self.out = None
        self.round = 0
        self._wmap = wmap
        self._outbox: list = []
        self._wake = False
        self._rng = None
        self._seed = seed

    def weight(self, u: int) -> float:
        return self._wmap[u]

    def send(self, to: int, payload, channel: int = 0, words: int | None = None):
        if to not in self._wmap:
            raise ValueError(f"vertex {self.node} has no edge to {to}")
        self._outbox.append((to, channel, payload,
                             payload_words(payload) if words is None else words))

    def wake(self):
        self._wake = True

    @property
    def rng(self) -> random.Random:
        if self._rng is None:
            self._rng = random.Random(hash64(self._seed, "node", self.node))
        return self._rng


@dataclass
class RunResult:
    outputs: list
    metrics: RoundMetrics
    trace: list | None = None


class RoundEngine:
    """Executor bound to one graph; each run() is a fresh program deployment."""

    def __init__(self, graph, seed: int = 0, budget_words: int = DEFAULT_BUDGET_WORDS,
                 strict: bool = False, rounds_cap: int = DEFAULT_ROUNDS_CAP,
                 ctx_wrapper=None):
        self.graph = graph
        self.seed = seed
        self.budget_words = budget_words
        self.strict = strict
        self.rounds_cap = rounds_cap
        self.ctx_wrapper = ctx_wrapper
        self._wmaps = [
            {u: graph.weight(v, u) for u in graph.neighbors(v)}
            for v in range(graph.n)
        ]

    def run(self, factory, inputs=None, rounds_cap: int | None = None,
            record_trace: bool = False, termination=None) -> RunResult:
        g = self.graph
        n = g.n
        cap = rounds_cap if rounds_cap is not None else self.rounds_cap
        progs = [factory(v) for v in range(n)]
        ctxs = [Ctx(v, g.neighbors(v), self._wmaps[v], self.seed,
                    None if inputs is None else inputs[v]) for v in range(n)]
        if self.ctx_wrapper is not None:
            ctxs = [self.ctx_wrapper(v, c) for v, c in enumerate(ctxs)]
        quiet_handlers = [getattr(p, "on_quiet", None) for p in progs]

        metrics = RoundMetrics()
        trace: list | None = [] if record_trace else None
        budget = self.budget_words
        strict = self.strict

        inboxes: dict[int, list] = {}
        wakes: list[int] = []

        def flush(stepped, next_round: int):
            new_wakes = []
            edge_words: dict[int, int] = {}
            ew_get = edge_words.get
            msgs = 0
            for v in stepped:
                c = ctxs[v]
                if c._wake:
                    c._wake = False
                    new_wakes.append(v)
                ob = c._outbox
                if not ob:
                    continue
                c._outbox = []
                msgs += len(ob)
                base = v * n
                for to, ch, payload, words in ob:
                    key = base + to
                    edge_words[key] = ew_get(key, 0) + words
                    box = inboxes.get(to)
                    if box is None:
                        inboxes[to] = [(v, ch, payload)]
                    else:
                        box.append((v, ch, payload))
                    if trace is not None:
                        trace.append((next_round, v, to, words))
            metrics.total_messages += msgs
            for key, w in edge_words.items():
                if w > metrics.max_words_per_edge_round:
                    metrics.max_words_per_edge_round = w
                if w > budget:
                    u, t = divmod(key, n)
                    if strict:
                        raise CongestionViolation(next_round, u, t, w, budget)
                    metrics.violation_count += 1
                    if len(metrics.violation_examples) < VIOLATION_EXAMPLE_CAP:
                        metrics.violation_examples.append((next_round, u, t, w))
            return new_wakes

        all_nodes = range(n)
        for v in all_nodes:
            progs[v].on_start(ctxs[v])
        wakes = flush(all_nodes, 1)

        rounds = 0
        while True:
            if not inboxes and not wakes:
                for v in all_nodes:
                    h = quiet_handlers[v]
                    if h is not None:
                        ctxs[v].round = rounds
                        h(ctxs[v])
                wakes = flush(all_nodes, rounds + 1)
                if not inboxes and not wakes:
                    break
                continue
            rounds += 1
            if rounds > cap:
                metrics.rounds_used = rounds
                raise NonterminationError(rounds, [c.out for c in ctxs])
            current = inboxes
            inboxes = {}
            stepped = sorted(set(current) | set(wakes))
            for v in stepped:
                ctx = ctxs[v]
                ctx.round = rounds
                progs[v].on_round(ctx, current.get(v, ()))
            wakes = flush(stepped, rounds + 1)
            if termination is not None and termination([c.out for c in ctxs]):
                break
        metrics.rounds_used = rounds
        return RunResult([c.out for c in ctxs], metrics,
                         trace if record_trace else None)


def run_program(engine: RoundEngine, factory, inputs=None, termination=None,
                rounds_cap: int | None = None, record_trace: bool = False) -> RunResult:
    """Deploy one program per vertex and run to quiescence or termination."""
    return engine.run(factory, inputs=inputs, rounds_cap=rounds_cap,
                      record_trace=record_trace, termination=termination)
