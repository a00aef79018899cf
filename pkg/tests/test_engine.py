"""Engine semantics: word accounting, determinism, wake/quiet, failure modes."""
import pytest

from congest_light.engine import (CongestionViolation, NodeProgram,
                                  NonterminationError, RoundEngine,
                                  RoundMetrics, payload_words)
from congest_light.graphs import generate


class _Flood(NodeProgram):
    """Every vertex forwards the smallest id it has heard; floods to fixpoint."""

    def __init__(self, node):
        self.best = node

    def on_start(self, ctx):
        ctx.out = self.best
        for u in ctx.neighbors:
            ctx.send(u, self.best)

    def on_round(self, ctx, inbox):
        low = min(p for _f, _c, p in inbox)
        if low < self.best:
            self.best = low
            ctx.out = low
            for u in ctx.neighbors:
                ctx.send(u, low)


def test_payload_word_charges():
    assert payload_words(7) == 1
    assert payload_words(1.5) == 1
    assert payload_words(True) == 1
    assert payload_words(None) == 1
    assert payload_words("12345678") == 1
    assert payload_words("123456789") == 2
    assert payload_words((3, 2.5)) == 2
    assert payload_words(((1, 2.0), (3, 4.0), (5, 6.0), (7, 8.0))) == 8
    assert payload_words([1, (2, 3), "abcdefghi"]) == 5

    class OddInt(int):
        pass

    assert payload_words(OddInt(4)) == 1
    with pytest.raises(TypeError):
        payload_words({"no": "dicts"})
    with pytest.raises(TypeError):
        payload_words((1, {"no": "dicts"}))


def test_flood_converges_and_is_deterministic():
    g = generate("random_weighted", seed=11, n=40)
    runs = [RoundEngine(g, seed=11).run(_Flood) for _ in range(2)]
    assert runs[0].outputs == [0] * 40
    assert runs[0].outputs == runs[1].outputs
    assert runs[0].metrics == runs[1].metrics
    assert runs[0].metrics.rounds_used >= 1


def test_trace_replay_matches_the_metered_peak():
    g = generate("grid", rows=4, cols=5)
    res = RoundEngine(g, seed=2).run(_Flood, record_trace=True)
    per_edge_round: dict = {}
    for rnd, frm, to, words in res.trace:
        key = (rnd, frm, to)
        per_edge_round[key] = per_edge_round.get(key, 0) + words
    assert max(per_edge_round.values()) == res.metrics.max_words_per_edge_round
    assert len(res.trace) == res.metrics.total_messages


def test_declared_word_cost_overrides_the_payload():
    class Claim(NodeProgram):
        def __init__(self, node):
            self.node = node

        def on_start(self, ctx):
            if self.node == 0:
                ctx.send(ctx.neighbors[0], (1, 2, 3), words=1)

    g = generate("path", n=2)
    res = RoundEngine(g).run(Claim, record_trace=True)
    assert res.trace == [(1, 0, 1, 1)]
    assert res.metrics.max_words_per_edge_round == 1


class _Shout(NodeProgram):
    """Node 0 pushes `volume` one-word messages down one edge for `repeat` rounds."""

    def __init__(self, node, volume, repeat):
        self.node = node
        self.left = repeat if node == 0 else 0
        self.volume = volume

    def on_start(self, ctx):
        self._burst(ctx)

    def on_round(self, ctx, inbox):
        self._burst(ctx)

    def _burst(self, ctx):
        if self.left > 0:
            self.left -= 1
            for i in range(self.volume):
                ctx.send(1, i)
            if self.left:
                ctx.wake()


def test_default_mode_records_violations_with_capped_examples():
    g = generate("path", n=2)
    res = RoundEngine(g, budget_words=8).run(lambda v: _Shout(v, 9, 20))
    m = res.metrics
    assert m.violation_count == 20
    assert len(m.violation_examples) == 16
    assert m.violation_examples[0] == (1, 0, 1, 9)
    assert m.max_words_per_edge_round == 9


def test_strict_mode_raises_with_edge_coordinates():
    g = generate("path", n=2)
    with pytest.raises(CongestionViolation) as exc:
        RoundEngine(g, budget_words=8, strict=True).run(lambda v: _Shout(v, 9, 1))
    assert (exc.value.frm, exc.value.to, exc.value.words) == (0, 1, 9)
    assert exc.value.round_no == 1


def test_round_cap_raises_with_partial_outputs():
    class PingPong(NodeProgram):
        def on_start(self, ctx):
            ctx.out = "started"
            if ctx.node == 0:
                ctx.send(1, 0)

        def on_round(self, ctx, inbox):
            for frm, _c, p in inbox:
                ctx.send(frm, p + 1)

    g = generate("path", n=2)
    with pytest.raises(NonterminationError) as exc:
        RoundEngine(g, rounds_cap=10).run(lambda v: PingPong())
    assert exc.value.rounds == 11
    assert exc.value.outputs == ["started", "started"]


def test_self_wake_runs_without_any_messages():
    class Counter(NodeProgram):
        def __init__(self, node):
            self.count = 0

        def on_start(self, ctx):
            ctx.wake()

        def on_round(self, ctx, inbox):
            assert inbox == ()
            self.count += 1
            if self.count < 5:
                ctx.wake()
            ctx.out = self.count

    g = generate("path", n=3)
    res = RoundEngine(g).run(Counter)
    assert res.outputs == [5, 5, 5]
    assert res.metrics.rounds_used == 5
    assert res.metrics.total_messages == 0


def test_quiet_hook_fires_once_the_network_is_silent():
    class LateRoot(NodeProgram):
        def __init__(self):
            self.sent = False

        def on_quiet(self, ctx):
            if not self.sent:
                self.sent = True
                for u in ctx.neighbors:
                    ctx.send(u, "late")

    class Listener(NodeProgram):
        def on_round(self, ctx, inbox):
            ctx.out = [p for _f, _c, p in inbox]

    g = generate("star", n=5)
    res = RoundEngine(g).run(lambda v: LateRoot() if v == 0 else Listener())
    assert res.outputs[1:] == [["late"]] * 4
    assert res.metrics.rounds_used == 1


def test_inbox_arrives_sorted_by_sender():
    class Leaf(NodeProgram):
        def on_start(self, ctx):
            if ctx.node != 0:
                ctx.send(0, ctx.node)

    class Center(Leaf):
        def on_round(self, ctx, inbox):
            ctx.out = [frm for frm, _c, _p in inbox]

    g = generate("star", n=8)
    res = RoundEngine(g).run(lambda v: Center() if v == 0 else Leaf())
    assert res.outputs[0] == list(range(1, 8))


def test_send_to_non_neighbor_is_refused():
    class Bad(NodeProgram):
        def on_start(self, ctx):
            if ctx.node == 0:
                ctx.send(2, "hi")

    g = generate("path", n=3)
    with pytest.raises(ValueError):
        RoundEngine(g).run(lambda v: Bad())


def test_ctx_wrapper_sees_every_send():
    log = []

    class Spy:
        def __init__(self, node, inner):
            object.__setattr__(self, "_inner", inner)
            object.__setattr__(self, "_node", node)

        def send(self, to, payload, channel=0, words=None):
            log.append((self._node, to))
            return self._inner.send(to, payload, channel=channel, words=words)

        def __getattr__(self, name):
            return getattr(object.__getattribute__(self, "_inner"), name)

        def __setattr__(self, name, value):
            setattr(object.__getattribute__(self, "_inner"), name, value)

    g = generate("random_weighted", seed=3, n=25)
    engine = RoundEngine(g, seed=3, ctx_wrapper=Spy)
    res = engine.run(_Flood)
    assert len(log) == res.metrics.total_messages
    assert all(to in g.neighbors(frm) for frm, to in log)


def test_node_rng_is_seeded_per_node_and_engine():
    class Draw(NodeProgram):
        def on_start(self, ctx):
            ctx.out = ctx.rng.random()

    g = generate("path", n=6)
    a = RoundEngine(g, seed=1).run(lambda v: Draw()).outputs
    b = RoundEngine(g, seed=1).run(lambda v: Draw()).outputs
    c = RoundEngine(g, seed=2).run(lambda v: Draw()).outputs
    assert a == b and a != c
    assert len(set(a)) == 6


def test_termination_callback_stops_a_chatty_network():
    class Chatter(NodeProgram):
        def __init__(self):
            self.count = 0

        def on_start(self, ctx):
            ctx.out = 0
            for u in ctx.neighbors:
                ctx.send(u, 0)

        def on_round(self, ctx, inbox):
            self.count += 1
            ctx.out = self.count
            for u in ctx.neighbors:
                ctx.send(u, self.count)

    g = generate("cycle", n=6)
    res = RoundEngine(g).run(lambda v: Chatter(),
                             termination=lambda outs: all(o >= 3 for o in outs))
    assert res.metrics.rounds_used == 3
    assert res.outputs == [3] * 6


def test_metrics_merge_and_json():
    a = RoundMetrics(rounds_used=3, total_messages=10,
                     max_words_per_edge_round=4, violation_count=1,
                     violation_examples=[(1, 0, 1, 9)], deviations=("x",))
    b = RoundMetrics(rounds_used=2, total_messages=5,
                     max_words_per_edge_round=6, deviations=("x", "y"))
    m = a.merge(b)
    assert m.rounds_used == 5 and m.total_messages == 15
    assert m.max_words_per_edge_round == 6
    assert m.deviations == ("x", "y")
    assert m.with_deviation("y", "z").deviations == ("x", "y", "z")
    blob = m.to_json()
    assert blob["rounds"] == 5 and blob["budget_violations"] == 1
    assert blob["deviations"] == ["x", "y", "z"]
