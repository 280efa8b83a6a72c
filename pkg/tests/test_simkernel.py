import json

import numpy as np
import pytest

from qnetsim.simkernel import (
    Engine,
    MessageBus,
    ScheduleInPast,
    Trace,
    TraceRecord,
    s_to_ns,
    topic_matches,
)


class TestEngine:
    def test_equal_fire_times_run_in_enqueue_order(self):
        eng = Engine()
        order = []
        eng.schedule_at(100, lambda ev: order.append("first"))
        eng.schedule_at(100, lambda ev: order.append("second"))
        eng.schedule_at(50, lambda ev: order.append("early"))
        eng.run_until()
        assert order == ["early", "first", "second"]

    def test_schedule_in_past_rejected(self):
        eng = Engine()
        eng.schedule_at(10, lambda ev: eng.schedule_at(5, lambda e: None))
        with pytest.raises(ScheduleInPast):
            eng.run_until()

    def test_run_until_stops_at_bound(self):
        eng = Engine()
        hits = []
        for t in (10, 20, 30):
            eng.schedule_at(t, lambda ev, t=t: hits.append(t))
        eng.run_until(20)
        assert hits == [10, 20]
        assert eng.now_ns == 20
        eng.run_until()
        assert hits == [10, 20, 30]

    def test_cancelled_events_are_accounted(self):
        eng = Engine()
        ev = eng.schedule_at(10, lambda e: None)
        ev.cancel("no longer needed")
        eng.schedule_at(20, lambda e: None)
        eng.run_until()
        assert eng.stats["scheduled"] == 2
        assert eng.stats["processed"] == 1
        assert eng.stats["cancelled"] == 1

    def test_no_event_loss(self):
        eng = Engine(root_seed=1)
        rng = np.random.default_rng(0)

        def chain(ev):
            if eng.now_ns < 5000:
                eng.schedule_after(int(rng.integers(1, 50)), chain)

        eng.schedule_at(0, chain)
        eng.run_until()
        assert eng.stats["scheduled"] == eng.stats["processed"] + eng.stats["cancelled"]


class TestRngStreams:
    def test_same_key_same_stream(self):
        eng = Engine(root_seed=123)
        a = eng.derive_rng("photonics/arm1").normal(size=5)
        b = eng.derive_rng("photonics/arm1").normal(size=5)
        assert np.array_equal(a, b)

    def test_distinct_keys_differ(self):
        eng = Engine(root_seed=123)
        a = eng.derive_rng("photonics/arm1").normal(size=5)
        b = eng.derive_rng("photonics/arm2").normal(size=5)
        assert not np.array_equal(a, b)

    def test_seed_changes_stream(self):
        a = Engine(root_seed=1).derive_rng("k").normal(size=5)
        b = Engine(root_seed=2).derive_rng("k").normal(size=5)
        assert not np.array_equal(a, b)


class TestTopicMatch:
    @pytest.mark.parametrize("pattern,topic,match", [
        ("qnet/register", "qnet/register", True),
        ("qnet/register", "qnet/topology", False),
        ("qnet/request/+/ctl", "qnet/request/r1/ctl", True),
        ("qnet/request/+/ctl", "qnet/request/r1/meas", False),
        ("qnet/request/#", "qnet/request/r1/ctl", True),
        ("qnet/#", "qnet/cal/node-a", True),
        ("qnet/request/+", "qnet/request", False),
    ])
    def test_patterns(self, pattern, topic, match):
        assert topic_matches(pattern, topic) is match


class TestBus:
    def test_pub_sub_round_trip(self):
        eng = Engine()
        bus = MessageBus(eng, latency_ns=1000)
        got = []
        bus.subscribe("qnet/request/+/ctl", lambda m: got.append((m.kind, m.payload)))
        eng.schedule_at(0, lambda ev: bus.publish(
            "qnet/request/r1/ctl", sender="server", kind="start",
            payload={"x": 1}, correlation_id="r1"))
        eng.run_until()
        assert got == [("start", {"x": 1})]

    def test_trace_records_publish_time_and_order(self):
        eng = Engine()
        bus = MessageBus(eng, latency_ns=500)
        eng.schedule_at(10, lambda ev: bus.publish("a/b", "s1", "k1", {}, "c1"))
        eng.schedule_at(10, lambda ev: bus.publish("a/c", "s2", "k2", {}, "c2"))
        eng.run_until()
        recs = list(eng.trace)
        assert [(r.seq, r.topic) for r in recs] == [(0, "a/b"), (1, "a/c")]
        assert all(r.t_ns == 10 for r in recs)

    def test_deterministic_trace_bytes(self):
        def run():
            eng = Engine(root_seed=5)
            bus = MessageBus(eng, latency_ns=100)
            rng = eng.derive_rng("load")

            def tick(ev):
                n = float(rng.normal())
                bus.publish("qnet/cal/n1", "n1", "report", {"v": n}, "c")
                if eng.now_ns < 10000:
                    eng.schedule_after(int(rng.integers(10, 200)), tick)

            eng.schedule_at(0, tick)
            eng.run_until()
            return "\n".join(r.to_json() for r in eng.trace)

        assert run() == run()


class TestTraceIo:
    def test_ndjson_round_trip(self, tmp_path):
        trace = Trace()
        trace.append(TraceRecord(1, 0, "t/a", "s", "c", "k", {"a": 1.5, "b": "x"}))
        trace.append(TraceRecord(2, 1, "t/b", "s", "c", "k2", {}))
        p = tmp_path / "trace.ndjson"
        trace.write_ndjson(p)
        back = Trace.read_ndjson(p)
        assert [r.to_dict() for r in back] == [r.to_dict() for r in trace]

    def test_field_order_is_stable(self):
        rec = TraceRecord(5, 2, "x/y", "me", "corr", "kind", {"z": 1})
        assert list(json.loads(rec.to_json()).keys()) == [
            "t_ns", "seq", "topic", "sender", "correlation_id", "kind", "payload"]

    def test_correlation_filter(self):
        trace = Trace()
        for i, c in enumerate("aab"):
            trace.append(TraceRecord(i, i, "t", "s", c, "k", {}))
        assert len(trace.for_correlation("a")) == 2
