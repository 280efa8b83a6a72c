"""Deterministic discrete-event kernel.

Virtual time is an integer nanosecond counter. Events fire in
``(fire_time_ns, seq)`` order, where ``seq`` is assigned monotonically at
enqueue time, so two runs of the same scenario with the same seed produce
identical schedules. Physical quantities finer than 1 ns (ps jitters,
sub-ns coincidence windows) are carried as model parameters, never as
event times.

Random numbers come from named streams derived from a single root seed;
``derive_rng("photonics/arm1")`` always yields the same stream for a given
root seed, independent of call order.
"""

from __future__ import annotations

import heapq
import json
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

import numpy as np

NS_PER_S = 1_000_000_000
NS_PER_MS = 1_000_000
NS_PER_US = 1_000


def s_to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


def ns_to_s(t_ns: int) -> float:
    return t_ns / NS_PER_S


class SimError(Exception):
    """Base error for the simulation kernel."""


class ScheduleInPast(SimError):
    pass


@dataclass
class Event:
    fire_time_ns: int
    seq: int
    handler: Callable[["Event"], None] = field(repr=False)
    payload: Any = None
    cancelled: bool = False
    cancel_reason: str | None = None

    def cancel(self, reason: str) -> None:
        self.cancelled = True
        self.cancel_reason = reason


@dataclass
class TraceRecord:
    """One bus message, as recorded in the replayable trace.

    Field order is part of the file format: serialized records are
    compared byte-for-byte across runs.
    """

    t_ns: int
    seq: int
    topic: str
    sender: str
    correlation_id: str
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {
            "t_ns": self.t_ns,
            "seq": self.seq,
            "topic": self.topic,
            "sender": self.sender,
            "correlation_id": self.correlation_id,
            "kind": self.kind,
            "payload": self.payload,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


class Trace:
    """Append-only message log. Thread-safe for readers; single writer."""

    def __init__(self) -> None:
        self._records: list[TraceRecord] = []
        self._cond = threading.Condition()

    def append(self, record: TraceRecord) -> None:
        with self._cond:
            self._records.append(record)
            self._cond.notify_all()

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(list(self._records))

    def __getitem__(self, i):
        return self._records[i]

    def since(self, seq: int) -> list[TraceRecord]:
        """Records with trace sequence number > seq."""
        return [r for r in self._records if r.seq > seq]

    def wait_for_more(self, seq: int, timeout: float | None = None) -> list[TraceRecord]:
        """Block until a record with sequence > seq exists, then return the tail."""
        with self._cond:
            self._cond.wait_for(lambda: self._records and self._records[-1].seq > seq,
                                timeout=timeout)
            return [r for r in self._records if r.seq > seq]

    def for_correlation(self, correlation_id: str) -> list[TraceRecord]:
        return [r for r in self._records if r.correlation_id == correlation_id]

    def write_ndjson(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self._records:
                fh.write(rec.to_json())
                fh.write("\n")

    @staticmethod
    def read_ndjson(path) -> list[TraceRecord]:
        out = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = json.loads(line)
                out.append(TraceRecord(**d))
        return out


class Engine:
    """Single-threaded event loop with a virtual clock.

    All mutable simulation state is owned by handlers running on this
    loop; other threads may only hand work in through :meth:`post` (used
    by the gateway API), which is drained at the current virtual time.
    """

    def __init__(self, root_seed: int = 0) -> None:
        self.root_seed = int(root_seed)
        self.now_ns = 0
        self.trace = Trace()
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._trace_seq = 0
        self._inbox: list[tuple[Callable, Any]] = []
        self._inbox_lock = threading.Lock()
        self.stats = {"scheduled": 0, "processed": 0, "cancelled": 0}

    # -- scheduling ---------------------------------------------------

    def schedule_at(self, t_ns: int, handler: Callable[[Event], None],
                    payload: Any = None) -> Event:
        if t_ns < self.now_ns:
            raise ScheduleInPast(f"cannot schedule at {t_ns} ns; now is {self.now_ns} ns")
        ev = Event(fire_time_ns=int(t_ns), seq=self._seq, handler=handler, payload=payload)
        self._seq += 1
        self.stats["scheduled"] += 1
        heapq.heappush(self._heap, (ev.fire_time_ns, ev.seq, ev))
        return ev

    def schedule_after(self, delay_ns: int, handler: Callable[[Event], None],
                       payload: Any = None) -> Event:
        if delay_ns < 0:
            raise ScheduleInPast(f"negative delay {delay_ns} ns")
        return self.schedule_at(self.now_ns + int(delay_ns), handler, payload)

    def post(self, handler: Callable[[Event], None], payload: Any = None) -> None:
        """Thread-safe hand-off into the loop; drained before the next event."""
        with self._inbox_lock:
            self._inbox.append((handler, payload))

    def _drain_inbox(self) -> None:
        with self._inbox_lock:
            pending, self._inbox = self._inbox, []
        for handler, payload in pending:
            self.schedule_at(self.now_ns, handler, payload)

    # -- running ------------------------------------------------------

    def step(self) -> bool:
        """Process the single next event. Returns False at quiescence."""
        self._drain_inbox()
        while self._heap:
            _, _, ev = heapq.heappop(self._heap)
            if ev.cancelled:
                self.stats["cancelled"] += 1
                continue
            self.now_ns = ev.fire_time_ns
            ev.handler(ev)
            self.stats["processed"] += 1
            return True
        return False

    def run_until(self, t_ns: int | None = None) -> Trace:
        """Run events in order until time t_ns (inclusive), or to quiescence."""
        while True:
            self._drain_inbox()
            if not self._heap:
                break
            fire, _, ev = self._heap[0]
            if t_ns is not None and fire > t_ns:
                break
            heapq.heappop(self._heap)
            if ev.cancelled:
                self.stats["cancelled"] += 1
                continue
            self.now_ns = ev.fire_time_ns
            ev.handler(ev)
            self.stats["processed"] += 1
        if t_ns is not None and t_ns > self.now_ns:
            self.now_ns = t_ns
        return self.trace

    @property
    def quiescent(self) -> bool:
        with self._inbox_lock:
            if self._inbox:
                return False
        return not any(not ev.cancelled for _, _, ev in self._heap)

    # -- randomness ---------------------------------------------------

    def derive_rng(self, key: str) -> np.random.Generator:
        """Independent, reproducible stream for a string key.

        Pure in (root_seed, key): the same pair always yields an
        identical generator, regardless of when or how often it is asked
        for.
        """
        ss = np.random.SeedSequence(self.root_seed, spawn_key=tuple(key.encode("utf-8")))
        return np.random.Generator(np.random.PCG64(ss))

    # -- tracing ------------------------------------------------------

    def record_message(self, topic: str, sender: str, correlation_id: str,
                       kind: str, payload: dict) -> TraceRecord:
        rec = TraceRecord(
            t_ns=self.now_ns,
            seq=self._trace_seq,
            topic=topic,
            sender=sender,
            correlation_id=correlation_id,
            kind=kind,
            payload=payload,
        )
        self._trace_seq += 1
        self.trace.append(rec)
        return rec


class BusMessage:
    """Typed protocol message delivered over the in-process bus."""

    __slots__ = ("topic", "sender", "correlation_id", "kind", "payload", "t_ns", "seq")

    def __init__(self, topic: str, sender: str, correlation_id: str,
                 kind: str, payload: dict, t_ns: int, seq: int):
        self.topic = topic
        self.sender = sender
        self.correlation_id = correlation_id
        self.kind = kind
        self.payload = payload
        self.t_ns = t_ns
        self.seq = seq


def topic_matches(pattern: str, topic: str) -> bool:
    """MQTT-style match: '+' is one level, trailing '#' is any remainder."""
    pp = pattern.split("/")
    tp = topic.split("/")
    for i, seg in enumerate(pp):
        if seg == "#":
            return True
        if i >= len(tp):
            return False
        if seg == "+":
            continue
        if seg != tp[i]:
            return False
    return len(pp) == len(tp)


class MessageBus:
    """In-process pub/sub bus running on the event engine.

    Publishing appends one trace record and schedules delivery to each
    matching subscriber after the configured latency. Delivery order is
    deterministic: subscription order, then publish order.
    """

    def __init__(self, engine: Engine, latency_ns: int = NS_PER_MS) -> None:
        self.engine = engine
        self.latency_ns = int(latency_ns)
        self._subs: list[tuple[str, Callable[[BusMessage], None]]] = []

    def subscribe(self, pattern: str, handler: Callable[[BusMessage], None]) -> None:
        self._subs.append((pattern, handler))

    def publish(self, topic: str, sender: str, kind: str,
                payload: dict | None = None, correlation_id: str = "-") -> TraceRecord:
        payload = payload if payload is not None else {}
        rec = self.engine.record_message(topic, sender, correlation_id, kind, payload)
        msg = BusMessage(topic, sender, correlation_id, kind, payload,
                         t_ns=rec.t_ns, seq=rec.seq)
        for pattern, handler in self._subs:
            if topic_matches(pattern, topic):
                self.engine.schedule_after(
                    self.latency_ns,
                    lambda ev, h=handler, m=msg: h(m),
                )
        return rec
