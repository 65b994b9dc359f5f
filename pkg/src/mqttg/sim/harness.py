"""
Deterministic in-memory simulation of many clients against one broker.

Every packet is really encoded and decoded on the way through the simulated
wire, so byte counts are exact.  Events are ordered by
``(time, priority, insertion order)``:

* priority 0: once-per-second movement, where each moving client that shares
  its location sends a geolocation-flagged PINGREQ;
* priority 1: scenario actions (connect, subscribe, fences, publishes);
* priority 2: once-per-second timers (retransmission, keep-alive);
* priority 3: packet arrivals.

All hops share one latency, so packets arrive in the order they were sent.
A publish sent at ``t`` therefore meets a broker that knows every client at
its position for second ``floor(t)``.
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from ..broker import Broker, BrokerConfig, Close, Delivery, FenceChanged, Send, Warn
from ..broker.core import Verdict
from ..client import ClientConfig, ClientEngine, ConnectionLost, MessageReceived
from ..codec import GeolocationBlock, Packet, decode_packet, encode_packet
from .movement import Trajectory
from .report import Metrics, RouteRecord
from .scenario import SETUP_END, Scenario, validate_scenario

PRIO_MOVE, PRIO_ACTION, PRIO_TIMER, PRIO_ARRIVE = 0, 1, 2, 3
BROKER = "$broker"


class WireRecord(NamedTuple):
    time: float
    src: str
    dst: str
    packet: Packet
    size: int
    dropped: bool


class SimResult(NamedTuple):
    metrics: Metrics
    log: list[RouteRecord]
    deliveries: list[Delivery]
    received: dict[str, list[tuple[float, MessageReceived]]]
    wire: list[WireRecord]
    problems: list[str]
    warnings: list[str]


class _Provider:
    def __init__(self, trajectory: Trajectory, clock: Callable[[], float]) -> None:
        self.trajectory = trajectory
        self.clock = clock

    def current(self) -> GeolocationBlock:
        p = self.trajectory.at(self.clock())
        return GeolocationBlock(p.latitude, p.longitude, 0.0)


def build_trajectories(s: Scenario) -> dict[str, Trajectory]:
    steps = int(math.ceil(s.duration)) + 1
    return {c.client_id: Trajectory(c.movement, steps, s.seed, c.client_id) for c in s.clients}


@dataclass
class _Simulation:
    scenario: Scenario
    record_wire: bool = True
    now: float = 0.0
    queue: list = field(default_factory=list)
    metrics: Metrics = field(default_factory=Metrics)
    log: list[RouteRecord] = field(default_factory=list)
    deliveries: list[Delivery] = field(default_factory=list)
    wire: list[WireRecord] = field(default_factory=list)
    problems: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    _closed: set = field(default_factory=set)

    def __post_init__(self) -> None:
        s = self.scenario
        self._seq = itertools.count()
        self.in_transit = 0
        self.loss_rng = random.Random(f"{s.seed}/loss")
        self.broker = Broker(
            BrokerConfig(
                retransmit_timeout=s.retransmit_timeout,
                fence_fail_closed=s.fail_closed,
            ),
            clock=lambda: self.now,
        )
        self.trajectories = build_trajectories(s)
        self.engines: dict[str, ClientEngine] = {}
        self.received: dict[str, list[tuple[float, MessageReceived]]] = {}
        for c in s.clients:
            cfg = ClientConfig(
                c.client_id,
                keep_alive=s.keep_alive,
                share_location=c.share_location,
                retransmit_timeout=s.retransmit_timeout,
            )
            provider = _Provider(self.trajectories[c.client_id], lambda: self.now)
            self.engines[c.client_id] = ClientEngine(cfg, provider)
            self.received[c.client_id] = []

    # -- event queue -----------------------------------------------------------------

    def schedule(self, t: float, prio: int, fn: Callable, *args) -> None:
        heapq.heappush(self.queue, (t, prio, next(self._seq), fn, args))

    def run(self) -> None:
        s = self.scenario
        for c in s.clients:
            self.schedule(0.0, PRIO_ACTION, self._connect, c.client_id)
        for c in s.clients:
            self.schedule(SETUP_END / 2, PRIO_ACTION, self._setup, c)
        for c in s.clients:
            for p in c.publish_schedule:
                self.schedule(p.time, PRIO_ACTION, self._publish, c.client_id, p)
        self.schedule(1.0, PRIO_MOVE, self._movement)
        self.schedule(1.0, PRIO_TIMER, self._timers)
        while self.queue:
            t, _, _, fn, args = heapq.heappop(self.queue)
            self.now = t
            fn(*args)

    # -- transport -------------------------------------------------------------------------

    def _transmit(self, src: str, dst: str, packet: Packet) -> None:
        data = encode_packet(packet)
        self.metrics.bytes_on_wire += len(data)
        s = self.scenario
        dropped = self.now >= SETUP_END and self.loss_rng.random() < s.drop_probability
        if self.record_wire:
            self.wire.append(WireRecord(self.now, src, dst, packet, len(data), dropped))
        if dropped:
            return
        self.in_transit += 1
        self.schedule(self.now + s.latency, PRIO_ARRIVE, self._arrive, src, dst, data)

    def _arrive(self, src: str, dst: str, data: bytes) -> None:
        self.in_transit -= 1
        packet, n = decode_packet(data)
        assert n == len(data)
        if dst == BROKER:
            if self.broker.session_for(src) is None and src in self._closed:
                return
            self._apply(self.broker.handle_inbound(src, packet, self.now))
        else:
            engine = self.engines[dst]
            self._client_events(dst, engine.receive(packet, self.now))
            self._flush(dst)

    def _flush(self, cid: str) -> None:
        for packet in self.engines[cid].take_outgoing():
            self._transmit(cid, BROKER, packet)

    def _apply(self, effects) -> None:
        for e in effects:
            if isinstance(e, Send):
                self._transmit(BROKER, e.connection, e.packet)
            elif isinstance(e, Delivery):
                self._record(e)
            elif isinstance(e, Close):
                self.problems.append(f"{self.now:.3f} broker closed {e.connection}: {e.reason}")
                self._closed.add(e.connection)
                self._client_events(e.connection, self.engines[e.connection].connection_lost(e.reason))
            elif isinstance(e, Warn):
                self.warnings.append(f"{self.now:.3f} {e.client_id}: {e.message}")
            elif isinstance(e, FenceChanged) and not e.ok:
                self.problems.append(f"{self.now:.3f} fence rejected {e.client_id}: {e.message}")

    def _record(self, d: Delivery) -> None:
        self.deliveries.append(d)
        self.log.append(RouteRecord(d.publisher_id, d.topic, d.subscriber_id, d.qos, d.verdict.value))
        m = self.metrics
        if d.verdict is Verdict.FORWARDED:
            m.forwarded += 1
            m.bytes_forwarded += d.size
        else:
            if d.verdict is Verdict.SUPPRESSED_BY_SUBSCRIBER_FENCE:
                m.suppressed_by_subscriber_fence += 1
            else:
                m.suppressed_by_publisher_fence += 1
            m.bytes_saved += d.size

    def _client_events(self, cid: str, events) -> None:
        for ev in events:
            if isinstance(ev, MessageReceived):
                self.received[cid].append((self.now, ev))
            elif isinstance(ev, ConnectionLost):
                self.problems.append(f"{self.now:.3f} {cid} lost connection: {ev.reason}")

    # -- scenario actions ---------------------------------------------------------------

    def _connect(self, cid: str) -> None:
        self.engines[cid].connect(self.now)
        self._flush(cid)

    def _setup(self, client) -> None:
        engine = self.engines[client.client_id]
        if not engine.connected:
            self.problems.append(f"{client.client_id} not connected at setup")
            return
        if client.subscriptions:
            engine.subscribe(client.subscriptions, self.now)
        if client.fence is not None:
            engine.set_fence(client.fence, self.now)
        self._flush(client.client_id)

    def _publish(self, cid: str, p) -> None:
        engine = self.engines[cid]
        if not engine.connected:
            self.problems.append(f"{self.now:.3f} {cid} cannot publish: not connected")
            return
        engine.publish(p.topic, p.payload, p.qos, p.retain, self.now)
        self.metrics.published += 1
        self._flush(cid)

    def _movement(self) -> None:
        for cid, engine in self.engines.items():
            spec_moves = self.trajectories[cid].moves
            if spec_moves and engine.connected and engine.config.share_location:
                engine.ping(self.now)
                self._flush(cid)

    def _busy(self) -> bool:
        # packets already in transit still arrive: the queue drains before run() returns
        if any(e.inflight_ids for e in self.engines.values()):
            return True
        return any(s.outbound or s.pending for s in self.broker.sessions.values())

    def _timers(self) -> None:
        for cid, engine in self.engines.items():
            self._client_events(cid, engine.tick(self.now))
            self._flush(cid)
        self._apply(self.broker.tick(self.now))
        s = self.scenario
        nxt = self.now + 1.0
        if nxt > s.duration + s.drain:
            if self._busy():
                self.problems.append(f"{self.now:.3f} drain limit reached with traffic in flight")
            return
        if nxt <= s.duration + 1.0 or self._busy():
            self.schedule(nxt, PRIO_MOVE, self._movement)
            self.schedule(nxt, PRIO_TIMER, self._timers)


def run_scenario(s: Scenario, *, record_wire: bool = True) -> SimResult:
    """Run *s* to completion; returns metrics, the ordered routing log and traces."""
    validate_scenario(s)
    sim = _Simulation(s, record_wire=record_wire)
    sim.run()
    return SimResult(
        sim.metrics, sim.log, sim.deliveries, sim.received, sim.wire, sim.problems, sim.warnings
    )
