"""
Transport-agnostic MQTTg broker engine.

The engine owns all broker state and is driven by three entry points,
:meth:`Broker.handle_inbound`, :meth:`Broker.connection_lost` and
:meth:`Broker.tick`.  Each returns a list of effects (:class:`Send`,
:class:`Close`, :class:`Delivery`, :class:`Warn`, :class:`FenceChanged`)
that a transport applies in order.  Nothing here blocks or reads a clock
unless the caller omits ``now``, so a deterministic caller gets
deterministic routing.

Connections are identified by any hashable handle chosen by the transport.
"""

from __future__ import annotations

import itertools
import time
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Hashable, Iterable, Union

from ..codec import (
    Connack,
    Connect,
    Disconnect,
    GeolocationBlock,
    Packet,
    Pingreq,
    Pingresp,
    Puback,
    Pubcomp,
    Publish,
    Pubrec,
    Pubrel,
    Suback,
    Subscribe,
    Unsuback,
    Unsubscribe,
    Will,
    encode_packet,
)
from ..errors import GeofenceError, SysgPayloadError
from ..geometry import FenceMode, Geofence, GeoPoint, point_in_polygon, resolve_fence
from ..sysg import FENCE_CLEAR_TOPIC, FENCE_SET_TOPIC, decode_fence, is_sysg_topic
from ..topics import is_valid_filter, topic_matches
from .config import BrokerConfig

# CONNACK return codes
ACCEPTED = 0
UNACCEPTABLE_PROTOCOL_VERSION = 1
IDENTIFIER_REJECTED = 2


class Verdict(str, Enum):
    FORWARDED = "FORWARDED"
    SUPPRESSED_BY_SUBSCRIBER_FENCE = "SUPPRESSED_BY_SUBSCRIBER_FENCE"
    SUPPRESSED_BY_PUBLISHER_FENCE = "SUPPRESSED_BY_PUBLISHER_FENCE"

    def __str__(self) -> str:
        return self.value


# -- effects -------------------------------------------------------------------

@dataclass(frozen=True)
class Send:
    connection: Hashable
    packet: Packet


@dataclass(frozen=True)
class Close:
    connection: Hashable
    reason: str


@dataclass(frozen=True)
class Delivery:
    """One routing decision for one (message, subscriber) pair.

    ``packet`` is the outbound PUBLISH for forwarded deliveries and ``None``
    for suppressed ones.  ``size`` is the encoded size of the packet that was
    (or would have been) sent, which is what suppression saves.
    """

    publisher_id: str
    topic: str
    subscriber_id: str
    verdict: Verdict
    qos: int
    size: int
    packet: Publish | None = None
    retained: bool = False

    def log_line(self) -> str:
        return f"ROUTE {self.publisher_id} {self.topic} {self.subscriber_id} {self.verdict}"


@dataclass(frozen=True)
class Warn:
    client_id: str | None
    message: str


@dataclass(frozen=True)
class FenceChanged:
    client_id: str
    ok: bool
    message: str


Effect = Union[Send, Close, Delivery, Warn, FenceChanged]


# -- state -----------------------------------------------------------------------

@dataclass
class LastLocation:
    block: GeolocationBlock
    updated_at: float

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(self.block.latitude, self.block.longitude)


@dataclass
class RetainedMessage:
    topic: str
    payload: bytes
    qos: int
    origin_location: GeolocationBlock | None = None
    publisher_id: str | None = None
    geolocation: GeolocationBlock | None = None


@dataclass
class Outbound:
    packet: Publish
    sent_at: float
    awaiting: type[Packet]  # Puback, Pubrec or Pubcomp


@dataclass
class ClientSession:
    client_id: str
    clean_session: bool = True
    keep_alive: int = 0
    subscriptions: dict[str, int] = field(default_factory=dict)
    last_location: LastLocation | None = None
    fence: Geofence | None = None
    geo_capable: bool = False
    will: Will | None = None
    connection: Hashable | None = None
    last_received: float = 0.0
    outbound: dict[int, Outbound] = field(default_factory=dict)
    inbound_qos2: set[int] = field(default_factory=set)
    pending: deque = field(default_factory=deque)
    next_packet_id: int = 1

    @property
    def connected(self) -> bool:
        return self.connection is not None

    @property
    def location_point(self) -> GeoPoint | None:
        return self.last_location.point if self.last_location else None

    def granted_qos(self, topic: str) -> int | None:
        """Highest QoS among this session's filters matching *topic*."""
        best = None
        for f, q in self.subscriptions.items():
            if topic_matches(f, topic) and (best is None or q > best):
                best = q
        return best

    def allocate_packet_id(self) -> int | None:
        for _ in range(0xFFFF):
            pid = self.next_packet_id
            self.next_packet_id = pid % 0xFFFF + 1
            if pid not in self.outbound:
                return pid
        return None


def update_last_location(session: ClientSession, block: GeolocationBlock, now: float) -> None:
    prev = session.last_location
    stamp = now if prev is None else max(now, prev.updated_at)
    session.last_location = LastLocation(block, stamp)
    session.geo_capable = True


class Broker:
    def __init__(
        self,
        config: BrokerConfig | None = None,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.config = config or BrokerConfig()
        self.clock = clock
        self.sessions: dict[str, ClientSession] = {}
        self.retained: dict[str, RetainedMessage] = {}
        self._by_conn: dict[Hashable, ClientSession] = {}
        self._auto_ids = itertools.count(1)

    # -- public entry points --------------------------------------------------

    def session_for(self, connection: Hashable) -> ClientSession | None:
        return self._by_conn.get(connection)

    def handle_inbound(
        self, connection: Hashable, packet: Packet, now: float | None = None
    ) -> list[Effect]:
        now = self.clock() if now is None else now
        session = self._by_conn.get(connection)
        if isinstance(packet, Connect):
            if session is not None:
                return self._drop(connection, "second CONNECT on a live connection", now)
            return self._on_connect(connection, packet, now)
        if session is None:
            return [Close(connection, f"{packet.name} before CONNECT")]

        session.last_received = now
        geo = getattr(packet, "geolocation", None)
        if geo is not None:
            update_last_location(session, geo, now)

        if isinstance(packet, Publish):
            return self._on_publish(session, packet, now)
        if isinstance(packet, (Puback, Pubrec, Pubrel, Pubcomp)):
            return self.qos_flow(session, packet, now)
        if isinstance(packet, Subscribe):
            return self._on_subscribe(session, packet, now)
        if isinstance(packet, Unsubscribe):
            for f in packet.filters:
                session.subscriptions.pop(f, None)
            return [Send(connection, Unsuback(packet.packet_id))]
        if isinstance(packet, Pingreq):
            return [Send(connection, Pingresp())]
        if isinstance(packet, Disconnect):
            session.will = None
            self._detach(session)
            return [Close(connection, "client disconnected")]
        return self._drop(connection, f"unexpected {packet.name} from client", now)

    def connection_lost(self, connection: Hashable, now: float | None = None) -> list[Effect]:
        """The transport closed without a DISCONNECT: publish the will, detach."""
        now = self.clock() if now is None else now
        session = self._by_conn.get(connection)
        if session is None:
            return []
        effects: list[Effect] = []
        will, session.will = session.will, None
        if will is not None:
            message = Publish(will.topic, will.message, will.qos, will.retain)
            effects += self._publish(session, message, now)
        self._detach(session)
        return effects

    def tick(self, now: float | None = None) -> list[Effect]:
        """Retransmit overdue QoS>0 packets and enforce keep-alive."""
        now = self.clock() if now is None else now
        effects: list[Effect] = []
        for session in list(self.sessions.values()):
            if not session.connected:
                continue
            limit = self._keep_alive_limit(session)
            if limit and now - session.last_received > limit:
                conn = session.connection
                effects += self.connection_lost(conn, now)
                effects.append(Close(conn, "keep-alive timeout"))
                continue
            timeout = self.config.retransmit_timeout
            for pid, entry in session.outbound.items():
                if now - entry.sent_at < timeout:
                    continue
                entry.sent_at = now
                if entry.awaiting is Pubcomp:
                    effects.append(Send(session.connection, Pubrel(pid)))
                else:
                    entry.packet = replace(entry.packet, dup=True)
                    effects.append(Send(session.connection, entry.packet))
        return effects

    # -- connection lifecycle ---------------------------------------------------

    def _on_connect(self, connection: Hashable, p: Connect, now: float) -> list[Effect]:
        if p.protocol_name != "MQTT":
            return [Close(connection, f"unknown protocol name {p.protocol_name!r}")]
        if p.protocol_level != 4:
            return [
                Send(connection, Connack(False, UNACCEPTABLE_PROTOCOL_VERSION)),
                Close(connection, f"unsupported protocol level {p.protocol_level}"),
            ]
        client_id = p.client_id
        if not client_id:
            if not p.clean_session:
                return [
                    Send(connection, Connack(False, IDENTIFIER_REJECTED)),
                    Close(connection, "empty client identifier needs clean session"),
                ]
            client_id = f"auto-{next(self._auto_ids)}"
            while client_id in self.sessions:
                client_id = f"auto-{next(self._auto_ids)}"

        effects: list[Effect] = []
        existing = self.sessions.get(client_id)
        if existing is not None and existing.connected:
            old = existing.connection
            self._by_conn.pop(old, None)
            existing.connection = None
            effects.append(Close(old, "session taken over"))

        if existing is None or p.clean_session:
            self.sessions.pop(client_id, None)
            session = ClientSession(client_id)
            self.sessions[client_id] = session
            present = False
        else:
            session = existing
            present = True

        session.clean_session = p.clean_session
        session.keep_alive = p.keep_alive
        session.will = p.will
        session.geo_capable = False
        session.connection = connection
        session.last_received = now
        self._by_conn[connection] = session
        if p.geolocation is not None:
            update_last_location(session, p.geolocation, now)

        effects.append(Send(connection, Connack(present, ACCEPTED)))
        for pid, entry in session.outbound.items():
            entry.sent_at = now
            if entry.awaiting is Pubcomp:
                effects.append(Send(connection, Pubrel(pid)))
            else:
                entry.packet = replace(entry.packet, dup=True)
                effects.append(Send(connection, entry.packet))
        effects += self._flush_pending(session, now)
        return effects

    def _detach(self, session: ClientSession) -> None:
        self._by_conn.pop(session.connection, None)
        session.connection = None
        if session.clean_session:
            self.sessions.pop(session.client_id, None)

    def _drop(self, connection: Hashable, reason: str, now: float) -> list[Effect]:
        effects = self.connection_lost(connection, now)
        effects.append(Close(connection, reason))
        return effects

    def _keep_alive_limit(self, session: ClientSession) -> float:
        ka = session.keep_alive
        cap = self.config.max_keep_alive
        if cap and (ka == 0 or ka > cap):
            ka = cap
        return 1.5 * ka

    # -- publish path -------------------------------------------------------------

    def _on_publish(self, session: ClientSession, p: Publish, now: float) -> list[Effect]:
        conn = session.connection
        effects: list[Effect] = []
        if p.qos == 2:
            effects.append(Send(conn, Pubrec(p.packet_id)))
            if p.packet_id in session.inbound_qos2:
                return effects
            session.inbound_qos2.add(p.packet_id)
        elif p.qos == 1:
            effects.append(Send(conn, Puback(p.packet_id)))

        if is_sysg_topic(p.topic):
            session.geo_capable = True
            effects += self.handle_sysg(session, p.topic, p.payload)
        else:
            effects += self._publish(session, p, now)
        return effects

    def _publish(self, publisher: ClientSession, p: Publish, now: float) -> list[Effect]:
        if p.retain:
            if p.payload:
                origin = p.geolocation or (
                    publisher.last_location.block if publisher.last_location else None
                )
                self.retained[p.topic] = RetainedMessage(
                    p.topic, p.payload, p.qos, origin, publisher.client_id, p.geolocation
                )
            else:
                self.retained.pop(p.topic, None)
        deliveries = self.route_publish(publisher, p)
        return self._dispatch(deliveries, now)

    def route_publish(self, publisher: ClientSession, p: Publish) -> list[Delivery]:
        """Decide, for every other session with a matching filter, whether *p* goes out."""
        origin = p.geolocation
        if origin is None and publisher.last_location is not None:
            origin = publisher.last_location.block
        deliveries = []
        for sub in self.sessions.values():
            if sub is publisher:
                continue
            granted = sub.granted_qos(p.topic)
            if granted is None:
                continue
            deliveries.append(
                self._decide(
                    publisher.client_id, publisher, sub, p.topic, p.payload,
                    min(granted, p.qos), origin, p.geolocation, retained=False,
                )
            )
        return deliveries

    def replay_retained(self, session: ClientSession, new_filter: str) -> list[Delivery]:
        deliveries = []
        for msg in self.retained.values():
            if not topic_matches(new_filter, msg.topic):
                continue
            granted = session.subscriptions.get(new_filter, 0)
            publisher = self.sessions.get(msg.publisher_id) if msg.publisher_id else None
            deliveries.append(
                self._decide(
                    msg.publisher_id or "", publisher, session, msg.topic, msg.payload,
                    min(granted, msg.qos), msg.origin_location, msg.geolocation, retained=True,
                )
            )
        return deliveries

    def _decide(
        self,
        publisher_id: str,
        publisher: ClientSession | None,
        sub: ClientSession,
        topic: str,
        payload: bytes,
        qos: int,
        origin: GeolocationBlock | None,
        carried: GeolocationBlock | None,
        retained: bool,
    ) -> Delivery:
        out = Publish(
            topic,
            payload,
            qos,
            retain=retained,
            packet_id=1 if qos else None,
            geolocation=carried if sub.geo_capable else None,
        )
        size = len(encode_packet(out))
        out = replace(out, packet_id=None)
        origin_point = GeoPoint(origin.latitude, origin.longitude) if origin else None
        if not self._fence_ok(sub.fence, sub, origin_point):
            verdict = Verdict.SUPPRESSED_BY_SUBSCRIBER_FENCE
        elif publisher is not None and not self._fence_ok(
            publisher.fence, publisher, sub.location_point
        ):
            verdict = Verdict.SUPPRESSED_BY_PUBLISHER_FENCE
        else:
            verdict = Verdict.FORWARDED
        return Delivery(
            publisher_id,
            topic,
            sub.client_id,
            verdict,
            qos,
            size,
            out if verdict is Verdict.FORWARDED else None,
            retained,
        )

    def _fence_ok(
        self, fence: Geofence | None, owner: ClientSession, point: GeoPoint | None
    ) -> bool:
        if fence is None:
            return True
        unknown_passes = not self.config.fence_fail_closed
        if point is None:
            return unknown_passes
        anchor = owner.location_point
        if fence.mode is FenceMode.DYNAMIC and anchor is None:
            return unknown_passes
        return point_in_polygon(point, resolve_fence(fence, anchor))

    def _dispatch(self, deliveries: Iterable[Delivery], now: float) -> list[Effect]:
        effects: list[Effect] = []
        for d in deliveries:
            effects.append(d)
            if d.packet is None:
                continue
            sub = self.sessions[d.subscriber_id]
            effects += self._enqueue(sub, d.packet, now)
        return effects

    def _enqueue(self, session: ClientSession, packet: Publish, now: float) -> list[Effect]:
        if packet.qos == 0:
            return [Send(session.connection, packet)] if session.connected else []
        if not session.connected or session.pending:
            session.pending.append(packet)
            return []
        pid = session.allocate_packet_id()
        if pid is None:
            session.pending.append(packet)
            return []
        packet = replace(packet, packet_id=pid)
        awaiting = Puback if packet.qos == 1 else Pubrec
        session.outbound[pid] = Outbound(packet, now, awaiting)
        return [Send(session.connection, packet)]

    def _flush_pending(self, session: ClientSession, now: float) -> list[Effect]:
        effects: list[Effect] = []
        while session.pending and session.connected:
            pid = session.allocate_packet_id()
            if pid is None:
                break
            packet = replace(session.pending.popleft(), packet_id=pid)
            awaiting = Puback if packet.qos == 1 else Pubrec
            session.outbound[pid] = Outbound(packet, now, awaiting)
            effects.append(Send(session.connection, packet))
        return effects

    # -- QoS acknowledgement flows ----------------------------------------------

    def qos_flow(self, session: ClientSession, p: Packet, now: float) -> list[Effect]:
        conn = session.connection
        pid = p.packet_id  # type: ignore[attr-defined]
        if isinstance(p, Pubrel):
            effects: list[Effect] = [Send(conn, Pubcomp(pid))]
            if pid in session.inbound_qos2:
                session.inbound_qos2.discard(pid)
            else:
                effects.insert(0, Warn(session.client_id, f"PUBREL for unknown packet id {pid}"))
            return effects

        entry = session.outbound.get(pid)
        if entry is None:
            return [Warn(session.client_id, f"{p.name} for unknown packet id {pid}")]
        if isinstance(p, Pubrec):
            if entry.awaiting is Puback:
                return [Warn(session.client_id, f"PUBREC for QoS 1 packet id {pid}")]
            entry.awaiting = Pubcomp
            entry.sent_at = now
            return [Send(conn, Pubrel(pid))]
        if not isinstance(p, entry.awaiting):
            return [Warn(session.client_id, f"unexpected {p.name} for packet id {pid}")]
        del session.outbound[pid]
        return self._flush_pending(session, now)

    # -- subscriptions and $SYSg --------------------------------------------------

    def _on_subscribe(self, session: ClientSession, p: Subscribe, now: float) -> list[Effect]:
        codes = []
        accepted = []
        for f, q in p.subscriptions:
            if is_valid_filter(f):
                granted = min(q, self.config.max_qos)
                session.subscriptions[f] = granted
                codes.append(granted)
                accepted.append(f)
            else:
                codes.append(0x80)
        effects: list[Effect] = [Send(session.connection, Suback(p.packet_id, tuple(codes)))]
        for f in accepted:
            effects += self._dispatch(self.replay_retained(session, f), now)
        return effects

    def handle_sysg(self, session: ClientSession, topic: str, payload: bytes) -> list[Effect]:
        session.geo_capable = True
        cid = session.client_id
        if topic == FENCE_CLEAR_TOPIC:
            session.fence = None
            return [FenceChanged(cid, True, "fence cleared")]
        if topic == FENCE_SET_TOPIC:
            try:
                fence = decode_fence(payload)
            except (SysgPayloadError, GeofenceError) as exc:
                return [FenceChanged(cid, False, f"{type(exc).__name__}: {exc}")]
            session.fence = fence
            return [FenceChanged(cid, True, f"{fence.mode.name.lower()} fence installed")]
        return [FenceChanged(cid, False, f"unknown $SYSg topic {topic!r}")]
