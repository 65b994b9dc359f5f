"""
Sans-IO MQTTg client protocol engine.

The engine turns API calls and received packets into outgoing packets and
events.  It never touches a socket or a clock: callers pass ``now`` and move
bytes with :meth:`ClientEngine.data_to_send` / :meth:`ClientEngine.receive_data`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Union

from ..codec import (
    Connack,
    Connect,
    Disconnect,
    GeolocationBlock,
    Packet,
    PacketFramer,
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
from ..errors import Busy, ClientError, NotConnected
from ..geometry import Geofence, validate_fence
from ..sysg import FENCE_CLEAR_TOPIC, FENCE_SET_TOPIC, encode_fence
from ..topics import validate_filter, validate_topic_name
from .providers import LocationProvider, NoLocation


@dataclass(frozen=True)
class ClientConfig:
    client_id: str
    host: str = "127.0.0.1"
    port: int = 1883
    keep_alive: int = 60
    clean_session: bool = True
    share_location: bool = False
    default_qos: int = 0
    retransmit_timeout: float = 5.0
    will: Will | None = None
    username: str | None = None
    password: bytes | None = None

    def __post_init__(self) -> None:
        if not self.client_id:
            raise ValueError("client_id must not be empty")
        if not 1 <= self.keep_alive <= 0xFFFF:
            raise ValueError(f"keep_alive must be in 1..65535, got {self.keep_alive}")
        if self.default_qos not in (0, 1, 2):
            raise ValueError(f"default_qos must be 0, 1 or 2, got {self.default_qos}")


# -- events ----------------------------------------------------------------------

@dataclass(frozen=True)
class Connected:
    session_present: bool


@dataclass(frozen=True)
class ConnectionRefused:
    return_code: int


@dataclass(frozen=True)
class MessageReceived:
    topic: str
    payload: bytes
    qos: int
    retain: bool
    geolocation: GeolocationBlock | None


@dataclass(frozen=True)
class PublishComplete:
    packet_id: int


@dataclass(frozen=True)
class SubscribeComplete:
    packet_id: int
    granted: tuple[int, ...]


@dataclass(frozen=True)
class UnsubscribeComplete:
    packet_id: int


@dataclass(frozen=True)
class ConnectionLost:
    reason: str
    aborted: tuple[int, ...] = ()


Event = Union[
    Connected, ConnectionRefused, MessageReceived, PublishComplete,
    SubscribeComplete, UnsubscribeComplete, ConnectionLost,
]


@dataclass
class _Inflight:
    packet: Publish
    sent_at: float
    awaiting: type[Packet]


class ClientEngine:
    IDLE, CONNECTING, CONNECTED, CLOSED = "idle", "connecting", "connected", "closed"

    def __init__(self, config: ClientConfig, provider: LocationProvider | None = None) -> None:
        self.config = config
        self.provider = provider or NoLocation()
        self.state = self.IDLE
        self.last_sent = 0.0
        self.ping_outstanding_since: float | None = None
        self._outbox: list[Packet] = []
        self._framer = PacketFramer()
        self._inflight: dict[int, _Inflight] = {}
        self._pending_sub: dict[int, type[Packet]] = {}
        self._inbound_qos2: set[int] = set()
        self._next_id = 1
        self._events: list[Event] = []

    # -- plumbing ------------------------------------------------------------------

    @property
    def connected(self) -> bool:
        return self.state == self.CONNECTED

    @property
    def inflight_ids(self) -> set[int]:
        return set(self._inflight) | set(self._pending_sub)

    def _send(self, packet: Packet, now: float) -> Packet:
        if packet.geo_eligible:
            block = self.provider.current() if self.config.share_location else None
            packet = replace(packet, geolocation=block)  # type: ignore[type-var]
        self._outbox.append(packet)
        self.last_sent = now
        return packet

    def take_outgoing(self) -> list[Packet]:
        out, self._outbox = self._outbox, []
        return out

    def data_to_send(self) -> bytes:
        return b"".join(encode_packet(p) for p in self.take_outgoing())

    def _require_connected(self) -> None:
        if not self.connected:
            raise NotConnected(f"client is {self.state}")

    def _allocate_id(self) -> int:
        for _ in range(0xFFFF):
            pid = self._next_id
            self._next_id = pid % 0xFFFF + 1
            if pid not in self._inflight and pid not in self._pending_sub:
                return pid
        raise Busy("no free packet identifier")

    # -- API -----------------------------------------------------------------------

    def connect(self, now: float) -> Packet:
        if self.state not in (self.IDLE, self.CLOSED):
            raise ClientError(f"cannot connect while {self.state}")
        cfg = self.config
        self.state = self.CONNECTING
        self.ping_outstanding_since = None
        self._framer = PacketFramer()
        packet = Connect(
            client_id=cfg.client_id,
            keep_alive=cfg.keep_alive,
            clean_session=cfg.clean_session,
            will=cfg.will,
            username=cfg.username,
            password=cfg.password,
        )
        return self._send(packet, now)

    def publish(
        self,
        topic: str,
        payload: bytes,
        qos: int | None = None,
        retain: bool = False,
        now: float = 0.0,
    ) -> int | None:
        """Queue a PUBLISH (PUBLISHG when a location is shared); returns its packet id."""
        self._require_connected()
        validate_topic_name(topic)
        qos = self.config.default_qos if qos is None else qos
        if qos not in (0, 1, 2):
            raise ValueError(f"QoS must be 0, 1 or 2, got {qos}")
        pid = self._allocate_id() if qos else None
        packet = self._send(Publish(topic, bytes(payload), qos, retain, packet_id=pid), now)
        if pid is not None:
            awaiting = Puback if qos == 1 else Pubrec
            self._inflight[pid] = _Inflight(packet, now, awaiting)  # type: ignore[arg-type]
        return pid

    def subscribe(self, filters: Iterable[tuple[str, int]], now: float = 0.0) -> int:
        self._require_connected()
        subs = tuple((f, q) for f, q in filters)
        if not subs:
            raise ValueError("subscribe needs at least one filter")
        for f, q in subs:
            validate_filter(f)
            if q not in (0, 1, 2):
                raise ValueError(f"QoS must be 0, 1 or 2, got {q}")
        pid = self._allocate_id()
        self._pending_sub[pid] = Suback
        self._send(Subscribe(pid, subs), now)
        return pid

    def unsubscribe(self, filters: Iterable[str], now: float = 0.0) -> int:
        self._require_connected()
        fs = tuple(filters)
        if not fs:
            raise ValueError("unsubscribe needs at least one filter")
        for f in fs:
            validate_filter(f)
        pid = self._allocate_id()
        self._pending_sub[pid] = Unsuback
        self._send(Unsubscribe(pid, fs), now)
        return pid

    def set_fence(self, fence: Geofence, now: float = 0.0) -> int:
        validate_fence(fence)
        return self.publish(FENCE_SET_TOPIC, encode_fence(fence), 1, now=now)  # type: ignore[return-value]

    def clear_fence(self, now: float = 0.0) -> int:
        return self.publish(FENCE_CLEAR_TOPIC, b"", 1, now=now)  # type: ignore[return-value]

    def ping(self, now: float) -> Packet:
        """Send a PINGREQ now; while sharing it doubles as a location heartbeat."""
        self._require_connected()
        if self.ping_outstanding_since is None:
            self.ping_outstanding_since = now
        return self._send(Pingreq(), now)

    def disconnect(self, now: float = 0.0) -> list[Event]:
        if self.connected:
            self._send(Disconnect(), now)
        return self.connection_lost("client disconnected")

    def connection_lost(self, reason: str) -> list[Event]:
        if self.state == self.CLOSED:
            return []
        self.state = self.CLOSED
        aborted = tuple(sorted(self.inflight_ids))
        if self.config.clean_session:
            self._inflight.clear()
            self._inbound_qos2.clear()
        self._pending_sub.clear()
        self.ping_outstanding_since = None
        return [ConnectionLost(reason, aborted)]

    # -- timers ----------------------------------------------------------------------

    def keepalive_tick(self, now: float) -> Packet | None:
        if not self.connected:
            return None
        ka = self.config.keep_alive
        since = self.ping_outstanding_since
        if since is not None and now - since >= 1.5 * ka:
            self._events += self.connection_lost("no PINGRESP within 1.5x keep-alive")
            return None
        if now - self.last_sent >= ka:
            return self.ping(now)
        return None

    def tick(self, now: float) -> list[Event]:
        """Retransmit overdue QoS>0 packets, run keep-alive, and drain queued events."""
        if self.connected:
            for pid, entry in self._inflight.items():
                if now - entry.sent_at < self.config.retransmit_timeout:
                    continue
                entry.sent_at = now
                if entry.awaiting is Pubcomp:
                    self._send(Pubrel(pid), now)
                else:
                    entry.packet = self._send(replace(entry.packet, dup=True), now)  # type: ignore[assignment]
            self.keepalive_tick(now)
        events, self._events = self._events, []
        return events

    # -- inbound ---------------------------------------------------------------------

    def receive_data(self, data: bytes, now: float) -> list[Event]:
        events: list[Event] = []
        for packet in self._framer.feed(data):
            events += self.receive(packet, now)
        return events

    def receive(self, packet: Packet, now: float) -> list[Event]:
        if isinstance(packet, Connack):
            if self.state != self.CONNECTING:
                return self._protocol_violation("unexpected CONNACK")
            if packet.return_code:
                self.state = self.CLOSED
                return [ConnectionRefused(packet.return_code)]
            self.state = self.CONNECTED
            for pid, entry in self._inflight.items():
                entry.sent_at = now
                if entry.awaiting is Pubcomp:
                    self._send(Pubrel(pid), now)
                else:
                    entry.packet = self._send(replace(entry.packet, dup=True), now)  # type: ignore[assignment]
            return [Connected(packet.session_present)]
        if not self.connected:
            return []
        if isinstance(packet, Publish):
            return self._on_publish(packet, now)
        if isinstance(packet, Pingresp):
            self.ping_outstanding_since = None
            return []
        if isinstance(packet, Pubrel):
            self._inbound_qos2.discard(packet.packet_id)
            self._send(Pubcomp(packet.packet_id), now)
            return []
        if isinstance(packet, (Puback, Pubrec, Pubcomp)):
            return self._on_ack(packet, now)
        if isinstance(packet, (Suback, Unsuback)):
            kind = self._pending_sub.get(packet.packet_id)
            if kind is not type(packet):
                return []
            del self._pending_sub[packet.packet_id]
            if isinstance(packet, Suback):
                return [SubscribeComplete(packet.packet_id, packet.return_codes)]
            return [UnsubscribeComplete(packet.packet_id)]
        return self._protocol_violation(f"unexpected {packet.name} from broker")

    def _protocol_violation(self, reason: str) -> list[Event]:
        return self.connection_lost(reason)

    def _on_publish(self, p: Publish, now: float) -> list[Event]:
        msg = MessageReceived(p.topic, p.payload, p.qos, p.retain, p.geolocation)
        if p.qos == 0:
            return [msg]
        if p.qos == 1:
            self._send(Puback(p.packet_id), now)  # type: ignore[arg-type]
            return [msg]
        self._send(Pubrec(p.packet_id), now)  # type: ignore[arg-type]
        if p.packet_id in self._inbound_qos2:
            return []
        self._inbound_qos2.add(p.packet_id)  # type: ignore[arg-type]
        return [msg]

    def _on_ack(self, ack: Packet, now: float) -> list[Event]:
        pid = ack.packet_id  # type: ignore[attr-defined]
        entry = self._inflight.get(pid)
        if entry is None:
            return []
        if isinstance(ack, Pubrec) and entry.awaiting in (Pubrec, Pubcomp):
            entry.awaiting = Pubcomp
            entry.sent_at = now
            self._send(Pubrel(pid), now)
            return []
        if not isinstance(ack, entry.awaiting):
            return []
        del self._inflight[pid]
        return [PublishComplete(pid)]
