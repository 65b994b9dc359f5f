"""
Bit-exact MQTTg wire codec.

MQTTg is MQTT 3.1.1 plus an optional 21-byte geolocation block that sits
between a packet's variable header and its payload.  For every client-origin
packet type except PUBLISH the presence of the block is signalled by bit 3
(0x08) of the fixed-header flag nibble; a PUBLISH carrying a block is sent
with the otherwise unused packet type 15 (PUBLISHG) and keeps its usual
DUP/QoS/RETAIN flags.

Without geolocation every packet encodes byte-identically to MQTT 3.1.1.

Two decode modes exist.  ``strict_3_1_1`` refuses anything the extension
adds (type 15, the geolocation flag).  Independently, ``strict_geolocation``
(on by default) refuses NaN and infinite coordinates.

Decoding never raises anything but :class:`~mqttg.errors.DecodeError`
subclasses.  :class:`~mqttg.errors.Truncated` is reserved for "the stream
ended early", so framers can wait for more bytes; a field that overruns the
declared remaining length is a :class:`~mqttg.errors.ProtocolError`.
"""

from __future__ import annotations

import dataclasses
import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import ClassVar, Iterator, Union

from .errors import (
    DecodeError,
    EncodeError,
    InvalidGeolocation,
    MalformedLength,
    ProtocolError,
    RangeError,
    Truncated,
    UnknownPacketType,
)

__all__ = [
    "GEO_BLOCK_SIZE",
    "GEO_FLAG",
    "GEO_VERSION",
    "MAX_REMAINING_LENGTH",
    "PacketType",
    "GeolocationBlock",
    "Will",
    "Packet",
    "Connect",
    "Connack",
    "Publish",
    "Puback",
    "Pubrec",
    "Pubrel",
    "Pubcomp",
    "Subscribe",
    "Suback",
    "Unsubscribe",
    "Unsuback",
    "Pingreq",
    "Pingresp",
    "Disconnect",
    "GEO_ELIGIBLE",
    "FixedHeader",
    "encode_mbi",
    "decode_mbi",
    "encode_utf8_field",
    "decode_utf8_field",
    "encode_geolocation_block",
    "decode_geolocation_block",
    "encode_packet",
    "decode_packet",
    "decode_fixed_header",
    "iter_packets",
    "PacketFramer",
    "with_geolocation",
]

GEO_BLOCK_SIZE = 21
GEO_FLAG = 0x08
GEO_VERSION = 1
MAX_REMAINING_LENGTH = 268_435_455
MAX_FIELD_LENGTH = 65_535

PROTOCOL_NAME = "MQTT"
PROTOCOL_LEVEL = 4

_GEO_STRUCT = struct.Struct("<Bddf")
_U16 = struct.Struct(">H")


class PacketType(IntEnum):
    CONNECT = 1
    CONNACK = 2
    PUBLISH = 3
    PUBACK = 4
    PUBREC = 5
    PUBREL = 6
    PUBCOMP = 7
    SUBSCRIBE = 8
    SUBACK = 9
    UNSUBSCRIBE = 10
    UNSUBACK = 11
    PINGREQ = 12
    PINGRESP = 13
    DISCONNECT = 14
    PUBLISHG = 15


# Flag nibble mandated by MQTT 3.1.1 for the non-PUBLISH types.
_BASE_FLAGS = {
    PacketType.PUBREL: 0x02,
    PacketType.SUBSCRIBE: 0x02,
    PacketType.UNSUBSCRIBE: 0x02,
}


_F32 = struct.Struct("<f")


def _to_float32(value: float) -> float:
    try:
        return _F32.unpack(_F32.pack(value))[0]
    except (OverflowError, struct.error):
        return value


@dataclass(frozen=True, slots=True)
class GeolocationBlock:
    """Version, WGS-84 latitude/longitude in degrees and elevation in metres.

    Elevation travels as binary32, so it is rounded to float32 precision on
    construction; this keeps ``decode(encode(b)) == b`` exact.
    """

    latitude: float
    longitude: float
    elevation: float = 0.0
    version: int = GEO_VERSION

    def __post_init__(self) -> None:
        if not isinstance(self.version, int) or not 0 <= self.version <= 0xFF:
            raise RangeError(f"geolocation version must fit in a byte: {self.version!r}")
        object.__setattr__(self, "latitude", float(self.latitude))
        object.__setattr__(self, "longitude", float(self.longitude))
        object.__setattr__(self, "elevation", _to_float32(float(self.elevation)))

    @property
    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.latitude, self.longitude, self.elevation))

    @property
    def is_current_version(self) -> bool:
        """False for blocks whose version byte is not the one this codec writes."""
        return self.version == GEO_VERSION


@dataclass(frozen=True, slots=True)
class Will:
    topic: str
    message: bytes = b""
    qos: int = 0
    retain: bool = False


class Packet:
    """Base of all control packets.  Subclasses are frozen dataclasses."""

    __slots__ = ()
    packet_type: ClassVar[PacketType]
    geo_eligible: ClassVar[bool] = False

    @property
    def name(self) -> str:
        if self.packet_type is PacketType.PUBLISH and getattr(self, "geolocation", None):
            return "PUBLISHG"
        return self.packet_type.name

    def encode(self) -> bytes:
        return encode_packet(self)


Geo = Union[GeolocationBlock, None]


@dataclass(frozen=True, slots=True)
class Connect(Packet):
    packet_type: ClassVar[PacketType] = PacketType.CONNECT
    geo_eligible: ClassVar[bool] = True

    client_id: str = ""
    keep_alive: int = 60
    clean_session: bool = True
    will: Will | None = None
    username: str | None = None
    password: bytes | None = None
    protocol_name: str = PROTOCOL_NAME
    protocol_level: int = PROTOCOL_LEVEL
    geolocation: Geo = None


@dataclass(frozen=True, slots=True)
class Connack(Packet):
    packet_type: ClassVar[PacketType] = PacketType.CONNACK

    session_present: bool = False
    return_code: int = 0


@dataclass(frozen=True, slots=True)
class Publish(Packet):
    packet_type: ClassVar[PacketType] = PacketType.PUBLISH
    geo_eligible: ClassVar[bool] = True

    topic: str
    payload: bytes = b""
    qos: int = 0
    retain: bool = False
    dup: bool = False
    packet_id: int | None = None
    geolocation: Geo = None


@dataclass(frozen=True, slots=True)
class Puback(Packet):
    packet_type: ClassVar[PacketType] = PacketType.PUBACK
    geo_eligible: ClassVar[bool] = True

    packet_id: int
    geolocation: Geo = None


@dataclass(frozen=True, slots=True)
class Pubrec(Packet):
    packet_type: ClassVar[PacketType] = PacketType.PUBREC
    geo_eligible: ClassVar[bool] = True

    packet_id: int
    geolocation: Geo = None


@dataclass(frozen=True, slots=True)
class Pubrel(Packet):
    packet_type: ClassVar[PacketType] = PacketType.PUBREL
    geo_eligible: ClassVar[bool] = True

    packet_id: int
    geolocation: Geo = None


@dataclass(frozen=True, slots=True)
class Pubcomp(Packet):
    packet_type: ClassVar[PacketType] = PacketType.PUBCOMP
    geo_eligible: ClassVar[bool] = True

    packet_id: int
    geolocation: Geo = None


@dataclass(frozen=True, slots=True)
class Subscribe(Packet):
    packet_type: ClassVar[PacketType] = PacketType.SUBSCRIBE
    geo_eligible: ClassVar[bool] = True

    packet_id: int
    subscriptions: tuple[tuple[str, int], ...]
    geolocation: Geo = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "subscriptions", tuple((f, q) for f, q in self.subscriptions)
        )


@dataclass(frozen=True, slots=True)
class Suback(Packet):
    packet_type: ClassVar[PacketType] = PacketType.SUBACK

    packet_id: int
    return_codes: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "return_codes", tuple(self.return_codes))


@dataclass(frozen=True, slots=True)
class Unsubscribe(Packet):
    packet_type: ClassVar[PacketType] = PacketType.UNSUBSCRIBE
    geo_eligible: ClassVar[bool] = True

    packet_id: int
    filters: tuple[str, ...]
    geolocation: Geo = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "filters", tuple(self.filters))


@dataclass(frozen=True, slots=True)
class Unsuback(Packet):
    packet_type: ClassVar[PacketType] = PacketType.UNSUBACK

    packet_id: int


@dataclass(frozen=True, slots=True)
class Pingreq(Packet):
    packet_type: ClassVar[PacketType] = PacketType.PINGREQ
    geo_eligible: ClassVar[bool] = True

    geolocation: Geo = None


@dataclass(frozen=True, slots=True)
class Pingresp(Packet):
    packet_type: ClassVar[PacketType] = PacketType.PINGRESP


@dataclass(frozen=True, slots=True)
class Disconnect(Packet):
    packet_type: ClassVar[PacketType] = PacketType.DISCONNECT
    geo_eligible: ClassVar[bool] = True

    geolocation: Geo = None


PACKET_CLASSES: dict[PacketType, type[Packet]] = {
    cls.packet_type: cls
    for cls in (
        Connect, Connack, Publish, Puback, Pubrec, Pubrel, Pubcomp, Subscribe,
        Suback, Unsubscribe, Unsuback, Pingreq, Pingresp, Disconnect,
    )
}

GEO_ELIGIBLE: frozenset[PacketType] = frozenset(
    t for t, cls in PACKET_CLASSES.items() if cls.geo_eligible
)


def with_geolocation(packet: Packet, geolocation: GeolocationBlock | None) -> Packet:
    """Return *packet* carrying *geolocation*; ineligible packets are returned as-is."""
    if not packet.geo_eligible:
        return packet
    return dataclasses.replace(packet, geolocation=geolocation)


@dataclass(frozen=True, slots=True)
class FixedHeader:
    packet_type: PacketType
    flags: int
    remaining_length: int
    size: int

    @property
    def geolocation_flag(self) -> bool:
        if self.packet_type is PacketType.PUBLISHG:
            return True
        if self.packet_type is PacketType.PUBLISH:
            return False
        return bool(self.flags & GEO_FLAG)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def encode_mbi(value: int) -> bytes:
    """Encode *value* as an MQTT variable byte integer (1 to 4 bytes)."""
    if not isinstance(value, int) or not 0 <= value <= MAX_REMAINING_LENGTH:
        raise RangeError(f"variable byte integer out of range: {value!r}")
    out = bytearray()
    while True:
        digit = value & 0x7F
        value >>= 7
        if value:
            out.append(digit | 0x80)
        else:
            out.append(digit)
            return bytes(out)


def decode_mbi(data: bytes | bytearray | memoryview, offset: int = 0) -> tuple[int, int]:
    """Decode a variable byte integer starting at *offset*.

    Returns ``(value, consumed)``.
    """
    value = 0
    for i in range(4):
        if offset + i >= len(data):
            raise Truncated("stream ended inside remaining length")
        byte = data[offset + i]
        value |= (byte & 0x7F) << (7 * i)
        if not byte & 0x80:
            return value, i + 1
    raise MalformedLength("remaining length longer than 4 bytes")


def encode_utf8_field(s: str) -> bytes:
    """Length-prefixed UTF-8 string with a 2-byte big-endian length."""
    try:
        raw = s.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise EncodeError(f"string is not encodable as UTF-8: {exc}") from None
    if len(raw) > MAX_FIELD_LENGTH:
        raise RangeError(f"string of {len(raw)} bytes exceeds 65535")
    if "\x00" in s:
        raise EncodeError("MQTT strings must not contain U+0000")
    return _U16.pack(len(raw)) + raw


def _encode_binary_field(b: bytes) -> bytes:
    if len(b) > MAX_FIELD_LENGTH:
        raise RangeError(f"binary field of {len(b)} bytes exceeds 65535")
    return _U16.pack(len(b)) + bytes(b)


def decode_utf8_field(data: bytes | memoryview, offset: int = 0) -> tuple[str, int]:
    """Inverse of :func:`encode_utf8_field`; returns ``(string, consumed)``."""
    if len(data) - offset < 2:
        raise Truncated("string length prefix")
    (n,) = _U16.unpack_from(data, offset)
    if len(data) - offset - 2 < n:
        raise Truncated("string body")
    raw = bytes(data[offset + 2: offset + 2 + n])
    try:
        s = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"invalid UTF-8 in string field: {exc}") from None
    if "\x00" in s:
        raise ProtocolError("string field contains U+0000")
    return s, n + 2


def encode_geolocation_block(block: GeolocationBlock) -> bytes:
    if not block.is_finite:
        raise InvalidGeolocation(f"non-finite geolocation: {block}")
    try:
        return _GEO_STRUCT.pack(block.version, block.latitude, block.longitude, block.elevation)
    except (OverflowError, struct.error) as exc:
        raise InvalidGeolocation(f"geolocation not representable: {exc}") from None


def decode_geolocation_block(
    data: bytes | memoryview, offset: int = 0, *, strict: bool = True
) -> GeolocationBlock:
    if len(data) - offset < GEO_BLOCK_SIZE:
        raise Truncated(f"geolocation block needs {GEO_BLOCK_SIZE} bytes")
    version, lat, lon, elev = _GEO_STRUCT.unpack_from(data, offset)
    block = GeolocationBlock(lat, lon, elev, version)
    if strict and not block.is_finite:
        raise InvalidGeolocation(f"non-finite geolocation: {block}")
    return block


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------

def _check_packet_id(pid: object) -> int:
    if not isinstance(pid, int) or isinstance(pid, bool) or not 1 <= pid <= 0xFFFF:
        raise EncodeError(f"packet identifier must be in 1..65535, got {pid!r}")
    return pid


def _check_qos(qos: object) -> int:
    if qos not in (0, 1, 2) or isinstance(qos, bool):
        raise EncodeError(f"QoS must be 0, 1 or 2, got {qos!r}")
    return qos  # type: ignore[return-value]


def _check_u16(value: object, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 0xFFFF:
        raise RangeError(f"{what} must be in 0..65535, got {value!r}")
    return value


def _has_wildcard(topic: str) -> bool:
    return "+" in topic or "#" in topic


def _encode_parts(p: Packet) -> tuple[int, bytes, bytes]:
    """Return (first byte without geolocation signalling, variable header, payload)."""
    ptype = p.packet_type
    if isinstance(p, Publish):
        qos = _check_qos(p.qos)
        if not p.topic or _has_wildcard(p.topic):
            raise EncodeError(f"invalid publish topic {p.topic!r}")
        if qos == 0 and p.dup:
            raise EncodeError("DUP must be 0 for QoS 0 publishes")
        flags = (0x08 if p.dup else 0) | (qos << 1) | (0x01 if p.retain else 0)
        vh = encode_utf8_field(p.topic)
        if qos:
            vh += _U16.pack(_check_packet_id(p.packet_id))
        elif p.packet_id is not None:
            raise EncodeError("QoS 0 publishes carry no packet identifier")
        return (ptype << 4) | flags, vh, bytes(p.payload)

    base = (ptype << 4) | _BASE_FLAGS.get(ptype, 0)
    if isinstance(p, Connect):
        return base, _connect_vh(p), _connect_payload(p)
    if isinstance(p, Connack):
        if p.return_code not in range(6):
            raise EncodeError(f"CONNACK return code must be 0..5, got {p.return_code!r}")
        if p.session_present and p.return_code:
            raise EncodeError("session present must be 0 when the connection is refused")
        return base, bytes((1 if p.session_present else 0, p.return_code)), b""
    if isinstance(p, (Puback, Pubrec, Pubrel, Pubcomp, Unsuback)):
        return base, _U16.pack(_check_packet_id(p.packet_id)), b""
    if isinstance(p, Subscribe):
        if not p.subscriptions:
            raise EncodeError("SUBSCRIBE needs at least one topic filter")
        payload = b"".join(
            encode_utf8_field(f) + bytes((_check_qos(q),)) for f, q in p.subscriptions
        )
        return base, _U16.pack(_check_packet_id(p.packet_id)), payload
    if isinstance(p, Suback):
        if not p.return_codes:
            raise EncodeError("SUBACK needs at least one return code")
        for rc in p.return_codes:
            if rc not in (0, 1, 2, 0x80):
                raise EncodeError(f"invalid SUBACK return code {rc!r}")
        return base, _U16.pack(_check_packet_id(p.packet_id)), bytes(p.return_codes)
    if isinstance(p, Unsubscribe):
        if not p.filters:
            raise EncodeError("UNSUBSCRIBE needs at least one topic filter")
        payload = b"".join(encode_utf8_field(f) for f in p.filters)
        return base, _U16.pack(_check_packet_id(p.packet_id)), payload
    if isinstance(p, (Pingreq, Pingresp, Disconnect)):
        return base, b"", b""
    raise EncodeError(f"not an MQTTg packet: {p!r}")


def _connect_vh(p: Connect) -> bytes:
    flags = 0x02 if p.clean_session else 0
    if p.will is not None:
        flags |= 0x04 | (_check_qos(p.will.qos) << 3) | (0x20 if p.will.retain else 0)
    if p.username is not None:
        flags |= 0x80
    if p.password is not None:
        if p.username is None:
            raise EncodeError("a password requires a username in MQTT 3.1.1")
        flags |= 0x40
    if not 0 <= p.protocol_level <= 0xFF:
        raise RangeError(f"protocol level out of range: {p.protocol_level!r}")
    return (
        encode_utf8_field(p.protocol_name)
        + bytes((p.protocol_level, flags))
        + _U16.pack(_check_u16(p.keep_alive, "keep alive"))
    )


def _connect_payload(p: Connect) -> bytes:
    out = encode_utf8_field(p.client_id)
    if p.will is not None:
        if not p.will.topic or _has_wildcard(p.will.topic):
            raise EncodeError(f"invalid will topic {p.will.topic!r}")
        out += encode_utf8_field(p.will.topic) + _encode_binary_field(p.will.message)
    if p.username is not None:
        out += encode_utf8_field(p.username)
    if p.password is not None:
        out += _encode_binary_field(p.password)
    return out


def encode_packet(p: Packet) -> bytes:
    """Serialize *p*: fixed header, variable header, [geolocation], payload."""
    first, vh, payload = _encode_parts(p)
    geo = getattr(p, "geolocation", None) if p.geo_eligible else None
    if geo is not None:
        if not isinstance(geo, GeolocationBlock):
            raise EncodeError(f"geolocation must be a GeolocationBlock, got {geo!r}")
        block = encode_geolocation_block(geo)
        if isinstance(p, Publish):
            first = (PacketType.PUBLISHG << 4) | (first & 0x0F)
        else:
            first |= GEO_FLAG
    else:
        block = b""
    remaining = len(vh) + len(block) + len(payload)
    return bytes((first,)) + encode_mbi(remaining) + vh + block + payload


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------

class _Body:
    """Cursor over the bytes covered by the remaining length."""

    __slots__ = ("data", "pos")

    def __init__(self, data: memoryview) -> None:
        self.data = data
        self.pos = 0

    @property
    def left(self) -> int:
        return len(self.data) - self.pos

    def need(self, n: int, what: str) -> None:
        if self.left < n:
            raise ProtocolError(f"{what} overruns the remaining length")

    def u8(self, what: str) -> int:
        self.need(1, what)
        b = self.data[self.pos]
        self.pos += 1
        return b

    def u16(self, what: str) -> int:
        self.need(2, what)
        (v,) = _U16.unpack_from(self.data, self.pos)
        self.pos += 2
        return v

    def packet_id(self) -> int:
        pid = self.u16("packet identifier")
        if pid == 0:
            raise ProtocolError("packet identifier 0 is not allowed")
        return pid

    def utf8(self, what: str) -> str:
        try:
            s, n = decode_utf8_field(self.data, self.pos)
        except Truncated:
            raise ProtocolError(f"{what} overruns the remaining length") from None
        self.pos += n
        return s

    def binary(self, what: str) -> bytes:
        n = self.u16(what)
        self.need(n, what)
        b = bytes(self.data[self.pos: self.pos + n])
        self.pos += n
        return b

    def geo(self, strict: bool) -> GeolocationBlock:
        self.need(GEO_BLOCK_SIZE, "geolocation block")
        block = decode_geolocation_block(self.data, self.pos, strict=strict)
        self.pos += GEO_BLOCK_SIZE
        return block

    def rest(self) -> bytes:
        b = bytes(self.data[self.pos:])
        self.pos = len(self.data)
        return b

    def end(self, what: str) -> None:
        if self.left:
            raise ProtocolError(f"{self.left} unexpected trailing bytes in {what}")


def decode_fixed_header(
    data: bytes | bytearray | memoryview, *, strict_3_1_1: bool = False
) -> FixedHeader:
    if not data:
        raise Truncated("empty stream")
    first = data[0]
    code, flags = first >> 4, first & 0x0F
    if code == 0:
        raise UnknownPacketType("packet type 0 is reserved")
    ptype = PacketType(code)
    if ptype is PacketType.PUBLISHG and strict_3_1_1:
        raise ProtocolError("PUBLISHG (type 15) is not MQTT 3.1.1")
    remaining, n = decode_mbi(data, 1)
    _check_flags(ptype, flags, strict_3_1_1)
    return FixedHeader(ptype, flags, remaining, 1 + n)


def _check_flags(ptype: PacketType, flags: int, strict: bool) -> None:
    if ptype in (PacketType.PUBLISH, PacketType.PUBLISHG):
        qos = (flags >> 1) & 0x03
        if qos == 3:
            raise ProtocolError("QoS 3 is invalid")
        if qos == 0 and flags & 0x08:
            raise ProtocolError("DUP set on a QoS 0 publish")
        return
    base = _BASE_FLAGS.get(ptype, 0)
    if flags == base:
        return
    if flags == base | GEO_FLAG and ptype in GEO_ELIGIBLE:
        if strict:
            raise ProtocolError(f"geolocation flag set on {ptype.name} in strict 3.1.1 mode")
        return
    raise ProtocolError(f"invalid flags 0x{flags:X} for {ptype.name}")


def decode_packet(
    data: bytes | bytearray | memoryview,
    strict_3_1_1: bool = False,
    *,
    strict_geolocation: bool = True,
) -> tuple[Packet, int]:
    """Decode one packet from the front of *data*; returns ``(packet, consumed)``."""
    header = decode_fixed_header(data, strict_3_1_1=strict_3_1_1)
    total = header.size + header.remaining_length
    if len(data) < total:
        raise Truncated(f"need {total} bytes, have {len(data)}")
    body = _Body(memoryview(bytes(data[header.size: total])))
    try:
        packet = _decode_body(header, body, strict_geolocation)
    except DecodeError:
        raise
    except (ValueError, struct.error) as exc:  # pragma: no cover
        raise ProtocolError(str(exc)) from None
    return packet, total


def _decode_body(h: FixedHeader, b: _Body, strict_geo: bool) -> Packet:
    ptype = h.packet_type
    geo_flag = h.geolocation_flag

    def geo() -> GeolocationBlock | None:
        return b.geo(strict_geo) if geo_flag else None

    if ptype in (PacketType.PUBLISH, PacketType.PUBLISHG):
        qos = (h.flags >> 1) & 0x03
        topic = b.utf8("topic name")
        if not topic or _has_wildcard(topic):
            raise ProtocolError(f"invalid publish topic {topic!r}")
        pid = b.packet_id() if qos else None
        g = geo()
        return Publish(
            topic=topic,
            payload=b.rest(),
            qos=qos,
            retain=bool(h.flags & 0x01),
            dup=bool(h.flags & 0x08),
            packet_id=pid,
            geolocation=g,
        )
    if ptype is PacketType.CONNECT:
        return _decode_connect(b, geo)
    if ptype is PacketType.CONNACK:
        ack = b.u8("connack flags")
        rc = b.u8("return code")
        b.end("CONNACK")
        if ack & 0xFE:
            raise ProtocolError("reserved CONNACK flag bits set")
        if rc > 5:
            raise ProtocolError(f"unknown CONNACK return code {rc}")
        if ack and rc:
            raise ProtocolError("session present set on a refused connection")
        return Connack(bool(ack), rc)
    if ptype in (PacketType.PUBACK, PacketType.PUBREC, PacketType.PUBREL, PacketType.PUBCOMP):
        pid = b.packet_id()
        g = geo()
        b.end(ptype.name)
        return PACKET_CLASSES[ptype](pid, g)  # type: ignore[call-arg]
    if ptype is PacketType.SUBSCRIBE:
        pid = b.packet_id()
        g = geo()
        subs = []
        while b.left:
            f = b.utf8("topic filter")
            req = b.u8("requested QoS")
            if req > 2:
                raise ProtocolError(f"invalid requested QoS byte 0x{req:02X}")
            subs.append((f, req))
        if not subs:
            raise ProtocolError("SUBSCRIBE without topic filters")
        return Subscribe(pid, tuple(subs), g)
    if ptype is PacketType.SUBACK:
        pid = b.packet_id()
        codes = tuple(b.rest())
        if not codes:
            raise ProtocolError("SUBACK without return codes")
        for rc in codes:
            if rc not in (0, 1, 2, 0x80):
                raise ProtocolError(f"invalid SUBACK return code 0x{rc:02X}")
        return Suback(pid, codes)
    if ptype is PacketType.UNSUBSCRIBE:
        pid = b.packet_id()
        g = geo()
        filters = []
        while b.left:
            filters.append(b.utf8("topic filter"))
        if not filters:
            raise ProtocolError("UNSUBSCRIBE without topic filters")
        return Unsubscribe(pid, tuple(filters), g)
    if ptype is PacketType.UNSUBACK:
        pid = b.packet_id()
        b.end("UNSUBACK")
        return Unsuback(pid)
    if ptype in (PacketType.PINGREQ, PacketType.DISCONNECT):
        g = geo()
        b.end(ptype.name)
        return PACKET_CLASSES[ptype](g)  # type: ignore[call-arg]
    if ptype is PacketType.PINGRESP:
        b.end("PINGRESP")
        return Pingresp()
    raise UnknownPacketType(f"unhandled packet type {ptype}")  # pragma: no cover


def _decode_connect(b: _Body, geo) -> Connect:
    name = b.utf8("protocol name")
    level = b.u8("protocol level")
    flags = b.u8("connect flags")
    keep_alive = b.u16("keep alive")
    if flags & 0x01:
        raise ProtocolError("reserved CONNECT flag bit set")
    will_flag = bool(flags & 0x04)
    will_qos = (flags >> 3) & 0x03
    will_retain = bool(flags & 0x20)
    if will_qos == 3:
        raise ProtocolError("will QoS 3 is invalid")
    if not will_flag and (will_qos or will_retain):
        raise ProtocolError("will QoS/retain set without the will flag")
    if flags & 0x40 and not flags & 0x80:
        raise ProtocolError("password flag set without username flag")
    g = geo()
    client_id = b.utf8("client identifier")
    will = None
    if will_flag:
        wt = b.utf8("will topic")
        if not wt or _has_wildcard(wt):
            raise ProtocolError(f"invalid will topic {wt!r}")
        will = Will(wt, b.binary("will message"), will_qos, will_retain)
    username = b.utf8("user name") if flags & 0x80 else None
    password = b.binary("password") if flags & 0x40 else None
    b.end("CONNECT")
    return Connect(
        client_id=client_id,
        keep_alive=keep_alive,
        clean_session=bool(flags & 0x02),
        will=will,
        username=username,
        password=password,
        protocol_name=name,
        protocol_level=level,
        geolocation=g,
    )


def iter_packets(
    data: bytes | bytearray | memoryview, strict_3_1_1: bool = False, **kwargs
) -> Iterator[Packet]:
    """Yield every packet in a complete, concatenated byte string."""
    view = memoryview(bytes(data))
    pos = 0
    while pos < len(view):
        packet, n = decode_packet(view[pos:], strict_3_1_1, **kwargs)
        pos += n
        yield packet


class PacketFramer:
    """Incremental decoder for a byte stream such as a TCP connection."""

    def __init__(self, strict_3_1_1: bool = False, strict_geolocation: bool = True) -> None:
        self.strict_3_1_1 = strict_3_1_1
        self.strict_geolocation = strict_geolocation
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Packet]:
        self._buf += data
        packets: list[Packet] = []
        while self._buf:
            try:
                packet, n = decode_packet(
                    self._buf, self.strict_3_1_1, strict_geolocation=self.strict_geolocation
                )
            except Truncated:
                break
            del self._buf[:n]
            packets.append(packet)
        return packets

    @property
    def buffered(self) -> int:
        return len(self._buf)


def encoded_size(p: Packet) -> int:
    return len(encode_packet(p))
