import math
import random
import struct
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mqttg import codec
from mqttg.codec import (
    GEO_BLOCK_SIZE,
    Connack,
    Connect,
    Disconnect,
    GeolocationBlock,
    PacketFramer,
    PacketType,
    Pingreq,
    Puback,
    Publish,
    Subscribe,
    decode_geolocation_block,
    decode_mbi,
    decode_packet,
    decode_utf8_field,
    encode_geolocation_block,
    encode_mbi,
    encode_packet,
    encode_utf8_field,
    iter_packets,
)
from mqttg.errors import (
    DecodeError,
    EncodeError,
    InvalidGeolocation,
    MalformedLength,
    ProtocolError,
    RangeError,
    Truncated,
    UnknownPacketType,
)

from legacy_vectors import LEGACY_VECTORS
from oracles import geo_block_oracle, mbi_oracle, utf8_oracle
from packetgen import random_packet

FIXTURES = Path(__file__).parent / "fixtures" / "legacy"
WINNIPEG = GeolocationBlock(49.8483, -99.9501, 409.0)
# frozen from geo_block_oracle(1, 49.8483, -99.9501, 409.0)
WINNIPEG_HEX = "0131992a1895ec48407ffb3a70cefc58c00080cc43"


# -- variable-byte integer ----------------------------------------------------------

@pytest.mark.parametrize(
    "value,expected",
    [(0, "00"), (127, "7f"), (128, "8001"), (321, "c102"), (16383, "ff7f"),
     (16384, "808001"), (2097152, "80808001"), (268435455, "ffffff7f")],
)
def test_mbi_vectors(value, expected):
    assert encode_mbi(value).hex() == expected
    assert decode_mbi(bytes.fromhex(expected)) == (value, len(expected) // 2)


def test_mbi_matches_brute_force_oracle():
    rng = random.Random(11)
    values = list(range(0, 5000)) + [rng.randrange(268435456) for _ in range(5000)]
    for v in values:
        assert encode_mbi(v) == mbi_oracle(v)


@pytest.mark.parametrize("value", [-1, 268435456])
def test_mbi_out_of_range(value):
    with pytest.raises(RangeError):
        encode_mbi(value)


def test_mbi_five_bytes_malformed():
    with pytest.raises(MalformedLength):
        decode_mbi(bytes([0x80, 0x80, 0x80, 0x80]))


def test_mbi_unterminated_is_truncated():
    with pytest.raises(Truncated):
        decode_mbi(b"\x80\x80")


def test_mbi_offset():
    assert decode_mbi(b"\xff\xc1\x02", 1) == (321, 2)


# -- UTF-8 fields -------------------------------------------------------------------------

def test_utf8_vectors():
    assert encode_utf8_field("") == b"\x00\x00"
    assert encode_utf8_field("a/b") == bytes([0, 3, 0x61, 0x2F, 0x62])
    assert encode_utf8_field("é中") == utf8_oracle("é中")


def test_utf8_too_long():
    with pytest.raises(RangeError):
        encode_utf8_field("x" * 70000)


def test_utf8_decode_roundtrip_and_offset():
    data = b"zz" + encode_utf8_field("topic/é")
    assert decode_utf8_field(data, 2) == ("topic/é", len(data) - 2)


def test_utf8_decode_short():
    with pytest.raises(Truncated):
        decode_utf8_field(b"\x00\x05ab")


def test_utf8_decode_invalid_bytes():
    with pytest.raises(DecodeError):
        decode_utf8_field(b"\x00\x02\xff\xfe")


def test_utf8_rejects_nul():
    with pytest.raises(EncodeError):
        encode_utf8_field("a\x00b")


# -- geolocation block --------------------------------------------------------------

def test_geo_block_zero():
    assert encode_geolocation_block(GeolocationBlock(0.0, 0.0, 0.0)) == b"\x01" + bytes(20)


def test_geo_block_matches_float_oracle():
    assert geo_block_oracle(1, 49.8483, -99.9501, 409.0).hex() == WINNIPEG_HEX
    assert encode_geolocation_block(WINNIPEG).hex() == WINNIPEG_HEX


def test_geo_block_decode_hand_vector():
    assert decode_geolocation_block(bytes.fromhex("ff" + WINNIPEG_HEX), 1) == WINNIPEG


def test_geo_block_size_random():
    rng = random.Random(3)
    for _ in range(500):
        b = GeolocationBlock(rng.uniform(-90, 90), rng.uniform(-180, 180), rng.uniform(-1e4, 1e4))
        raw = encode_geolocation_block(b)
        assert len(raw) == GEO_BLOCK_SIZE
        assert raw == geo_block_oracle(1, b.latitude, b.longitude, b.elevation)
        assert decode_geolocation_block(raw) == b


def test_geo_block_short_input():
    with pytest.raises(Truncated):
        decode_geolocation_block(bytes(20))


def test_elevation_is_float32():
    b = GeolocationBlock(1.0, 2.0, 0.1)
    assert b.elevation == struct.unpack("<f", struct.pack("<f", 0.1))[0]


def test_non_finite_rejected_on_encode():
    with pytest.raises(InvalidGeolocation):
        encode_geolocation_block(GeolocationBlock(math.nan, 0.0))


def test_non_finite_decode_strict_and_lenient():
    raw = b"\x01" + struct.pack("<ddf", math.inf, 1.0, 0.0)
    with pytest.raises(InvalidGeolocation):
        decode_geolocation_block(raw)
    block = decode_geolocation_block(raw, strict=False)
    assert block.latitude == math.inf and not block.is_finite


def test_unknown_version_decoded_and_flagged():
    raw = b"\x02" + bytes(20)
    block = decode_geolocation_block(raw)
    assert block.version == 2
    assert not block.is_current_version


# -- packets ----------------------------------------------------------------------------

def test_pingreq_legacy():
    assert encode_packet(Pingreq()) == b"\xc0\x00"


def test_pingreq_with_geolocation():
    raw = encode_packet(Pingreq(WINNIPEG))
    assert raw[0] == 0xC8
    assert raw[1] == 0x15
    assert raw[2:].hex() == WINNIPEG_HEX


def test_publishg_qos0_first_byte():
    assert encode_packet(Publish("a", b"x", geolocation=WINNIPEG))[0] == 0xF0


def test_publishg_layout():
    p = Publish("a/b", b"hi", 1, packet_id=5, geolocation=WINNIPEG)
    expected = "f2" + "1e" + "0003612f62" + "0005" + WINNIPEG_HEX + "6869"
    assert encode_packet(p).hex() == expected
    assert decode_packet(bytes.fromhex(expected)) == (p, 32)


def test_publishg_decodes_to_publish_with_location():
    raw = bytes.fromhex("f0" + "18" + "0001" + "74" + WINNIPEG_HEX)
    p, _ = decode_packet(raw)
    assert isinstance(p, Publish)
    assert p.geolocation == WINNIPEG
    assert p.topic == "t" and p.payload == b""


def test_publish_flags_roundtrip_through_type_15():
    p = Publish("t", b"", 2, True, True, 9, WINNIPEG)
    raw = encode_packet(p)
    assert raw[0] == 0xF0 | 0x08 | 0x04 | 0x01
    assert decode_packet(raw)[0] == p


@pytest.mark.parametrize("ptype", [2, 9, 11, 13])
def test_geo_bit_on_broker_only_types_rejected(ptype):
    body = {2: b"\x00\x00", 9: b"\x00\x01\x00", 11: b"\x00\x01", 13: b""}[ptype]
    raw = bytes([(ptype << 4) | 0x08, len(body)]) + body
    with pytest.raises(ProtocolError):
        decode_packet(raw)


def test_connack_bit3_protocol_error():
    with pytest.raises(ProtocolError):
        decode_packet(b"\x28\x02\x00\x00")


def test_strict_mode_rejects_extensions():
    with pytest.raises(ProtocolError):
        decode_packet(encode_packet(Publish("t", b"", geolocation=WINNIPEG)), True)
    with pytest.raises(ProtocolError):
        decode_packet(encode_packet(Pingreq(WINNIPEG)), strict_3_1_1=True)
    assert decode_packet(b"\xc0\x00", True) == (Pingreq(), 2)


def test_strict_geolocation_knob():
    raw = bytes([0xC8, 21, 1]) + struct.pack("<ddf", math.nan, 0.0, 0.0)
    with pytest.raises(InvalidGeolocation):
        decode_packet(raw)
    p, _ = decode_packet(raw, strict_geolocation=False)
    assert math.isnan(p.geolocation.latitude)


def test_reserved_type_zero():
    with pytest.raises(UnknownPacketType):
        decode_packet(b"\x00\x00")


@pytest.mark.parametrize(
    "hexstr,exc",
    [
        ("", Truncated),
        ("c0", Truncated),
        ("c001", Truncated),
        ("c00100", ProtocolError),  # trailing byte inside the frame
        ("3000", ProtocolError),  # topic overruns remaining length
        ("3603000161", ProtocolError),  # QoS 3
        ("3803000161", ProtocolError),  # DUP on QoS 0
        ("32050001610000", ProtocolError),  # packet id 0
        ("3003000123", ProtocolError),  # wildcard in topic name
        ("6000", ProtocolError),  # PUBREL flags must be 0b0010
        ("8000", ProtocolError),  # SUBSCRIBE flags
        ("82020001", ProtocolError),  # SUBSCRIBE with no filters
    ],
)
def test_malformed_packets(hexstr, exc):
    with pytest.raises(exc):
        decode_packet(bytes.fromhex(hexstr))


def test_connack_session_present_with_refusal():
    with pytest.raises(ProtocolError):
        decode_packet(b"\x20\x02\x01\x05")


def test_connect_reserved_flag():
    raw = bytearray(encode_packet(Connect("c")))
    raw[9] |= 0x01
    with pytest.raises(ProtocolError):
        decode_packet(bytes(raw))


def test_connect_password_without_username():
    with pytest.raises(EncodeError):
        encode_packet(Connect("c", password=b"x"))


def test_encode_validation():
    with pytest.raises(EncodeError):
        encode_packet(Publish("a/+", b""))
    with pytest.raises(EncodeError):
        encode_packet(Publish("a", b"", 1))
    with pytest.raises(EncodeError):
        encode_packet(Puback(0))
    with pytest.raises(EncodeError):
        encode_packet(Subscribe(1, ()))


def test_connect_with_geolocation_grows_by_21():
    legacy = encode_packet(Connect("dev"))
    geo = encode_packet(Connect("dev", geolocation=WINNIPEG))
    assert len(geo) == len(legacy) + 21
    assert geo[0] == 0x18
    assert decode_packet(geo)[0].geolocation == WINNIPEG


def test_names():
    assert Pingreq().name == "PINGREQ"
    assert Publish("t", geolocation=WINNIPEG).name == "PUBLISHG"
    assert PacketType(15).name == "PUBLISHG"


# -- legacy corpus --------------------------------------------------------------------

def test_fixture_corpus_size():
    assert len(list(FIXTURES.glob("*.hex"))) >= 20


@pytest.mark.parametrize("index,name,raw,packet", [(i, *v) for i, v in enumerate(LEGACY_VECTORS)],
                         ids=[v[0] for v in LEGACY_VECTORS])
def test_legacy_fixture(index, name, raw, packet):
    stored = bytes.fromhex((FIXTURES / f"{index:02d}_{name}.hex").read_text().strip())
    assert stored == raw
    assert encode_packet(packet) == raw
    assert decode_packet(raw, True) == (packet, len(raw))
    assert getattr(packet, "geolocation", None) is None


# -- stream helpers -------------------------------------------------------------------------

def test_framer_byte_at_a_time():
    packets = [Connect("a"), Publish("t", b"x" * 300, 1, packet_id=2, geolocation=WINNIPEG),
               Pingreq(WINNIPEG), Disconnect()]
    stream = b"".join(encode_packet(p) for p in packets)
    framer = PacketFramer()
    out = []
    for i in range(len(stream)):
        out += framer.feed(stream[i: i + 1])
    assert out == packets
    assert list(iter_packets(stream)) == packets


def test_framer_propagates_errors():
    framer = PacketFramer()
    with pytest.raises(ProtocolError):
        framer.feed(b"\x28\x02\x00\x00")


def test_framer_strict():
    with pytest.raises(ProtocolError):
        PacketFramer(strict_3_1_1=True).feed(encode_packet(Pingreq(WINNIPEG)))


def test_encoded_size():
    p = Publish("t", b"abc", geolocation=WINNIPEG)
    assert codec.encoded_size(p) == len(encode_packet(p))


# -- properties ---------------------------------------------------------------------------

def test_random_roundtrip_all_types():
    rng = random.Random(2024)
    for i in range(1500):
        p = random_packet(rng, i % 15 + 1)
        raw = encode_packet(p)
        assert decode_packet(raw) == (p, len(raw))


finite_lat = st.floats(-90, 90, allow_nan=False)
finite_lon = st.floats(-180, 180, allow_nan=False)
f32 = st.floats(allow_nan=False, allow_infinity=False, width=32)


@given(finite_lat, finite_lon, f32, st.integers(0, 255))
def test_geo_block_roundtrip_property(lat, lon, elev, version):
    b = GeolocationBlock(lat, lon, elev, version)
    raw = encode_geolocation_block(b)
    assert len(raw) == 21
    assert decode_geolocation_block(raw) == b


@given(st.integers(0, 268435455))
def test_mbi_roundtrip_property(n):
    raw = encode_mbi(n)
    assert raw == mbi_oracle(n)
    assert decode_mbi(raw) == (n, len(raw))


@settings(max_examples=300)
@given(
    st.text(st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00+#"), min_size=1, max_size=30),
    st.binary(max_size=200),
    st.integers(0, 2),
    st.booleans(),
    st.none() | st.tuples(finite_lat, finite_lon),
)
def test_publish_roundtrip_property(topic, payload, qos, retain, where):
    geo = GeolocationBlock(*where) if where else None
    p = Publish(topic, payload, qos, retain, packet_id=7 if qos else None, geolocation=geo)
    raw = encode_packet(p)
    assert raw[0] >> 4 == (15 if geo else 3)
    assert decode_packet(raw) == (p, len(raw))


@settings(max_examples=500)
@given(st.binary(max_size=64))
def test_fuzz_never_crashes(data):
    try:
        packet, n = decode_packet(data)
    except DecodeError:
        return
    assert 0 < n <= len(data)
    # non-minimal length encodings are accepted, so compare re-decoded values
    assert decode_packet(encode_packet(packet))[0] == packet
