import socket
import threading

import pytest

from mqttg.client import (
    ClientConfig,
    ClientEngine,
    Connected,
    ConnectionLost,
    ConnectionRefused,
    FixedLocation,
    MessageReceived,
    MQTTgClient,
    NoLocation,
    PublishComplete,
    ScriptedPath,
    SubscribeComplete,
    UnsubscribeComplete,
)
from mqttg.codec import (
    Connack,
    Connect,
    Disconnect,
    GeolocationBlock,
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
    decode_packet,
    encode_packet,
)
from mqttg.errors import ClientTimeout, ConnectRefused, InvalidTopic, NotConnected
from mqttg.geometry import Geofence
from mqttg.sysg import FENCE_CLEAR_TOPIC, FENCE_SET_TOPIC

from oracles import connect_311, publish_311

HERE = GeolocationBlock(49.8, -99.95, 409.0)


def engine(share=False, **kw):
    cfg = ClientConfig("dev", share_location=share, **kw)
    return ClientEngine(cfg, FixedLocation(49.8, -99.95, 409.0) if share else None)


def connected(share=False, **kw):
    e = engine(share, **kw)
    e.connect(0.0)
    e.take_outgoing()
    assert e.receive(Connack(False, 0), 0.0) == [Connected(False)]
    return e


# -- CONNECT ------------------------------------------------------------------------------

def test_connect_legacy_bytes():
    e = engine()
    e.connect(0.0)
    assert e.data_to_send() == connect_311("dev", 60)


def test_connect_sharing_adds_block():
    legacy = connect_311("dev", 60)
    e = engine(share=True)
    e.connect(0.0)
    raw = e.data_to_send()
    assert raw[0] == 0x18
    assert len(raw) == len(legacy) + 21
    assert raw[1] == legacy[1] + 21


def test_connect_refused():
    e = engine()
    e.connect(0.0)
    assert e.receive(Connack(False, 2), 0.0) == [ConnectionRefused(2)]
    assert not e.connected


def test_config_validation():
    with pytest.raises(ValueError):
        ClientConfig("")
    with pytest.raises(ValueError):
        ClientConfig("x", default_qos=3)


# -- publish --------------------------------------------------------------------------------

def test_publish_location_on_is_publishg():
    e = connected(share=True)
    pid = e.publish("a/b", b"x", 1, now=1.0)
    raw = e.data_to_send()
    assert raw[0] == 0xF2
    assert decode_packet(raw)[0] == Publish("a/b", b"x", 1, packet_id=pid, geolocation=HERE)


def test_publish_location_off_is_plain():
    e = connected()
    e.publish("a/b", b"x", 2, retain=True, now=1.0)
    assert e.data_to_send() == publish_311("a/b", b"x", 2, retain=True, pid=1)


def test_publish_needs_connection():
    with pytest.raises(NotConnected):
        engine().publish("t", b"")


def test_publish_rejects_wildcards():
    with pytest.raises(InvalidTopic):
        connected().publish("a/+", b"")


def test_qos0_no_state():
    e = connected()
    assert e.publish("t", b"x", 0) is None
    assert e.inflight_ids == set()


def test_qos1_retransmit_with_dup():
    e = connected(retransmit_timeout=5.0)
    pid = e.publish("t", b"x", 1, now=0.0)
    e.take_outgoing()
    assert e.tick(4.9) == [] and e.take_outgoing() == []
    e.tick(5.0)
    assert e.take_outgoing() == [Publish("t", b"x", 1, dup=True, packet_id=pid)]
    assert e.receive(Puback(pid), 6.0) == [PublishComplete(pid)]
    assert e.inflight_ids == set()


def test_qos2_outbound_completes_exactly_once():
    e = connected()
    pid = e.publish("t", b"x", 2, now=0.0)
    e.take_outgoing()
    assert e.receive(Pubrec(pid), 1.0) == []
    assert e.take_outgoing() == [Pubrel(pid)]
    assert e.receive(Pubrec(pid), 1.5) == []  # duplicate PUBREC re-sends PUBREL only
    assert e.take_outgoing() == [Pubrel(pid)]
    assert e.receive(Pubcomp(pid), 2.0) == [PublishComplete(pid)]
    assert e.receive(Pubcomp(pid), 2.1) == []


def test_qos2_pubrel_retransmitted():
    e = connected(retransmit_timeout=3.0)
    pid = e.publish("t", b"x", 2, now=0.0)
    e.receive(Pubrec(pid), 1.0)
    e.take_outgoing()
    e.tick(4.0)
    assert e.take_outgoing() == [Pubrel(pid)]


def test_packet_ids_wrap_and_skip_inflight():
    e = connected()
    e._next_id = 0xFFFF
    assert e.publish("t", b"", 1) == 0xFFFF
    assert e.publish("t", b"", 1) == 1


# -- inbound -----------------------------------------------------------------------------------

def test_inbound_qos2_delivered_once():
    e = connected()
    p = Publish("t", b"x", 2, packet_id=5)
    assert e.receive(p, 1.0) == [MessageReceived("t", b"x", 2, False, None)]
    assert e.take_outgoing() == [Pubrec(5)]
    assert e.receive(Publish("t", b"x", 2, dup=True, packet_id=5), 2.0) == []
    assert e.take_outgoing() == [Pubrec(5)]
    e.receive(Pubrel(5), 3.0)
    assert e.take_outgoing() == [Pubcomp(5)]


def test_inbound_qos1_acked_every_time():
    e = connected()
    p = Publish("t", b"x", 1, packet_id=3, geolocation=HERE)
    assert e.receive(p, 1.0) == [MessageReceived("t", b"x", 1, False, HERE)]
    assert e.take_outgoing() == [Puback(3)]


# -- subscribe ------------------------------------------------------------------------------

def test_subscribe_granted():
    e = connected()
    pid = e.subscribe([("a/+", 1)])
    assert e.take_outgoing() == [Subscribe(pid, (("a/+", 1),))]
    assert e.receive(Suback(pid, (1,)), 0.0) == [SubscribeComplete(pid, (1,))]


def test_subscribe_invalid_filter_local_error():
    with pytest.raises(InvalidTopic):
        connected().subscribe([("a/#/b", 0)])


def test_subscribe_while_sharing_carries_block():
    e = connected(share=True)
    e.subscribe([("a", 0)])
    raw = e.data_to_send()
    assert raw[0] == 0x8A
    assert decode_packet(raw)[0].geolocation == HERE


def test_unsubscribe():
    e = connected()
    pid = e.unsubscribe(["a"])
    assert e.receive(Unsuback(pid), 0.0) == [UnsubscribeComplete(pid)]


def test_fence_publishes():
    e = connected()
    e.set_fence(Geofence.static([(0, 0), (0, 1), (1, 1), (1, 0)]))
    (p,) = e.take_outgoing()
    assert p.topic == FENCE_SET_TOPIC and p.qos == 1 and len(p.payload) == 68
    e.clear_fence()
    (p,) = e.take_outgoing()
    assert p.topic == FENCE_CLEAR_TOPIC and p.payload == b""


# -- keep-alive ----------------------------------------------------------------------------------

def test_idle_sharing_ping_is_heartbeat():
    e = connected(share=True, keep_alive=10)
    e.tick(10.0)
    assert e.take_outgoing() == [Pingreq(HERE)]


def test_active_traffic_suppresses_ping():
    e = connected(keep_alive=10)
    e.publish("t", b"", 0, now=8.0)
    e.take_outgoing()
    e.tick(12.0)
    assert e.take_outgoing() == []


def test_missing_pingresp_disconnects():
    e = connected(keep_alive=10)
    e.tick(10.0)
    assert e.take_outgoing() == [Pingreq()]
    assert e.tick(24.9) == []
    events = e.tick(25.0)
    assert isinstance(events[0], ConnectionLost)
    assert not e.connected


def test_pingresp_clears_outstanding():
    e = connected(keep_alive=10)
    e.tick(10.0)
    e.receive(Pingresp(), 10.1)
    assert e.tick(25.0) == []
    assert e.connected


def test_disconnect_reports_aborted_ids():
    e = connected()
    pid = e.publish("t", b"", 1)
    e.take_outgoing()
    events = e.disconnect(1.0)
    assert e.take_outgoing() == [Disconnect()]
    assert events == [ConnectionLost("client disconnected", (pid,))]


# -- providers -----------------------------------------------------------------------------------

def test_providers():
    assert NoLocation().current() is None
    t = [0.0]
    path = ScriptedPath([(5.0, HERE), (1.0, GeolocationBlock(1, 1))], clock=lambda: t[0])
    assert path.current() is None
    t[0] = 1.0
    assert path.current() == GeolocationBlock(1, 1)
    t[0] = 7.0
    assert path.current() == HERE


# -- blocking client against a scripted peer --------------------------------------------------

def _one_shot_server(reply: bytes):
    srv = socket.create_server(("127.0.0.1", 0))
    port = srv.getsockname()[1]
    received = []

    def run():
        conn, _ = srv.accept()
        with conn:
            received.append(conn.recv(4096))
            if reply:
                conn.sendall(reply)
            conn.recv(4096)
        srv.close()

    threading.Thread(target=run, daemon=True).start()
    return port, received


def test_sync_client_refused():
    port, received = _one_shot_server(encode_packet(Connack(False, 2)))
    client = MQTTgClient(ClientConfig("dup-id", port=port))
    with pytest.raises(ConnectRefused) as info:
        client.connect(timeout=5)
    assert info.value.code == 2
    client.close()
    assert decode_packet(received[0])[0] == Connect("dup-id")


def test_sync_client_timeout():
    port, _ = _one_shot_server(b"")
    client = MQTTgClient(ClientConfig("slow", port=port))
    with pytest.raises(ClientTimeout):
        client.connect(timeout=0.3)
    client.close()
