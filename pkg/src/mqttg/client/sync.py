"""Blocking, thread-safe TCP client built on :class:`ClientEngine`."""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from concurrent.futures import Future
from concurrent.futures import TimeoutError as FutureTimeout
from typing import Callable, Iterable

from ..codec import Will
from ..errors import Aborted, ClientTimeout, ConnectRefused, DecodeError, Disconnected
from ..geometry import Geofence
from .engine import (
    ClientConfig,
    ClientEngine,
    Connected,
    ConnectionLost,
    ConnectionRefused,
    Event,
    MessageReceived,
    PublishComplete,
    SubscribeComplete,
    UnsubscribeComplete,
)
from .providers import LocationProvider

log = logging.getLogger("mqttg.client")

TICK_INTERVAL = 0.25


class MQTTgClient:
    """One connection to a broker.

    Operations may be called from any thread; they are serialized through a
    single lock around the engine.  ``on_message`` runs on the reader thread
    outside that lock.  Without a callback, messages land in :attr:`messages`.
    """

    def __init__(
        self,
        config: ClientConfig,
        provider: LocationProvider | None = None,
        on_message: Callable[[MessageReceived], None] | None = None,
    ) -> None:
        self.config = config
        self.engine = ClientEngine(config, provider)
        self.on_message = on_message
        self.messages: queue.Queue[MessageReceived] = queue.Queue()
        self._lock = threading.RLock()
        self._sock: socket.socket | None = None
        self._futures: dict[int, Future] = {}
        self._connect_future: Future | None = None
        self._closed = threading.Event()
        self._threads: list[threading.Thread] = []

    # -- lifecycle -------------------------------------------------------------------

    def connect(self, timeout: float = 10.0) -> bool:
        """Open the TCP connection and wait for CONNACK; returns session-present."""
        try:
            sock = socket.create_connection((self.config.host, self.config.port), timeout=timeout)
        except socket.timeout:
            raise ClientTimeout(f"connecting to {self.config.host}:{self.config.port}") from None
        sock.settimeout(None)
        self._sock = sock
        self._closed.clear()
        fut: Future = Future()
        with self._lock:
            self._connect_future = fut
            self.engine.connect(time.monotonic())
            self._flush()
        for target in (self._reader, self._ticker):
            t = threading.Thread(target=target, daemon=True, name=f"mqttg-{target.__name__}")
            t.start()
            self._threads.append(t)
        return self._wait(fut, timeout, "CONNACK")

    def disconnect(self) -> None:
        with self._lock:
            events = self.engine.disconnect(time.monotonic())
            try:
                self._flush()
            except OSError:
                pass
        self._dispatch(events)
        self._shutdown_socket()

    def close(self) -> None:
        self._shutdown_socket()

    def __enter__(self) -> MQTTgClient:
        return self

    def __exit__(self, *exc) -> None:
        if self.engine.connected:
            self.disconnect()
        else:
            self.close()

    # -- operations --------------------------------------------------------------------

    def publish_async(
        self, topic: str, payload: bytes | str, qos: int | None = None, retain: bool = False
    ) -> Future:
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        fut: Future = Future()
        with self._lock:
            pid = self.engine.publish(topic, payload, qos, retain, time.monotonic())
            if pid is None:
                fut.set_result(None)
            else:
                self._futures[pid] = fut
            self._flush()
        return fut

    def publish(
        self,
        topic: str,
        payload: bytes | str,
        qos: int | None = None,
        retain: bool = False,
        timeout: float = 10.0,
    ) -> None:
        self._wait(self.publish_async(topic, payload, qos, retain), timeout, "publish")

    def subscribe(self, filters: Iterable[tuple[str, int]], timeout: float = 10.0) -> list[int]:
        fut: Future = Future()
        with self._lock:
            pid = self.engine.subscribe(filters, time.monotonic())
            self._futures[pid] = fut
            self._flush()
        return list(self._wait(fut, timeout, "SUBACK"))

    def unsubscribe(self, filters: Iterable[str], timeout: float = 10.0) -> None:
        fut: Future = Future()
        with self._lock:
            pid = self.engine.unsubscribe(filters, time.monotonic())
            self._futures[pid] = fut
            self._flush()
        self._wait(fut, timeout, "UNSUBACK")

    def set_fence(self, fence: Geofence, timeout: float = 10.0) -> None:
        fut: Future = Future()
        with self._lock:
            pid = self.engine.set_fence(fence, time.monotonic())
            self._futures[pid] = fut
            self._flush()
        self._wait(fut, timeout, "fence PUBACK")

    def clear_fence(self, timeout: float = 10.0) -> None:
        fut: Future = Future()
        with self._lock:
            pid = self.engine.clear_fence(time.monotonic())
            self._futures[pid] = fut
            self._flush()
        self._wait(fut, timeout, "fence PUBACK")

    # -- internals ---------------------------------------------------------------------

    def _wait(self, fut: Future, timeout: float, what: str):
        try:
            return fut.result(timeout)
        except FutureTimeout:
            raise ClientTimeout(f"timed out waiting for {what}") from None

    def _flush(self) -> None:
        data = self.engine.data_to_send()
        if data and self._sock is not None:
            self._sock.sendall(data)

    def _reader(self) -> None:
        sock = self._sock
        reason = "connection closed by broker"
        while sock is not None and not self._closed.is_set():
            try:
                data = sock.recv(65536)
            except OSError as exc:
                reason = str(exc)
                break
            if not data:
                break
            try:
                with self._lock:
                    events = self.engine.receive_data(data, time.monotonic())
                    self._flush()
            except (DecodeError, OSError) as exc:
                reason = f"{type(exc).__name__}: {exc}"
                break
            self._dispatch(events)
        with self._lock:
            events = self.engine.connection_lost(reason)
        self._dispatch(events)
        self._shutdown_socket()

    def _ticker(self) -> None:
        while not self._closed.wait(TICK_INTERVAL):
            with self._lock:
                events = self.engine.tick(time.monotonic())
                try:
                    self._flush()
                except OSError:
                    pass
            self._dispatch(events)
            if not self.engine.connected and self.engine.state == ClientEngine.CLOSED:
                self._shutdown_socket()

    def _shutdown_socket(self) -> None:
        self._closed.set()
        sock, self._sock = self._sock, None
        if sock is not None:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()

    def _dispatch(self, events: list[Event]) -> None:
        for ev in events:
            if isinstance(ev, Connected):
                if self._connect_future and not self._connect_future.done():
                    self._connect_future.set_result(ev.session_present)
            elif isinstance(ev, ConnectionRefused):
                if self._connect_future and not self._connect_future.done():
                    self._connect_future.set_exception(ConnectRefused(ev.return_code))
            elif isinstance(ev, MessageReceived):
                if self.on_message is not None:
                    try:
                        self.on_message(ev)
                    except Exception:  # noqa: BLE001
                        log.exception("message callback failed")
                else:
                    self.messages.put(ev)
            elif isinstance(ev, PublishComplete):
                self._resolve(ev.packet_id, None)
            elif isinstance(ev, SubscribeComplete):
                self._resolve(ev.packet_id, ev.granted)
            elif isinstance(ev, UnsubscribeComplete):
                self._resolve(ev.packet_id, None)
            elif isinstance(ev, ConnectionLost):
                exc = Aborted(ev.reason)
                if self._connect_future and not self._connect_future.done():
                    self._connect_future.set_exception(Disconnected(ev.reason))
                with self._lock:
                    pending, self._futures = self._futures, {}
                for fut in pending.values():
                    if not fut.done():
                        fut.set_exception(exc)

    def _resolve(self, pid: int, value) -> None:
        with self._lock:
            fut = self._futures.pop(pid, None)
        if fut is not None and not fut.done():
            fut.set_result(value)


__all__ = ["MQTTgClient", "ClientConfig", "Will"]
