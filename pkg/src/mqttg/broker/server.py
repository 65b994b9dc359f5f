"""asyncio TCP front end for :class:`~mqttg.broker.core.Broker`."""

from __future__ import annotations

import asyncio
import itertools
import logging
from typing import Callable

from ..codec import PacketFramer, encode_packet
from ..errors import DecodeError
from .config import BrokerConfig
from .core import Broker, Close, Delivery, Effect, FenceChanged, Send, Warn

log = logging.getLogger("mqttg.broker")

TICK_INTERVAL = 0.5


class BrokerServer:
    """Serve one broker engine; all engine calls happen on the event loop thread."""

    def __init__(
        self,
        config: BrokerConfig | None = None,
        route_sink: Callable[[str], None] | None = None,
    ) -> None:
        self.config = config or BrokerConfig()
        loop_time = lambda: asyncio.get_running_loop().time()  # noqa: E731
        self.broker = Broker(self.config, clock=loop_time)
        self.route_sink = route_sink
        self._writers: dict[int, asyncio.StreamWriter] = {}
        self._ids = itertools.count(1)
        self._server: asyncio.AbstractServer | None = None
        self._ticker: asyncio.Task | None = None

    @property
    def port(self) -> int:
        assert self._server is not None
        return self._server.sockets[0].getsockname()[1]

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._on_client, self.config.host, self.config.port
        )
        self._ticker = asyncio.create_task(self._tick_loop())
        log.info("listening on %s:%d", self.config.host, self.port)

    async def close(self) -> None:
        if self._ticker:
            self._ticker.cancel()
        if self._server:
            self._server.close()
            await self._server.wait_closed()
        for writer in list(self._writers.values()):
            writer.close()
        self._writers.clear()

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        assert self._server is not None
        await self._server.serve_forever()

    async def _tick_loop(self) -> None:
        while True:
            await asyncio.sleep(TICK_INTERVAL)
            self._apply(self.broker.tick())

    async def _on_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn = next(self._ids)
        self._writers[conn] = writer
        framer = PacketFramer(strict_3_1_1=self.config.strict)
        peer = writer.get_extra_info("peername")
        log.debug("connection %d from %s", conn, peer)
        try:
            while conn in self._writers:
                data = await reader.read(65536)
                if not data:
                    break
                try:
                    packets = framer.feed(data)
                except DecodeError as exc:
                    log.warning("connection %d: %s: %s", conn, type(exc).__name__, exc)
                    break
                for packet in packets:
                    self._apply(self.broker.handle_inbound(conn, packet))
                    if conn not in self._writers:
                        break
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            if conn in self._writers:
                self._apply(self.broker.connection_lost(conn))
                self._close(conn)

    def _apply(self, effects: list[Effect]) -> None:
        for effect in effects:
            if isinstance(effect, Send):
                writer = self._writers.get(effect.connection)
                if writer is not None and not writer.is_closing():
                    writer.write(encode_packet(effect.packet))
            elif isinstance(effect, Close):
                log.debug("closing connection %s: %s", effect.connection, effect.reason)
                self._close(effect.connection)
            elif isinstance(effect, Delivery):
                if self.route_sink is not None:
                    self.route_sink(effect.log_line())
            elif isinstance(effect, Warn):
                log.warning("%s: %s", effect.client_id, effect.message)
            elif isinstance(effect, FenceChanged):
                level = logging.INFO if effect.ok else logging.WARNING
                log.log(level, "%s: %s", effect.client_id, effect.message)

    def _close(self, conn: int) -> None:
        writer = self._writers.pop(conn, None)
        if writer is not None:
            writer.close()


async def run_broker(
    config: BrokerConfig,
    route_sink: Callable[[str], None] | None = None,
    stop: asyncio.Event | None = None,
    ready: Callable[[BrokerServer], None] | None = None,
) -> None:
    server = BrokerServer(config, route_sink)
    await server.start()
    if ready is not None:
        ready(server)
    try:
        if stop is None:
            await server.serve_forever()
        else:
            await stop.wait()
    finally:
        await server.close()
