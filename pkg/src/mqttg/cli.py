"""
``mqttg`` command line: broker, pub, sub, decode and sim.

Exit codes
----------
0  success (broker: clean shutdown on SIGINT/SIGTERM)
1  runtime failure: connection refused, timeout, unreachable broker,
   malformed decode input, oracle mismatch
2  usage or configuration error: unknown flag, bad fence/config/scenario
   file, listen address not bindable

Records go to stdout, one per line; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import asyncio
import binascii
import dataclasses
import logging
import signal
import sys
import time
from pathlib import Path
from typing import Sequence

from .broker import BrokerConfig, ConfigError, load_config
from .broker.config import parse_listen
from .broker.server import run_broker
from .client import ClientConfig, FixedLocation, MQTTgClient
from .codec import (
    Connect,
    GeolocationBlock,
    Packet,
    Publish,
    Subscribe,
    Suback,
    Unsubscribe,
    decode_fixed_header,
    decode_packet,
)
from .errors import DecodeError, GeofenceError, MQTTgError, ScenarioError
from .geometry import FenceMode, Geofence, GeoPoint, validate_fence

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("mqttg")


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- fence file ---------------------------------------------------------------------

def parse_fence_file(text: str) -> Geofence:
    """First line ``static`` or ``dynamic``, then one ``lat lon`` pair per line."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise GeofenceError("empty fence file")
    try:
        mode = FenceMode[lines[0].upper()]
    except KeyError:
        raise GeofenceError(f"first line must be static or dynamic, got {lines[0]!r}") from None
    vertices = []
    for ln in lines[1:]:
        parts = ln.replace(",", " ").split()
        if len(parts) != 2:
            raise GeofenceError(f"expected 'lat lon', got {ln!r}")
        try:
            vertices.append(GeoPoint(float(parts[0]), float(parts[1])))
        except ValueError:
            raise GeofenceError(f"not a number in {ln!r}") from None
    fence = Geofence(mode, tuple(vertices))
    validate_fence(fence)
    return fence


# -- decode ----------------------------------------------------------------------------

def _fmt_value(value) -> str:
    if isinstance(value, (bytes, bytearray)):
        return value.hex() if value else '""'
    if isinstance(value, str):
        return repr(value)
    return str(value)


def _geo_text(g: GeolocationBlock) -> str:
    text = f"v{g.version} lat={g.latitude!r} lon={g.longitude!r} elev={g.elevation!r}"
    if not g.is_current_version:
        text += " (unknown version)"
    return text


def describe_packet(packet: Packet, raw: bytes) -> list[str]:
    header = decode_fixed_header(raw)
    geo = getattr(packet, "geolocation", None)
    name = header.packet_type.name
    lines = [f"{name} + geolocation {_geo_text(geo)}" if geo else f"{name}, no geolocation"]
    lines.append(
        f"header type={name} code={int(header.packet_type)} flags=0x{header.flags:X} "
        f"remaining_length={header.remaining_length}"
    )
    for fname in (f.name for f in dataclasses.fields(packet)):
        if fname == "geolocation":
            continue
        value = getattr(packet, fname)
        if isinstance(packet, Subscribe) and fname == "subscriptions":
            for f, q in value:
                lines.append(f"field subscription={f!r} qos={q}")
        elif isinstance(packet, Unsubscribe) and fname == "filters":
            for f in value:
                lines.append(f"field filter={f!r}")
        elif isinstance(packet, Suback) and fname == "return_codes":
            lines.append("field return_codes=" + ",".join(f"0x{c:02X}" for c in value))
        elif isinstance(packet, Connect) and fname == "will" and value is not None:
            lines.append(
                f"field will_topic={value.topic!r} will_message={_fmt_value(value.message)} "
                f"will_qos={value.qos} will_retain={value.retain}"
            )
        else:
            lines.append(f"field {fname}={_fmt_value(value)}")
    if geo:
        lines.append(
            f"geolocation version={geo.version} latitude={geo.latitude!r} "
            f"longitude={geo.longitude!r} elevation={geo.elevation!r}"
        )
    return lines


def cmd_decode(args: argparse.Namespace) -> int:
    if args.hex is not None:
        text = "".join(args.hex.split())
        if text[:2].lower() == "0x":
            text = text[2:]
        try:
            data = binascii.unhexlify(text)
        except (binascii.Error, ValueError) as exc:
            _err(f"InvalidHex: {exc}")
            return EXIT_FAIL
    else:
        try:
            data = Path(args.file).read_bytes()
        except OSError as exc:
            _err(f"{args.file}: {exc}")
            return EXIT_FAIL
    if not data:
        _err("Truncated: no input bytes")
        return EXIT_FAIL
    pos = 0
    while pos < len(data):
        try:
            packet, n = decode_packet(data[pos:], args.strict, strict_geolocation=args.strict)
        except DecodeError as exc:
            _err(f"{type(exc).__name__}: {exc} (at byte {pos})")
            return EXIT_FAIL
        for line in describe_packet(packet, data[pos: pos + n]):
            print(line)
        pos += n
    return EXIT_OK


# -- client commands ------------------------------------------------------------------

def _broker_address(value: str) -> tuple[str, int]:
    if ":" not in value:
        return value, 1883
    host, port = parse_listen(value)
    return host, port


def _location(args: argparse.Namespace, parser: argparse.ArgumentParser) -> FixedLocation | None:
    if args.lat is None and args.lon is None:
        if getattr(args, "elev", None) is not None:
            parser.error("--elev needs --lat and --lon")
        return None
    if args.lat is None or args.lon is None:
        parser.error("--lat and --lon must be given together")
    return FixedLocation(args.lat, args.lon, getattr(args, "elev", None) or 0.0)


def _client_config(args, provider, prefix: str) -> ClientConfig:
    host, port = _broker_address(args.broker)
    return ClientConfig(
        client_id=args.client_id or f"{prefix}-{int(time.time() * 1000) % 10**9}",
        host=host,
        port=port,
        keep_alive=args.keep_alive,
        share_location=provider is not None,
    )


def cmd_pub(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    provider = _location(args, parser)
    cfg = _client_config(args, provider, "mqttg-pub")
    client = MQTTgClient(cfg, provider)
    try:
        client.connect(timeout=args.timeout)
        client.publish(args.topic, args.message.encode("utf-8"), args.qos, args.retain,
                       timeout=args.timeout)
        client.disconnect()
    except (MQTTgError, OSError) as exc:
        _err(f"pub failed: {type(exc).__name__}: {exc}")
        client.close()
        return EXIT_FAIL
    return EXIT_OK


def format_message(topic: str, payload: bytes, geo: GeolocationBlock | None) -> str:
    text = payload.decode("utf-8", "backslashreplace")
    text = text.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")
    fields = [topic, text]
    if geo is not None:
        fields += [repr(geo.latitude), repr(geo.longitude), repr(geo.elevation)]
    return "\t".join(fields)


def cmd_sub(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    fence = None
    if args.fence:
        try:
            fence = parse_fence_file(Path(args.fence).read_text(encoding="utf-8"))
        except (OSError, GeofenceError) as exc:
            _err(f"bad fence file {args.fence}: {type(exc).__name__}: {exc}")
            return EXIT_USAGE
    provider = _location(args, parser)
    cfg = _client_config(args, provider, "mqttg-sub")
    client = MQTTgClient(cfg, provider)
    try:
        client.connect(timeout=args.timeout)
        granted = client.subscribe([(t, args.qos) for t in args.topic], timeout=args.timeout)
        if 0x80 in granted:
            _err(f"broker rejected a subscription: {granted}")
        if fence is not None:
            client.set_fence(fence, timeout=args.timeout)
    except (MQTTgError, OSError, ValueError) as exc:
        _err(f"sub failed: {type(exc).__name__}: {exc}")
        client.close()
        return EXIT_FAIL
    print("# subscribed", file=sys.stderr, flush=True)

    deadline = time.monotonic() + args.duration if args.duration else None
    seen = 0
    try:
        while args.count is None or seen < args.count:
            wait = 0.2 if deadline is None else min(0.2, deadline - time.monotonic())
            if wait <= 0:
                break
            try:
                msg = client.messages.get(timeout=wait)
            except Exception:  # queue.Empty
                if not client.engine.connected:
                    _err("connection lost")
                    return EXIT_FAIL
                continue
            print(format_message(msg.topic, msg.payload, msg.geolocation), flush=True)
            seen += 1
    except KeyboardInterrupt:
        pass
    finally:
        if client.engine.connected:
            client.disconnect()
    return EXIT_OK


# -- broker ---------------------------------------------------------------------------

def cmd_broker(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config) if args.config else BrokerConfig()
        overrides = {}
        if args.listen:
            overrides["host"], overrides["port"] = parse_listen(args.listen)
        if args.fence_fail_closed:
            overrides["fence_fail_closed"] = True
        if args.strict:
            overrides["strict"] = True
        config = config.with_overrides(**overrides)
    except (OSError, ConfigError) as exc:
        _err(f"config error: {exc}")
        return EXIT_USAGE

    def route_sink(line: str) -> None:
        print(line, flush=True)

    async def main() -> None:
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, stop.set)
            except (NotImplementedError, RuntimeError):
                pass

        def ready(server) -> None:
            _err(f"listening on {config.host}:{server.port}")

        await run_broker(config, route_sink, stop, ready)

    try:
        asyncio.run(main())
    except OSError as exc:
        _err(f"cannot listen on {config.host}:{config.port}: {exc}")
        return EXIT_USAGE
    return EXIT_OK


# -- sim ------------------------------------------------------------------------------

def cmd_sim_run(args: argparse.Namespace) -> int:
    from .sim import compare_logs, load_scenario, oracle_expected_deliveries, run_scenario
    from .sim.report import report_csv, report_text

    try:
        scenario = load_scenario(args.file)
    except (OSError, ScenarioError) as exc:
        _err(f"bad scenario {args.file}: {exc}")
        return EXIT_USAGE
    result = run_scenario(scenario, record_wire=False)
    sys.stdout.write(report_text(result.metrics))
    csv_text = report_csv(result.metrics)
    if args.csv == "-":
        sys.stdout.write(csv_text)
    elif args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
    if args.log:
        Path(args.log).write_text(
            "".join(r.log_line() + "\n" for r in result.log), encoding="utf-8"
        )
    for p in result.problems:
        _err(p)
    if args.check:
        diffs = compare_logs(result.log, oracle_expected_deliveries(scenario, with_margins=True))
        if diffs:
            for d in diffs[:20]:
                _err(f"oracle mismatch {d}")
            return EXIT_FAIL
        print("oracle agreement: exact")
    return EXIT_OK


def cmd_sim_generate(args: argparse.Namespace) -> int:
    from .sim import dump_scenario, random_scenario

    try:
        scenario = random_scenario(
            args.seed,
            clients=args.clients,
            publishes=args.publishes,
            static_fences=args.static_fences,
            dynamic_fences=args.dynamic_fences,
            duration=args.duration,
        )
    except ScenarioError as exc:
        _err(str(exc))
        return EXIT_USAGE
    scenario = dataclasses.replace(scenario, drop_probability=args.drop_probability)
    sys.stdout.write(dump_scenario(scenario))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------

def _add_client_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--broker", default="127.0.0.1:1883", help="host:port (default %(default)s)")
    p.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)
    p.add_argument("--client-id")
    p.add_argument("--keep-alive", type=int, default=60)
    p.add_argument("--timeout", type=float, default=10.0, help="seconds per protocol step")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mqttg", description="MQTT 3.1.1 with geolocation")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("broker", help="run a broker")
    b.add_argument("--listen", help="host:port (default 0.0.0.0:1883)")
    b.add_argument("--config", help="key = value settings file")
    b.add_argument("--fence-fail-closed", action="store_true",
                   help="suppress when a needed location is unknown")
    b.add_argument("--strict", action="store_true", help="accept plain MQTT 3.1.1 only")

    p = sub.add_parser("pub", help="publish one message")
    p.add_argument("--topic", required=True)
    p.add_argument("--message", required=True)
    p.add_argument("--qos", type=int, choices=(0, 1, 2), default=0)
    p.add_argument("--retain", action="store_true")
    p.add_argument("--elev", type=float)
    _add_client_flags(p)

    s = sub.add_parser("sub", help="subscribe and print messages")
    s.add_argument("--topic", required=True, action="extend", nargs="+")
    s.add_argument("--fence", help="fence file: static|dynamic, then 'lat lon' lines")
    s.add_argument("--qos", type=int, choices=(0, 1, 2), default=0)
    s.add_argument("--count", type=int, help="exit after this many messages")
    s.add_argument("--duration", type=float, help="exit after this many seconds")
    _add_client_flags(s)

    d = sub.add_parser("decode", help="dump packets from hex or a file")
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--hex")
    src.add_argument("--file")
    d.add_argument("--strict", action="store_true", help="plain MQTT 3.1.1, finite coordinates")

    sim = sub.add_parser("sim", help="simulation harness")
    simsub = sim.add_subparsers(dest="sim_command", required=True)
    run = simsub.add_parser("run", help="run a scenario file")
    run.add_argument("file")
    run.add_argument("--csv", help="write metrics CSV here ('-' for stdout)")
    run.add_argument("--log", help="write ROUTE lines here")
    run.add_argument("--check", action="store_true", help="compare against the oracle")
    gen = simsub.add_parser("generate", help="print a random scenario")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--clients", type=int, default=50)
    gen.add_argument("--publishes", type=int, default=500)
    gen.add_argument("--static-fences", type=int, default=10)
    gen.add_argument("--dynamic-fences", type=int, default=5)
    gen.add_argument("--duration", type=float, default=100.0)
    gen.add_argument("--drop-probability", type=float, default=0.0)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.command == "decode":
        return cmd_decode(args)
    if args.command == "pub":
        return cmd_pub(args, parser)
    if args.command == "sub":
        return cmd_sub(args, parser)
    if args.command == "broker":
        return cmd_broker(args)
    if args.command == "sim":
        if args.sim_command == "run":
            return cmd_sim_run(args)
        return cmd_sim_generate(args)
    parser.error(f"unknown command {args.command}")  # pragma: no cover
    return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
