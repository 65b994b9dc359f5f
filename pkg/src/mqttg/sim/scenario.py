"""
Scenario description, validation, text format and random generation.

Scenario files are line oriented.  Lines whose first non-blank character is
``#`` are comments.  Global settings come first as ``key = value``; each
client is a ``[client <id>]`` block::

    seed = 7
    duration = 120
    latency = 0.01            # seconds per hop, 0 <= latency < 0.25
    drop_probability = 0.0    # applies from t = 1 s onwards
    fail_closed = false
    retransmit_timeout = 5
    keep_alive = 60

    [client alice]
    share_location = true
    movement = walk 49.85 -99.95 0.001          # start lat lon, step degrees
    subscribe = city/# 1
    fence = dynamic -0.01 -0.01 ; -0.01 0.01 ; 0.01 0.01 ; 0.01 -0.01
    publish = 5.5 city/traffic 1 jam on 18th street

``movement`` is one of ``fixed LAT LON``, ``walk LAT LON STEP`` or
``waypoints T LAT LON ; T LAT LON ; ...``.  ``publish`` takes
``TIME TOPIC QOS [PAYLOAD...]``; ``publish_retained`` is the same with the
RETAIN flag.  Publish times must lie in ``[1, duration)``: the first second
is reserved for connecting, subscribing and installing fences.
"""

from __future__ import annotations

import dataclasses
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from ..errors import GeofenceError, InvalidTopic, ScenarioError
from ..geometry import FenceMode, Geofence, GeoPoint, validate_fence
from ..sysg import is_sysg_topic
from ..topics import validate_filter, validate_topic_name

SETUP_END = 1.0
_COMMENT = re.compile(r"\s+#.*$")


@dataclass(frozen=True)
class Fixed:
    point: GeoPoint


@dataclass(frozen=True)
class RandomWalk:
    start: GeoPoint
    step_degrees: float


@dataclass(frozen=True)
class Waypoints:
    points: tuple[tuple[float, GeoPoint], ...]


Movement = Union[Fixed, RandomWalk, Waypoints]


@dataclass(frozen=True)
class PublishSpec:
    time: float
    topic: str
    payload: bytes = b""
    qos: int = 0
    retain: bool = False


@dataclass(frozen=True)
class ClientSpec:
    client_id: str
    movement: Movement
    subscriptions: tuple[tuple[str, int], ...] = ()
    fence: Geofence | None = None
    publish_schedule: tuple[PublishSpec, ...] = ()
    share_location: bool = True


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: float
    clients: tuple[ClientSpec, ...] = ()
    latency: float = 0.01
    drop_probability: float = 0.0
    fail_closed: bool = False
    retransmit_timeout: float = 5.0
    keep_alive: int = 60
    drain: float = 600.0

    @property
    def publish_count(self) -> int:
        return sum(len(c.publish_schedule) for c in self.clients)


def validate_scenario(s: Scenario) -> None:
    if not (math.isfinite(s.duration) and s.duration > 0):
        raise ScenarioError(f"duration must be positive, got {s.duration}")
    if not 0.0 <= s.latency < 0.25:
        raise ScenarioError(f"latency must be in [0, 0.25), got {s.latency}")
    if not 0.0 <= s.drop_probability < 1.0:
        raise ScenarioError(f"drop_probability must be in [0, 1), got {s.drop_probability}")
    if s.retransmit_timeout <= 0:
        raise ScenarioError("retransmit_timeout must be positive")
    if not 1 <= s.keep_alive <= 0xFFFF:
        raise ScenarioError("keep_alive must be in 1..65535")
    seen: set[str] = set()
    for c in s.clients:
        where = f"client {c.client_id!r}"
        if not c.client_id or any(ch.isspace() for ch in c.client_id):
            raise ScenarioError(f"{where}: identifier must be non-empty without spaces")
        if c.client_id in seen:
            raise ScenarioError(f"{where}: duplicate identifier")
        seen.add(c.client_id)
        _validate_movement(c.movement, where)
        for f, q in c.subscriptions:
            try:
                validate_filter(f)
            except InvalidTopic as exc:
                raise ScenarioError(f"{where}: {exc}") from None
            if q not in (0, 1, 2):
                raise ScenarioError(f"{where}: subscription QoS {q} invalid")
        if c.fence is not None:
            try:
                validate_fence(c.fence)
            except GeofenceError as exc:
                raise ScenarioError(f"{where}: {type(exc).__name__}: {exc}") from None
        for p in c.publish_schedule:
            if not SETUP_END <= p.time < s.duration:
                raise ScenarioError(
                    f"{where}: publish at t={p.time} outside [{SETUP_END}, {s.duration})"
                )
            try:
                validate_topic_name(p.topic)
            except InvalidTopic as exc:
                raise ScenarioError(f"{where}: {exc}") from None
            if is_sysg_topic(p.topic):
                raise ScenarioError(f"{where}: $SYSg topics are reserved for fences")
            if p.qos not in (0, 1, 2):
                raise ScenarioError(f"{where}: publish QoS {p.qos} invalid")


def _validate_movement(m: Movement, where: str) -> None:
    if isinstance(m, Fixed):
        points = [m.point]
    elif isinstance(m, RandomWalk):
        points = [m.start]
        if not (math.isfinite(m.step_degrees) and m.step_degrees >= 0):
            raise ScenarioError(f"{where}: walk step must be finite and >= 0")
    elif isinstance(m, Waypoints):
        if not m.points:
            raise ScenarioError(f"{where}: waypoints need at least one point")
        times = [t for t, _ in m.points]
        if times != sorted(times) or len(set(times)) != len(times):
            raise ScenarioError(f"{where}: waypoint times must increase strictly")
        points = [p for _, p in m.points]
    else:
        raise ScenarioError(f"{where}: unknown movement {m!r}")
    for p in points:
        if not (p.is_finite and p.in_range):
            raise ScenarioError(f"{where}: position {p} invalid")


# -- text format ------------------------------------------------------------------

def _floats(tokens: list[str], n: int, what: str) -> list[float]:
    if len(tokens) != n:
        raise ScenarioError(f"{what}: expected {n} numbers, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ScenarioError(f"{what}: not a number in {tokens}") from None


def _parse_movement(value: str) -> Movement:
    kind, _, rest = value.partition(" ")
    if kind == "fixed":
        lat, lon = _floats(rest.split(), 2, "fixed")
        return Fixed(GeoPoint(lat, lon))
    if kind == "walk":
        lat, lon, step = _floats(rest.split(), 3, "walk")
        return RandomWalk(GeoPoint(lat, lon), step)
    if kind == "waypoints":
        pts = []
        for chunk in rest.split(";"):
            t, lat, lon = _floats(chunk.split(), 3, "waypoint")
            pts.append((t, GeoPoint(lat, lon)))
        return Waypoints(tuple(pts))
    raise ScenarioError(f"unknown movement kind {kind!r}")


def _parse_fence(value: str) -> Geofence:
    kind, _, rest = value.partition(" ")
    try:
        mode = FenceMode[kind.upper()]
    except KeyError:
        raise ScenarioError(f"fence mode must be static or dynamic, got {kind!r}") from None
    vertices = []
    for chunk in rest.split(";"):
        lat, lon = _floats(chunk.split(), 2, "fence vertex")
        vertices.append(GeoPoint(lat, lon))
    return Geofence(mode, tuple(vertices))


def _parse_bool(value: str) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ScenarioError(f"expected a boolean, got {value!r}")


def _parse_publish(value: str, retain: bool) -> PublishSpec:
    parts = value.split(" ", 3)
    if len(parts) < 3:
        raise ScenarioError(f"publish needs TIME TOPIC QOS [PAYLOAD], got {value!r}")
    try:
        t, qos = float(parts[0]), int(parts[2])
    except ValueError:
        raise ScenarioError(f"bad publish line {value!r}") from None
    payload = parts[3].encode("utf-8") if len(parts) > 3 else b""
    return PublishSpec(t, parts[1], payload, qos, retain)


_GLOBALS = {
    "seed": int,
    "duration": float,
    "latency": float,
    "drop_probability": float,
    "fail_closed": _parse_bool,
    "retransmit_timeout": float,
    "keep_alive": int,
    "drain": float,
}


def parse_scenario(text: str) -> Scenario:
    settings: dict = {}
    clients: list[ClientSpec] = []
    current: dict | None = None

    def close_block() -> None:
        if current is not None:
            if current["movement"] is None:
                raise ScenarioError(f"client {current['client_id']!r} has no movement")
            clients.append(
                ClientSpec(
                    client_id=current["client_id"],
                    movement=current["movement"],
                    subscriptions=tuple(current["subscriptions"]),
                    fence=current["fence"],
                    publish_schedule=tuple(current["publishes"]),
                    share_location=current["share_location"],
                )
            )

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if line.startswith("["):
                if not line.endswith("]") or not line[1:-1].startswith("client "):
                    raise ScenarioError(f"expected [client <id>], got {line!r}")
                close_block()
                current = {
                    "client_id": line[len("[client "):-1].strip(),
                    "movement": None,
                    "subscriptions": [],
                    "fence": None,
                    "publishes": [],
                    "share_location": True,
                }
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep:
                raise ScenarioError("expected key = value")
            if not key.startswith("publish"):
                # trailing comments need leading whitespace: "city/#" is a filter
                value = _COMMENT.sub("", value)
            if current is None:
                if key not in _GLOBALS:
                    raise ScenarioError(f"unknown setting {key!r}")
                settings[key] = _GLOBALS[key](value)
            elif key == "movement":
                current["movement"] = _parse_movement(value)
            elif key == "share_location":
                current["share_location"] = _parse_bool(value)
            elif key == "subscribe":
                f, _, q = value.rpartition(" ")
                current["subscriptions"].append((f.strip(), int(q)))
            elif key == "fence":
                current["fence"] = _parse_fence(value)
            elif key in ("publish", "publish_retained"):
                current["publishes"].append(_parse_publish(value, key == "publish_retained"))
            else:
                raise ScenarioError(f"unknown client setting {key!r}")
        except (ScenarioError, ValueError) as exc:
            raise ScenarioError(f"line {lineno}: {exc}") from None
    close_block()
    if "seed" not in settings or "duration" not in settings:
        raise ScenarioError("scenario needs seed and duration")
    scenario = Scenario(clients=tuple(clients), **settings)
    validate_scenario(scenario)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def _fmt_point(p: GeoPoint) -> str:
    return f"{p.latitude!r} {p.longitude!r}"


def dump_scenario(s: Scenario) -> str:
    out = [
        f"seed = {s.seed}",
        f"duration = {s.duration!r}",
        f"latency = {s.latency!r}",
        f"drop_probability = {s.drop_probability!r}",
        f"fail_closed = {str(s.fail_closed).lower()}",
        f"retransmit_timeout = {s.retransmit_timeout!r}",
        f"keep_alive = {s.keep_alive}",
        f"drain = {s.drain!r}",
    ]
    for c in s.clients:
        out += ["", f"[client {c.client_id}]", f"share_location = {str(c.share_location).lower()}"]
        m = c.movement
        if isinstance(m, Fixed):
            out.append(f"movement = fixed {_fmt_point(m.point)}")
        elif isinstance(m, RandomWalk):
            out.append(f"movement = walk {_fmt_point(m.start)} {m.step_degrees!r}")
        else:
            pts = " ; ".join(f"{t!r} {_fmt_point(p)}" for t, p in m.points)
            out.append(f"movement = waypoints {pts}")
        for f, q in c.subscriptions:
            out.append(f"subscribe = {f} {q}")
        if c.fence is not None:
            verts = " ; ".join(_fmt_point(v) for v in c.fence.vertices)
            out.append(f"fence = {c.fence.mode.name.lower()} {verts}")
        for p in c.publish_schedule:
            key = "publish_retained" if p.retain else "publish"
            payload = p.payload.decode("utf-8")
            out.append(f"{key} = {p.time!r} {p.topic} {p.qos} {payload}".rstrip())
    return "\n".join(out) + "\n"


# -- random generation ---------------------------------------------------------------

TOPICS = ("city/traffic", "city/weather", "city/north/alerts", "city/south/alerts", "city/parking")
FILTERS = ("city/#", "city/+", "city/traffic", "city/weather", "city/+/alerts", "city/north/#", "#")


def star_polygon(
    rng: random.Random, center: GeoPoint, r_min: float, r_max: float, n: int
) -> tuple[GeoPoint, ...]:
    """Simple polygon: vertices at sorted random angles with random radii."""
    while True:
        angles = sorted(rng.uniform(0.0, 2 * math.pi) for _ in range(n))
        gaps = [b - a for a, b in zip(angles, angles[1:] + [angles[0] + 2 * math.pi])]
        # a gap of pi or more would let the polygon miss its own centre
        if max(gaps) < math.pi * 0.9 and min(gaps) > 1e-3:
            break
    return tuple(
        GeoPoint(
            center.latitude + r * math.sin(a),
            center.longitude + r * math.cos(a),
        )
        for a, r in ((a, rng.uniform(r_min, r_max)) for a in angles)
    )


@dataclass
class GeneratorSettings:
    clients: int = 50
    publishes: int = 500
    static_fences: int = 10
    dynamic_fences: int = 5
    duration: float = 100.0
    center: GeoPoint = field(default_factory=lambda: GeoPoint(49.8483, -99.9501))
    spread: float = 0.05
    step: float = 0.002
    non_sharing: int = 3
    fixed: int = 5


def random_scenario(seed: int, settings: GeneratorSettings | None = None, **overrides) -> Scenario:
    """A reproducible city-scale scenario of moving clients, topics and fences."""
    cfg = dataclasses.replace(settings or GeneratorSettings(), **overrides)
    if cfg.static_fences + cfg.dynamic_fences > cfg.clients:
        raise ScenarioError("more fences than clients")
    rng = random.Random(seed)
    c0 = cfg.center

    def spot() -> GeoPoint:
        return GeoPoint(
            c0.latitude + rng.uniform(-cfg.spread, cfg.spread),
            c0.longitude + rng.uniform(-cfg.spread, cfg.spread),
        )

    ids = [f"c{i:03d}" for i in range(cfg.clients)]
    fence_owners = rng.sample(range(cfg.clients), cfg.static_fences + cfg.dynamic_fences)
    fences: dict[int, Geofence] = {}
    for k, idx in enumerate(fence_owners):
        n = rng.randint(3, 12)
        if k < cfg.static_fences:
            verts = star_polygon(rng, spot(), cfg.spread * 0.2, cfg.spread * 0.8, n)
            fences[idx] = Geofence(FenceMode.STATIC, verts)
        else:
            verts = star_polygon(rng, GeoPoint(0.0, 0.0), cfg.spread * 0.1, cfg.spread * 0.5, n)
            fences[idx] = Geofence(FenceMode.DYNAMIC, verts)

    non_sharing = set(rng.sample(range(cfg.clients), cfg.non_sharing))
    fixed = set(rng.sample(range(cfg.clients), cfg.fixed))

    schedules: list[list[PublishSpec]] = [[] for _ in ids]
    for n in range(cfg.publishes):
        who = rng.randrange(cfg.clients)
        t = round(rng.uniform(SETUP_END, cfg.duration - 1e-6), 3)
        if t >= cfg.duration:
            t = SETUP_END
        schedules[who].append(
            PublishSpec(t, rng.choice(TOPICS), f"msg-{n}".encode(), rng.randint(0, 2))
        )

    clients = []
    for i, cid in enumerate(ids):
        start = spot()
        movement: Movement = Fixed(start) if i in fixed else RandomWalk(start, cfg.step)
        subs = tuple((f, rng.randint(0, 2)) for f in rng.sample(FILTERS, rng.randint(1, 2)))
        clients.append(
            ClientSpec(
                cid,
                movement,
                subs,
                fences.get(i),
                tuple(sorted(schedules[i], key=lambda p: p.time)),
                share_location=i not in non_sharing,
            )
        )
    scenario = Scenario(seed=seed, duration=cfg.duration, clients=tuple(clients))
    validate_scenario(scenario)
    return scenario
