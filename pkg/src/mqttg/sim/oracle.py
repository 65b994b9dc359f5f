"""
Expected routing decisions, recomputed from the scenario alone.

Nothing here touches the broker: topic matching is a regular-expression
translation, containment uses the winding number, and the fence predicate is
re-derived.  Only the movement model is shared with the simulation, because
it defines where clients are rather than how messages are routed.

Winding-number and even-odd containment agree for simple polygons, which is
what the scenario generator produces.  Points within ``BOUNDARY_MARGIN`` of a
fence edge are reported through ``margin`` so callers can exclude them.
"""

from __future__ import annotations

import math
import re
from functools import lru_cache
from typing import NamedTuple, Sequence

from .harness import build_trajectories
from .report import RouteRecord
from .scenario import Scenario, validate_scenario

BOUNDARY_MARGIN = 1e-9

FORWARDED = "FORWARDED"
BY_SUBSCRIBER = "SUPPRESSED_BY_SUBSCRIBER_FENCE"
BY_PUBLISHER = "SUPPRESSED_BY_PUBLISHER_FENCE"

Point = tuple[float, float]  # (x = longitude, y = latitude)


class OracleRecord(NamedTuple):
    record: RouteRecord
    margin: float  # distance of the tested points to the nearest fence edge; inf if none


@lru_cache(maxsize=None)
def _filter_regex(topic_filter: str) -> re.Pattern:
    levels = topic_filter.split("/")
    parts: list[str] = []
    for i, level in enumerate(levels):
        if level == "#":
            # "a/#" also matches "a" itself
            if parts:
                return re.compile("".join(parts) + "(/.*)?")
            return re.compile(".*")
        if i:
            parts.append("/")
        parts.append("[^/]*" if level == "+" else re.escape(level))
    return re.compile("".join(parts))


def oracle_topic_matches(topic_filter: str, topic: str) -> bool:
    if topic.startswith("$") and topic_filter.split("/")[0] in ("+", "#"):
        return False
    return _filter_regex(topic_filter).fullmatch(topic) is not None


def winding_number(p: Point, poly: Sequence[Point]) -> int:
    """Winding number of the closed polygon around *p*."""
    x, y = p
    wn = 0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = (x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)
        if y0 <= y:
            if y1 > y and cross > 0:
                wn += 1
        elif y1 <= y and cross < 0:
            wn -= 1
    return wn


def winding_contains(p: Point, poly: Sequence[Point]) -> bool:
    return winding_number(p, poly) != 0


def edge_distance(p: Point, poly: Sequence[Point]) -> float:
    """Distance from *p* to the nearest edge of the closed polygon."""
    x, y = p
    best = math.inf
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        dx, dy = bx - ax, by - ay
        denom = dx * dx + dy * dy
        t = 0.0 if denom == 0 else max(0.0, min(1.0, ((x - ax) * dx + (y - ay) * dy) / denom))
        best = min(best, math.hypot(x - (ax + t * dx), y - (ay + t * dy)))
    return best


def oracle_expected_deliveries(
    s: Scenario, *, with_margins: bool = False
) -> list[RouteRecord] | list[OracleRecord]:
    """Every (publisher, topic, subscriber, qos, verdict) the broker should log, in order."""
    validate_scenario(s)
    trajectories = build_trajectories(s)
    clients = list(s.clients)

    def location(idx: int, t: float) -> Point | None:
        c = clients[idx]
        if not c.share_location:
            return None
        pos = trajectories[c.client_id].at(t)
        return (pos.longitude, pos.latitude)

    def polygon(idx: int, t: float) -> list[Point] | None:
        fence = clients[idx].fence
        verts = [(v.longitude, v.latitude) for v in fence.vertices]
        if fence.mode.name == "STATIC":
            return verts
        anchor = location(idx, t)
        if anchor is None:
            return None
        return [(anchor[0] + dx, anchor[1] + dy) for dx, dy in verts]

    unknown_passes = not s.fail_closed

    def check(owner: int, point: Point | None, t: float) -> tuple[bool, float]:
        if clients[owner].fence is None:
            return True, math.inf
        if point is None:
            return unknown_passes, math.inf
        poly = polygon(owner, t)
        if poly is None:
            return unknown_passes, math.inf
        return winding_contains(point, poly), edge_distance(point, poly)

    publishes = sorted(
        (p.time, ci, j, p)
        for ci, c in enumerate(clients)
        for j, p in enumerate(c.publish_schedule)
    )
    out: list = []
    for t, pi, _, p in publishes:
        origin = location(pi, t)
        for si, sub in enumerate(clients):
            if si == pi:
                continue
            granted = [q for f, q in sub.subscriptions if oracle_topic_matches(f, p.topic)]
            if not granted:
                continue
            qos = min(max(granted), p.qos)
            ok_sub, m1 = check(si, origin, t)
            margin = m1
            if not ok_sub:
                verdict = BY_SUBSCRIBER
            else:
                ok_pub, m2 = check(pi, location(si, t), t)
                margin = min(m1, m2)
                verdict = FORWARDED if ok_pub else BY_PUBLISHER
            rec = RouteRecord(clients[pi].client_id, p.topic, sub.client_id, qos, verdict)
            out.append(OracleRecord(rec, margin) if with_margins else rec)
    return out


def compare_logs(
    actual: Sequence[RouteRecord], expected: Sequence[OracleRecord]
) -> list[str]:
    """Differences between a simulated log and the oracle, ignoring boundary cases.

    A record within ``BOUNDARY_MARGIN`` of a fence edge may differ in verdict
    only; everything else must match exactly and in order.
    """
    problems = []
    if len(actual) != len(expected):
        problems.append(f"length differs: actual {len(actual)}, expected {len(expected)}")
    for i, (a, e) in enumerate(zip(actual, expected)):
        if a == e.record:
            continue
        if e.margin < BOUNDARY_MARGIN and a[:4] == e.record[:4]:
            continue
        problems.append(f"#{i}: actual {a} expected {e.record}")
    return problems
