"""Polygon geofences and planar point-in-polygon testing.

Latitude/longitude are treated as plane coordinates (x = longitude,
y = latitude).  Fences crossing the antimeridian or a pole are not
supported; their results are undefined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import (
    DegenerateEdge,
    NoAnchor,
    NonFiniteVertex,
    TooFewVertices,
    VertexOutOfRange,
)

EDGE_EPSILON = 1e-12


@dataclass(frozen=True, slots=True)
class GeoPoint:
    latitude: float
    longitude: float

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.latitude) and math.isfinite(self.longitude)

    @property
    def in_range(self) -> bool:
        return -90.0 <= self.latitude <= 90.0 and -180.0 <= self.longitude <= 180.0


class FenceMode(Enum):
    STATIC = 0
    DYNAMIC = 1


@dataclass(frozen=True, slots=True)
class Geofence:
    """A closed polygon; DYNAMIC vertices are offsets from the owner's location."""

    mode: FenceMode
    vertices: tuple[GeoPoint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(_as_point(v) for v in self.vertices))

    @classmethod
    def static(cls, points: Iterable) -> Geofence:
        return cls(FenceMode.STATIC, tuple(points))

    @classmethod
    def dynamic(cls, offsets: Iterable) -> Geofence:
        return cls(FenceMode.DYNAMIC, tuple(offsets))


def _as_point(v) -> GeoPoint:
    if isinstance(v, GeoPoint):
        return v
    lat, lon = v
    return GeoPoint(float(lat), float(lon))


def validate_polygon(vertices: Sequence[GeoPoint]) -> None:
    if len(vertices) < 3:
        raise TooFewVertices(f"a polygon needs at least 3 vertices, got {len(vertices)}")
    for v in vertices:
        if not v.is_finite:
            raise NonFiniteVertex(f"non-finite vertex {v}")
    n = len(vertices)
    for i in range(n):
        if vertices[i] == vertices[(i + 1) % n]:
            raise DegenerateEdge(f"vertices {i} and {(i + 1) % n} coincide")


def validate_fence(fence: Geofence) -> None:
    """Raise a :class:`~mqttg.errors.GeofenceError` subclass if *fence* is unusable."""
    validate_polygon(fence.vertices)
    if fence.mode is FenceMode.STATIC:
        for v in fence.vertices:
            if not v.in_range:
                raise VertexOutOfRange(f"vertex {v} outside latitude/longitude range")


def resolve_fence(fence: Geofence, anchor: GeoPoint | None = None) -> list[GeoPoint]:
    """Absolute polygon for *fence*; DYNAMIC fences are translated to *anchor*."""
    if fence.mode is FenceMode.STATIC:
        return list(fence.vertices)
    if anchor is None:
        raise NoAnchor("dynamic fence has no anchor location")
    return [
        GeoPoint(anchor.latitude + v.latitude, anchor.longitude + v.longitude)
        for v in fence.vertices
    ]


def _on_segment(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> bool:
    dx, dy = bx - ax, by - ay
    length2 = dx * dx + dy * dy
    t = ((px - ax) * dx + (py - ay) * dy) / length2 if length2 else 0.0
    t = min(1.0, max(0.0, t))
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(px - cx, py - cy) <= EDGE_EPSILON


def point_in_polygon(p: GeoPoint, poly: Sequence[GeoPoint]) -> bool:
    """Even-odd containment; points on (or within 1e-12 deg of) an edge count as inside."""
    validate_polygon(poly)
    x, y = p.longitude, p.latitude
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        if _on_segment(x, y, a.longitude, a.latitude, b.longitude, b.latitude):
            return True

    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = poly[i].longitude, poly[i].latitude
        xj, yj = poly[j].longitude, poly[j].latitude
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def fence_contains(fence: Geofence, point: GeoPoint, anchor: GeoPoint | None = None) -> bool:
    return point_in_polygon(point, resolve_fence(fence, anchor))
