import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mqttg.errors import (
    DegenerateEdge,
    GeofenceError,
    NoAnchor,
    NonFiniteVertex,
    TooFewVertices,
    VertexOutOfRange,
)
from mqttg.geometry import (
    EDGE_EPSILON,
    FenceMode,
    Geofence,
    GeoPoint,
    fence_contains,
    point_in_polygon,
    resolve_fence,
    validate_fence,
    validate_polygon,
)

from oracles import angle_sum_inside, min_edge_distance, random_simple_polygon

SQUARE = [GeoPoint(0, 0), GeoPoint(0, 10), GeoPoint(10, 10), GeoPoint(10, 0)]


def test_interior_and_exterior():
    assert point_in_polygon(GeoPoint(5, 5), SQUARE)
    assert not point_in_polygon(GeoPoint(15, 5), SQUARE)
    assert not point_in_polygon(GeoPoint(5, -0.001), SQUARE)


@pytest.mark.parametrize("p", [GeoPoint(0, 5), GeoPoint(10, 10), GeoPoint(5, 10), GeoPoint(0, 0)])
def test_boundary_counts_as_inside(p):
    assert point_in_polygon(p, SQUARE)


def test_edge_tolerance():
    assert point_in_polygon(GeoPoint(5, 10 + EDGE_EPSILON / 2), SQUARE)
    assert not point_in_polygon(GeoPoint(5, 10 + 1e-9), SQUARE)


def test_concave_polygon():
    # a "U": the notch between the arms is outside
    u = [GeoPoint(*p) for p in [(0, 0), (0, 3), (3, 3), (3, 2), (1, 2), (1, 1), (3, 1), (3, 0)]]
    assert point_in_polygon(GeoPoint(0.5, 1.5), u)
    assert not point_in_polygon(GeoPoint(2, 1.5), u)
    assert point_in_polygon(GeoPoint(2, 2.5), u)


def test_ray_through_vertex():
    diamond = [GeoPoint(0, 1), GeoPoint(1, 2), GeoPoint(2, 1), GeoPoint(1, 0)]
    assert point_in_polygon(GeoPoint(1, 0.5), diamond)
    assert not point_in_polygon(GeoPoint(1, -0.5), diamond)
    assert not point_in_polygon(GeoPoint(2, 3), diamond)


def test_validation_errors():
    with pytest.raises(TooFewVertices):
        validate_polygon(SQUARE[:2])
    with pytest.raises(NonFiniteVertex):
        validate_polygon([GeoPoint(0, 0), GeoPoint(math.nan, 1), GeoPoint(1, 1)])
    with pytest.raises(DegenerateEdge):
        validate_polygon([GeoPoint(0, 0), GeoPoint(0, 0), GeoPoint(1, 1)])
    with pytest.raises(VertexOutOfRange):
        validate_fence(Geofence.static([(0, 0), (95, 0), (0, 1)]))
    validate_fence(Geofence.static([(p.latitude, p.longitude) for p in SQUARE]))


def test_errors_share_a_base():
    assert issubclass(TooFewVertices, GeofenceError)
    assert issubclass(NoAnchor, GeofenceError)


def test_dynamic_offsets_may_exceed_range_checks():
    validate_fence(Geofence.dynamic([(-1, -1), (-1, 1), (1, 1), (1, -1)]))


def test_resolve_static_ignores_anchor():
    fence = Geofence(FenceMode.STATIC, tuple(SQUARE))
    assert resolve_fence(fence, GeoPoint(50, -100)) == SQUARE


def test_resolve_dynamic():
    fence = Geofence.dynamic([(-1, -1), (-1, 1), (1, 1), (1, -1)])
    assert resolve_fence(fence, GeoPoint(50, -100)) == [
        GeoPoint(49, -101), GeoPoint(49, -99), GeoPoint(51, -99), GeoPoint(51, -101)
    ]
    assert fence_contains(fence, GeoPoint(50.5, -100.5), GeoPoint(50, -100))
    assert not fence_contains(fence, GeoPoint(52, -100), GeoPoint(50, -100))


def test_resolve_dynamic_without_anchor():
    with pytest.raises(NoAnchor):
        resolve_fence(Geofence.dynamic([(-1, -1), (-1, 1), (1, 1)]))


def test_tuples_are_coerced():
    f = Geofence.static([(1, 2), (3, 4), (5, 0)])
    assert f.vertices[0] == GeoPoint(1.0, 2.0)


def test_random_polygons_agree_with_angle_sum():
    rng = random.Random(77)
    checked = 0
    for _ in range(500):
        poly = random_simple_polygon(rng, rng.randint(3, 12), scale=2.0)
        verts = [GeoPoint(y, x) for x, y in poly]
        for _ in range(4):
            x, y = rng.uniform(-2.2, 2.2), rng.uniform(-2.2, 2.2)
            if min_edge_distance(x, y, poly) < 1e-9:
                continue
            assert point_in_polygon(GeoPoint(y, x), verts) == angle_sum_inside(x, y, poly)
            checked += 1
    assert checked > 1900


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.01, 100), st.floats(0.01, 100))
def test_rectangle_property(x0, y0, w, h):
    rect = [GeoPoint(y0, x0), GeoPoint(y0 + h, x0), GeoPoint(y0 + h, x0 + w), GeoPoint(y0, x0 + w)]
    assert point_in_polygon(GeoPoint(y0 + h / 2, x0 + w / 2), rect)
    assert not point_in_polygon(GeoPoint(y0 + 2 * h, x0 + w / 2), rect)
