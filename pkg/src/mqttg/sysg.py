"""The ``$SYSg`` namespace: geofence submission from client to broker.

Payload of ``$SYSg/geofence/set``, all multi-byte fields little-endian::

    version u8 (=1) | mode u8 (0 static, 1 dynamic) | count u16 |
    count x (latitude f64 | longitude f64)

``$SYSg/geofence/clear`` carries an empty payload.
"""

from __future__ import annotations

import struct

from .errors import GeofenceError, SysgPayloadError
from .geometry import FenceMode, Geofence, GeoPoint, validate_fence

SYSG_PREFIX = "$SYSg/"
FENCE_SET_TOPIC = "$SYSg/geofence/set"
FENCE_CLEAR_TOPIC = "$SYSg/geofence/clear"
FENCE_FORMAT_VERSION = 1

_HEAD = struct.Struct("<BBH")
_VERTEX = struct.Struct("<dd")


def is_sysg_topic(topic: str) -> bool:
    return topic.startswith(SYSG_PREFIX)


def encode_fence(fence: Geofence) -> bytes:
    validate_fence(fence)
    out = bytearray(_HEAD.pack(FENCE_FORMAT_VERSION, fence.mode.value, len(fence.vertices)))
    for v in fence.vertices:
        out += _VERTEX.pack(v.latitude, v.longitude)
    return bytes(out)


def decode_fence(payload: bytes) -> Geofence:
    """Parse and validate a fence payload.

    Raises :class:`SysgPayloadError` for framing problems and the geometry
    errors (``TooFewVertices`` and friends) for unusable polygons.
    """
    if len(payload) < _HEAD.size:
        raise SysgPayloadError(f"fence payload too short ({len(payload)} bytes)")
    version, mode, count = _HEAD.unpack_from(payload)
    if version != FENCE_FORMAT_VERSION:
        raise SysgPayloadError(f"unsupported fence format version {version}")
    try:
        fence_mode = FenceMode(mode)
    except ValueError:
        raise SysgPayloadError(f"unknown fence mode {mode}") from None
    expected = _HEAD.size + count * _VERTEX.size
    if len(payload) != expected:
        raise SysgPayloadError(
            f"fence payload is {len(payload)} bytes, {count} vertices need {expected}"
        )
    vertices = tuple(
        GeoPoint(*_VERTEX.unpack_from(payload, _HEAD.size + i * _VERTEX.size))
        for i in range(count)
    )
    fence = Geofence(fence_mode, vertices)
    validate_fence(fence)
    return fence


__all__ = [
    "SYSG_PREFIX",
    "FENCE_SET_TOPIC",
    "FENCE_CLEAR_TOPIC",
    "is_sysg_topic",
    "encode_fence",
    "decode_fence",
    "GeofenceError",
]
