"""MQTTg: MQTT 3.1.1 with geolocation in the control packets and fence-filtered routing."""

from .codec import (
    GeolocationBlock,
    Packet,
    PacketType,
    decode_packet,
    encode_packet,
)
from .geometry import FenceMode, Geofence, GeoPoint, point_in_polygon

__version__ = "0.1.0"

__all__ = [
    "FenceMode",
    "GeoPoint",
    "Geofence",
    "GeolocationBlock",
    "Packet",
    "PacketType",
    "decode_packet",
    "encode_packet",
    "point_in_polygon",
]
