from .engine import (
    ClientConfig,
    ClientEngine,
    Connected,
    ConnectionLost,
    ConnectionRefused,
    MessageReceived,
    PublishComplete,
    SubscribeComplete,
    UnsubscribeComplete,
)
from .providers import FixedLocation, LocationProvider, NoLocation, ScriptedPath
from .sync import MQTTgClient

__all__ = [
    "ClientConfig",
    "ClientEngine",
    "Connected",
    "ConnectionLost",
    "ConnectionRefused",
    "FixedLocation",
    "LocationProvider",
    "MQTTgClient",
    "MessageReceived",
    "NoLocation",
    "PublishComplete",
    "ScriptedPath",
    "SubscribeComplete",
    "UnsubscribeComplete",
]
