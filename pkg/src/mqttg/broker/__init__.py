from .config import BrokerConfig, ConfigError, load_config, parse_config
from .core import (
    Broker,
    ClientSession,
    Close,
    Delivery,
    FenceChanged,
    LastLocation,
    RetainedMessage,
    Send,
    Verdict,
    Warn,
    update_last_location,
)

__all__ = [
    "Broker",
    "BrokerConfig",
    "ClientSession",
    "Close",
    "ConfigError",
    "Delivery",
    "FenceChanged",
    "LastLocation",
    "RetainedMessage",
    "Send",
    "Verdict",
    "Warn",
    "load_config",
    "parse_config",
    "update_last_location",
]
