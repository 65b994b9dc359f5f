"""Broker settings, loadable from a ``key = value`` text file."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BrokerConfig:
    host: str = "0.0.0.0"
    port: int = 1883
    # 0 disables the cap; otherwise clients asking for more (or for none) get this
    max_keep_alive: int = 0
    retransmit_timeout: float = 5.0
    fence_fail_closed: bool = False
    strict: bool = False
    max_qos: int = 2

    def with_overrides(self, **overrides) -> BrokerConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep:
        raise ConfigError(f"listen address must be host:port, got {value!r}")
    try:
        port_no = int(port)
    except ValueError:
        raise ConfigError(f"bad port in {value!r}") from None
    if not 0 <= port_no <= 65535:
        raise ConfigError(f"port out of range in {value!r}")
    return host.strip("[]") or "0.0.0.0", port_no


def _parse_bool(key: str, value: str) -> bool:
    v = value.lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def parse_config(text: str, base: BrokerConfig | None = None) -> BrokerConfig:
    """Parse ``key = value`` lines.  ``#`` starts a comment."""
    known = {f.name for f in fields(BrokerConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        try:
            if key == "listen":
                values["host"], values["port"] = parse_listen(value)
            elif key in ("fence_fail_closed", "strict"):
                values[key] = _parse_bool(key, value)
            elif key in ("port", "max_keep_alive", "max_qos"):
                values[key] = int(value)
            elif key == "retransmit_timeout":
                values[key] = float(value)
            elif key in known:
                values[key] = value
            else:
                raise ConfigError(f"unknown setting {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    cfg = replace(base or BrokerConfig(), **values)
    if cfg.retransmit_timeout <= 0:
        raise ConfigError("retransmit_timeout must be positive")
    if cfg.max_qos not in (0, 1, 2):
        raise ConfigError("max_qos must be 0, 1 or 2")
    return cfg


def load_config(path: str | Path) -> BrokerConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
