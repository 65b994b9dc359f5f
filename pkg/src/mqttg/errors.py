"""Exception hierarchy shared by every layer of the stack."""


class MQTTgError(Exception):
    pass


# -- codec ------------------------------------------------------------------

class EncodeError(MQTTgError):
    """A packet cannot be serialized because it violates a field invariant."""


class RangeError(EncodeError, ValueError):
    """A numeric or length field is outside its encodable range."""


class DecodeError(MQTTgError):
    """Base for every failure raised while parsing bytes off the wire."""


class Truncated(DecodeError):
    """The input ended before a complete field or packet was read."""


class MalformedLength(DecodeError):
    """The remaining-length variable byte integer exceeds four bytes."""


class UnknownPacketType(DecodeError):
    pass


class ProtocolError(DecodeError):
    pass


class InvalidGeolocation(DecodeError, EncodeError):
    """A geolocation block holds a non-finite or unrepresentable value.

    Raised from both directions, so it derives from both codec bases.
    """


# -- geometry ---------------------------------------------------------------

class GeofenceError(MQTTgError, ValueError):
    pass


class TooFewVertices(GeofenceError):
    pass


class NonFiniteVertex(GeofenceError):
    pass


class DegenerateEdge(GeofenceError):
    pass


class VertexOutOfRange(GeofenceError):
    pass


class NoAnchor(GeofenceError):
    pass


# -- topics / $SYSg -----------------------------------------------------------

class InvalidTopic(MQTTgError, ValueError):
    pass


class SysgPayloadError(MQTTgError, ValueError):
    pass


# -- client -------------------------------------------------------------------

class ClientError(MQTTgError):
    pass


class ConnectRefused(ClientError):
    def __init__(self, code: int) -> None:
        super().__init__(f"connection refused (return code {code})")
        self.code = code


class ClientTimeout(ClientError, TimeoutError):
    pass


class Aborted(ClientError):
    """The connection went away while an operation was in flight."""


class Busy(ClientError):
    """All 65535 packet identifiers are in flight."""


class NotConnected(ClientError):
    pass


class Disconnected(ClientError):
    pass


# -- simulation -----------------------------------------------------------------

class ScenarioError(MQTTgError, ValueError):
    pass
