"""
Reference implementations the tests compare the package against.

None of these import from ``mqttg``.  They are written from the wire rules
directly and favour obviousness over speed.
"""

from __future__ import annotations

import math
from fractions import Fraction


# -- variable-byte integer --------------------------------------------------------

def mbi_oracle(value: int) -> bytes:
    """Brute force: find the shortest length, then emit base-128 digits LSB first."""
    for length in range(1, 5):
        if value < 128 ** length:
            break
    else:
        raise ValueError("too large for four bytes")
    digits = [(value // 128 ** i) % 128 for i in range(length)]
    return bytes(d | 0x80 for d in digits[:-1]) + bytes([digits[-1]])


# -- IEEE-754 little endian without struct ------------------------------------------

def _ieee_bits(x: float, exp_bits: int, frac_bits: int) -> int:
    bias = 2 ** (exp_bits - 1) - 1
    sign = 1 if math.copysign(1.0, x) < 0 else 0
    v = Fraction(abs(x))
    if v == 0:
        return sign << (exp_bits + frac_bits)
    e = math.floor(math.log2(abs(x)))
    # log2 can be off by one near powers of two
    while Fraction(2) ** e > v:
        e -= 1
    while Fraction(2) ** (e + 1) <= v:
        e += 1
    if e < 1 - bias:
        raise ValueError("subnormals are out of scope for the oracle")
    scaled = (v / Fraction(2) ** e - 1) * 2 ** frac_bits
    frac = round(scaled)  # Fraction rounds half to even
    if frac == 2 ** frac_bits:
        frac, e = 0, e + 1
    if e + bias >= 2 ** exp_bits - 1:
        raise ValueError("overflow")
    return (sign << (exp_bits + frac_bits)) | ((e + bias) << frac_bits) | frac


def f64_le(x: float) -> bytes:
    return _ieee_bits(x, 11, 52).to_bytes(8, "little")


def f32_le(x: float) -> bytes:
    return _ieee_bits(x, 8, 23).to_bytes(4, "little")


def geo_block_oracle(version: int, lat: float, lon: float, elev: float) -> bytes:
    return bytes([version]) + f64_le(lat) + f64_le(lon) + f32_le(elev)


# -- MQTT 3.1.1 framing -------------------------------------------------------------

def utf8_oracle(s: str) -> bytes:
    raw = s.encode("utf-8")
    return bytes([len(raw) >> 8, len(raw) & 0xFF]) + raw


def u16(n: int) -> bytes:
    return bytes([n >> 8, n & 0xFF])


def frame(ptype: int, flags: int, body: bytes) -> bytes:
    return bytes([(ptype << 4) | flags]) + mbi_oracle(len(body)) + body


def connect_311(
    client_id: str,
    keep_alive: int = 60,
    clean: bool = True,
    will: tuple[str, bytes, int, bool] | None = None,
    username: str | None = None,
    password: bytes | None = None,
) -> bytes:
    flags = 0
    if clean:
        flags |= 0x02
    payload = utf8_oracle(client_id)
    if will is not None:
        topic, msg, qos, retain = will
        flags |= 0x04 | (qos << 3) | (0x20 if retain else 0)
        payload += utf8_oracle(topic) + u16(len(msg)) + msg
    if username is not None:
        flags |= 0x80
        payload += utf8_oracle(username)
    if password is not None:
        flags |= 0x40
        payload += u16(len(password)) + password
    vh = utf8_oracle("MQTT") + bytes([4, flags]) + u16(keep_alive)
    return frame(1, 0, vh + payload)


def publish_311(
    topic: str, payload: bytes, qos: int = 0, retain: bool = False, dup: bool = False, pid: int | None = None
) -> bytes:
    flags = (0x08 if dup else 0) | (qos << 1) | (1 if retain else 0)
    body = utf8_oracle(topic) + (u16(pid) if qos else b"") + payload
    return frame(3, flags, body)


def subscribe_311(pid: int, subs: list[tuple[str, int]]) -> bytes:
    body = u16(pid) + b"".join(utf8_oracle(f) + bytes([q]) for f, q in subs)
    return frame(8, 0x02, body)


def unsubscribe_311(pid: int, filters: list[str]) -> bytes:
    return frame(10, 0x02, u16(pid) + b"".join(utf8_oracle(f) for f in filters))


# -- geometry -------------------------------------------------------------------------

def angle_sum_inside(px: float, py: float, poly: list[tuple[float, float]]) -> bool:
    """Inside when the edges sweep a full turn around the point."""
    total = 0.0
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i][0] - px, poly[i][1] - py
        bx, by = poly[(i + 1) % n][0] - px, poly[(i + 1) % n][1] - py
        total += math.atan2(ax * by - ay * bx, ax * bx + ay * by)
    return abs(total) > math.pi


def segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    L = dx * dx + dy * dy
    t = 0.0 if L == 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / L))
    return math.hypot(px - ax - t * dx, py - ay - t * dy)


def min_edge_distance(px: float, py: float, poly: list[tuple[float, float]]) -> float:
    n = len(poly)
    return min(segment_distance(px, py, *poly[i], *poly[(i + 1) % n]) for i in range(n))


def random_simple_polygon(rng, n: int, cx: float = 0.0, cy: float = 0.0, scale: float = 1.0):
    """Star-shaped about (cx, cy): sorted distinct angles with random radii."""
    angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
    while len(set(angles)) < n or any(b - a < 1e-3 for a, b in zip(angles, angles[1:])):
        angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
    pts = []
    for a in angles:
        r = scale * rng.uniform(0.2, 1.0)
        pts.append((cx + r * math.cos(a), cy + r * math.sin(a)))
    return pts
