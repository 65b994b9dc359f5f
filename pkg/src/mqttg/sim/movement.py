"""Client trajectories sampled once per simulated second.

A client's position is piecewise constant: during ``[k, k+1)`` it sits at
sample ``k``.  Both the simulation and the oracle read positions from here,
so they agree on where everyone was; routing itself is never shared.
"""

from __future__ import annotations

import math
import random

from ..geometry import GeoPoint
from .scenario import Fixed, Movement, RandomWalk, Waypoints


def _clamp(v: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, v))


class Trajectory:
    def __init__(self, movement: Movement, steps: int, seed: int, client_id: str) -> None:
        self.movement = movement
        self.samples: list[GeoPoint] = self._sample(movement, max(steps, 1), seed, client_id)

    @property
    def moves(self) -> bool:
        return not isinstance(self.movement, Fixed)

    def at(self, t: float) -> GeoPoint:
        k = min(max(int(math.floor(t)), 0), len(self.samples) - 1)
        return self.samples[k]

    @staticmethod
    def _sample(m: Movement, steps: int, seed: int, client_id: str) -> list[GeoPoint]:
        if isinstance(m, Fixed):
            return [m.point]
        if isinstance(m, RandomWalk):
            rng = random.Random(f"{seed}/walk/{client_id}")
            lat, lon = m.start.latitude, m.start.longitude
            out = [GeoPoint(lat, lon)]
            for _ in range(steps - 1):
                lat = _clamp(lat + rng.uniform(-m.step_degrees, m.step_degrees), -90.0, 90.0)
                lon = _clamp(lon + rng.uniform(-m.step_degrees, m.step_degrees), -180.0, 180.0)
                out.append(GeoPoint(lat, lon))
            return out
        if isinstance(m, Waypoints):
            return [_interpolate(m.points, float(k)) for k in range(steps)]
        raise TypeError(f"unknown movement {m!r}")


def _interpolate(points: tuple[tuple[float, GeoPoint], ...], t: float) -> GeoPoint:
    if t <= points[0][0]:
        return points[0][1]
    for (t0, p0), (t1, p1) in zip(points, points[1:]):
        if t <= t1:
            f = (t - t0) / (t1 - t0)
            return GeoPoint(
                p0.latitude + f * (p1.latitude - p0.latitude),
                p0.longitude + f * (p1.longitude - p0.longitude),
            )
    return points[-1][1]
