"""Location providers injected into a client."""

from __future__ import annotations

import bisect
import time
from typing import Callable, Iterable, Protocol, Sequence

from ..codec import GeolocationBlock


class LocationProvider(Protocol):
    def current(self) -> GeolocationBlock | None: ...


class NoLocation:
    def current(self) -> GeolocationBlock | None:
        return None


class FixedLocation:
    def __init__(self, latitude: float, longitude: float, elevation: float = 0.0) -> None:
        self.block = GeolocationBlock(latitude, longitude, elevation)

    def current(self) -> GeolocationBlock:
        return self.block


class ScriptedPath:
    """Replays ``(time, block)`` samples; the latest sample not after ``clock()`` wins.

    Before the first sample there is no fix.
    """

    def __init__(
        self,
        samples: Iterable[tuple[float, GeolocationBlock]],
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        pairs = sorted(samples, key=lambda s: s[0])
        self._times: Sequence[float] = [t for t, _ in pairs]
        self._blocks: Sequence[GeolocationBlock] = [b for _, b in pairs]
        self.clock = clock

    def current(self) -> GeolocationBlock | None:
        i = bisect.bisect_right(self._times, self.clock())
        return self._blocks[i - 1] if i else None
