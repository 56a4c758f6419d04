"""Route description: speed-limit zones, stops and signalized intersections."""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

MPH = 0.44704

# A vehicle within this distance upstream of a stop counts as "at" it.
AT_STOP_EPS = 1e-6


class StopKind(str, Enum):
    STOP_SIGN = "StopSign"
    SIGNALIZED = "SignalizedStop"


class Phase(str, Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    RED = "Red"


PHASE_CODE = {Phase.GREEN: 0.0, Phase.YELLOW: 0.5, Phase.RED: 1.0}


class PhaseQuery(NamedTuple):
    distance_to_light: float
    phase_code: float


@dataclass(frozen=True)
class StopPoint:
    position: float
    kind: StopKind = StopKind.STOP_SIGN

    def __post_init__(self):
        if not np.isfinite(self.position) or self.position < 0:
            raise ValueError(f"stop position must be finite and >= 0, got {self.position}")
        object.__setattr__(self, "kind", StopKind(self.kind))


@dataclass(frozen=True)
class TrafficLight:
    position: float
    cycle: tuple[tuple[Phase, float], ...]
    cycle_offset: float = 0.0

    def __post_init__(self):
        cycle = tuple((Phase(p), float(d)) for p, d in self.cycle)
        if not cycle:
            raise ValueError("traffic light needs at least one phase")
        if any(d <= 0 for _, d in cycle):
            raise ValueError("phase durations must be positive")
        object.__setattr__(self, "cycle", cycle)

    @property
    def cycle_total(self) -> float:
        return sum(d for _, d in self.cycle)

    def phase_at(self, t: float) -> Phase:
        tau = (t - self.cycle_offset) % self.cycle_total
        if tau >= self.cycle_total:  # tiny negative arguments round up to the modulus
            tau = 0.0
        for phase, duration in self.cycle:
            if tau < duration:
                return phase
            tau -= duration
        return self.cycle[-1][0]


@dataclass(frozen=True)
class RouteMap:
    """Immutable straight-line route.

    ``limit_zones`` holds ``(start_position, speed_limit)`` pairs in m and m/s.
    A signalized stop must share its position with one of ``lights``.
    """

    total_length: float
    limit_zones: tuple[tuple[float, float], ...]
    stops: tuple[StopPoint, ...] = ()
    lights: tuple[TrafficLight, ...] = ()
    _zone_starts: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        zones = tuple((float(p), float(v)) for p, v in self.limit_zones)
        object.__setattr__(self, "limit_zones", zones)
        object.__setattr__(self, "stops", tuple(self.stops))
        object.__setattr__(self, "lights", tuple(self.lights))
        if not np.isfinite(self.total_length) or self.total_length < 0:
            raise ValueError("total_length must be finite and non-negative")
        if not zones or zones[0][0] != 0.0:
            raise ValueError("first speed-limit zone must start at 0")
        starts = [p for p, _ in zones]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("zone starts must be strictly increasing")
        if any(not (v > 0) for _, v in zones):
            raise ValueError("speed limits must be positive")
        for obj in (*self.stops, *self.lights):
            if not 0 <= obj.position <= self.total_length:
                raise ValueError(f"position {obj.position} outside route [0, {self.total_length}]")
        for group in (self.stops, self.lights):
            pos = [o.position for o in group]
            if pos != sorted(pos):
                raise ValueError("stops and lights must be ordered by position")
        for stop in self.stops:
            if stop.kind is StopKind.SIGNALIZED and self.light_index_at(stop.position) is None:
                raise ValueError(f"signalized stop at {stop.position} has no traffic light")
        object.__setattr__(self, "_zone_starts", starts)

    def light_index_at(self, position: float) -> int | None:
        for k, light in enumerate(self.lights):
            if abs(light.position - position) < 1e-6:
                return k
        return None

    @property
    def max_limit(self) -> float:
        return max(v for _, v in self.limit_zones)

    def _check_position(self, s: float) -> None:
        if not 0 <= s <= self.total_length:
            raise ValueError(f"position {s} outside route [0, {self.total_length}]")

    # ---- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "total_length": self.total_length,
            "zones": [{"start": p, "limit": v} for p, v in self.limit_zones],
            "stops": [{"position": s.position, "kind": s.kind.value} for s in self.stops],
            "lights": [
                {
                    "position": lt.position,
                    "offset": lt.cycle_offset,
                    "cycle": [{"phase": p.value, "duration": d} for p, d in lt.cycle],
                }
                for lt in self.lights
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> RouteMap:
        try:
            return cls(
                total_length=float(data["total_length"]),
                limit_zones=[(z["start"], z["limit"]) for z in data["zones"]],
                stops=[StopPoint(s["position"], StopKind(s.get("kind", "StopSign")))
                       for s in data.get("stops", [])],
                lights=[
                    TrafficLight(
                        lt["position"],
                        tuple((c["phase"], c["duration"]) for c in lt["cycle"]),
                        lt.get("offset", 0.0),
                    )
                    for lt in data.get("lights", [])
                ],
            )
        except KeyError as exc:
            raise ValueError(f"route file missing key {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> RouteMap:
        return cls.from_dict(json.loads(Path(path).read_text()))


def speed_limit_at(route: RouteMap, s: float) -> float:
    route._check_position(s)
    k = bisect.bisect_right(route._zone_starts, s) - 1
    return route.limit_zones[k][1]


def _stop_active(route: RouteMap, stop: StopPoint, t: float) -> bool:
    if stop.kind is StopKind.STOP_SIGN:
        return True
    light = route.lights[route.light_index_at(stop.position)]
    return light.phase_at(t) is not Phase.GREEN


def next_stop(route: RouteMap, s: float, t: float) -> tuple[float, StopKind] | None:
    """Nearest active stop at or downstream of ``s`` at time ``t``.

    Signalized stops only count while their light shows red or yellow.
    """
    route._check_position(s)
    for stop in route.stops:
        if stop.position >= s - AT_STOP_EPS and _stop_active(route, stop, t):
            return stop.position, stop.kind
    return None


def light_query(route: RouteMap, s: float, t: float) -> PhaseQuery:
    """Distance to and phase code of the next light.

    Without a downstream light the remaining route distance and the green
    code are returned so the feature stays bounded.
    """
    route._check_position(s)
    for light in route.lights:
        if light.position >= s:
            return PhaseQuery(light.position - s, PHASE_CODE[light.phase_at(t)])
    return PhaseQuery(route.total_length - s, 0.0)


def light_features(route: RouteMap, positions, times) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``light_query`` over a trajectory."""
    positions = np.minimum(np.asarray(positions, dtype=float), route.total_length)
    out_d = np.empty(len(positions))
    out_p = np.empty(len(positions))
    for n, (s, t) in enumerate(zip(positions, times)):
        out_d[n], out_p[n] = light_query(route, float(s), float(t))
    return out_d, out_p


def default_route() -> RouteMap:
    """A 5 mile route with five stop signs and 25-50 mph limit bands."""
    length = 8047.0
    zones = [
        (0.0, 25 * MPH),
        (800.0, 35 * MPH),
        (2100.0, 50 * MPH),
        (3900.0, 35 * MPH),
        (5000.0, 50 * MPH),
        (6900.0, 25 * MPH),
    ]
    stops = [StopPoint(round(length * k / 6, 1)) for k in range(1, 6)]
    return RouteMap(length, zones, stops)
