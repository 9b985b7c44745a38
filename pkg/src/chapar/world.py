"""Ground-truth environment: arena, spots, obstacles, stations and motion geometry."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from chapar.protocol import PrivateMessage

CM2_PER_WORKER = 300.0
SENSOR_RANGE = 0.05  # meters
ROBOT_RADIUS = 0.035  # e-puck body, used for robot-robot ray tests
WANDER_JITTER = math.radians(15)


class ConfigError(ValueError):
    """Invalid environment or simulation configuration."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def capacity_of(area_cm2: float) -> int:
    """Workers needed for desirable coverage: one per 300 cm², rounded up."""
    if area_cm2 <= 0:
        raise ValueError(f"area must be positive, got {area_cm2}")
    # side-to-cm² conversion leaves float noise (30.000000000000004² cm²)
    return math.ceil(area_cm2 / CM2_PER_WORKER - 1e-9)


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x + self.w and self.y <= py <= self.y + self.h

    def overlaps(self, other: Rect) -> bool:
        return not (self.x + self.w <= other.x or other.x + other.w <= self.x
                    or self.y + self.h <= other.y or other.y + other.h <= self.y)

    def hits_segment(self, x0: float, y0: float, x1: float, y1: float) -> bool:
        # Liang-Barsky clip of the segment against the closed rectangle
        dx, dy = x1 - x0, y1 - y0
        t0, t1 = 0.0, 1.0
        for p, q in ((-dx, x0 - self.x), (dx, self.x + self.w - x0),
                     (-dy, y0 - self.y), (dy, self.y + self.h - y0)):
            if p == 0:
                if q < 0:
                    return False
                continue
            t = q / p
            if p < 0:
                if t > t1:
                    return False
                t0 = max(t0, t)
            else:
                if t < t0:
                    return False
                t1 = min(t1, t)
        return t0 <= t1


@dataclass
class Spot:
    id: int
    center: tuple[float, float]
    side: float
    color: int
    capacity: int = 0
    occupants: set = field(default_factory=set)

    def __post_init__(self):
        if self.capacity == 0:
            self.capacity = capacity_of(self.area_cm2)

    @property
    def area_cm2(self) -> float:
        return (self.side * 100.0) ** 2

    @property
    def rect(self) -> Rect:
        h = self.side / 2
        return Rect(self.center[0] - h, self.center[1] - h, self.side, self.side)

    def contains(self, px: float, py: float) -> bool:
        h = self.side / 2
        cx, cy = self.center
        return cx - h <= px <= cx + h and cy - h <= py <= cy + h

    def free(self) -> int:
        return self.capacity - len(self.occupants)


@dataclass
class Station:
    id: int
    position: tuple[float, float]
    radius: float
    message: PrivateMessage = field(default_factory=PrivateMessage)
    failed: bool = False

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError(f"station {self.id}: radius must be positive")


@dataclass(frozen=True)
class SpotPerception:
    spot_id: int
    center: tuple[float, float]
    area: float
    color: int
    capacity: int


@dataclass
class Arena:
    width: float
    height: float
    obstacles: list[Rect] = field(default_factory=list)
    charge_station: tuple[float, float] = (0.1, 0.1)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def inside(self, px: float, py: float) -> bool:
        return 0.0 <= px <= self.width and 0.0 <= py <= self.height

    def free_point(self, px: float, py: float) -> bool:
        return self.inside(px, py) and not any(o.contains(px, py) for o in self.obstacles)


class World:
    """Arena plus ground-truth spot occupancy and the station set."""

    def __init__(self, arena: Arena, spots: Sequence[Spot], stations: Sequence[Station] = ()):
        self.arena = arena
        self.spots = list(spots)
        self.stations = list(stations)
        problems = []
        for s in self.spots:
            r = s.rect
            if r.x < 0 or r.y < 0 or r.x + r.w > arena.width or r.y + r.h > arena.height:
                problems.append(f"spot {s.id} lies outside the arena")
            for o in arena.obstacles:
                if r.overlaps(o):
                    problems.append(f"spot {s.id} overlaps an obstacle")
        for i, a in enumerate(self.spots):
            for b in self.spots[i + 1:]:
                if a.rect.overlaps(b.rect):
                    problems.append(f"spots {a.id} and {b.id} overlap")
        for o in arena.obstacles:
            if o.x < 0 or o.y < 0 or o.x + o.w > arena.width or o.y + o.h > arena.height:
                problems.append("obstacle lies outside the arena")
        if problems:
            raise ConfigError(problems)
        self._by_id = {s.id: s for s in self.spots}

    def spot(self, spot_id: int) -> Spot:
        return self._by_id[spot_id]

    def sense_spot(self, p: tuple[float, float]) -> SpotPerception | None:
        for s in self.spots:
            if s.contains(p[0], p[1]):
                return SpotPerception(s.id, s.center, s.area_cm2, s.color, s.capacity)
        return None

    def spot_at(self, p: tuple[float, float]) -> Spot | None:
        for s in self.spots:
            if s.contains(p[0], p[1]):
                return s
        return None


def sense_spot(world: World, p: tuple[float, float]) -> SpotPerception | None:
    return world.sense_spot(p)


def in_range(a: tuple[float, float], b: tuple[float, float], r: float) -> bool:
    if r < 0:
        raise ValueError("range must be nonnegative")
    dx, dy = a[0] - b[0], a[1] - b[1]
    return dx * dx + dy * dy <= r * r


def nearest_station(p: tuple[float, float], stations: Iterable[Station]) -> Station:
    best = None
    best_d = math.inf
    for st in sorted(stations, key=lambda s: s.id):
        d = math.hypot(st.position[0] - p[0], st.position[1] - p[1])
        if d < best_d:
            best, best_d = st, d
    if best is None:
        raise ConfigError("no Chapar station available")
    return best


def _wrap(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def ray_blocked(arena: Arena, pos: tuple[float, float], heading: float, reach: float,
                others: Sequence[tuple[float, float]] = (), body: float = ROBOT_RADIUS) -> bool:
    x0, y0 = pos
    x1 = x0 + reach * math.cos(heading)
    y1 = y0 + reach * math.sin(heading)
    if not arena.inside(x1, y1):
        return True
    for o in arena.obstacles:
        if o.hits_segment(x0, y0, x1, y1):
            return True
    if others:
        dx, dy = x1 - x0, y1 - y0
        seg2 = dx * dx + dy * dy
        b2 = body * body
        for ox, oy in others:
            # robots behind us are ignored
            t = ((ox - x0) * dx + (oy - y0) * dy) / seg2
            if t <= 0:
                continue
            t = min(t, 1.0)
            cx, cy = x0 + t * dx - ox, y0 + t * dy - oy
            if cx * cx + cy * cy <= b2:
                return True
    return False


def steer(pos: tuple[float, float], heading: float, arena: Arena, rng: random.Random,
          target: tuple[float, float] | None = None,
          others: Sequence[tuple[float, float]] = (),
          reach: float = SENSOR_RANGE, max_turns: int = 24) -> float:
    """Next heading for a point robot.

    Random walk (``target`` is None) jitters the heading by up to ±15° per tick;
    goto points straight at ``target``.  Either way, if the forward ray of
    length ``reach`` meets a wall, obstacle or robot, the robot turns away by a
    random 90°-180° until the ray is clear.
    """
    if target is None:
        h = heading + rng.uniform(-WANDER_JITTER, WANDER_JITTER)
    else:
        h = math.atan2(target[1] - pos[1], target[0] - pos[0])
    for _ in range(max_turns):
        if not ray_blocked(arena, pos, h, reach, others):
            return _wrap(h)
        turn = rng.uniform(math.pi / 2, math.pi)
        h += turn if rng.random() < 0.5 else -turn
    return _wrap(h)
