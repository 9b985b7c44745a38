"""Spot-row message model and the two private-message update events.

A private message is a keyed table of spot rows.  Rows enter a message in one of
two ways: the owner discovers a spot itself (``new_row``), or it merges a
message received from a neighbour (``merge``).  Rows are immutable; every
update returns a new row / message.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, NamedTuple

BLACK = 0
GREEN = 1
COLOR_NAMES = {BLACK: "black", GREEN: "green"}

KEY_QUANTUM = 0.05  # meters
DEFAULT_FRAME_SLOTS = 16
WIRE_FIELDS = ("occupied", "x", "y", "z", "capacity", "deployed", "needed", "hops", "time", "color")


class ProtocolError(ValueError):
    """Raised when a row operation's precondition does not hold."""


class SpotFullError(ProtocolError):
    """Arrival recorded on a row that has no free slot left."""


class SpotKey(NamedTuple):
    qx: int
    qy: int


def spot_key(x: float, y: float, quantum: float = KEY_QUANTUM) -> SpotKey:
    # round() is banker's rounding; floor(v + 0.5) keeps keys stable for .5 cases
    return SpotKey(math.floor(x / quantum + 0.5), math.floor(y / quantum + 0.5))


@dataclass(frozen=True)
class SpotRow:
    x: float
    y: float
    z: float
    capacity: int
    deployed: int
    needed: int
    hops: int
    time: int
    color: int

    def __post_init__(self):
        if not 0 <= self.deployed <= self.capacity:
            raise ProtocolError(f"deployed={self.deployed} outside [0, {self.capacity}]")
        if self.needed != self.capacity - self.deployed:
            raise ProtocolError("needed must equal capacity - deployed")
        if self.hops < 0 or self.time < 0:
            raise ProtocolError("hops and time must be nonnegative")

    @property
    def key(self) -> SpotKey:
        return spot_key(self.x, self.y)

    def wire(self) -> list:
        return [1, self.x, self.y, self.z, self.capacity, self.deployed,
                self.needed, self.hops, self.time, self.color]


def new_row(center: tuple[float, float], area_cm2: float, color: int, now: int) -> SpotRow:
    """Row for a spot the caller has just measured itself (hop count 0)."""
    from chapar.world import capacity_of

    if area_cm2 <= 0:
        raise ProtocolError(f"spot area must be positive, got {area_cm2}")
    cap = capacity_of(area_cm2)
    return SpotRow(x=float(center[0]), y=float(center[1]), z=0.0, capacity=cap,
                   deployed=0, needed=cap, hops=0, time=now, color=color)


def apply_arrival(row: SpotRow, now: int) -> SpotRow:
    if row.needed < 1:
        raise SpotFullError(f"spot at ({row.x}, {row.y}) has no free slot")
    return replace(row, deployed=row.deployed + 1, needed=row.needed - 1, time=now)


def apply_departure(row: SpotRow, now: int) -> SpotRow:
    """Inverse of ``apply_arrival``: a robot leaves the spot at ``now``."""
    if row.deployed < 1:
        raise ProtocolError(f"spot at ({row.x}, {row.y}) has nobody to leave")
    return replace(row, deployed=row.deployed - 1, needed=row.needed + 1, time=now)


def observed_row(row: SpotRow, occupants: int, now: int) -> SpotRow:
    """Overwrite the occupancy fields with a first-hand count taken at ``now``."""
    occupants = min(max(occupants, 0), row.capacity)
    return replace(row, deployed=occupants, needed=row.capacity - occupants, time=now)


class PrivateMessage:
    """Ordered mapping SpotKey -> SpotRow.

    Treated as immutable once built: ``merge`` and ``with_row`` return new
    instances, so a message can be shared between an agent and the event log.
    """

    __slots__ = ("_rows",)

    def __init__(self, rows: Iterable[SpotRow] | dict | None = None):
        if rows is None:
            self._rows: dict[SpotKey, SpotRow] = {}
        elif isinstance(rows, dict):
            self._rows = dict(rows)
        else:
            self._rows = {}
            for r in rows:
                self._rows[r.key] = r

    @property
    def rows(self) -> dict[SpotKey, SpotRow]:
        return dict(self._rows)

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self) -> Iterator[SpotRow]:
        return iter(self._rows.values())

    def __contains__(self, key) -> bool:
        return key in self._rows

    def __eq__(self, other) -> bool:
        if not isinstance(other, PrivateMessage):
            return NotImplemented
        return list(self._rows.items()) == list(other._rows.items())

    def __repr__(self) -> str:
        return f"PrivateMessage({list(self._rows.values())!r})"

    def keys(self):
        return self._rows.keys()

    def get(self, key: SpotKey) -> SpotRow | None:
        return self._rows.get(key)

    def with_row(self, row: SpotRow) -> PrivateMessage:
        rows = dict(self._rows)
        rows[row.key] = row
        return PrivateMessage(rows)

    def colors(self) -> list[int]:
        return [r.color for r in self._rows.values()]


def merge(mine: PrivateMessage, received: PrivateMessage) -> PrivateMessage:
    """Merge a received message into ``mine``.

    New keys are appended in the sender's order with hops + 1.  A shared key is
    replaced only when the received row is strictly newer; ties keep ``mine``.
    Returns ``mine`` itself when nothing changes, so callers can detect change
    with an identity test.
    """
    out = None
    base = mine._rows
    for key, r in received._rows.items():
        cur = base.get(key)
        if cur is None or r.time > cur.time:
            if out is None:
                out = dict(base)
            out[key] = replace(r, hops=r.hops + 1)
    if out is None:
        return mine
    return PrivateMessage(out)


def to_wire(msg: PrivateMessage, slots: int = DEFAULT_FRAME_SLOTS) -> list[list]:
    """Fixed-size radio frame: ``slots`` rows of the 10 wire fields, unused slots zeroed."""
    if len(msg) > slots:
        raise ProtocolError(f"message has {len(msg)} rows, frame holds {slots}")
    frame = [r.wire() for r in msg]
    frame.extend([0] * len(WIRE_FIELDS) for _ in range(slots - len(frame)))
    return frame


def from_wire(frame: list[list]) -> PrivateMessage:
    rows = []
    for slot in frame:
        if len(slot) != len(WIRE_FIELDS):
            raise ProtocolError(f"wire slot must have {len(WIRE_FIELDS)} fields, got {len(slot)}")
        if not slot[0]:
            if any(slot):
                raise ProtocolError("empty slot must be all zeros")
            continue
        _, x, y, z, cap, dep, need, hops, t, color = slot
        rows.append(SpotRow(float(x), float(y), float(z), int(cap), int(dep), int(need),
                            int(hops), int(t), int(color)))
    return PrivateMessage(rows)
