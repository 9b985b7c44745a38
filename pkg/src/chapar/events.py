"""Run event log and its JSON-lines form."""

from __future__ import annotations

import json
from typing import Iterable, Iterator, NamedTuple

from chapar.protocol import DEFAULT_FRAME_SLOTS, PrivateMessage, from_wire, to_wire

LOG_SCHEMA_VERSION = 1


class LogSchemaError(ValueError):
    pass


class Event(NamedTuple):
    tick: int
    agent: str | None
    kind: str
    payload: dict


def _jsonable(value, slots: int):
    if isinstance(value, PrivateMessage):
        return to_wire(value, slots)
    if isinstance(value, dict):
        return {k: _jsonable(v, slots) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v, slots) for v in value]
    return value


class EventLog:
    """Append-only ordered list of events.

    Payloads may hold ``PrivateMessage`` objects; they are written out as wire
    frames of ``frame_slots`` rows.
    """

    def __init__(self, header: dict | None = None, frame_slots: int = DEFAULT_FRAME_SLOTS):
        self.header = dict(header or {})
        self.frame_slots = frame_slots
        self.events: list[Event] = []

    def append(self, tick: int, agent: str | None, kind: str, payload: dict | None = None):
        if self.events and tick < self.events[-1].tick:
            raise ValueError("event ticks must be nondecreasing")
        self.events.append(Event(tick, agent, kind, payload or {}))

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_kind(self, *kinds: str) -> list[Event]:
        return [e for e in self.events if e.kind in kinds]

    def lines(self) -> Iterator[str]:
        head = {"schema_version": LOG_SCHEMA_VERSION, "frame_slots": self.frame_slots, **self.header}
        yield json.dumps({"tick": 0, "agent": None, "kind": "header", "payload": head})
        for e in self.events:
            yield json.dumps({"tick": e.tick, "agent": e.agent, "kind": e.kind,
                              "payload": _jsonable(e.payload, self.frame_slots)})

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as f:
            for line in self.lines():
                f.write(line)
                f.write("\n")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> EventLog:
        it = (ln for ln in lines if ln.strip())
        try:
            first = json.loads(next(it))
        except StopIteration:
            raise LogSchemaError("empty event log") from None
        if first.get("kind") != "header":
            raise LogSchemaError("event log has no header record")
        head = dict(first["payload"])
        version = head.pop("schema_version", None)
        if version != LOG_SCHEMA_VERSION:
            raise LogSchemaError(f"event log schema_version {version!r}, expected {LOG_SCHEMA_VERSION}")
        slots = head.pop("frame_slots", DEFAULT_FRAME_SLOTS)
        log = cls(head, slots)
        for line in it:
            rec = json.loads(line)
            payload = rec["payload"]
            for k in ("message", "chapar_msg", "station_msg"):
                if k in payload:
                    payload[k] = from_wire(payload[k])
            log.append(rec["tick"], rec["agent"], rec["kind"], payload)
        return log

    @classmethod
    def read(cls, path) -> EventLog:
        with open(path) as f:
            return cls.from_lines(f)
