"""Worker, Chapar and station controllers plus the three-part energy ledger.

Controllers never touch ground truth.  Each step updates the agent's own state
in place and returns a list of actions for the engine to arbitrate and apply.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from chapar import decision
from chapar.protocol import (
    GREEN,
    BLACK,
    PrivateMessage,
    SpotKey,
    apply_arrival,
    apply_departure,
    merge,
    new_row,
    observed_row,
    spot_key,
)
from chapar.world import Arena, SpotPerception, Station, in_range, nearest_station, steer

FORAGE = "FORAGE"
TRANSIT = "TRANSIT"
DEPLOYED = "DEPLOYED"
RETURN = "RETURN"
CHARGING = "CHARGING"
STRANDED = "STRANDED"
FAILED = "FAILED"

WANDER = "WANDER"
GO_STATION = "GO_STATION"
SYNC = "SYNC"


class EnergyOverspend(RuntimeError):
    pass


# ---------------------------------------------------------------- actions

@dataclass(frozen=True)
class Move:
    heading: float


@dataclass(frozen=True)
class Broadcast:
    message: PrivateMessage


@dataclass(frozen=True)
class Deploy:
    spot_id: int


@dataclass(frozen=True)
class Leave:
    spot_id: int


@dataclass(frozen=True)
class Recharge:
    pass


@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class Sync:
    station_id: int


@dataclass(frozen=True)
class Note:
    """An event the controller wants recorded in the run log."""
    kind: str
    payload: dict


# ---------------------------------------------------------------- energy

@dataclass
class EnergyLedger:
    forage_budget: int = 250
    work_budget: int = 500
    return_budget: int = 250
    forage_spent: int = 0
    work_spent: int = 0
    return_spent: int = 0

    @property
    def total_spent(self) -> int:
        return self.forage_spent + self.work_spent + self.return_spent

    @property
    def forage_exhausted(self) -> bool:
        return self.forage_spent >= self.forage_budget

    @property
    def work_exhausted(self) -> bool:
        return self.work_spent >= self.work_budget

    @property
    def return_exhausted(self) -> bool:
        return self.return_spent >= self.return_budget

    def recharge(self) -> None:
        self.forage_spent = self.work_spent = self.return_spent = 0


def tick_energy(ledger: EnergyLedger, mode: str) -> EnergyLedger:
    if mode == FORAGE:
        if ledger.forage_exhausted:
            raise EnergyOverspend("forage budget already spent")
        ledger.forage_spent += 1
    elif mode in (TRANSIT, DEPLOYED):
        if ledger.work_exhausted:
            raise EnergyOverspend("work budget already spent")
        ledger.work_spent += 1
    elif mode == RETURN:
        if ledger.return_exhausted:
            raise EnergyOverspend("return budget already spent")
        ledger.return_spent += 1
    return ledger


# ---------------------------------------------------------------- states

@dataclass
class WorkerState:
    id: int
    pos: tuple[float, float]
    heading: float
    target: int
    method: str = "static"
    mode: str = FORAGE
    msg: PrivateMessage = field(default_factory=PrivateMessage)
    attempts: int = 0
    energy: EnergyLedger = field(default_factory=EnergyLedger)
    resample_period: int = 100
    kind: str = "worker"
    transit_key: SpotKey | None = None
    deployed_spot: int | None = None
    # (spot_id, ticks left) while measuring a newly found spot
    dwell: tuple[int, int] | None = None
    denied_here: int | None = None
    pending: tuple | None = None
    phase: str = "forage"
    cycle: int = 0
    charge_left: int = 0

    @property
    def label(self) -> str:
        return f"w{self.id}"


@dataclass
class ChaparState:
    id: int
    pos: tuple[float, float]
    heading: float
    speed: float = 0.06
    kind: str = "chapar"
    msg: PrivateMessage = field(default_factory=PrivateMessage)
    mode: str = WANDER
    last_sync: int = 0
    goal_station: int | None = None
    dead_stations: set = field(default_factory=set)

    @property
    def label(self) -> str:
        return f"c{self.id}"


def _merge_all(msg: PrivateMessage, inbox: Sequence[PrivateMessage]) -> PrivateMessage:
    for m in inbox:
        msg = merge(msg, m)
    return msg


def _reach(cfg, speed: float) -> float:
    return max(cfg.sensor_range, speed)


# ---------------------------------------------------------------- worker

def _decide(s: WorkerState, now: int, cfg, notes: list, threshold: bool = False) -> None:
    outcome = decision.decide(s.msg, s.target, s.pos, s.attempts,
                              cfg.retry_threshold, cfg.bucket_size)
    payload = {"threshold": threshold, "attempts": s.attempts, "cycle": s.cycle,
               "target": s.target}
    s.phase = "decision"
    s.dwell = None
    if isinstance(outcome, decision.GoToSpot):
        s.mode = TRANSIT
        s.transit_key = outcome.key
        payload["outcome"] = "goto"
        payload["spot"] = list(outcome.key)
    else:
        s.mode = RETURN
        s.transit_key = None
        payload["outcome"] = "return"
    notes.append(Note("decide", payload))


def _measure(s: WorkerState, sensed: SpotPerception, now: int, cfg, notes: list) -> bool:
    """Advance the discovery dwell on ``sensed``; True once the row exists."""
    if s.dwell is None or s.dwell[0] != sensed.spot_id:
        s.dwell = (sensed.spot_id, cfg.discovery_dwell)
    spot_id, left = s.dwell
    left -= 1
    if left > 0:
        s.dwell = (spot_id, left)
        return False
    s.dwell = None
    row = new_row(sensed.center, sensed.area, sensed.color, now)
    s.msg = s.msg.with_row(row)
    notes.append(Note("discovery", {"spot": sensed.spot_id, "key": list(row.key),
                                    "color": sensed.color, "target": s.target,
                                    "phase": s.phase, "cycle": s.cycle}))
    return True


def _request_deploy(s: WorkerState, sensed: SpotPerception, actions: list) -> None:
    s.pending = (sensed.spot_id, spot_key(*sensed.center))
    actions.append(Deploy(sensed.spot_id))


def worker_step(s: WorkerState, sensed: SpotPerception | None, inbox: Sequence[PrivateMessage],
                now: int, cfg, rng: random.Random, arena: Arena,
                others: Sequence[tuple[float, float]] = ()):
    """One control tick.  Returns ``(s, actions)``; ``s`` is updated in place."""
    if s.mode in (FAILED, STRANDED):
        return s, []
    s.msg = _merge_all(s.msg, inbox)
    actions: list = []
    notes: list = []
    before = s.msg
    mode0 = s.mode
    s.pending = None
    if sensed is None or sensed.spot_id != s.denied_here:
        s.denied_here = None
    reach = _reach(cfg, cfg.worker_speed)

    if mode0 == FORAGE:
        if s.method == "dynamic" and now % s.resample_period == 0:
            old = s.target
            s.target = decision.resample_target(s.msg, rng, s.target)
            notes.append(Note("resample", {"old": old, "new": s.target, "rows": len(s.msg)}))
        busy = False
        if sensed is not None and s.denied_here is None:
            key = spot_key(*sensed.center)
            if key not in s.msg:
                busy = True
                if _measure(s, sensed, now, cfg, notes) and sensed.color == s.target:
                    _request_deploy(s, sensed, actions)
            elif sensed.color == s.target:
                busy = True
                _request_deploy(s, sensed, actions)
        if not busy:
            s.dwell = None
            s.heading = steer(s.pos, s.heading, arena, rng, None, others, reach)
            actions.append(Move(s.heading))
        tick_energy(s.energy, FORAGE)
        if s.energy.forage_exhausted and s.pending is None:
            _decide(s, now, cfg, notes, threshold=True)

    elif mode0 == TRANSIT:
        row = s.msg.get(s.transit_key)
        if row is None or row.needed == 0:
            s.attempts += 1
            _decide(s, now, cfg, notes)
        if s.mode == TRANSIT:
            busy = False
            if sensed is not None and s.denied_here is None:
                key = spot_key(*sensed.center)
                if key == s.transit_key:
                    busy = True
                    _request_deploy(s, sensed, actions)
                else:
                    known = s.msg.get(key)
                    if known is None:
                        # unknown spots on the way are measured and shared, whatever their colour
                        busy = True
                        if _measure(s, sensed, now, cfg, notes):
                            if decision.accept_en_route(sensed, None, s.target):
                                _request_deploy(s, sensed, actions)
                    elif decision.accept_en_route(sensed, known, s.target):
                        busy = True
                        _request_deploy(s, sensed, actions)
            if not busy:
                s.dwell = None
                goal = s.msg.get(s.transit_key)
                s.heading = steer(s.pos, s.heading, arena, rng, (goal.x, goal.y), others, reach)
                actions.append(Move(s.heading))
        tick_energy(s.energy, TRANSIT)
        if s.mode == TRANSIT and s.energy.work_exhausted and s.pending is None:
            s.mode = RETURN
            s.transit_key = None
            notes.append(Note("decide", {"threshold": False, "attempts": s.attempts,
                                         "cycle": s.cycle, "target": s.target,
                                         "outcome": "return", "reason": "work budget spent"}))

    elif mode0 == DEPLOYED:
        # a robot can be granted a slot on the tick its work budget runs out
        leaving_now = s.energy.work_exhausted
        tick_energy(s.energy, RETURN if leaving_now else DEPLOYED)
        if leaving_now or s.energy.work_exhausted:
            spot = s.deployed_spot
            s.mode = RETURN
            s.deployed_spot = None
            if sensed is not None:
                row = s.msg.get(spot_key(*sensed.center))
                if row is not None and row.deployed >= 1:
                    s.msg = s.msg.with_row(apply_departure(row, now))
            actions.append(Leave(spot))
        else:
            actions.append(Idle())

    elif mode0 == RETURN:
        dock = arena.charge_station
        if in_range(s.pos, dock, cfg.dock_radius):
            s.mode = CHARGING
            s.charge_left = cfg.budgets.recharge
            actions.append(Idle())
        else:
            s.heading = steer(s.pos, s.heading, arena, rng, dock, others, reach)
            actions.append(Move(s.heading))
        tick_energy(s.energy, RETURN)
        if s.mode == RETURN and s.energy.return_exhausted:
            s.mode = STRANDED
            actions = [Idle()]
            notes.append(Note("stranded", {"pos": list(s.pos)}))

    elif mode0 == CHARGING:
        s.charge_left -= 1
        if s.charge_left <= 0:
            s.energy.recharge()
            s.attempts = 0
            s.cycle += 1
            s.phase = "forage"
            s.mode = FORAGE
            actions.append(Recharge())
            notes.append(Note("recharge", {"cycle": s.cycle}))
        else:
            actions.append(Idle())

    # periodic flood, plus an immediate one whenever the robot changed its own rows
    flood = (now + s.id) % cfg.worker_flood_period == 0
    if s.mode != STRANDED and (flood or s.msg is not before):
        actions.append(Broadcast(s.msg))
    return s, actions + notes


def on_deploy_result(s: WorkerState, granted: bool, sensed: SpotPerception, occupants: int,
                     now: int, cfg):
    """Engine callback after the Deploy arbitration of this tick.

    ``occupants`` is the spot's head-count after arbitration, which the robot
    can count locally once it stands in the spot.
    """
    spot_id, key = s.pending
    s.pending = None
    notes: list = []
    row = s.msg.get(key)
    if granted:
        if row is None:
            row = new_row(sensed.center, sensed.area, sensed.color, now)
        if row.needed >= 1:
            row = apply_arrival(row, now)
        else:
            row = observed_row(row, occupants, now)
        s.msg = s.msg.with_row(row)
        s.mode = DEPLOYED
        s.deployed_spot = spot_id
        s.transit_key = None
        s.dwell = None
        return [Broadcast(s.msg)]
    # spot seen full first-hand
    if row is not None:
        s.msg = s.msg.with_row(observed_row(row, sensed.capacity, now))
    s.denied_here = spot_id
    if s.mode == FORAGE:
        if s.energy.forage_exhausted:
            _decide(s, now, cfg, notes, threshold=True)
    elif s.mode == TRANSIT:
        if key == s.transit_key:
            s.attempts += 1
            _decide(s, now, cfg, notes)
        elif s.energy.work_exhausted:
            s.mode = RETURN
            s.transit_key = None
            notes.append(Note("decide", {"threshold": False, "attempts": s.attempts,
                                         "cycle": s.cycle, "target": s.target,
                                         "outcome": "return", "reason": "work budget spent"}))
    return [Broadcast(s.msg)] + notes


def on_fail(s) -> None:
    s.mode = FAILED
    s.pending = None
    if isinstance(s, WorkerState):
        s.deployed_spot = None
        s.transit_key = None


# ---------------------------------------------------------------- chapar

def chapar_step(s: ChaparState, inbox: Sequence[PrivateMessage], stations: Sequence[Station],
                now: int, cfg, rng: random.Random, arena: Arena,
                others: Sequence[tuple[float, float]] = ()):
    if s.mode == FAILED:
        return s, []
    before = s.msg
    s.msg = _merge_all(s.msg, inbox)
    new_key = any(k not in before for k in s.msg.keys())
    actions: list = []
    live = [st for st in stations if st.id not in s.dead_stations]
    if s.mode == WANDER and live:
        periodic = cfg.method == "m3" and now - s.last_sync >= cfg.chapar_sync_period
        if new_key or periodic:
            s.mode = GO_STATION
            s.goal_station = nearest_station(s.pos, live).id
            actions.append(Note("go_station", {"station": s.goal_station,
                                               "reason": "new row" if new_key else "periodic"}))
    reach = _reach(cfg, s.speed)
    if s.mode == GO_STATION:
        st = next(st for st in stations if st.id == s.goal_station)
        if in_range(s.pos, st.position, st.radius):
            s.mode = SYNC
            actions.append(Sync(st.id))
        else:
            s.heading = steer(s.pos, s.heading, arena, rng, st.position, others, reach)
            actions.append(Move(s.heading))
    else:
        s.heading = steer(s.pos, s.heading, arena, rng, None, others, reach)
        actions.append(Move(s.heading))
    if (now + s.id) % cfg.chapar_flood_period == 0:
        actions.append(Broadcast(s.msg))
    return s, actions


def on_sync_result(s: ChaparState, ok: bool, now: int) -> None:
    if not ok:
        s.dead_stations.add(s.goal_station)
    s.last_sync = now
    s.mode = WANDER
    s.goal_station = None


# ---------------------------------------------------------------- station

def station_step(st: Station, inbox: Sequence[PrivateMessage], mode: str,
                 since: PrivateMessage | None = None):
    """Merge what arrived and decide whether to rebroadcast.

    Relay stations rebroadcast every tick; the omniscient station speaks only
    when its message changed since ``since`` (default: since this call began),
    so rows handed over by a chapar sync earlier in the tick count as news.
    """
    if st.failed:
        return st, []
    before = st.message if since is None else since
    st.message = _merge_all(st.message, inbox)
    if mode == "relay" or st.message is not before:
        return st, [Broadcast(st.message)]
    return st, []


def initial_target(robot_id: int, worker_count: int, scheme: str, rng: random.Random) -> int:
    if scheme == "random":
        return GREEN if rng.random() < 0.5 else BLACK
    return GREEN if robot_id <= worker_count // 2 else BLACK
