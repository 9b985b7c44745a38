"""Deterministic tick loop.

Phase order inside one tick:

1. scheduled failures take effect
2. every live robot senses and steps, in ascending id; inboxes hold what was
   broadcast during the previous tick
3. Leave, Sync and Deploy actions are applied (lowest id wins the last slot)
4. moves are applied
5. robot broadcasts are delivered for the next tick
6. stations merge and rebroadcast, also delivered for the next tick
7. invariants are checked
"""

from __future__ import annotations

import logging
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field

from chapar import controllers as ctl
from chapar.config import FailureEvent, SimConfig, build_world
from chapar.controllers import (
    CHARGING,
    DEPLOYED,
    FAILED,
    FORAGE,
    RETURN,
    STRANDED,
    TRANSIT,
    ChaparState,
    EnergyLedger,
    WorkerState,
)
from chapar.events import EventLog
from chapar.protocol import COLOR_NAMES, merge
from chapar.world import ConfigError, Station, World, in_range

log = logging.getLogger(__name__)

SPAWN_MARGIN = 0.05
SETTLED = frozenset({DEPLOYED, RETURN, CHARGING, STRANDED, FAILED})
_SPENDING = frozenset({FORAGE, TRANSIT, DEPLOYED, RETURN})


class InvariantViolation(RuntimeError):
    """Ground truth or bookkeeping became inconsistent: a simulator bug."""


def agent_rng(seed: int, label: str) -> random.Random:
    # str seeds are hashed with SHA-512, independent of PYTHONHASHSEED
    return random.Random(f"{seed}:{label}")


def _spawn(world: World, rng: random.Random) -> tuple[tuple[float, float], float]:
    a = world.arena
    for _ in range(10_000):
        x = rng.uniform(SPAWN_MARGIN, a.width - SPAWN_MARGIN)
        y = rng.uniform(SPAWN_MARGIN, a.height - SPAWN_MARGIN)
        if a.free_point(x, y) and world.spot_at((x, y)) is None:
            return (x, y), rng.uniform(-math.pi, math.pi)
    raise ConfigError("could not find free floor to place a robot")


def station_label(st: Station) -> str:
    return f"s{st.id}"


def inject_failure(world: World, robots: dict, stations: list, ev: FailureEvent):
    """Apply one failure.  Returns ``(label, payload)`` for the log."""
    if ev.robot is not None:
        r = robots.get(ev.robot)
        if r is None:
            raise ConfigError(f"failure names unknown robot {ev.robot}")
        if r.mode == FAILED:
            raise ConfigError(f"robot {ev.robot} has already failed")
        payload = {"target": "robot", "mode": r.mode}
        if isinstance(r, WorkerState) and r.mode == DEPLOYED:
            spot = world.spot(r.deployed_spot)
            spot.occupants.discard(r.id)
            payload["freed_spot"] = spot.id
        ctl.on_fail(r)
        return r.label, payload
    if ev.station is None or not 0 <= ev.station < len(stations):
        raise ConfigError(f"failure names unknown station {ev.station}")
    st = stations[ev.station]
    if st.failed:
        raise ConfigError(f"station {ev.station} has already failed")
    st.failed = True
    return station_label(st), {"target": "station"}


@dataclass
class RunResult:
    config: SimConfig
    log: EventLog
    ticks: int
    workers: list
    chapars: list
    stations: list
    metrics: dict = field(default_factory=dict)


class Simulation:
    def __init__(self, cfg: SimConfig, check_invariants: bool = True, stop_when_settled: bool = True):
        cfg.validate()
        self.cfg = cfg
        self.check_invariants = check_invariants
        self.stop_when_settled = stop_when_settled
        self.world = build_world(cfg.environment)
        self.stations = self.world.stations
        self.station_mode = cfg.station_mode
        self.workers: list[WorkerState] = []
        self.chapars: list[ChaparState] = []
        self.rngs: dict[int, random.Random] = {}
        b = cfg.budgets
        method = "dynamic" if cfg.dynamic_workers else "static"
        for i in range(1, cfg.worker_count + 1):
            rng = agent_rng(cfg.seed, f"w{i}")
            pos, heading = _spawn(self.world, rng)
            target = ctl.initial_target(i, cfg.worker_count, cfg.initial_targets, rng)
            self.workers.append(WorkerState(
                id=i, pos=pos, heading=heading, target=target, method=method,
                energy=EnergyLedger(b.forage, b.work, b.ret), resample_period=cfg.resample_period))
            self.rngs[i] = rng
        for j in range(cfg.worker_count + 1, cfg.worker_count + cfg.chapar_count + 1):
            rng = agent_rng(cfg.seed, f"c{j}")
            pos, heading = _spawn(self.world, rng)
            self.chapars.append(ChaparState(id=j, pos=pos, heading=heading, speed=cfg.chapar_speed))
            self.rngs[j] = rng
        self.robots = sorted(self.workers + self.chapars, key=lambda r: r.id)
        self.by_id = {r.id: r for r in self.robots}
        self.tick = 0
        self.inbox: dict[str, list] = defaultdict(list)
        self.failures = sorted(cfg.failure_events, key=lambda e: e.at_tick)
        self.log = EventLog(self._header(), cfg.frame_slots)

    def _header(self) -> dict:
        cfg = self.cfg
        return {
            "method": cfg.method,
            "seed": cfg.seed,
            "worker_count": cfg.worker_count,
            "chapar_count": cfg.chapar_count,
            "forage_budget": cfg.budgets.forage,
            "spots": [{"id": s.id, "center": list(s.center), "color": s.color,
                       "capacity": s.capacity} for s in self.world.spots],
            "stations": [{"id": s.id, "position": list(s.position), "radius": s.radius}
                         for s in self.stations],
            "targets": {w.label: w.target for w in self.workers},
        }

    # -------------------------------------------------------------- helpers

    def _radius(self, r) -> float:
        return self.cfg.worker_radius if isinstance(r, WorkerState) else self.cfg.chapar_radius

    def _speed(self, r) -> float:
        return self.cfg.worker_speed if isinstance(r, WorkerState) else r.speed

    @staticmethod
    def _alive(r) -> bool:
        return r.mode not in (FAILED, STRANDED)

    def _deliver(self, sender: str, pos, radius: float, msg, exclude_id=None,
                 station_range_rule: bool = False) -> list[str]:
        """Queue ``msg`` for every live receiver in range; returns their labels.

        Robot-to-robot links use the sender's radius.  Any link touching a
        station uses the station's radius (the turret both sends and listens
        over its coverage disc).
        """
        recipients = []
        for r in self.robots:
            if r.id == exclude_id or not self._alive(r):
                continue
            if in_range(pos, r.pos, radius):
                recipients.append(r.label)
                self.inbox[r.label].append(msg)
        for st in self.stations:
            lab = station_label(st)
            if st.failed or lab == sender:
                continue
            rng = radius if station_range_rule else st.radius
            if in_range(pos, st.position, rng):
                recipients.append(lab)
                self.inbox[lab].append(msg)
        return recipients

    # -------------------------------------------------------------- tick

    def step(self) -> None:
        cfg, world, now = self.cfg, self.world, self.tick
        elog = self.log

        while self.failures and self.failures[0].at_tick == now:
            ev = self.failures.pop(0)
            label, payload = inject_failure(world, self.by_id, self.stations, ev)
            elog.append(now, label, "failure", payload)

        inbox, self.inbox = self.inbox, defaultdict(list)
        station_start = {st.id: st.message for st in self.stations}
        blockers = [(r.id, r.pos) for r in self.robots if r.mode != CHARGING]
        start = {w.id: (w.mode, w.energy.total_spent) for w in self.workers}

        stepped = []
        for r in self.robots:
            if not self._alive(r):
                continue
            others = [p for i, p in blockers if i != r.id]
            msgs = inbox.get(r.label, ())
            if isinstance(r, WorkerState):
                sensed = world.sense_spot(r.pos)
                _, acts = ctl.worker_step(r, sensed, msgs, now, cfg, self.rngs[r.id],
                                          world.arena, others)
            else:
                sensed = None
                _, acts = ctl.chapar_step(r, msgs, self.stations, now, cfg, self.rngs[r.id],
                                          world.arena, others)
            stepped.append((r, sensed, acts))

        for r, _, acts in stepped:
            for a in acts:
                if isinstance(a, ctl.Note):
                    elog.append(now, r.label, a.kind, a.payload)

        # leaves free slots before this tick's arbitration
        for r, _, acts in stepped:
            for a in acts:
                if isinstance(a, ctl.Leave):
                    spot = world.spot(a.spot_id)
                    if r.id not in spot.occupants:
                        raise InvariantViolation(f"{r.label} left spot {spot.id} it did not occupy")
                    spot.occupants.discard(r.id)
                    elog.append(now, r.label, "leave", {"spot": spot.id, "color": spot.color,
                                                        "cycle": r.cycle})

        for r, _, acts in stepped:
            for a in acts:
                if isinstance(a, ctl.Sync):
                    self._sync(r, self.stations[a.station_id], now)

        requests = []
        for r, sensed, acts in stepped:
            for a in acts:
                if isinstance(a, ctl.Deploy):
                    requests.append((r, sensed, a.spot_id))
        if requests:
            self._arbitrate(requests, stepped, now)

        a_w = world.arena
        for r, _, acts in stepped:
            for a in acts:
                if isinstance(a, ctl.Move):
                    step = self._speed(r)
                    nx = r.pos[0] + step * math.cos(a.heading)
                    ny = r.pos[1] + step * math.sin(a.heading)
                    if a_w.free_point(nx, ny):
                        r.pos = (nx, ny)

        for r, _, acts in stepped:
            msg = None
            for a in acts:
                if isinstance(a, ctl.Broadcast):
                    msg = a.message
            if msg is not None and self._alive(r):
                rec = self._deliver(r.label, r.pos, self._radius(r), msg, exclude_id=r.id)
                elog.append(now, r.label, "broadcast", {"message": msg, "recipients": rec})

        if self.station_mode is not None:
            for st in self.stations:
                if st.failed:
                    continue
                lab = station_label(st)
                _, acts = ctl.station_step(st, inbox.get(lab, ()), self.station_mode,
                                           since=station_start[st.id])
                for a in acts:
                    if isinstance(a, ctl.Broadcast):
                        rec = self._deliver(lab, st.position, st.radius, a.message,
                                            station_range_rule=True)
                        elog.append(now, lab, "broadcast", {"message": a.message, "recipients": rec})

        if self.check_invariants:
            self._check(start, now)
        self.tick += 1

    def _sync(self, c: ChaparState, st: Station, now: int) -> None:
        ok = not st.failed
        payload = {"station": st.id, "ok": ok}
        if ok:
            cm, sm = c.msg, st.message
            c.msg = merge(cm, sm)
            st.message = merge(sm, cm)
            payload["chapar_msg"] = cm
            payload["station_msg"] = sm
        self.log.append(now, c.label, "sync", payload)
        ctl.on_sync_result(c, ok, now)

    def _arbitrate(self, requests, stepped, now: int) -> None:
        world = self.world
        by_spot = defaultdict(list)
        for r, sensed, spot_id in requests:
            by_spot[spot_id].append((r, sensed))
        extra = {}
        for spot_id in sorted(by_spot):
            spot = world.spot(spot_id)
            ranked = sorted(by_spot[spot_id], key=lambda t: t[0].id)
            results = []
            for r, sensed in ranked:
                granted = spot.free() > 0
                if granted:
                    spot.occupants.add(r.id)
                results.append((r, sensed, granted))
            for r, sensed, granted in results:
                payload = {"spot": spot.id, "color": spot.color, "target": r.target,
                           "phase": r.phase, "cycle": r.cycle,
                           "forage_spent": r.energy.forage_spent,
                           "occupants": len(spot.occupants)}
                self.log.append(now, r.label, "deploy" if granted else "deny", payload)
                acts = ctl.on_deploy_result(r, granted, sensed, len(spot.occupants), now, self.cfg)
                extra[r.id] = acts
        for i, (r, sensed, acts) in enumerate(stepped):
            more = extra.get(r.id)
            if not more:
                continue
            for a in more:
                if isinstance(a, ctl.Note):
                    self.log.append(now, r.label, a.kind, a.payload)
            # the post-arbitration message replaces any broadcast planned earlier
            kept = [a for a in acts if not isinstance(a, ctl.Broadcast)]
            kept += [a for a in more if isinstance(a, ctl.Broadcast)]
            stepped[i] = (r, sensed, kept)

    def _check(self, start: dict, now: int) -> None:
        world = self.world
        for spot in world.spots:
            if len(spot.occupants) > spot.capacity:
                raise InvariantViolation(f"tick {now}: spot {spot.id} oversubscribed")
            for rid in spot.occupants:
                r = self.by_id[rid]
                if r.mode != DEPLOYED or r.deployed_spot != spot.id:
                    raise InvariantViolation(f"tick {now}: {r.label} counted in spot {spot.id} "
                                             f"but is {r.mode}")
        for w in self.workers:
            e = w.energy
            if w.mode == DEPLOYED:
                spot = world.spot(w.deployed_spot)
                if w.id not in spot.occupants or not spot.contains(*w.pos):
                    raise InvariantViolation(f"tick {now}: {w.label} deployed outside its spot")
            if (e.forage_spent > e.forage_budget or e.work_spent > e.work_budget
                    or e.return_spent > e.return_budget):
                raise InvariantViolation(f"tick {now}: {w.label} overspent {e}")
            mode0, total0 = start[w.id]
            if mode0 in _SPENDING and w.mode != FAILED and e.total_spent != total0 + 1:
                raise InvariantViolation(
                    f"tick {now}: {w.label} energy moved {total0} -> {e.total_spent} in {mode0}")
            if mode0 in (CHARGING, STRANDED, FAILED) and w.mode == mode0 and e.total_spent != total0:
                raise InvariantViolation(f"tick {now}: {w.label} spent energy while {mode0}")
        for r in self.robots:
            if not world.arena.free_point(*r.pos):
                raise InvariantViolation(f"tick {now}: {r.label} left free floor at {r.pos}")

    # -------------------------------------------------------------- run

    def settled(self) -> bool:
        return all(w.mode in SETTLED for w in self.workers)

    def run(self) -> RunResult:
        from chapar import metrics

        while self.tick < self.cfg.max_ticks:
            self.step()
            if self.stop_when_settled and self.settled():
                break
        self.log.header["ticks"] = self.tick
        res = RunResult(self.cfg, self.log, self.tick, self.workers, self.chapars, self.stations)
        res.metrics = metrics.run_metrics(self.log)
        return res


def run(config: SimConfig, **kwargs) -> RunResult:
    return Simulation(config, **kwargs).run()


def describe(res: RunResult) -> str:
    m = res.metrics
    return (f"{res.config.method} seed={res.config.seed} ticks={res.ticks} "
            f"absorption={m['absorption_pct']:.1f}% "
            f"successful={m['successful_before_threshold']} "
            f"green_found={m['green_spots_discovered']} "
            f"deployed_green={m['deployed_in_green']}")


__all__ = ["Simulation", "RunResult", "InvariantViolation", "inject_failure", "run", "agent_rng",
           "COLOR_NAMES"]
