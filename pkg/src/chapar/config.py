"""Simulation configuration: loading, defaults and validation."""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from chapar.protocol import DEFAULT_FRAME_SLOTS
from chapar.world import Arena, ConfigError, Rect, Spot, Station, World

SCHEMA_VERSION = 1
METHODS = ("m1", "m2", "m3", "m4")


@dataclass
class Budgets:
    forage: int = 250
    work: int = 500
    ret: int = 250
    recharge: int = 50


@dataclass
class FailureEvent:
    at_tick: int
    robot: int | None = None
    station: int | None = None

    @property
    def label(self) -> str:
        return f"robot {self.robot}" if self.robot is not None else f"station {self.station}"


@dataclass
class SimConfig:
    environment: dict
    method: str = "m1"
    worker_count: int = 10
    chapar_count: int = 0
    # worker controller flavour for m3/m4; m1 is always static, m2 always dynamic
    worker_method: str = "static"
    initial_targets: str = "split"
    budgets: Budgets = field(default_factory=Budgets)
    worker_speed: float = 0.02
    chapar_speed: float = 0.06
    worker_radius: float = 0.5
    chapar_radius: float = 0.5
    worker_flood_period: int = 5
    chapar_flood_period: int = 1
    resample_period: int = 100
    chapar_sync_period: int = 100
    bucket_size: int = 5
    retry_threshold: int = 6
    discovery_dwell: int = 10
    sensor_range: float = 0.05
    dock_radius: float = 0.1
    frame_slots: int = DEFAULT_FRAME_SLOTS
    max_ticks: int = 5000
    seed: int = 0
    failure_events: list[FailureEvent] = field(default_factory=list)

    @property
    def dynamic_workers(self) -> bool:
        if self.method == "m1":
            return False
        if self.method == "m2":
            return True
        return self.worker_method == "dynamic"

    @property
    def station_mode(self) -> str | None:
        return {"m3": "relay", "m4": "omniscient"}.get(self.method)

    def validate(self) -> None:
        problems = []
        env = self.environment
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}, got {self.method!r}")
        if self.worker_count < 1:
            problems.append("worker_count must be >= 1")
        if self.chapar_count < 0:
            problems.append("chapar_count must be >= 0")
        if self.worker_method not in ("static", "dynamic"):
            problems.append("worker_method must be 'static' or 'dynamic'")
        if self.initial_targets not in ("split", "random"):
            problems.append("initial_targets must be 'split' or 'random'")
        stations = env.get("stations", [])
        if self.method in ("m1", "m2"):
            if self.chapar_count:
                problems.append(f"{self.method} uses no chapars (chapar_count={self.chapar_count})")
            if stations:
                problems.append(f"{self.method} uses no Chapar stations")
        elif self.method == "m3" and not stations:
            problems.append("m3 needs at least one Chapar station")
        elif self.method == "m4":
            if len(stations) != 1:
                problems.append(f"m4 needs exactly one Chapar station, got {len(stations)}")
            else:
                arena = env.get("arena", {})
                diag = math.hypot(arena.get("width", 0), arena.get("height", 0))
                if stations[0].get("radius", 0) < diag:
                    problems.append("m4 station radius must cover the arena diagonal")
        if self.chapar_count and self.chapar_speed <= self.worker_speed:
            problems.append("chapar speed must exceed worker speed")
        if self.worker_speed <= 0:
            problems.append("worker speed must be positive")
        for name in ("forage", "work", "ret"):
            if getattr(self.budgets, name) < 1:
                problems.append(f"budget {name} must be >= 1")
        if self.budgets.recharge < 0:
            problems.append("recharge ticks must be >= 0")
        if self.bucket_size < 1:
            problems.append("bucket_size must be >= 1")
        if self.retry_threshold < 0:
            problems.append("retry_threshold must be >= 0")
        for name in ("worker_flood_period", "chapar_flood_period", "resample_period",
                     "chapar_sync_period"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.discovery_dwell < 0:
            problems.append("discovery_dwell must be >= 0")
        if self.worker_radius < 0 or self.chapar_radius < 0:
            problems.append("radio radii must be nonnegative")
        if self.max_ticks < 1:
            problems.append("max_ticks must be >= 1")
        robot_ids = set(range(1, self.worker_count + self.chapar_count + 1))
        seen = set()
        for ev in self.failure_events:
            if (ev.robot is None) == (ev.station is None):
                problems.append("failure event must name exactly one of robot/station")
                continue
            if not 0 <= ev.at_tick < self.max_ticks:
                problems.append(f"failure of {ev.label} at tick {ev.at_tick} outside [0, max_ticks)")
            if ev.robot is not None and ev.robot not in robot_ids:
                problems.append(f"failure names unknown robot {ev.robot}")
            if ev.station is not None and not 0 <= ev.station < len(stations):
                problems.append(f"failure names unknown station {ev.station}")
            if ev.label in seen:
                problems.append(f"{ev.label} fails more than once")
            seen.add(ev.label)
        try:
            build_world(env)
        except ConfigError as e:
            problems.extend(e.problems)
        except (KeyError, TypeError, ValueError) as e:
            problems.append(f"malformed environment: {e}")
        if problems:
            raise ConfigError(problems)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["failure_events"] = [
            {k: v for k, v in asdict(ev).items() if v is not None} for ev in self.failure_events
        ]
        return {"schema_version": SCHEMA_VERSION, **d}

    @classmethod
    def from_dict(cls, data: dict) -> SimConfig:
        data = copy.deepcopy(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"config schema_version {version} unsupported (expected {SCHEMA_VERSION})")
        if "environment" not in data:
            raise ConfigError("config has no environment")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "budgets" in data:
            data["budgets"] = Budgets(**data["budgets"])
        data["failure_events"] = [FailureEvent(**ev) for ev in data.get("failure_events", [])]
        return cls(**data)

    def replace(self, **changes) -> SimConfig:
        return dataclasses.replace(copy.deepcopy(self), **changes)


def load_json(path) -> dict:
    with open(path) as f:
        return json.load(f)


def load_config(path) -> SimConfig:
    """Read a config file.  ``environment`` may be inline or a path relative to the file."""
    path = Path(path)
    data = load_json(path)
    env = data.get("environment")
    if isinstance(env, str):
        # a path next to the config file, else a shipped environment name
        env_path = Path(env)
        if not env_path.is_absolute() and (path.parent / env_path).exists():
            env_path = path.parent / env_path
        data["environment"] = load_environment(env_path)
    cfg = SimConfig.from_dict(data)
    cfg.validate()
    return cfg


def load_environment(name_or_path) -> dict:
    """Shipped environment by name (``env1``..``env4``) or a JSON file path."""
    p = Path(name_or_path)
    if not p.exists():
        p = Path(__file__).parent / "data" / f"{name_or_path}.json"
        if not p.exists():
            raise ConfigError(f"no environment file or shipped environment named {name_or_path!r}")
    env = load_json(p)
    version = env.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"environment schema_version {version} unsupported")
    return env


def build_world(env: dict) -> World:
    a = env["arena"]
    obstacles = [Rect(o["x"], o["y"], o["w"], o["h"]) for o in env.get("obstacles", [])]
    cs = env.get("charge_station", {"x": 0.1, "y": 0.1})
    arena = Arena(float(a["width"]), float(a["height"]), obstacles, (float(cs["x"]), float(cs["y"])))
    spots = [Spot(i, (float(s["cx"]), float(s["cy"])), float(s["side"]), int(s["color"]))
             for i, s in enumerate(env.get("spots", []))]
    stations = [Station(i, (float(s["x"]), float(s["y"])), float(s["radius"]))
                for i, s in enumerate(env.get("stations", []))]
    problems = []
    if not arena.free_point(*arena.charge_station):
        problems.append("charge station must lie on free floor inside the arena")
    for st in stations:
        if not arena.inside(*st.position):
            problems.append(f"station {st.id} lies outside the arena")
    if problems:
        raise ConfigError(problems)
    return World(arena, spots, stations)
