"""Batch harness for the two experiments and the failure-injection sweeps."""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from scipy import stats

from chapar.config import SCHEMA_VERSION, FailureEvent, SimConfig, load_environment, load_json
from chapar.engine import RunResult, run
from chapar.world import ConfigError

DATA = Path(__file__).parent / "data"
EXP1_ENVS = (1, 2, 3, 4)
EXP1_METHODS = ("m1", "m2")
EXP2_ENV = 1
EXP2_METHODS = ("m1", "m2", "m3", "m4")
EXP1_METRICS = ("successful_before_threshold", "green_spots_discovered", "deployed_in_green")
DEFAULT_SEEDS = 30
PAPER_SEEDS = 10
# every first decision step has resolved by forage + work budget; leave headroom
EXPERIMENT_MAX_TICKS = 1000


class RunError(RuntimeError):
    def __init__(self, env, method, seed, cause):
        super().__init__(f"env {env} method {method} seed {seed}: {cause}")
        self.env, self.method, self.seed, self.cause = env, method, seed, cause


def stations_for(method: str) -> list[dict]:
    data = load_json(DATA / "stations.json")
    return [dict(s) for s in data.get(method, [])]


def method_config(env: int | str | dict = 1, method: str = "m1", seed: int = 0,
                  base: SimConfig | None = None, **overrides) -> SimConfig:
    """Config for ``method`` on a shipped environment, with chapars/stations added for m3/m4."""
    if isinstance(env, dict):
        environment = json.loads(json.dumps(env))
    else:
        environment = load_environment(f"env{env}" if isinstance(env, int) else env)
    environment["stations"] = stations_for(method)
    chapars = 3 if method in ("m3", "m4") else 0
    if base is None:
        cfg = SimConfig(environment=environment, method=method, chapar_count=chapars,
                        seed=seed, max_ticks=EXPERIMENT_MAX_TICKS)
    else:
        cfg = base.replace(environment=environment, method=method, chapar_count=chapars, seed=seed)
    if overrides:
        cfg = cfg.replace(**overrides)
    cfg.validate()
    return cfg


def parse_seeds(value) -> list[int]:
    """``"30"`` -> 0..29, ``"3,5,8"`` -> [3, 5, 8]."""
    if isinstance(value, int):
        return list(range(value))
    if isinstance(value, (list, tuple)):
        return [int(s) for s in value]
    value = str(value).strip()
    if "," in value:
        return [int(s) for s in value.split(",") if s.strip()]
    return list(range(int(value)))


def _run_one(cfg: SimConfig, env) -> RunResult:
    try:
        return run(cfg)
    except Exception as e:  # identify the failing run, keep the cause
        raise RunError(env, cfg.method, cfg.seed, e) from e


# ---------------------------------------------------------------- aggregation

@dataclass
class Summary:
    mean: float
    std: float
    lo: float
    hi: float
    n: int


def summarize(values: Sequence[float], confidence: float = 0.95) -> Summary:
    vals = [float(v) for v in values]
    n = len(vals)
    if n == 0:
        raise ValueError("no values to summarize")
    mean = math.fsum(vals) / n
    if n == 1:
        return Summary(mean, 0.0, mean, mean, 1)
    std = statistics.stdev(vals)
    half = stats.t.ppf(0.5 + confidence / 2, n - 1) * std / math.sqrt(n)
    return Summary(mean, std, mean - half, mean + half, n)


@dataclass
class Exp1Metrics:
    env_id: int
    method: str
    avg_successful_before_threshold: Summary
    avg_green_spots_discovered: Summary
    avg_deployed_in_green: Summary
    run_count: int


@dataclass
class Exp2Metrics:
    method: str
    absorption_pct: Summary
    run_count: int
    pooled_pct: float


def run_experiment1(seeds: Iterable[int], base: SimConfig | None = None,
                    envs=EXP1_ENVS, methods=EXP1_METHODS):
    """Returns ``(per-run rows, aggregate rows)``; rows are ordered by (env, method, seed)."""
    seeds = sorted(parse_seeds(seeds) if not isinstance(seeds, list) else seeds)
    if not seeds:
        raise ConfigError("experiment needs at least one seed")
    rows = []
    for env in envs:
        for method in methods:
            for seed in seeds:
                res = _run_one(method_config(env, method, seed, base), env)
                m = res.metrics
                rows.append({"env": env, "method": method, "seed": seed,
                             **{k: m[k] for k in EXP1_METRICS}})
    return rows, aggregate_exp1(rows)


def aggregate_exp1(rows) -> list[Exp1Metrics]:
    out = []
    keys = sorted({(r["env"], r["method"]) for r in rows})
    for env, method in keys:
        sel = [r for r in rows if r["env"] == env and r["method"] == method]
        out.append(Exp1Metrics(
            env_id=env, method=method,
            avg_successful_before_threshold=summarize([r["successful_before_threshold"] for r in sel]),
            avg_green_spots_discovered=summarize([r["green_spots_discovered"] for r in sel]),
            avg_deployed_in_green=summarize([r["deployed_in_green"] for r in sel]),
            run_count=len(sel)))
    return out


def run_experiment2(seeds: Iterable[int], base: SimConfig | None = None,
                    methods=EXP2_METHODS, env=EXP2_ENV, failure_events=None):
    seeds = sorted(parse_seeds(seeds) if not isinstance(seeds, list) else seeds)
    if not seeds:
        raise ConfigError("experiment needs at least one seed")
    rows = []
    for method in methods:
        for seed in seeds:
            extra = {}
            if failure_events:
                extra["failure_events"] = [FailureEvent(**f) for f in failure_events]
            res = _run_one(method_config(env, method, seed, base, **extra), env)
            m = res.metrics
            rows.append({"env": env, "method": method, "seed": seed,
                         "absorption_pct": m["absorption_pct"], "absorbed": m["absorbed"],
                         "reached_decision": m["reached_decision"]})
    return rows, aggregate_exp2(rows)


def aggregate_exp2(rows) -> list[Exp2Metrics]:
    out = []
    for method in sorted({r["method"] for r in rows}):
        sel = [r for r in rows if r["method"] == method]
        absorbed = sum(r["absorbed"] for r in sel)
        reached = sum(r["reached_decision"] for r in sel)
        out.append(Exp2Metrics(method, summarize([r["absorption_pct"] for r in sel]), len(sel),
                               100.0 if reached == 0 else 100.0 * absorbed / reached))
    return out


# ---------------------------------------------------------------- csv io

EXP1_RUN_FIELDS = ["env", "method", "seed", *EXP1_METRICS, "schema_version"]
EXP2_RUN_FIELDS = ["env", "method", "seed", "absorption_pct", "absorbed", "reached_decision",
                   "schema_version"]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def write_rows(path, fields, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, SCHEMA_VERSION if k == "schema_version" else "")) for k in fields})


def write_exp1(out_dir, rows, table) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = out / "exp1_runs.csv"
    write_rows(runs, EXP1_RUN_FIELDS, rows)
    summary = out / "exp1_summary.csv"
    fields = ["env", "method", "run_count"]
    for m in EXP1_METRICS:
        fields += [f"{m}_mean", f"{m}_std", f"{m}_ci_lo", f"{m}_ci_hi"]
    srows = []
    for t in table:
        r = {"env": t.env_id, "method": t.method, "run_count": t.run_count}
        for m in EXP1_METRICS:
            s = getattr(t, f"avg_{m}")
            r.update({f"{m}_mean": s.mean, f"{m}_std": s.std, f"{m}_ci_lo": s.lo, f"{m}_ci_hi": s.hi})
        srows.append(r)
    write_rows(summary, fields + ["schema_version"], srows)
    return [runs, summary]


def write_exp2(out_dir, rows, table) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = out / "exp2_runs.csv"
    write_rows(runs, EXP2_RUN_FIELDS, rows)
    summary = out / "exp2_summary.csv"
    srows = [{"method": t.method, "run_count": t.run_count, "absorption_mean": t.absorption_pct.mean,
              "absorption_std": t.absorption_pct.std, "absorption_ci_lo": t.absorption_pct.lo,
              "absorption_ci_hi": t.absorption_pct.hi, "absorption_pooled": t.pooled_pct}
             for t in table]
    write_rows(summary, ["method", "run_count", "absorption_mean", "absorption_std",
                         "absorption_ci_lo", "absorption_ci_hi", "absorption_pooled",
                         "schema_version"], srows)
    return [runs, summary]


# ---------------------------------------------------------------- report

class SchemaMismatch(ValueError):
    pass


SERIES = {
    "successful_before_threshold": "exp1_successful.csv",
    "green_spots_discovered": "exp1_discovered.csv",
    "deployed_in_green": "exp1_deployed.csv",
}


def read_rows(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        v = r.get("schema_version")
        if v is None or v == "":
            raise SchemaMismatch(f"{path}: missing schema_version column")
        if int(v) != SCHEMA_VERSION:
            raise SchemaMismatch(f"{path}: schema_version {v}, expected {SCHEMA_VERSION}")
    return rows


def _num(v: str):
    f = float(v)
    return int(f) if f.is_integer() else f


def report(in_dir, out_dir) -> list[Path]:
    """Summary tables and plot series from the per-run CSVs found in ``in_dir``."""
    src, out = Path(in_dir), Path(out_dir)
    inputs = [p for p in (src / "exp1_runs.csv", src / "exp2_runs.csv") if p.exists()]
    if not inputs:
        raise ConfigError(f"no exp1_runs.csv or exp2_runs.csv in {src}")
    loaded = {p.name: read_rows(p) for p in inputs}
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    lines = ["# Results", ""]

    if "exp1_runs.csv" in loaded:
        rows = [{"env": int(r["env"]), "method": r["method"], "seed": int(r["seed"]),
                 **{k: _num(r[k]) for k in EXP1_METRICS}} for r in loaded["exp1_runs.csv"]]
        table = aggregate_exp1(rows)
        methods = sorted({t.method for t in table})
        envs = sorted({t.env_id for t in table})
        cell = {(t.env_id, t.method): t for t in table}
        for metric, name in SERIES.items():
            path = out / name
            with open(path, "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["env", *methods])
                for env in envs:
                    w.writerow([env, *(_fmt(getattr(cell[env, m], f"avg_{metric}").mean)
                                       if (env, m) in cell else "" for m in methods)])
            written.append(path)
        lines += ["## Experiment 1", "",
                  "| env | method | runs | successful | green found | deployed in green |",
                  "|---|---|---|---|---|---|"]
        for t in table:
            cells = [_ci(getattr(t, f"avg_{m}")) for m in EXP1_METRICS]
            lines.append(f"| {t.env_id} | {t.method} | {t.run_count} | " + " | ".join(cells) + " |")
        lines.append("")

    if "exp2_runs.csv" in loaded:
        rows = [{"env": int(r["env"]), "method": r["method"], "seed": int(r["seed"]),
                 "absorption_pct": float(r["absorption_pct"]), "absorbed": int(r["absorbed"]),
                 "reached_decision": int(r["reached_decision"])} for r in loaded["exp2_runs.csv"]]
        table = aggregate_exp2(rows)
        path = out / "exp2_absorption.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["method", "absorption_pct"])
            for t in table:
                w.writerow([t.method, _fmt(t.absorption_pct.mean)])
        written.append(path)
        lines += ["## Experiment 2", "", "| method | runs | absorption % (95% CI) | pooled % |",
                  "|---|---|---|---|"]
        for t in table:
            lines.append(f"| {t.method} | {t.run_count} | {_ci(t.absorption_pct)} | {t.pooled_pct:.1f} |")
        lines.append("")

    md = out / "report.md"
    md.write_text("\n".join(lines))
    written.append(md)
    return written


def _ci(s: Summary) -> str:
    return f"{s.mean:.2f} [{s.lo:.2f}, {s.hi:.2f}]"


# ---------------------------------------------------------------- robustness

@dataclass
class Scenario:
    name: str
    methods: list
    failure_events: list
    env: int = EXP2_ENV
    seeds: int | list = DEFAULT_SEEDS
    analysis: str = "absorption"  # or "partition"
    max_ticks: int = EXPERIMENT_MAX_TICKS
    run_to_max: bool = False


def load_scenario(path) -> Scenario:
    """Scenario JSON by path, or by the name of a shipped scenario."""
    if not Path(path).exists() and scenario_path(str(path)).exists():
        path = scenario_path(str(path))
    data = load_json(path)
    version = data.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"scenario schema_version {version!r}, expected {SCHEMA_VERSION}")
    known = set(Scenario.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
    try:
        sc = Scenario(**data)
    except TypeError as e:
        raise ConfigError(f"bad scenario: {e}") from None
    if sc.analysis not in ("absorption", "partition"):
        raise ConfigError(f"unknown analysis {sc.analysis!r}")
    if not sc.failure_events:
        raise ConfigError("scenario has no failure events")
    return sc


def partition_sides(log, failed_station: int) -> dict:
    """Spot key -> id of the surviving station strictly nearest to it.

    Spots equidistant from two surviving stations belong to neither side.
    """
    from chapar.protocol import spot_key

    alive = [s for s in log.header["stations"] if s["id"] != failed_station]
    sides = {}
    for sp in log.header["spots"]:
        cx, cy = sp["center"]
        d = sorted((math.dist((cx, cy), st["position"]), st["id"]) for st in alive)
        if len(d) == 1 or d[0][0] < d[1][0] - 1e-9:
            sides[spot_key(cx, cy)] = d[0][1]
    return sides


def partition_evidence(log, failed_station: int) -> dict:
    """What crossed the gap left by ``failed_station``, read from the log.

    ``station_links`` counts deliveries from one surviving station straight to
    another after the failure.  ``ferried`` lists syncs where a chapar handed a
    station a row it lacked, for a spot on another station's side.
    """
    fail_tick = None
    for e in log.of_kind("failure"):
        if e.agent == f"s{failed_station}":
            fail_tick = e.tick
    if fail_tick is None:
        raise ValueError(f"station {failed_station} never failed in this log")
    dead = f"s{failed_station}"
    links = 0
    dead_broadcasts = 0
    for e in log.of_kind("broadcast"):
        if e.tick < fail_tick or not e.agent.startswith("s"):
            continue
        if e.agent == dead:
            dead_broadcasts += 1
            continue
        links += sum(1 for r in e.payload["recipients"] if r.startswith("s") and r != e.agent)
    sides = partition_sides(log, failed_station)
    ferried = []
    for e in log.of_kind("sync"):
        p = e.payload
        if e.tick < fail_tick or not p.get("ok"):
            continue
        st, theirs = p["station"], p["station_msg"]
        for key in p["chapar_msg"].keys():
            side = sides.get(key)
            if side is not None and side != st and key not in theirs:
                ferried.append({"chapar": e.agent, "key": list(key), "side": side, "to": st,
                                "tick": e.tick})
    return {"fail_tick": fail_tick, "station_links": links, "dead_broadcasts": dead_broadcasts,
            "ferried": ferried}


ROBUST_FIELDS = ["scenario", "method", "variant", "seed", "absorption_pct", "absorbed",
                 "reached_decision", "station_links", "ferried_rows", "schema_version"]


def run_robustness(sc: Scenario):
    """Baseline and failure runs over the same seeds.  Returns ``(rows, summary)``."""
    seeds = parse_seeds(sc.seeds)
    if not seeds:
        raise ConfigError("scenario needs at least one seed")
    events = [FailureEvent(**f) for f in sc.failure_events]
    failed_stations = [ev.station for ev in events if ev.station is not None]
    rows = []
    for method in sc.methods:
        for variant, evs in (("baseline", []), ("failure", events)):
            for seed in seeds:
                cfg = method_config(sc.env, method, seed, max_ticks=sc.max_ticks, failure_events=evs)
                try:
                    res = run(cfg, stop_when_settled=not sc.run_to_max)
                except Exception as e:
                    raise RunError(sc.env, method, seed, e) from e
                m = res.metrics
                row = {"scenario": sc.name, "method": method, "variant": variant, "seed": seed,
                       "absorption_pct": m["absorption_pct"], "absorbed": m["absorbed"],
                       "reached_decision": m["reached_decision"]}
                if sc.analysis == "partition" and variant == "failure":
                    ev = partition_evidence(res.log, failed_stations[0])
                    row["station_links"] = ev["station_links"]
                    row["ferried_rows"] = len(ev["ferried"])
                rows.append(row)
    summary = {"scenario": sc.name, "analysis": sc.analysis, "seeds": len(seeds), "methods": {}}
    for method in sc.methods:
        base = [r["absorption_pct"] for r in rows if r["method"] == method and r["variant"] == "baseline"]
        fail = [r for r in rows if r["method"] == method and r["variant"] == "failure"]
        entry = {"baseline_absorption": summarize(base).mean,
                 "failure_absorption": summarize([r["absorption_pct"] for r in fail]).mean}
        entry["delta"] = entry["failure_absorption"] - entry["baseline_absorption"]
        if sc.analysis == "partition":
            entry["station_links"] = sum(r["station_links"] for r in fail)
            entry["ferried_fraction"] = sum(1 for r in fail if r["ferried_rows"] > 0) / len(fail)
        summary["methods"][method] = entry
    return rows, summary


def write_robustness(out_dir, rows, summary) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = out / f"robustness_{summary['scenario']}_runs.csv"
    write_rows(runs, ROBUST_FIELDS, rows)
    js = out / f"robustness_{summary['scenario']}_summary.json"
    js.write_text(json.dumps({"schema_version": SCHEMA_VERSION, **summary}, indent=2) + "\n")
    return [runs, js]


def scenario_path(name: str) -> Path:
    return DATA / "scenarios" / f"{name}.json"
