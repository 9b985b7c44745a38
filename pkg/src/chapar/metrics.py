"""Per-run metrics, all computed from the event log alone.

Only a worker's first charge cycle (``cycle == 0``) counts: the experiments
measure the first foraging period and the decision step that follows it.
"""

from __future__ import annotations

from chapar.events import EventLog
from chapar.protocol import GREEN


def _worker_labels(log: EventLog) -> list[str]:
    return [f"w{i}" for i in range(1, int(log.header["worker_count"]) + 1)]


def _is_worker(label) -> bool:
    return isinstance(label, str) and label.startswith("w")


def first_forage_deploys(log: EventLog) -> dict[str, int]:
    out: dict[str, int] = {}
    for e in log.of_kind("deploy"):
        p = e.payload
        if _is_worker(e.agent) and p["phase"] == "forage" and p["cycle"] == 0:
            out.setdefault(e.agent, e.tick)
    return out


def threshold_crossings(log: EventLog) -> dict[str, int]:
    out: dict[str, int] = {}
    for e in log.of_kind("decide"):
        p = e.payload
        if p.get("threshold") and p["cycle"] == 0:
            out.setdefault(e.agent, e.tick)
    return out


def sampling_tick(log: EventLog) -> int:
    """Tick at which the last worker either deployed while foraging or ran out of forage energy."""
    ticks = list(first_forage_deploys(log).values()) + list(threshold_crossings(log).values())
    if not ticks:
        return int(log.header.get("ticks", log.events[-1].tick if log.events else 0))
    return max(ticks)


def successful_before_threshold(log: EventLog, worker_count: int | None = None) -> int:
    """Workers whose first deployment happened while foraging, on a spot of their target colour."""
    labels = set(_worker_labels(log)) if worker_count is None else {f"w{i}" for i in range(1, worker_count + 1)}
    first: dict[str, dict] = {}
    for e in log.of_kind("deploy"):
        if e.agent in labels and e.payload["cycle"] == 0:
            first.setdefault(e.agent, e.payload)
    return sum(1 for p in first.values() if p["phase"] == "forage" and p["color"] == p["target"])


def green_spots_discovered(log: EventLog, until: int | None = None) -> int:
    """Distinct green spots found by green-seeking foragers up to the sampling tick.

    A spot counts as found when a worker whose current target is green stands
    on it while foraging: it measures it, deploys in it, or is turned away.
    """
    if until is None:
        until = sampling_tick(log)
    found = set()
    for e in log.events:
        if e.tick > until:
            break
        if e.kind not in ("discovery", "deploy", "deny") or not _is_worker(e.agent):
            continue
        p = e.payload
        if (p["color"] == GREEN and p["target"] == GREEN and p["phase"] == "forage"
                and p["cycle"] == 0):
            found.add(p["spot"])
    return len(found)


def occupancy_at(log: EventLog, tick: int) -> dict[int, set]:
    """Replay deploy/leave/failure events through ``tick`` (inclusive)."""
    occ = {s["id"]: set() for s in log.header["spots"]}
    for e in log.events:
        if e.tick > tick:
            break
        if e.kind == "deploy":
            occ[e.payload["spot"]].add(e.agent)
        elif e.kind == "leave":
            occ[e.payload["spot"]].discard(e.agent)
        elif e.kind == "failure" and "freed_spot" in e.payload:
            occ[e.payload["freed_spot"]].discard(e.agent)
    return occ


def deployed_in_green(log: EventLog, at: int | None = None) -> int:
    if at is None:
        at = sampling_tick(log)
    colors = {s["id"]: s["color"] for s in log.header["spots"]}
    occ = occupancy_at(log, at)
    return sum(len(v) for sid, v in occ.items() if colors[sid] == GREEN)


def absorption_counts(log: EventLog) -> tuple[int, int]:
    """(absorbed, reached_decision) for the first decision step of each worker."""
    crossed = set(threshold_crossings(log))
    absorbed = set()
    for e in log.of_kind("deploy"):
        p = e.payload
        if e.agent in crossed and p["phase"] == "decision" and p["cycle"] == 0:
            absorbed.add(e.agent)
    return len(absorbed), len(crossed)


def absorption_percentage(log: EventLog) -> float:
    absorbed, crossed = absorption_counts(log)
    if crossed == 0:
        return 100.0
    return 100.0 * absorbed / crossed


def run_metrics(log: EventLog) -> dict:
    absorbed, crossed = absorption_counts(log)
    t = sampling_tick(log)
    return {
        "successful_before_threshold": successful_before_threshold(log),
        "green_spots_discovered": green_spots_discovered(log, t),
        "deployed_in_green": deployed_in_green(log, t),
        "sampling_tick": t,
        "absorption_pct": 100.0 if crossed == 0 else 100.0 * absorbed / crossed,
        "absorbed": absorbed,
        "reached_decision": crossed,
    }
