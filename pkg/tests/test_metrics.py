from chapar import metrics
from chapar.events import EventLog
from chapar.protocol import BLACK, GREEN

SPOTS = [{"id": 0, "center": [0.75, 0.75], "color": GREEN, "capacity": 3},
         {"id": 1, "center": [2.25, 0.75], "color": BLACK, "capacity": 3},
         {"id": 2, "center": [0.75, 2.25], "color": GREEN, "capacity": 3}]


def make_log(n=10):
    return EventLog({"worker_count": n, "spots": SPOTS, "stations": []})


def deploy(log, tick, w, spot, target, phase="forage", cycle=0):
    log.append(tick, f"w{w}", "deploy", {"spot": spot, "color": SPOTS[spot]["color"],
                                         "target": target, "phase": phase, "cycle": cycle})


def crossing(log, tick, w, cycle=0):
    log.append(tick, f"w{w}", "decide", {"threshold": True, "cycle": cycle, "attempts": 0})


def test_all_deploy_while_foraging():
    log = make_log()
    for w in range(1, 11):
        deploy(log, w, w, 0 if w <= 5 else 1, GREEN if w <= 5 else BLACK)
    assert metrics.successful_before_threshold(log) == 10


def test_no_deploys():
    log = make_log()
    assert metrics.successful_before_threshold(log) == 0
    assert metrics.absorption_percentage(log) == 100.0
    assert metrics.deployed_in_green(log, 10) == 0


def test_wrong_colour_or_later_cycle_not_successful():
    log = make_log()
    deploy(log, 3, 1, 1, GREEN)
    crossing(log, 250, 3)
    deploy(log, 300, 3, 0, GREEN, phase="decision")
    deploy(log, 900, 2, 0, GREEN, cycle=1)
    assert metrics.successful_before_threshold(log) == 0


def test_absorption_three_of_four():
    log = make_log()
    for w in (1, 2, 3, 4):
        crossing(log, 250, w)
    for w in (1, 2, 3):
        deploy(log, 260 + w, w, 0, GREEN, phase="decision")
    assert metrics.absorption_counts(log) == (3, 4)
    assert metrics.absorption_percentage(log) == 75.0


def test_second_cycle_decisions_ignored():
    log = make_log()
    crossing(log, 250, 1)
    crossing(log, 900, 2, cycle=1)
    deploy(log, 950, 2, 0, GREEN, phase="decision", cycle=1)
    assert metrics.absorption_counts(log) == (0, 1)


def test_green_found_only_by_green_foragers_until_sampling():
    log = make_log()
    log.append(5, "w1", "discovery", {"spot": 0, "color": GREEN, "target": GREEN,
                                      "phase": "forage", "cycle": 0})
    log.append(6, "w6", "discovery", {"spot": 2, "color": GREEN, "target": BLACK,
                                      "phase": "forage", "cycle": 0})
    log.append(9, "w2", "deny", {"spot": 0, "color": GREEN, "target": GREEN,
                                 "phase": "forage", "cycle": 0})
    crossing(log, 250, 3)
    log.append(400, "w4", "discovery", {"spot": 2, "color": GREEN, "target": GREEN,
                                        "phase": "forage", "cycle": 0})
    assert metrics.sampling_tick(log) == 250
    assert metrics.green_spots_discovered(log) == 1
    assert metrics.green_spots_discovered(log, until=400) == 2


def test_deployed_in_green_replays_leaves_and_failures():
    log = make_log()
    deploy(log, 10, 1, 0, GREEN)
    deploy(log, 11, 2, 0, GREEN)
    deploy(log, 12, 3, 2, GREEN)
    deploy(log, 13, 6, 1, BLACK)
    log.append(20, "w1", "leave", {"spot": 0})
    log.append(30, "w3", "failure", {"target": "robot", "freed_spot": 2})
    assert metrics.deployed_in_green(log, 15) == 3
    assert metrics.deployed_in_green(log, 25) == 2
    assert metrics.deployed_in_green(log, 30) == 1
    assert metrics.occupancy_at(log, 30) == {0: {"w2"}, 1: {"w6"}, 2: set()}


def test_sampling_tick_is_last_deploy_or_crossing():
    log = make_log()
    deploy(log, 40, 1, 0, GREEN)
    crossing(log, 250, 2)
    crossing(log, 262, 3)
    deploy(log, 300, 3, 0, GREEN, phase="decision")
    assert metrics.sampling_tick(log) == 262


def test_run_metrics_bounds():
    log = make_log()
    crossing(log, 250, 1)
    m = metrics.run_metrics(log)
    assert 0 <= m["absorption_pct"] <= 100
    assert m["deployed_in_green"] <= 10
