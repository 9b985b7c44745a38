import csv
import json
import random

import pytest

from chapar import experiments as ex
from chapar.config import SCHEMA_VERSION
from chapar.world import ConfigError


@pytest.fixture(scope="module")
def exp1_small():
    return ex.run_experiment1([0, 1])


def test_exp1_cardinality(exp1_small):
    rows, table = exp1_small
    assert len(rows) == 4 * 2 * 2
    assert len(table) == 8
    assert [(t.env_id, t.method) for t in table] == [(e, m) for e in (1, 2, 3, 4) for m in ("m1", "m2")]
    assert all(t.run_count == 2 for t in table)


def test_exp1_row_invariants(exp1_small):
    rows, table = exp1_small
    for r in rows:
        assert 0 <= r["deployed_in_green"] <= 10
        assert r["green_spots_discovered"] <= r["env"] + 2
        if r["method"] == "m1":
            assert r["deployed_in_green"] <= 5
    for t in table:
        if t.method == "m1":
            assert t.avg_deployed_in_green.mean <= 5


def test_exp1_csv_bytes_repeat(tmp_path, exp1_small):
    rows, table = exp1_small
    a = ex.write_exp1(tmp_path / "a", rows, table)
    rows2, table2 = ex.run_experiment1([0, 1])
    b = ex.write_exp1(tmp_path / "b", rows2, table2)
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_empty_seed_list_rejected():
    with pytest.raises(ConfigError):
        ex.run_experiment1([])
    with pytest.raises(ConfigError):
        ex.run_experiment2([])


def test_exp2_shape_and_bounds():
    rows, table = ex.run_experiment2([0, 1])
    assert [t.method for t in table] == ["m1", "m2", "m3", "m4"]
    assert all(0 <= r["absorption_pct"] <= 100 for r in rows)
    assert all(0 <= t.pooled_pct <= 100 for t in table)


def test_method_config_adds_chapars_and_stations():
    c3 = ex.method_config(1, "m3", 0)
    assert c3.chapar_count == 3 and len(c3.environment["stations"]) == 3
    c4 = ex.method_config(1, "m4", 0)
    assert len(c4.environment["stations"]) == 1
    c1 = ex.method_config(2, "m1", 0)
    assert c1.chapar_count == 0 and c1.environment["stations"] == []
    greens = sum(s["color"] for s in c1.environment["spots"])
    assert greens == 4


def test_m3_stations_chain():
    sts = ex.stations_for("m3")
    for a, b in zip(sts, sts[1:]):
        d = ((a["x"] - b["x"]) ** 2 + (a["y"] - b["y"]) ** 2) ** 0.5
        assert d <= min(a["radius"], b["radius"])


def test_parse_seeds():
    assert ex.parse_seeds("3") == [0, 1, 2]
    assert ex.parse_seeds("4,7") == [4, 7]
    assert ex.parse_seeds(2) == [0, 1]


def test_summarize_known_values():
    s = ex.summarize([1.0, 2.0, 3.0, 4.0])
    assert s.mean == 2.5 and s.n == 4
    # t(0.975, 3) = 3.182446...
    assert abs((s.hi - s.mean) - 3.182446305284263 * s.std / 2) < 1e-12
    one = ex.summarize([5.0])
    assert (one.lo, one.hi) == (5.0, 5.0)


def test_aggregation_ignores_seed_order():
    rows = [{"env": 1, "method": "m1", "seed": i, "absorption_pct": v, "absorbed": 1,
             "reached_decision": 1} for i, v in enumerate([60.0, 100.0, 75.0, 80.0])]
    shuffled = rows[:]
    random.Random(1).shuffle(shuffled)
    a, b = ex.aggregate_exp2(rows)[0], ex.aggregate_exp2(shuffled)[0]
    assert a.absorption_pct.mean == pytest.approx(b.absorption_pct.mean)
    assert a.absorption_pct.std == pytest.approx(b.absorption_pct.std)


def test_report_shapes(tmp_path, exp1_small):
    rows, table = exp1_small
    ex.write_exp1(tmp_path, rows, table)
    r2, t2 = ex.run_experiment2([0])
    ex.write_exp2(tmp_path, r2, t2)
    out = tmp_path / "report"
    ex.report(tmp_path, out)
    for name in ("exp1_successful.csv", "exp1_discovered.csv", "exp1_deployed.csv"):
        with open(out / name) as f:
            lines = list(csv.reader(f))
        assert lines[0] == ["env", "m1", "m2"] and len(lines) == 5
    with open(out / "exp2_absorption.csv") as f:
        bars = list(csv.reader(f))
    assert bars[0] == ["method", "absorption_pct"] and [b[0] for b in bars[1:]] == ["m1", "m2", "m3", "m4"]
    assert "Experiment 2" in (out / "report.md").read_text()


def test_report_rejects_other_schema(tmp_path):
    rows = [{"env": 1, "method": "m1", "seed": 0, "absorption_pct": 100.0, "absorbed": 1,
             "reached_decision": 1}]
    ex.write_rows(tmp_path / "exp2_runs.csv", ex.EXP2_RUN_FIELDS, rows)
    text = (tmp_path / "exp2_runs.csv").read_text()
    (tmp_path / "exp2_runs.csv").write_text(text.replace(f",{SCHEMA_VERSION}\n", ",99\n"))
    with pytest.raises(ex.SchemaMismatch):
        ex.report(tmp_path, tmp_path / "out")


def test_report_needs_inputs(tmp_path):
    with pytest.raises(ConfigError):
        ex.report(tmp_path, tmp_path / "out")


def test_scenarios_load():
    for name in ("worker_failure", "station_partition", "central_station_failure"):
        sc = ex.load_scenario(name)
        assert sc.failure_events


def test_scenario_rejects_unknown_keys(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"schema_version": 1, "name": "x", "methods": ["m1"],
                             "failure_events": [{"at_tick": 0, "robot": 1}], "colour": 3}))
    with pytest.raises(ConfigError):
        ex.load_scenario(p)


def test_partition_evidence_small():
    sc = ex.Scenario(name="t", methods=["m3"], failure_events=[{"at_tick": 0, "station": 1}],
                     seeds=[0, 1], analysis="partition")
    rows, summary = ex.run_robustness(sc)
    fail = [r for r in rows if r["variant"] == "failure"]
    assert len(fail) == 2 and all(r["station_links"] == 0 for r in fail)
    assert summary["methods"]["m3"]["station_links"] == 0


def test_partition_sides_split_by_surviving_station():
    res = ex.run(ex.method_config(1, "m3", 0))
    sides = ex.partition_sides(res.log, 1)
    # middle column spots are equidistant from stations 0 and 2
    assert sorted(set(sides.values())) == [0, 2]
    assert len(sides) == 4
