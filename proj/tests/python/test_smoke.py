"""Smoke tests for the python bindings: the main operations end to end."""

import os

import pytest

import rtdw

SCENARIO_DIR = os.environ.get("RTDW_SCENARIO_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "scenarios"))


def schema_path(name):
    return os.path.join(SCENARIO_DIR, name)


def test_validate_schema_ok():
    assert rtdw.validate_schema(schema_path("schema_stocks.json")) == []


def test_validate_schema_reports_violations(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(
        '{"dimensions": [{"name": "d", "attributes": [{"name": "id", "kind": "text"}],'
        ' "natural_key": "id"}],'
        ' "fact_tables": [{"name": "f", "grain": [], "measures": [], "duration_days": 0}]}'
    )
    codes = {v["code"] for v in rtdw.validate_schema(str(bad))}
    assert "GrainEmpty" in codes
    assert "NonPositiveDuration" in codes


@pytest.fixture
def engine():
    eng = rtdw.Engine(schema_path("schema_stocks.json"), cache_capacity=100)
    for i in range(3):
        eng.seed_dimension("symbol", f"SYM{i:03d}", {"sector": "tech"})
    return eng


def test_ingest_and_query(engine):
    engine.trickle("trades", ["SYM000"], [100.0, 5.0], event_time=1, load_time=1)
    engine.trickle("trades", ["SYM001"], [200.0, 7.0], event_time=2, load_time=2)
    res = engine.query("SUM(volume), COUNT(volume) FRESHNESS RealTime")
    assert res["rows"] == [[12.0, 2.0]]
    assert res["meta"]["epoch"] == 2

    grouped = engine.query("SUM(volume) BY symbol.code FRESHNESS RealTime")
    assert grouped["columns"] == ["symbol.code", "SUM(volume)"]
    assert grouped["rows"] == [["SYM000", 5.0], ["SYM001", 7.0]]


def test_staging_and_flip(engine):
    engine.begin_staging_cycle("trades", 0)
    engine.stage("trades", ["SYM000"], [10.0, 1.0], event_time=1, load_time=1)
    hidden = engine.query("COUNT(volume) FRESHNESS RealTime")
    assert hidden["rows"] == []  # staged rows are invisible
    report = engine.flip("trades", next_cycle_start=5)
    assert report["rows_moved"] == 1
    visible = engine.query("COUNT(volume) FRESHNESS RealTime")
    assert visible["rows"] == [[1.0]]
    assert engine.segment_count("trades") == 1


def test_cache_and_freshness_levels(engine):
    engine.trickle("trades", ["SYM000"], [1.0, 10.0], event_time=1, load_time=1)
    engine.cache_insert("trades", ["SYM001"], [1.0, 20.0], event_time=2, load_time=2)
    rt = engine.query("SUM(volume) FRESHNESS RealTime")
    near = engine.query("SUM(volume) FRESHNESS NearRealTime")
    assert rt["rows"] == [[30.0]]
    assert near["rows"] == [[10.0]]


def test_cache_overflow_raises(engine):
    for i in range(100):
        engine.cache_insert("trades", ["SYM000"], [1.0, 1.0], event_time=i, load_time=i)
    with pytest.raises(rtdw.EngineError):
        engine.cache_insert("trades", ["SYM000"], [1.0, 1.0], event_time=999, load_time=999)
    assert engine.cache_drain("trades", upto=50) == 51


def test_plan_routes(engine):
    rows = [([f"SYM{i % 3:03d}"], [1.0, 1.0], 1, 1) for i in range(50)]
    engine.load_batch("trades", rows)
    engine.trickle("trades", ["SYM000"], [1.0, 1.0], event_time=2, load_time=2)
    plan = engine.plan("SUM(volume) FRESHNESS RealTime")
    assert plan["route"] == "JIM"
    assert plan["estimated_hist_rows"] == 50
    assert plan["estimated_rt_rows"] == 1


def test_forced_route_agreement(engine):
    for i in range(10):
        engine.trickle("trades", [f"SYM{i % 3:03d}"], [float(i), 1.0], event_time=i + 1, load_time=i + 1)
    expected = engine.query("SUM(volume), AVG(price) FRESHNESS RealTime")["rows"]
    for route in ("direct", "jim", "reverse_jim"):
        got = engine.query("SUM(volume), AVG(price) FRESHNESS RealTime", route=route)
        assert got["rows"] == expected, route


def test_workload_determinism():
    a = rtdw.generate_workload("stocks", rate=5, duration=20, seed=9)
    b = rtdw.generate_workload("stocks", rate=5, duration=20, seed=9)
    assert a == b
    assert len(a) == 100
    with pytest.raises(rtdw.EngineError):
        rtdw.generate_workload("nope", rate=1, duration=1, seed=0)


def test_run_scenario_passes():
    report = rtdw.run_scenario(os.path.join(SCENARIO_DIR, "ticketing_demo.json"))
    assert report["passed"]
    assert report["oracle_mismatches"] == 0
    assert report["invariant_violations"] == 0
    assert report["queries_executed"] > 0
    assert report["strategies"][0]["fact"] == "tickets"


def test_wal_replay(tmp_path):
    wal = str(tmp_path / "engine.wal")
    eng = rtdw.Engine(schema_path("schema_stocks.json"), wal_path=wal)
    eng.seed_dimension("symbol", "SYM000", {"sector": "tech"})
    for i in range(5):
        eng.trickle("trades", ["SYM000"], [1.0, float(i)], event_time=i, load_time=i)
    epoch = eng.epoch()
    del eng  # flush on close

    fresh = rtdw.Engine(schema_path("schema_stocks.json"))
    fresh.seed_dimension("symbol", "SYM000", {"sector": "tech"})
    assert fresh.replay_wal(wal) == 5
    assert fresh.epoch() == epoch
    assert fresh.query("COUNT(volume) FRESHNESS RealTime")["rows"] == [[5.0]]
