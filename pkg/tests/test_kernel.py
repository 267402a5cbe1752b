import io
from collections import Counter

import pytest

from regionbound import trace as tr
from regionbound.errors import ConfigError

from conftest import build_scenario, run_scenario


def dump(trace):
    buf = io.StringIO()
    trace.write_jsonl(buf)
    return buf.getvalue()


def test_same_seed_gives_byte_identical_traces(any_protocol):
    sc = build_scenario(any_protocol)
    a = dump(run_scenario(sc, seed=5))
    b = dump(run_scenario(sc, seed=5))
    assert a == b


def test_different_seed_diverges():
    sc = build_scenario("logical_clocks")
    assert dump(run_scenario(sc, seed=5)) != dump(run_scenario(sc, seed=6))


def test_jsonl_round_trip(any_protocol):
    sc = build_scenario(any_protocol)
    trace = run_scenario(sc)
    text = dump(trace)
    again = tr.Trace.read_jsonl(io.StringIO(text))
    assert again.meta == trace.meta
    assert again.events == trace.events
    assert again.rows == trace.rows
    assert again.snapshots == trace.snapshots
    assert dump(again) == text


def test_every_process_acts_once_per_block():
    sc = build_scenario("logical_clocks")
    trace = run_scenario(sc)
    n = sc.n
    for start in range(0, sc.cfg.total_steps - n, n):
        block = [row[1] for row in trace.rows[start:start + n]]
        assert sorted(block) == list(range(n))


def test_every_process_acts_within_any_two_block_window():
    sc = build_scenario("logical_clocks")
    trace = run_scenario(sc)
    n = sc.n
    window = 2 * n - 1
    pids = [row[1] for row in trace.rows]
    for start in range(len(pids) - window + 1):
        assert set(pids[start:start + window]) == set(range(n))


def test_family_spend_stays_within_budget_per_region():
    sc = build_scenario("mutual_exclusion")
    trace = run_scenario(sc)
    budgets = {name: p.maxinc for name, p in sc.prog.families.items()}
    spent = Counter()
    for ev in trace.events:
        if ev[1] == tr.EV_CLOCK and ev[2] % sc.cfg.rs == 0:
            spent.clear()
        elif ev[1] == tr.EV_SPEND:
            spent[ev[2]] += ev[3]
            assert spent[ev[2]] <= budgets[ev[2]]


def test_fault_free_runs_never_clamp_a_write(any_protocol):
    # the point of the budget: without injected faults, every value a
    # process writes already sits inside the target window, so no write
    # is ever corrected down to the window floor
    sc = build_scenario(any_protocol)
    trace = run_scenario(sc)
    assert not sc.has_faults
    clamps = [ev for ev in trace.events
              if ev[1] in (tr.EV_WFREE, tr.EV_DCREATE) and ev[-1]]
    assert clamps == []


def test_messages_never_arrive_past_lifetime(any_protocol):
    sc = build_scenario(any_protocol)
    trace = run_scenario(sc)
    lifetime = trace.meta["lifetime_regions"]
    sent = {}
    g_region = trace.meta["start_region"]
    for ev in trace.events:
        if ev[1] == tr.EV_CLOCK:
            g_region = ev[3]
        elif ev[1] == tr.EV_SEND:
            sent[ev[2]] = ev[8]
        elif ev[1] == tr.EV_ARRIVE:
            assert g_region - sent[ev[2]] <= lifetime


def test_snapshots_bracket_the_run(any_protocol):
    sc = build_scenario(any_protocol)
    trace = run_scenario(sc)
    labels = {snap["label"] for snap in trace.snapshots.values()}
    assert {"start", "final"} <= labels
    assert trace.snapshots[0]["label"] == "start"
    assert trace.snapshots[sc.cfg.total_steps]["label"] == "final"


def test_boundary_snapshot_taken_when_requested():
    sc = build_scenario(
        "logical_clocks",
        faults={"mode": "campaign", "regions": [9], "seed": 3},
        run_regions=40)
    trace = run_scenario(sc)
    boundary = sc.derived["boundary_region"]
    labels = [snap["label"] for snap in trace.snapshots.values()]
    assert f"region:{boundary}" in labels


def test_meta_records_the_run_shape(any_protocol):
    sc = build_scenario(any_protocol)
    trace = run_scenario(sc, seed=123)
    meta = trace.meta
    assert meta["protocol"] == any_protocol
    assert meta["n"] == sc.n
    assert meta["seed"] == 123
    assert meta["rs"] == sc.cfg.rs
    assert meta["sptu"] == sc.cfg.sptu
    assert meta["total_steps"] == sc.cfg.total_steps
    assert meta["fault_count"] == 0


def test_run_config_rejects_low_start_region():
    with pytest.raises(ConfigError, match="start_region"):
        build_scenario("logical_clocks", start_region=3)
