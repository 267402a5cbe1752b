"""Replay checks: the plain-integer reference must agree with recorded runs."""
import copy
import io

import pytest

from regionbound import analysis, scenario
from regionbound import trace as tr
from regionbound.oracle import OracleDivergence, Replayer

from conftest import build_scenario, run_scenario, scenario_doc


def replay(sc, trace, start=0):
    return Replayer(sc.prog, trace, start).run()


def test_clean_runs_replay_end_to_end(any_protocol):
    sc = build_scenario(any_protocol)
    trace = run_scenario(sc)
    assert replay(sc, trace) == sc.cfg.total_steps


def test_parsed_trace_replays_like_the_original():
    sc = build_scenario("mutual_exclusion")
    trace = run_scenario(sc)
    buf = io.StringIO()
    trace.write_jsonl(buf)
    again = tr.Trace.read_jsonl(io.StringIO(buf.getvalue()))
    assert replay(sc, again) == sc.cfg.total_steps


def test_tampered_event_field_is_caught():
    sc = build_scenario("logical_clocks")
    trace = run_scenario(sc)
    doctored = copy.deepcopy(trace)
    for i, ev in enumerate(doctored.events):
        if ev[1] == tr.EV_WFREE:
            doctored.events[i] = ev[:4] + (ev[4] + 1,) + ev[5:]
            break
    else:
        pytest.fail("run recorded no free-counter writes")
    with pytest.raises(OracleDivergence) as exc:
        replay(sc, doctored)
    assert "recorded event" in str(exc.value)


def test_deleted_event_is_caught():
    sc = build_scenario("diffusing")
    trace = run_scenario(sc)
    doctored = copy.deepcopy(trace)
    idx = next(i for i, ev in enumerate(doctored.events)
               if ev[1] == tr.EV_SEND)
    del doctored.events[idx]
    with pytest.raises(OracleDivergence):
        replay(sc, doctored)


def test_tampered_snapshot_is_caught():
    sc = build_scenario("vector_clocks")
    trace = run_scenario(sc)
    doctored = copy.deepcopy(trace)
    final = doctored.snapshots[sc.cfg.total_steps]
    name, res = next(iter(final["procs"][0]["free"].items()))
    final["procs"][0]["free"][name] = res + 1
    with pytest.raises(OracleDivergence) as exc:
        replay(sc, doctored)
    assert exc.value.step == sc.cfg.total_steps


def test_fault_inside_the_segment_diverges():
    doc = scenario_doc("logical_clocks", faults={
        "mode": "list",
        "entries": [{"when_kind": "region", "when": 10,
                     "kind": "overwrite_free", "target": "cl",
                     "pid": 0, "value": 7}],
    })
    sc = scenario.parse(doc)
    trace = run_scenario(sc)
    assert any(ev[1] == tr.EV_FAULT for ev in trace.events)
    with pytest.raises(OracleDivergence) as exc:
        replay(sc, trace)
    assert "fault" in str(exc.value)


def test_suffix_after_faults_replays_clean():
    doc = scenario_doc("logical_clocks", faults={
        "mode": "list",
        "entries": [{"when_kind": "region", "when": 10,
                     "kind": "overwrite_free", "target": "cl",
                     "pid": 0, "value": 7}],
    })
    sc = scenario.parse(doc)
    trace = run_scenario(sc)
    boundary = sc.derived["boundary_region"]
    start = analysis.snapshot_step_for_region(trace, boundary)
    assert start is not None
    checked = replay(sc, trace, start=start)
    assert checked == sc.cfg.total_steps - start


def test_replay_requires_a_snapshot_at_the_start_step():
    sc = build_scenario("logical_clocks")
    trace = run_scenario(sc)
    with pytest.raises(ValueError):
        Replayer(sc.prog, trace, start_step=17)
