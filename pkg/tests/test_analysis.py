"""Interval geometry, trace scans, and the counter-sizing sweep."""
import copy
import io

import pytest
from hypothesis import given, settings, strategies as st

from regionbound import analysis, scenario
from regionbound import trace as tr
from regionbound.counters import CounterParams
from regionbound.errors import ConfigError

from conftest import build_scenario, run_scenario, scenario_doc


# -- interval geometry -------------------------------------------------------


def test_interval_index_frozen_examples():
    narrow = CounterParams(maxinc=1, max_r=0)  # cycle spans 11 regions
    assert [analysis.interval_index(r, narrow) for r in (0, 3, 4, 7, 8)] \
        == [0, 0, 1, 1, 2]
    wide = CounterParams(maxinc=5, max_r=4)  # cycle spans 23 regions
    assert analysis.interval_index(7, wide) == 0
    assert analysis.interval_index(8, wide) == 1


def test_convergence_boundary_single_family():
    fams = {"f": CounterParams(maxinc=1, max_r=0)}
    assert analysis.convergence_boundary(fams, 5) == 15


def test_convergence_boundary_takes_the_slowest_family():
    fams = {"fast": CounterParams(maxinc=1, max_r=0),
            "slow": CounterParams(maxinc=1, max_r=6)}
    b = analysis.convergence_boundary(fams, 9)
    for p in fams.values():
        assert (analysis.interval_index(b, p)
                >= analysis.interval_index(9, p) + 3)
    assert b == analysis.convergence_boundary({"slow": fams["slow"]}, 9)


@settings(max_examples=200, deadline=None)
@given(st.integers(min_value=0, max_value=500),
       st.integers(min_value=0, max_value=8),
       st.integers(min_value=1, max_value=20))
def test_convergence_boundary_is_tight(fstop, max_r, maxinc):
    fams = {"f": CounterParams(maxinc=maxinc, max_r=max_r)}
    b = analysis.convergence_boundary(fams, fstop)
    p = fams["f"]
    want = analysis.interval_index(fstop, p) + 3
    assert analysis.interval_index(b, p) >= want
    assert b == fstop + 1 or analysis.interval_index(b - 1, p) < want


# -- scans on real and doctored traces ---------------------------------------


def test_closure_check_passes_a_clean_run(any_protocol):
    sc = build_scenario(any_protocol)
    trace = run_scenario(sc)
    report = analysis.closure_check(sc.prog, trace)
    assert report.ok
    assert [r.name for r in report.results] == ["closure-replay"]


def test_closure_check_refuses_faulted_traces():
    doc = scenario_doc("logical_clocks", faults={
        "mode": "list",
        "entries": [{"when_kind": "region", "when": 10,
                     "kind": "overwrite_free", "target": "cl",
                     "pid": 0, "value": 7}],
    })
    sc = scenario.parse(doc)
    trace = run_scenario(sc)
    with pytest.raises(ConfigError, match="fault-free"):
        analysis.closure_check(sc.prog, trace)


def test_fault_stop_region_needs_faults():
    sc = build_scenario("logical_clocks")
    with pytest.raises(ConfigError, match="no faults"):
        analysis.fault_stop_region(run_scenario(sc))


def test_convergence_check_on_a_campaign():
    doc = scenario_doc("mutual_exclusion", faults={
        "mode": "campaign", "regions": [14, 15], "seed": 3, "per_family": 1,
    }, run_regions=46)
    sc = scenario.parse(doc)
    trace = run_scenario(sc)
    report = analysis.convergence_check(sc.prog, trace)
    assert report.ok, "\n".join(report.lines())
    names = {r.name for r in report.results}
    assert {"free-containment", "suffix-replay"} <= names


def test_snapshot_step_for_region_finds_the_boundary_label():
    doc = scenario_doc("logical_clocks", faults={
        "mode": "list",
        "entries": [{"when_kind": "region", "when": 10,
                     "kind": "overwrite_free", "target": "cl",
                     "pid": 1, "value": 3}],
    })
    sc = scenario.parse(doc)
    trace = run_scenario(sc)
    boundary = sc.derived["boundary_region"]
    step = analysis.snapshot_step_for_region(trace, boundary)
    assert step in trace.snapshots
    assert trace.snapshots[step]["label"] == f"region:{boundary}"
    assert analysis.snapshot_step_for_region(trace, boundary + 999) is None


def test_region_gap_scan_without_drift_is_zero():
    sc = build_scenario("logical_clocks", drift_policy="none")
    trace = run_scenario(sc)
    assert analysis.max_region_gap(trace) == 0


def test_region_gap_scan_with_drift_stays_within_one():
    sc = build_scenario("logical_clocks")
    trace = run_scenario(sc)
    report = analysis.scan_region_gaps(trace, 1)
    assert report.ok


def test_msg_lifetime_scan_passes_real_runs(any_protocol):
    sc = build_scenario(any_protocol)
    report = analysis.scan_msg_lifetime(run_scenario(sc))
    assert report.ok


def test_msg_lifetime_scan_catches_a_stale_arrival():
    sc = build_scenario("mutual_exclusion")
    trace = run_scenario(sc)
    doctored = copy.deepcopy(trace)
    arrived = {ev[2] for ev in doctored.events if ev[1] == tr.EV_ARRIVE}
    for i, ev in enumerate(doctored.events):
        if ev[1] == tr.EV_SEND and ev[2] in arrived:
            doctored.events[i] = ev[:9] + (0,) + ev[10:]
            break
    report = analysis.scan_msg_lifetime(doctored)
    assert not report.ok


def test_dep_lifetime_scan_passes_real_runs(any_protocol):
    sc = build_scenario(any_protocol)
    report = analysis.scan_dep_lifetimes(sc.prog, run_scenario(sc))
    assert report.ok


def test_dep_lifetime_scan_notes_runs_without_cells():
    sc = build_scenario("logical_clocks")
    report = analysis.scan_dep_lifetimes(sc.prog, run_scenario(sc))
    assert "no dependent cell" in report.results[0].detail


# -- sizing ------------------------------------------------------------------


def test_lifetime_regions_worked_examples():
    assert analysis.lifetime_regions_for(3600, 100) == 36
    assert analysis.lifetime_regions_for(1, 100) == 1
    assert analysis.lifetime_regions_for(100, 100) == 1
    assert analysis.lifetime_regions_for(101, 100) == 2
    with pytest.raises(ConfigError):
        analysis.lifetime_regions_for(0, 100)


def test_sweep_row_count_and_determinism():
    rows = analysis.sweep(100, [900, 1800, 3600], [1, 10, 100])
    assert len(rows) == 9
    assert rows == analysis.sweep(100, [900, 1800, 3600], [1, 10, 100])


def test_sweep_bits_grow_monotonically():
    rows = analysis.sweep(50, [100, 200, 400, 800], [1, 4, 16])
    by_rate = {}
    by_delay = {}
    for row in rows:
        by_rate.setdefault(row["rate"], []).append(row["bits"])
        by_delay.setdefault(row["delay"], []).append(row["bits"])
    for bits in by_rate.values():
        assert bits == sorted(bits)
    for bits in by_delay.values():
        assert bits == sorted(bits)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=2, max_value=500),
       st.integers(min_value=1, max_value=10 ** 6),
       st.integers(min_value=1, max_value=10 ** 9))
def test_doubling_the_delay_costs_at_most_two_bits(rs, delay, rate):
    one, two = analysis.sweep(rs, [delay, 2 * delay], [rate])
    assert two["bits"] - one["bits"] <= 2


def test_sweep_rejects_bad_grid():
    with pytest.raises(ConfigError):
        analysis.sweep(0, [10], [1])
    with pytest.raises(ConfigError):
        analysis.sweep(10, [10], [0])


def test_sweep_csv_shape():
    rows = analysis.sweep(100, [900], [1, 10])
    buf = io.StringIO()
    analysis.write_sweep_csv(rows, buf)
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == 3
    assert lines[0].split(",") == list(rows[0])
