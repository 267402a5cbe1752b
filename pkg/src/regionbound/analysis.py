"""Trace verification: replay equivalence, stabilization scans, sizing.

Two headline checks mirror the two halves of the correctness claim. On a
fault-free run, :func:`closure_check` replays the whole trace against the
unbounded reference and demands pointwise agreement modulo each family's
bound. On a faulted run, :func:`convergence_check` verifies that free
counters fit their windows again within three region advances after the
last fault, and that the suffix starting at the third interval boundary
replays cleanly from the lifted bounded state.

The remaining scans enforce the structural invariants every run must keep:
dependent cells never outlive their declared forward reach, clocks never
spread more than one region apart, and no message is seen past its
lifetime.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Optional

from . import trace as tr
from .counters import CounterParams, bits_required, fits_dep, fits_free, maxbound_of
from .errors import ConfigError
from .oracle import OracleDivergence, Replayer


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


class VerificationReport:
    def __init__(self):
        self.results: list[CheckResult] = []

    def add(self, name: str, ok: bool, detail: str) -> CheckResult:
        res = CheckResult(name, ok, detail)
        self.results.append(res)
        return res

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)

    def lines(self) -> list[str]:
        return [r.line() for r in self.results]


# --- interval geometry ------------------------------------------------------


def interval_index(region: int, params: CounterParams) -> int:
    """Which third of the modulus cycle ``region`` falls in.

    The window's floor advances 3*maxinc per region and the modulus is
    3*maxinc*(11 + 3*max_r), so the floor wraps every 11 + 3*max_r regions
    and one interval (a third of the modulus) spans that many thirds of a
    region span.
    """
    return 3 * region // (11 + 3 * params.max_r)


def convergence_boundary(families: dict[str, CounterParams], fstop: int) -> int:
    """First region at which every family is three full intervals past the
    last fault, the point from which suffix replay must succeed."""
    region = fstop + 1
    while any(interval_index(region, p) < interval_index(fstop, p) + 3
              for p in families.values()):
        region += 1
    return region


# --- replay checks ----------------------------------------------------------


def closure_check(prog, trace: tr.Trace,
                  report: Optional[VerificationReport] = None) -> VerificationReport:
    """Replay a fault-free trace from its initial state; any residue that
    disagrees with the unbounded reference is a failure."""
    if trace.has_faults():
        raise ConfigError("closure check applies to fault-free runs only; "
                          "this trace records fault injections")
    if report is None:
        report = VerificationReport()
    try:
        steps = Replayer(prog, trace, 0).run()
    except OracleDivergence as exc:
        report.add("closure-replay", False,
                   f"diverges at step {exc.step}: {exc.detail}")
    else:
        report.add("closure-replay", True,
                   f"{steps} steps match the unbounded reference")
    return report


def snapshot_step_for_region(trace: tr.Trace, region: int) -> Optional[int]:
    """Step of the snapshot taken when the global clock entered ``region``,
    or None if the run never got there."""
    for step, snap in sorted(trace.snapshots.items()):
        if snap.get("label") == f"region:{region}":
            return step
    return None


def suffix_check(prog, trace: tr.Trace, boundary_region: int,
                 report: Optional[VerificationReport] = None) -> VerificationReport:
    """Replay the trace suffix from the snapshot taken at entry to
    ``boundary_region``; used for the post-fault equivalence half of
    convergence."""
    if report is None:
        report = VerificationReport()
    start = snapshot_step_for_region(trace, boundary_region)
    if start is None:
        report.add("suffix-replay", False,
                   f"run never reached region {boundary_region}; no suffix "
                   "to check (trace does not stabilize within its horizon)")
        return report
    try:
        steps = Replayer(prog, trace, start).run()
    except OracleDivergence as exc:
        report.add("suffix-replay", False,
                   f"suffix from step {start} (region {boundary_region}) "
                   f"diverges at step {exc.step}: {exc.detail}")
    else:
        report.add("suffix-replay", True,
                   f"suffix from step {start} (region {boundary_region}), "
                   f"{steps} steps match the unbounded reference")
    return report


# --- scans ------------------------------------------------------------------


def fault_stop_region(trace: tr.Trace) -> int:
    """Last global region in which any fault fired (applied or not)."""
    stop = None
    for ev in trace.iter_events(tr.EV_FAULT):
        g = ev[5]["g_region"]
        stop = g if stop is None else max(stop, g)
    if stop is None:
        raise ConfigError("trace records no faults; nothing to derive "
                          "fault_stop_region from")
    return stop


def scan_free_containment(prog, trace: tr.Trace, fstop: int,
                          bound_regions: int = 3,
                          report: Optional[VerificationReport] = None
                          ) -> VerificationReport:
    """Check that once a process is ``bound_regions`` past the last fault,
    each of its free counters has some in-window value congruent to the
    stored residue, at every state change from then on."""
    if report is None:
        report = VerificationReport()
    fams = {name: prog.families[fam] for name, fam in prog.free_cells.items()}
    snap0 = trace.snapshots[min(trace.snapshots)]
    regions = list(snap0["regions"])
    free = [dict(p["free"]) for p in snap0["procs"]]
    settle = fstop + bound_regions

    def bad(step, pid, name, res):
        report.add("free-containment", False,
                   f"step {step}: pid {pid} free counter {name!r} residue "
                   f"{res} has no value in its window at region "
                   f"{regions[pid]} (>= {settle} = fault stop + "
                   f"{bound_regions})")

    for ev in trace.events:
        kind = ev[1]
        if kind == tr.EV_RC:
            pid, new_region, changes = ev[2], ev[3], ev[4]
            regions[pid] = new_region
            for slot, _coll, key, _old, new_res, _lift, _corr in changes:
                if slot == "free":
                    free[pid][key] = new_res
            if new_region >= settle:
                for name, res in free[pid].items():
                    if not fits_free(res, new_region, fams[name]):
                        bad(ev[0], pid, name, res)
                        return report
        elif kind == tr.EV_WFREE:
            pid, name, res = ev[2], ev[3], ev[4]
            free[pid][name] = res
            if regions[pid] >= settle and not fits_free(res, regions[pid],
                                                        fams[name]):
                bad(ev[0], pid, name, res)
                return report
        elif kind == tr.EV_FAULT:
            if ev[2] == "overwrite_free" and ev[6]:
                pid, name = ev[3], ev[4]
                free[pid][name] = ev[5]["new"]
                if regions[pid] >= settle and not fits_free(
                        free[pid][name], regions[pid], fams[name]):
                    bad(ev[0], pid, name, free[pid][name])
                    return report
    report.add("free-containment", True,
               f"all free counters fit their windows from {bound_regions} "
               f"regions after the last fault (region {fstop})")
    return report


def convergence_check(prog, trace: tr.Trace, fstop: Optional[int] = None,
                      slack: int = 1) -> VerificationReport:
    """Both halves of the stabilization claim for a faulted run.

    ``slack`` scales the settle bounds for exploratory use; the strict
    bounds (slack=1: 3 regions, 3 intervals) are what acceptance uses.
    """
    if fstop is None:
        fstop = fault_stop_region(trace)
    report = VerificationReport()
    scan_free_containment(prog, trace, fstop, bound_regions=3 * slack,
                          report=report)
    boundary = convergence_boundary(prog.families, fstop)
    if slack > 1:
        for _ in range(slack - 1):
            boundary = convergence_boundary(prog.families, boundary)
    suffix_check(prog, trace, boundary, report=report)
    return report


def scan_dep_lifetimes(prog, trace: tr.Trace,
                       report: Optional[VerificationReport] = None
                       ) -> VerificationReport:
    """No dependent cell may be seen alive more than its collection's
    declared forward reach (r_f) regions past its creation region."""
    if report is None:
        report = VerificationReport()
    caps = {coll: decl.dep.r_f for coll, decl in prog.colls.items()}
    snap0 = trace.snapshots[min(trace.snapshots)]
    regions = list(snap0["regions"])
    live: dict[tuple[int, str, int], int] = {}
    for pid, pstate in enumerate(snap0["procs"]):
        for coll, rows in pstate["colls"].items():
            for cid, _res, c_local, _cg, _tag in rows:
                live[(pid, coll, cid)] = c_local
    worst = -1

    def age_ok(step, pid, coll, cid, region) -> bool:
        nonlocal worst
        age = region - live[(pid, coll, cid)]
        worst = max(worst, age)
        if age > caps[coll]:
            report.add("dep-lifetime", False,
                       f"step {step}: pid {pid} cell {cid} in {coll!r} alive "
                       f"{age} regions after creation, past the declared "
                       f"forward reach {caps[coll]}")
            return False
        return True

    for ev in trace.events:
        kind = ev[1]
        if kind == tr.EV_RC:
            pid, new_region = ev[2], ev[3]
            regions[pid] = new_region
            for (p, coll, cid) in list(live):
                if p == pid and not age_ok(ev[0], pid, coll, cid, new_region):
                    return report
        elif kind == tr.EV_DCREATE:
            live[(ev[2], ev[3], ev[4])] = ev[7]
        elif kind == tr.EV_DREMOVE:
            live.pop((ev[2], ev[3], ev[4]), None)
        elif kind == tr.EV_FAULT:
            fk, pid, target, detail, applied = ev[2], ev[3], ev[4], ev[5], ev[6]
            if not applied:
                continue
            if fk == "insert_dep":
                live[(pid, target, detail["cid"])] = detail["created_local"]
            elif fk == "delete_dep":
                live.pop((pid, detail["coll"], detail["cid"]), None)
    if worst < 0:
        report.add("dep-lifetime", True,
                   "no dependent cell crossed a region boundary")
    else:
        report.add("dep-lifetime", True,
                   f"max observed cell age {worst} regions, within every "
                   "collection's declared forward reach")
    return report


def max_region_gap(trace: tr.Trace) -> int:
    """Largest observed region spread, process-to-process or
    process-to-global, at any clock tick."""
    gap = 0

    def probe(regions, g_region):
        spread = max(regions) - min(regions)
        to_global = max(abs(r - g_region) for r in regions)
        return max(spread, to_global)

    for snap in trace.snapshots.values():
        gap = max(gap, probe(snap["regions"], snap["g_region"]))
    for ev in trace.iter_events(tr.EV_CLOCK):
        gap = max(gap, probe(ev[5], ev[3]))
    return gap


def scan_region_gaps(trace: tr.Trace, expected_max: int,
                     report: Optional[VerificationReport] = None
                     ) -> VerificationReport:
    if report is None:
        report = VerificationReport()
    gap = max_region_gap(trace)
    report.add("region-gaps", gap <= expected_max,
               f"max inter-process region gap {gap} (allowed {expected_max})")
    return report


def scan_msg_lifetime(trace: tr.Trace,
                      report: Optional[VerificationReport] = None
                      ) -> VerificationReport:
    """No message may arrive or be consumed once the global region has moved
    more than lifetime_regions past its send region."""
    if report is None:
        report = VerificationReport()
    lifetime = trace.meta["lifetime_regions"]
    snap0 = trace.snapshots[min(trace.snapshots)]
    g_region = snap0["g_region"]
    sent: dict[int, int] = {}
    for rows in [snap0["in_flight"], *snap0["inboxes"]]:
        for row in rows:
            sent[row[0]] = row[8]
    for ev in trace.events:
        kind = ev[1]
        if kind == tr.EV_CLOCK:
            g_region = ev[3]
        elif kind == tr.EV_SEND:
            sent[ev[2]] = ev[9]
        elif kind in (tr.EV_ARRIVE, tr.EV_CONSUME):
            mid = ev[2]
            if g_region > sent[mid] + lifetime:
                report.add("msg-lifetime", False,
                           f"step {ev[0]}: message {mid} {kind} at global "
                           f"region {g_region}, sent at {sent[mid]}, past "
                           f"lifetime {lifetime}")
                return report
    report.add("msg-lifetime", True,
               f"no message outlived its {lifetime}-region lifetime")
    return report


# --- sizing -----------------------------------------------------------------


def lifetime_regions_for(delay: int, rs: int) -> int:
    """Worst-case region-boundary crossings for a message in flight up to
    ``delay`` time units: a send at the last instant of a region crosses
    ceil(delay / rs) boundaries."""
    if delay < 1:
        raise ConfigError(f"message delay must be >= 1, got {delay}")
    return (delay - 1) // rs + 1


def sweep(rs: int, delays, rates) -> list[dict]:
    """Counter sizing across a (delay, rate) grid at region span ``rs``.

    Each row derives the message lifetime in regions from the delay, sizes
    the family's reach as lifetime + 2 (the stamp staleness bound), takes
    the rate as the per-region growth cap, and reports the resulting modulus
    and bit width.
    """
    if rs < 1:
        raise ConfigError(f"region span must be >= 1, got {rs}")
    rows = []
    for delay in delays:
        lifetime = lifetime_regions_for(delay, rs)
        max_r = lifetime + 2
        for rate in rates:
            if rate < 1:
                raise ConfigError(
                    f"rate must be >= 1 (counters grow, so the per-region "
                    f"increment cap is at least 1), got {rate}")
            rows.append({
                "rs": rs, "delay": delay, "rate": rate,
                "lifetime_regions": lifetime, "max_r": max_r,
                "maxbound": maxbound_of(rate, max_r),
                "bits": bits_required(rate, max_r),
            })
    return rows


def write_sweep_csv(rows: list[dict], fp: IO[str]) -> None:
    writer = csv.DictWriter(fp, fieldnames=list(rows[0]))
    writer.writeheader()
    writer.writerows(rows)
