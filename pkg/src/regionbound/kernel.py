"""Deterministic discrete-event simulator for bounded-counter protocols.

One kernel step is: optional clock advance (every ``sptu`` steps), region
re-anchoring for every process whose clock crossed a boundary, channel
maintenance (expired-message drops, scheduled fault injections, arrivals),
then exactly one process activation chosen by a seeded shuffled round-robin.
The acting process evaluates its guards on lifted integers and executes the
first enabled action, or self-loops.

Everything random is drawn from one seeded generator in a fixed order and
recorded in the trace, so a run is a pure function of (config, seed) and the
unbounded reference replay never touches the generator.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from . import trace as tr
from .counters import free_window, lift_dep, lift_free, to_residue
from .errors import ConfigError, KernelInvariantError, ProtocolBug
from .regions import (
    ClockState,
    DriftPolicy,
    RegionParams,
    advance_clocks,
    region_change_events,
    region_of,
)
from .transform import (
    Cell,
    ProcState,
    choose_action,
    region_shift,
    wrap_program,
    write_dep,
    write_free,
)


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation needs besides the seed."""

    prog: object
    rs: int
    sptu: int
    start_region: int
    drift: DriftPolicy
    lifetime_regions: int
    loss_probability: float
    max_delay_steps: int
    total_steps: int
    faults: tuple = ()
    snapshot_regions: tuple = ()
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.sptu < 1:
            raise ConfigError("steps_per_time_unit must be >= 1")
        if self.rs < 2 and self.total_steps > self.sptu:
            # each advance moves time by 1 unit, which must not skip a region
            raise ConfigError("rs must be >= 2 for any run long enough to advance clocks")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        if not (0.0 <= self.loss_probability <= 1.0):
            raise ConfigError("loss_probability must be within [0, 1]")
        if self.max_delay_steps < 1:
            raise ConfigError("max_delay_steps must be >= 1")
        if self.lifetime_regions < 0:
            raise ConfigError("lifetime_regions must be >= 0")
        for fam, params in self.prog.families.items():
            if self.start_region < params.min_usable_region():
                raise ConfigError(
                    f"start_region {self.start_region} below first region with a "
                    f"full dependent window for family {fam!r} "
                    f"(needs >= {params.min_usable_region()})")
        wrap_program(self.prog)
        for kind, decl in self.prog.msgs.items():
            for fld, fam in decl.cell_fields.items():
                if self.prog.families[fam].max_r < self.lifetime_regions:
                    raise ConfigError(
                        f"message {kind!r} field {fld!r}: family {fam!r} max_r "
                        f"{self.prog.families[fam].max_r} cannot cover message "
                        f"lifetime {self.lifetime_regions}")


class Msg:
    __slots__ = ("mid", "src", "dst", "kind", "cells", "vars", "send_step",
                 "send_region_local", "send_region_global",
                 "arrival_step", "drop_step")

    def __init__(self, mid, src, dst, kind, cells, vars, send_step,
                 send_region_local, send_region_global, arrival_step, drop_step):
        self.mid = mid
        self.src = src
        self.dst = dst
        self.kind = kind
        self.cells = cells
        self.vars = vars
        self.send_step = send_step
        self.send_region_local = send_region_local
        self.send_region_global = send_region_global
        self.arrival_step = arrival_step
        self.drop_step = drop_step

    def to_row(self) -> list:
        return [self.mid, self.src, self.dst, self.kind,
                dict(sorted(self.cells.items())), self.vars, self.send_step,
                self.send_region_local, self.send_region_global,
                self.arrival_step, self.drop_step]


class MsgView:
    """Read-only message payload with counter fields lifted for the reader."""

    __slots__ = ("mid", "src", "kind", "_cells", "_vars")

    def __init__(self, mid, src, kind, cells, vars):
        self.mid = mid
        self.src = src
        self.kind = kind
        self._cells = cells
        self._vars = vars

    def has_cell(self, fld: str) -> bool:
        return fld in self._cells

    def cell(self, fld: str) -> int:
        return self._cells[fld]

    def cell_fields(self) -> list[str]:
        return sorted(self._cells)

    def var(self, name: str):
        return self._vars[name]


class PeekView:
    """Read-only view of another process, counters lifted at its region."""

    __slots__ = ("_kern", "_proc")

    def __init__(self, kern, proc):
        self._kern = kern
        self._proc = proc

    def has_free(self, name: str) -> bool:
        return name in self._proc.free

    def free(self, name: str) -> int:
        fam = self._kern.free_fams[name]
        return lift_free(self._proc.free[name], self._proc.region, fam)

    def cells(self, coll: str) -> list[tuple]:
        fam = self._kern.coll_fams[coll]
        r = self._proc.region
        store = self._proc.colls[coll]
        return [(cid, lift_dep(store[cid].value, r, fam), store[cid].tag,
                 r - store[cid].created_local)
                for cid in sorted(store)]

    def var(self, name: str):
        return self._proc.vars[name]


class BoundedCtx:
    """Action-facing API over residue state: lifts on read, checks on write,
    and records every effect in the trace."""

    __slots__ = ("kern", "proc", "step", "d", "u1", "u2")

    def __init__(self, kern, proc, step, d, u1, u2):
        self.kern = kern
        self.proc = proc
        self.step = step
        self.d = d
        self.u1 = u1
        self.u2 = u2

    @property
    def pid(self) -> int:
        return self.proc.pid

    @property
    def n(self) -> int:
        return self.kern.prog.n

    @property
    def region(self) -> int:
        return self.proc.region

    @property
    def neighbors(self) -> tuple:
        return self.kern.prog.neighbors[self.proc.pid]

    def has_free(self, name: str) -> bool:
        return name in self.proc.free

    def free(self, name: str) -> int:
        return lift_free(self.proc.free[name], self.proc.region,
                         self.kern.free_fams[name])

    def set_free(self, name: str, value: int) -> None:
        fam = self.kern.free_fams[name]
        if value < self.free(name):
            raise ProtocolBug(
                f"step {self.step}: pid {self.pid} writes free counter "
                f"{name!r} down from {self.free(name)} to {value}")
        res, lifted, corrected = write_free(value, self.proc.region, fam)
        self.proc.free[name] = res
        self.kern.record(tr.EV_WFREE, pid=self.pid, name=name, residue=res,
                         lifted=lifted, corrected=corrected)

    def can_spend(self, amount: int) -> bool:
        return self.kern.budgets[self.kern.prog.budget_family] >= amount

    def spend(self, amount: int) -> None:
        fam = self.kern.prog.budget_family
        self.kern.budgets[fam] -= amount
        if self.kern.budgets[fam] < 0:
            raise KernelInvariantError(
                f"step {self.step}: family {fam!r} spent past its per-region "
                f"growth budget")
        self.kern.record(tr.EV_SPEND, family=fam, amount=amount)

    def cells(self, coll: str) -> list[tuple]:
        """Live cells as (cid, value, tag, age) with age in owner regions."""
        fam = self.kern.coll_fams[coll]
        r = self.proc.region
        store = self.proc.colls[coll]
        return [(cid, lift_dep(store[cid].value, r, fam), store[cid].tag,
                 r - store[cid].created_local)
                for cid in sorted(store)]

    def cell_count(self, coll: str) -> int:
        return len(self.proc.colls[coll])

    def create_cell(self, coll: str, value: int, tag=None) -> int:
        if coll not in self.proc.colls:
            raise ProtocolBug(f"undeclared collection {coll!r}")
        fam = self.kern.coll_fams[coll]
        res, lifted, corrected = write_dep(value, self.proc.region, fam)
        cid = self.kern.next_cid
        self.kern.next_cid += 1
        tag = tr.canon(tag)
        self.proc.colls[coll][cid] = Cell(res, self.proc.region,
                                          self.kern.g_region, tag)
        self.kern.record(tr.EV_DCREATE, pid=self.pid, coll=coll, cid=cid,
                         residue=res, lifted=lifted,
                         created_local=self.proc.region,
                         created_global=self.kern.g_region,
                         tag=tag, corrected=corrected)
        return cid

    def remove_cell(self, coll: str, cid: int) -> None:
        del self.proc.colls[coll][cid]
        self.kern.record(tr.EV_DREMOVE, pid=self.pid, coll=coll, cid=cid,
                         reason="stmt")

    def var(self, name: str):
        return self.proc.vars[name]

    def set_var(self, name: str, value) -> None:
        value = tr.canon(value)
        self.proc.vars[name] = value
        self.kern.record(tr.EV_VAR, pid=self.pid, name=name, value=value)

    def first_msg(self, kind: str) -> Optional[MsgView]:
        inbox = self.kern.inboxes[self.pid]
        for mid in sorted(inbox):
            msg = inbox[mid]
            if msg.kind == kind:
                return self._view(msg)
        return None

    def _view(self, msg: Msg) -> MsgView:
        r = self.proc.region
        lifted = {fld: lift_dep(res, r, self.kern.msg_fams[msg.kind][fld])
                  for fld, res in msg.cells.items()}
        return MsgView(msg.mid, msg.src, msg.kind, lifted, msg.vars)

    def consume(self, mid: int) -> None:
        del self.kern.inboxes[self.pid][mid]
        self.kern.record(tr.EV_CONSUME, mid=mid, pid=self.pid)

    def send(self, dst: int, kind: str, cells: dict, vars: Optional[dict] = None) -> None:
        self.kern.send_from(self, dst, kind, cells, vars or {})

    def broadcast(self, kind: str, cells: dict, vars: Optional[dict] = None) -> None:
        for dst in self.neighbors:
            self.kern.send_from(self, dst, kind, cells, vars or {})

    def peek(self, pid: int) -> PeekView:
        return PeekView(self.kern, self.kern.procs[pid])

    def mark(self, kind: str, data=None) -> None:
        self.kern.record(tr.EV_MARK, mark_kind=kind, pid=self.pid,
                         data=tr.canon(data))


class Kernel:
    def __init__(self, cfg: RunConfig, seed: int):
        cfg.validate()
        self.cfg = cfg
        self.prog = cfg.prog
        self.seed = seed
        self.rng = random.Random(seed)
        self.rp = RegionParams(rs=cfg.rs, start_region=cfg.start_region)

        prog = self.prog
        self.free_fams = {name: prog.families[fam]
                          for name, fam in prog.free_cells.items()}
        self.coll_fams = {coll: prog.families[decl.family]
                          for coll, decl in prog.colls.items()}
        self.msg_fams = {kind: {fld: prog.families[fam]
                                for fld, fam in decl.cell_fields.items()}
                         for kind, decl in prog.msgs.items()}

        self.clocks = ClockState.at_region_start(prog.n, self.rp)
        self.g_region = cfg.start_region
        self.next_cid = 0
        self.procs = [self._init_proc(pid) for pid in range(prog.n)]
        self.inboxes: list[dict[int, Msg]] = [{} for _ in range(prog.n)]
        self.in_flight: dict[int, Msg] = {}
        self.next_mid = 0
        self.budgets = {fam: params.maxinc
                        for fam, params in prog.families.items()}
        self.step = 0
        self._order: list[int] = []
        self._pending_snapshot: Optional[str] = None

        meta = dict(cfg.meta)
        meta.update({
            "protocol": prog.name, "n": prog.n, "seed": seed, "rs": cfg.rs,
            "sptu": cfg.sptu, "start_region": cfg.start_region,
            "total_steps": cfg.total_steps,
            "lifetime_regions": cfg.lifetime_regions,
            "loss_probability": cfg.loss_probability,
            "max_delay_steps": cfg.max_delay_steps,
            "drift": {"kind": cfg.drift.kind,
                      "max_step_skew": cfg.drift.max_step_skew},
            "families": {fam: {"maxinc": p.maxinc, "max_r": p.max_r,
                               "maxbound": p.maxbound}
                         for fam, p in prog.families.items()},
            "fault_count": len(cfg.faults),
            "snapshot_regions": list(cfg.snapshot_regions),
        })
        self.trace = tr.Trace(meta=meta)

    def _init_proc(self, pid: int) -> ProcState:
        prog = self.prog
        proc = ProcState(pid, self.cfg.start_region)
        init = prog.init(pid)
        for name, value in init.free.items():
            fam = self.free_fams[name]
            lo, hi = free_window(self.cfg.start_region, fam)
            if not lo <= value <= hi:
                raise ConfigError(
                    f"initial value {value} for free counter {name!r} on pid "
                    f"{pid} outside start window [{lo}, {hi}]")
            proc.free[name] = to_residue(value, fam)
        for coll in prog.colls:
            proc.colls[coll] = {}
        for coll, entries in init.cells.items():
            fam = self.coll_fams[coll]
            for value, tag in entries:
                proc.colls[coll][self.next_cid] = Cell(
                    to_residue(value, fam), self.cfg.start_region,
                    self.cfg.start_region, tr.canon(tag))
                self.next_cid += 1
        proc.vars = {k: tr.canon(v) for k, v in init.vars.items()}
        return proc

    # -- trace plumbing ----------------------------------------------------

    def record(self, kind: str, **payload) -> None:
        self.trace.events.append(
            (self.step, kind)
            + tuple(payload[name] for name in tr._EVENT_FIELDS[kind]))

    def _regions(self) -> list[int]:
        rs = self.rp.rs
        return [x // rs for x in self.clocks.local]

    def _snapshot(self, label: str) -> None:
        procs = []
        for proc in self.procs:
            colls = {coll: [[cid, c.value, c.created_local, c.created_global,
                             tr.canon(c.tag)]
                            for cid, c in sorted(store.items())]
                     for coll, store in proc.colls.items()}
            procs.append({"free": dict(proc.free), "colls": colls,
                          "vars": dict(proc.vars)})
        self.trace.snapshots[self.step] = {
            "t": self.clocks.t,
            "g_region": self.g_region,
            "regions": self._regions(),
            "locals": list(self.clocks.local),
            "procs": procs,
            "in_flight": [m.to_row() for _, m in sorted(self.in_flight.items())],
            "inboxes": [[m.to_row() for _, m in sorted(box.items())]
                        for box in self.inboxes],
            "next_mid": self.next_mid,
            "next_cid": self.next_cid,
            "budgets": dict(self.budgets),
            "label": label,
        }

    # -- messaging ---------------------------------------------------------

    def send_from(self, ctx: BoundedCtx, dst: int, kind: str, cells: dict,
                  vars: dict) -> None:
        if dst == ctx.pid or dst not in self.prog.neighbors[ctx.pid]:
            raise ProtocolBug(
                f"step {self.step}: pid {ctx.pid} sends to non-neighbor {dst}")
        decl = self.prog.msgs.get(kind)
        if decl is None:
            raise ProtocolBug(f"undeclared message kind {kind!r}")
        res_cells = {}
        for fld in sorted(cells):
            if fld not in decl.cell_fields:
                raise ProtocolBug(f"message {kind!r} has no field {fld!r}")
            res_cells[fld] = to_residue(cells[fld], self.msg_fams[kind][fld])
        vars = tr.canon(vars)
        delay = self.rng.randint(1, self.cfg.max_delay_steps)
        lost = self.rng.random() < self.cfg.loss_probability
        arrival = None if lost else self.step + delay
        drop = self.step + delay if lost else None
        mid = self.next_mid
        self.next_mid += 1
        msg = Msg(mid, ctx.pid, dst, kind, res_cells, vars, self.step,
                  ctx.region, self.g_region, arrival, drop)
        self.in_flight[mid] = msg
        self.record(tr.EV_SEND, mid=mid, src=ctx.pid, dst=dst, msg_kind=kind,
                    cells=res_cells, vars=vars,
                    send_region_local=ctx.region,
                    send_region_global=self.g_region,
                    arrival_step=arrival, drop_step=drop)

    # -- per-step phases ---------------------------------------------------

    def _expire_cells(self, proc: ProcState) -> None:
        for coll, decl in self.prog.colls.items():
            if decl.expiry is None:
                continue
            store = proc.colls[coll]
            stale = [cid for cid in sorted(store)
                     if proc.region - store[cid].created_local > decl.expiry]
            for cid in stale:
                del store[cid]
                self.record(tr.EV_DREMOVE, pid=proc.pid, coll=coll, cid=cid,
                            reason="expired")

    def _advance_clocks(self) -> None:
        before = self.clocks
        self.clocks = advance_clocks(before, 1, self.rp, self.cfg.drift,
                                     self.rng)
        regions = self._regions()
        new_g = region_of(self.clocks.t, self.rp)
        self.record(tr.EV_CLOCK, t=self.clocks.t, g_region=new_g,
                    locals=tuple(self.clocks.local), regions=tuple(regions))
        for pid, new_r in region_change_events(before, self.clocks, self.rp):
            proc = self.procs[pid]
            changes = region_shift(proc, new_r, self.free_fams, self.coll_fams)
            self.record(tr.EV_RC, pid=pid, new_region=new_r,
                        changes=tuple(changes))
            self._expire_cells(proc)
        if new_g != self.g_region:
            self.g_region = new_g
            self._on_global_region()

    def _on_global_region(self) -> None:
        # Refill one increment short when a process still lags the new
        # global region: a leader may then draw on two consecutive refills
        # before the laggard's window catches up, and the window top leaves
        # room for exactly 2*maxinc - 1 of growth above the leader's floor.
        lag = any(p.region < self.g_region for p in self.procs)
        for fam, params in self.prog.families.items():
            self.budgets[fam] = params.maxinc - 1 if lag else params.maxinc
        horizon = self.g_region - self.cfg.lifetime_regions
        for mid in sorted(self.in_flight):
            if self.in_flight[mid].send_region_global < horizon:
                del self.in_flight[mid]
                self.record(tr.EV_DROP, mid=mid, reason="expired")
        for box in self.inboxes:
            for mid in sorted(box):
                if box[mid].send_region_global < horizon:
                    del box[mid]
                    self.record(tr.EV_DROP, mid=mid, reason="expired")
        for entry in self.cfg.faults:
            if entry.when_kind == "region" and entry.when == self.g_region:
                self._apply_fault(entry)
        if self.g_region in self.cfg.snapshot_regions:
            self._pending_snapshot = f"region:{self.g_region}"

    def _apply_fault(self, entry) -> None:
        applied, detail = entry.apply(self)
        detail["g_region"] = self.g_region
        self.record(tr.EV_FAULT, fault_kind=entry.kind, pid=entry.pid,
                    target=tr.canon(entry.target), detail=tr.canon(detail),
                    applied=applied)

    def _arrivals(self) -> None:
        due = [mid for mid in sorted(self.in_flight)
               if (self.in_flight[mid].arrival_step == self.step
                   or self.in_flight[mid].drop_step == self.step)]
        for mid in due:
            msg = self.in_flight.pop(mid)
            if msg.drop_step == self.step:
                self.record(tr.EV_DROP, mid=mid, reason="lost")
            else:
                self.inboxes[msg.dst][mid] = msg
                self.record(tr.EV_ARRIVE, mid=mid)

    def _act(self) -> None:
        if self.step % self.prog.n == 0:
            self._order = list(range(self.prog.n))
            self.rng.shuffle(self._order)
        pid = self._order[self.step % self.prog.n]
        maxinc = self.prog.families[self.prog.budget_family].maxinc
        d = self.rng.randint(1, maxinc)
        u1 = self.rng.random()
        u2 = self.rng.random()
        proc = self.procs[pid]
        self._expire_cells(proc)
        ctx = BoundedCtx(self, proc, self.step, d, u1, u2)
        idx = choose_action(self.prog.actions, ctx)
        if idx is None:
            self.trace.rows.append((self.step, pid, tr.SELF_LOOP, "", d, u1, u2))
        else:
            act = self.prog.actions[idx]
            self.trace.rows.append((self.step, pid, idx, act.name, d, u1, u2))
            act.body(ctx)

    def run(self) -> tr.Trace:
        self._pending_snapshot = "start"
        for step in range(self.cfg.total_steps):
            self.step = step
            if self._pending_snapshot is not None:
                self._snapshot(self._pending_snapshot)
                self._pending_snapshot = None
            if step and step % self.cfg.sptu == 0:
                self._advance_clocks()
            for entry in self.cfg.faults:
                if entry.when_kind == "step" and entry.when == step:
                    self._apply_fault(entry)
            self._arrivals()
            self._act()
        self.step = self.cfg.total_steps
        self._snapshot("final")
        summary = self.trace.summary
        summary["final_g_region"] = self.g_region
        summary["final_t"] = self.clocks.t
        summary["messages_sent"] = self.next_mid
        summary["cells_created"] = self.next_cid
        return self.trace


def run(cfg: RunConfig, seed: int) -> tr.Trace:
    """Simulate one scenario; the trace is a pure function of (cfg, seed)."""
    return Kernel(cfg, seed).run()
