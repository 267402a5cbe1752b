"""Wrapping protocol actions in the bounded-counter discipline.

The pieces here sit between the raw counter arithmetic and the simulation
kernel:

* process-local state (:class:`ProcState`, :class:`Cell`),
* what happens to every stored residue when a process enters a new region
  (:func:`region_shift`),
* deterministic guard evaluation (:func:`choose_action`), and
* static validation of a protocol's counter declarations
  (:func:`wrap_program`).

Guard and statement code never sees residues directly. The kernel hands it a
context whose accessors lift residues into plain integers on read and push
writes back through the range check + modulo on write; the same protocol code
therefore also runs unchanged against an unbounded reference state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .counters import (
    CounterParams,
    check_dep,
    check_free,
    dep_window,
    free_window,
    lift_dep,
    lift_free,
    to_residue,
)
from .errors import ConfigError


@dataclass(frozen=True)
class ActionSpec:
    """One guarded action: ``guard(ctx) -> bool`` and ``body(ctx) -> None``.

    Bodies run only when their guard held; both must be deterministic in the
    context (state plus the step's pre-drawn randomness).
    """

    name: str
    guard: Callable
    body: Callable


class Cell:
    """One dependent-counter slot: a value, created-at bookkeeping, and an
    optional small tag (e.g. the process a queue entry belongs to).

    ``value`` holds a residue in the bounded run and the true integer in the
    unbounded reference run. The value is immutable while the cell exists;
    mutation is modelled as remove-then-create.
    """

    __slots__ = ("value", "created_local", "created_global", "tag")

    def __init__(self, value: int, created_local: int, created_global: int, tag=None):
        self.value = value
        self.created_local = created_local
        self.created_global = created_global
        self.tag = tag


class ProcState:
    """Everything one process owns: free counters, dependent-cell
    collections, plain bounded variables, and its clock position."""

    __slots__ = ("pid", "region", "free", "colls", "vars")

    def __init__(self, pid: int, region: int):
        self.pid = pid
        self.region = region
        self.free: dict[str, int] = {}
        self.colls: dict[str, dict[int, Cell]] = {}
        self.vars: dict[str, object] = {}


def region_shift(
    proc: ProcState,
    new_region: int,
    free_fams: dict[str, CounterParams],
    coll_fams: dict[str, CounterParams],
) -> list[tuple]:
    """Re-anchor every stored residue when ``proc`` enters ``new_region``.

    Free counters: lift at the new region and range-check; a counter that
    fell below the new window floor is raised to it (that is ordinary
    behaviour for an idle counter, indistinguishable from the counter being
    incremented at will). Dependent cells keep their value whenever it still
    lifts congruently; otherwise they are reset to the window floor.

    Returns change records ``(slot, coll, key, old_res, new_res, lifted,
    corrected)``. ``corrected`` is True only when the outcome is *not*
    explainable as normal unbounded behaviour (a pure raise for free
    counters, no change for dependent cells), i.e. only after corruption.
    """
    old_region = proc.region
    changes: list[tuple] = []

    for name in proc.free:
        fam = free_fams[name]
        old_res = proc.free[name]
        lifted = lift_free(old_res, new_region, fam)
        # what an uncorrupted counter would do: keep its value, or be raised
        # to the new window floor if it idled below it
        old_lift = lift_free(old_res, old_region, fam)
        mirror = max(old_lift, free_window(new_region, fam)[0])
        new_res = to_residue(lifted, fam)
        if new_res != old_res or lifted != mirror:
            changes.append(("free", None, name, old_res, new_res,
                            lifted, lifted != mirror))
            proc.free[name] = new_res

    for coll, cells in proc.colls.items():
        fam = coll_fams[coll]
        for cid in sorted(cells):
            cell = cells[cid]
            old_res = cell.value
            lifted = lift_dep(old_res, new_region, fam)
            new_res = to_residue(lifted, fam)
            if new_res != old_res:
                changes.append(("dep", coll, cid, old_res, new_res, lifted, True))
                cell.value = new_res

    proc.region = new_region
    return changes


def choose_action(actions: list[ActionSpec], ctx) -> Optional[int]:
    """Index of the first enabled action, or None for a self-loop."""
    for idx, act in enumerate(actions):
        if act.guard(ctx):
            return idx
    return None


def write_free(value: int, region: int, fam: CounterParams) -> tuple[int, int, bool]:
    """Range-check then store a free-counter write.

    Returns (residue, checked_value, corrected)."""
    checked = check_free(value, region, fam)
    return to_residue(checked, fam), checked, checked != value


def write_dep(value: int, region: int, fam: CounterParams) -> tuple[int, int, bool]:
    """Range-check then store a dependent-cell value at creation."""
    checked = check_dep(value, region, fam)
    return to_residue(checked, fam), checked, checked != value


def wrap_program(prog) -> None:
    """Validate a protocol's counter declarations; raises ConfigError.

    Every collection and message field must reference a declared family, a
    collection's origination+lifetime span must fit inside its family's
    ``max_r``, and auto-expiry (when set) must fire strictly before the
    declared lifetime runs out, with one region of slack for clock skew.
    """
    if prog.n < 1:
        raise ConfigError(f"protocol {prog.name}: needs at least one process")
    for cell_name, fam_name in prog.free_cells.items():
        if fam_name not in prog.families:
            raise ConfigError(
                f"protocol {prog.name}: free counter {cell_name!r} references "
                f"undeclared family {fam_name!r}")
    for coll_name, decl in prog.colls.items():
        fam = prog.families.get(decl.family)
        if fam is None:
            raise ConfigError(
                f"protocol {prog.name}: collection {coll_name!r} references "
                f"undeclared family {decl.family!r}")
        if decl.dep.span > fam.max_r:
            raise ConfigError(
                f"protocol {prog.name}: collection {coll_name!r} span "
                f"{decl.dep.span} exceeds family max_r {fam.max_r}")
        if decl.expiry is not None and not (1 <= decl.expiry <= decl.dep.r_f - 1):
            raise ConfigError(
                f"protocol {prog.name}: collection {coll_name!r} expiry "
                f"{decl.expiry} must sit in [1, r_f-1] = [1, {decl.dep.r_f - 1}]")
    for kind, mdecl in prog.msgs.items():
        for field_name, fam_name in mdecl.cell_fields.items():
            if fam_name not in prog.families:
                raise ConfigError(
                    f"protocol {prog.name}: message {kind!r} field {field_name!r} "
                    f"references undeclared family {fam_name!r}")
    if prog.budget_family is not None and prog.budget_family not in prog.families:
        raise ConfigError(
            f"protocol {prog.name}: budget family {prog.budget_family!r} undeclared")
    if len(prog.neighbors) != prog.n:
        raise ConfigError(f"protocol {prog.name}: neighbor table size mismatch")
