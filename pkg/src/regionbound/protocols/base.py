"""Shared declaration types for the bundled protocols.

A protocol is data: counter family declarations, dependent-cell collection
declarations, message shapes, and a list of guarded actions. The simulation
kernel owns execution; the unbounded reference replay runs the same action
objects against plain-integer state. Protocol code must therefore go through
the context object for every read and write and never assume values are
residues.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..counters import CounterParams, DepSpec
from ..errors import ConfigError
from ..transform import ActionSpec


@dataclass(frozen=True)
class CollDecl:
    """A named collection of dependent cells.

    ``dep`` declares how stale a value may be at cell creation (r_b) and how
    many regions the cell may then live (r_f). ``expiry`` is the automatic
    removal age in owner regions; the kernel removes older cells before every
    activation of the owner. ``tag_domain`` lists legal tags so the fault
    injector can forge plausible spurious cells (None means untagged).
    """

    family: str
    dep: DepSpec
    expiry: Optional[int]
    tag_domain: Optional[tuple] = None


@dataclass(frozen=True)
class MsgDecl:
    """Message shape: which payload fields carry counter values.

    ``cell_fields`` maps field name to counter family; an instance may carry
    any subset of the declared fields. Non-counter payload goes in the
    free-form ``vars`` dict of the send call and must stay in small bounded
    domains.
    """

    cell_fields: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ProcInit:
    """Initial state for one process, with counters as plain integers."""

    free: dict[str, int] = field(default_factory=dict)
    cells: dict[str, list[tuple]] = field(default_factory=dict)
    vars: dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ProtocolDef:
    name: str
    n: int
    families: dict[str, CounterParams]
    free_cells: dict[str, str]
    colls: dict[str, CollDecl]
    msgs: dict[str, MsgDecl]
    actions: list[ActionSpec]
    budget_family: str
    init: Callable[[int], ProcInit]
    neighbors: tuple[tuple[int, ...], ...]
    var_domains: dict[str, tuple] = field(default_factory=dict)
    safety: Optional[Callable] = None


@dataclass(frozen=True)
class BuildInfo:
    """Everything a protocol builder gets from the scenario.

    ``families`` carries the derived CounterParams (maxinc, max_r = r_b+r_f)
    and ``family_bounds`` the declared (r_b, r_f) split. Builders validate
    that the declared bounds cover their staleness and lifetime needs and
    raise ConfigError naming the family otherwise.
    """

    n: int
    neighbors: tuple[tuple[int, ...], ...]
    families: dict[str, CounterParams]
    family_bounds: dict[str, tuple[int, int]]
    start_region: int
    lifetime_regions: int
    params: dict

    def family(self, name: str) -> CounterParams:
        try:
            return self.families[name]
        except KeyError:
            raise ConfigError(f"scenario declares no counter family {name!r}") from None

    def bounds(self, name: str) -> tuple[int, int]:
        return self.family_bounds[name]

    def require_lookback(self, fam: str, needed: int, why: str) -> None:
        r_b, _ = self.family_bounds[fam]
        if r_b < needed:
            raise ConfigError(
                f"family {fam!r}: r_b={r_b} too small for {why} (needs >= {needed})")

    def require_lifetime(self, fam: str, needed: int, why: str) -> None:
        _, r_f = self.family_bounds[fam]
        if r_f < needed:
            raise ConfigError(
                f"family {fam!r}: r_f={r_f} too small for {why} (needs >= {needed})")


def floor_value(info: BuildInfo, fam: str) -> int:
    """Window floor at the start region, the canonical initial counter value."""
    return 3 * info.start_region * info.families[fam].maxinc
