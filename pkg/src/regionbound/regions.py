"""Discrete global time, per-process drifting clocks, and region bookkeeping.

Time is integer-valued. A region is a block of ``rs`` consecutive time units;
the region of time ``t`` is ``t // rs``. The whole scheme rests on two skew
guarantees that the drift model must never break:

* a process clock is at most one region away from global time, and
* any two process clocks are at most one region apart.

Drift is generated, then clamped (never rejected) so both invariants hold at
every instant. Clamping runs in process-id order, which makes the outcome a
pure function of the RNG stream.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class RegionParams:
    """Region size and the region the run starts in."""

    rs: int
    start_region: int

    def __post_init__(self) -> None:
        if self.rs < 1:
            raise ConfigError(f"region size must be >= 1, got {self.rs}")
        if self.start_region < 0:
            raise ConfigError(f"start_region must be >= 0, got {self.start_region}")


@dataclass(frozen=True)
class DriftPolicy:
    """How process clocks move relative to global time.

    ``none``: lockstep, every local clock equals global time.
    ``bounded_jitter``: each advance draws a per-process increment from
    ``[dt - max_step_skew, dt + max_step_skew]`` (floored at 0), then clamps.
    """

    kind: str = "none"
    max_step_skew: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "bounded_jitter"):
            raise ConfigError(f"unknown drift policy {self.kind!r}")
        if self.max_step_skew < 0:
            raise ConfigError("max_step_skew must be >= 0")
        if self.kind == "bounded_jitter" and self.max_step_skew == 0:
            raise ConfigError("bounded_jitter needs max_step_skew >= 1")


@dataclass
class ClockState:
    """Global time plus one local clock per process."""

    t: int
    local: list[int]

    @classmethod
    def at_region_start(cls, n: int, params: RegionParams) -> "ClockState":
        t0 = params.start_region * params.rs
        return cls(t=t0, local=[t0] * n)


def region_of(t: int, params: RegionParams) -> int:
    if t < 0:
        raise ConfigError(f"time must be >= 0, got {t}")
    return t // params.rs


def advance_clocks(
    clocks: ClockState,
    dt: int,
    params: RegionParams,
    policy: DriftPolicy,
    rng: random.Random,
) -> ClockState:
    """Advance global time by ``dt`` and every local clock by roughly ``dt``.

    Local clocks never decrease. Each is clamped, in process-id order, so that
    after the update its region stays within 1 of the new global region and
    within 1 of every other clock's region (already-updated clocks count with
    their new value, the rest with their old one).
    """
    if dt < 1:
        raise ConfigError(f"dt must be >= 1, got {dt}")
    if dt >= params.rs:
        # a single advance must not be able to skip a whole region
        raise ConfigError(f"dt must be < region size {params.rs}, got {dt}")
    rs = params.rs
    t2 = clocks.t + dt
    gr = t2 // rs
    n = len(clocks.local)
    new_local = list(clocks.local)
    regions = [x // rs for x in clocks.local]

    for j in range(n):
        if policy.kind == "none":
            tj = clocks.local[j] + dt
        else:
            lo_step = max(0, dt - policy.max_step_skew)
            tj = clocks.local[j] + rng.randint(lo_step, dt + policy.max_step_skew)

        others_lo = gr - 1
        others_hi = gr + 1
        for k in range(n):
            if k == j:
                continue
            rk = new_local[k] // rs if k < j else regions[k]
            others_lo = max(others_lo, rk - 1)
            others_hi = min(others_hi, rk + 1)
        # floor first (may raise the clock), then cap; never below the old value
        tj = max(tj, others_lo * rs, clocks.local[j])
        tj = min(tj, (others_hi + 1) * rs - 1)
        if tj < clocks.local[j]:  # pragma: no cover - guarded by dt < rs
            raise ConfigError("drift clamp would move a clock backwards")
        new_local[j] = tj

    out = ClockState(t=t2, local=new_local)
    _assert_skew(out, params)
    return out


def _assert_skew(clocks: ClockState, params: RegionParams) -> None:
    rs = params.rs
    gr = clocks.t // rs
    rlist = [x // rs for x in clocks.local]
    for r in rlist:
        assert abs(r - gr) <= 1, f"process-global region gap {r} vs {gr}"
    if rlist:
        assert max(rlist) - min(rlist) <= 1, f"pairwise region gap in {rlist}"


def region_change_events(
    before: ClockState, after: ClockState, params: RegionParams
) -> list[tuple[int, int]]:
    """Processes whose region grew, with the region they entered, in id order."""
    out = []
    rs = params.rs
    for pid, (b, a) in enumerate(zip(before.local, after.local)):
        rb, ra = b // rs, a // rs
        if ra > rb:
            out.append((pid, ra))
    return out
