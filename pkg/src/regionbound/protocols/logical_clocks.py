"""Scalar logical clocks over a message-passing network.

Each process keeps one never-decreasing clock ``cl``. A local event advances
it by the step's increment draw ``d``; a send stamps the current clock onto
the message; a receive merges with ``cl := max(cl, stamp) + d``. The clock is
a free counter, the stamp a dependent value whose staleness is capped by the
message lifetime.
"""

from __future__ import annotations

from ..transform import ActionSpec
from .base import BuildInfo, MsgDecl, ProcInit, ProtocolDef, floor_value


def build(info: BuildInfo) -> ProtocolDef:
    info.family("clock")
    info.require_lookback("clock", info.lifetime_regions + 2,
                          "in-flight clock stamps")

    def g_receive(ctx):
        return ctx.first_msg("TICK") is not None and ctx.can_spend(ctx.d)

    def b_receive(ctx):
        m = ctx.first_msg("TICK")
        ctx.consume(m.mid)
        ctx.spend(ctx.d)
        ctx.set_free("cl", max(ctx.free("cl"), m.cell("stamp")) + ctx.d)

    def g_tick(ctx):
        return ctx.can_spend(ctx.d)

    def b_tick(ctx):
        ctx.spend(ctx.d)
        cl = ctx.free("cl") + ctx.d
        ctx.set_free("cl", cl)
        if ctx.neighbors:
            dst = ctx.neighbors[int(ctx.u2 * len(ctx.neighbors))]
            ctx.send(dst, "TICK", {"stamp": cl})

    start = floor_value(info, "clock")

    return ProtocolDef(
        name="logical_clocks",
        n=info.n,
        families=dict(info.families),
        free_cells={"cl": "clock"},
        colls={},
        msgs={"TICK": MsgDecl(cell_fields={"stamp": "clock"})},
        actions=[
            ActionSpec("receive", g_receive, b_receive),
            ActionSpec("tick", g_tick, b_tick),
        ],
        budget_family="clock",
        init=lambda pid: ProcInit(free={"cl": start}),
        neighbors=info.neighbors,
    )
