"""Round-numbered global state checker superimposed on the region substrate.

Process 0 issues numbered rounds from a free counter and tags each with a
coin flip (a "real" audit or a decoy; the flag is opaque payload that rides
along to exercise non-counter state). Every other process keeps the highest
round it has seen (``cr``) and the last round it reported (``lr``). A ROUND
message with a higher number is adopted and answered with a REPORT; an equal
number is re-answered only when the earlier report is not on record (so
duplicate ROUNDs are acknowledged at most once); a lower number is stale and
ignored.

Each report carries a legitimacy bit obtained through an instantaneous peek
at the issuer: the round being reported must not be ahead of the issuer's
counter. That is an invariant of correct operation and goes false exactly
when corruption minted a round out of thin air. The issuer collects reports
in a cell per process; when every process has reported its current round it
marks the round complete (or suspect, if any legitimacy bit came back
false) and is free to start the next. A round that stalls, for example
because corruption erased report state, is abandoned by a low-probability
restart rather than by waiting forever.
"""

from __future__ import annotations

from ..errors import ConfigError
from ..transform import ActionSpec
from .base import (BuildInfo, CollDecl, DepSpec, MsgDecl, ProcInit,
                   ProtocolDef, floor_value)


def build(info: BuildInfo) -> ProtocolDef:
    fam = info.family("round")
    lt2 = info.lifetime_regions + 2
    expiry = info.params.get("round_expiry", 3)
    r_b, r_f = info.bounds("round")
    info.require_lifetime("round", expiry + 1, "round cells reaching expiry")
    # a re-report echoes a held round: adoption staleness, a residency, and
    # one more flight, then the report cell itself must sit out its residency
    need = 2 * lt2 + 2 * (expiry + 1)
    if 2 + fam.max_r < need:
        raise ConfigError(
            f"family 'round': reach {fam.max_r} too small for re-reported "
            f"rounds (needs max_r >= {need - 2})")
    for pid in range(1, info.n):
        if 0 not in info.neighbors[pid]:
            raise ConfigError(
                f"round_checker reports to process 0, which pid {pid} "
                "cannot reach in this topology")

    def single(ctx, coll):
        cells = ctx.cells(coll)
        return cells[0] if cells else None

    def replace_single(ctx, coll, value):
        cur = single(ctx, coll)
        if cur is not None:
            ctx.remove_cell(coll, cur[0])
        ctx.create_cell(coll, value)

    def legitimacy(ctx, rnd):
        issuer = ctx.peek(0)
        return issuer.has_free("nr") and rnd <= issuer.free("nr")

    def g_handle_round(ctx):
        return ctx.first_msg("ROUND") is not None

    def b_handle_round(ctx):
        m = ctx.first_msg("ROUND")
        ctx.consume(m.mid)
        rnd = m.cell("rnd")
        cur = single(ctx, "cr")
        if cur is not None and rnd < cur[1]:
            return
        if cur is None or rnd > cur[1]:
            replace_single(ctx, "cr", rnd)
        last = single(ctx, "lr")
        if last is not None and last[1] == rnd:
            return
        replace_single(ctx, "lr", rnd)
        ctx.send(0, "REPORT", {"rnd": rnd},
                 {"real": m.var("real"), "ok": legitimacy(ctx, rnd)})

    def g_handle_report(ctx):
        return ctx.first_msg("REPORT") is not None

    def b_handle_report(ctx):
        m = ctx.first_msg("REPORT")
        ctx.consume(m.mid)
        if ctx.pid != 0:
            return
        rnd = m.cell("rnd")
        if rnd != ctx.free("nr"):
            return
        for cid, _value, tag, _age in ctx.cells("reports"):
            if tag[0] == m.src:
                ctx.remove_cell("reports", cid)
        ctx.create_cell("reports", rnd, tag=[m.src, m.var("ok")])
        seen = {tag[0]: tag[1] for _cid, value, tag, _age
                in ctx.cells("reports") if value == rnd}
        if len(seen) == ctx.n:
            ctx.mark("round_complete" if all(seen.values())
                     else "round_suspect", {"real": ctx.var("cur_real")})
            ctx.set_var("done", True)

    def g_start(ctx):
        return (ctx.pid == 0 and ctx.can_spend(ctx.d)
                and (ctx.var("done") or ctx.u1 < 0.15))

    def b_start(ctx):
        ctx.spend(ctx.d)
        nr = ctx.free("nr") + ctx.d
        ctx.set_free("nr", nr)
        real = ctx.u2 < 0.5
        ctx.set_var("cur_real", real)
        ctx.set_var("done", False)
        for cid, _value, _tag, _age in ctx.cells("reports"):
            ctx.remove_cell("reports", cid)
        ctx.create_cell("reports", nr, tag=[0, True])
        ctx.broadcast("ROUND", {"rnd": nr}, {"real": real})

    start = floor_value(info, "round")

    def init(pid):
        if pid == 0:
            return ProcInit(free={"nr": start},
                            vars={"done": True, "cur_real": False})
        return ProcInit()

    return ProtocolDef(
        name="round_checker",
        n=info.n,
        families=dict(info.families),
        free_cells={"nr": "round"},
        colls={
            "cr": CollDecl("round", DepSpec(r_b, r_f), expiry),
            "lr": CollDecl("round", DepSpec(r_b, r_f), expiry),
            "reports": CollDecl("round", DepSpec(r_b, r_f), expiry,
                                tag_domain=tuple((p, ok) for p in range(info.n)
                                                 for ok in (False, True))),
        },
        msgs={
            "ROUND": MsgDecl(cell_fields={"rnd": "round"}),
            "REPORT": MsgDecl(cell_fields={"rnd": "round"}),
        },
        actions=[
            ActionSpec("handle_round", g_handle_round, b_handle_round),
            ActionSpec("handle_report", g_handle_report, b_handle_report),
            ActionSpec("start_round", g_start, b_start),
        ],
        budget_family="round",
        init=init,
        neighbors=info.neighbors,
        var_domains={"done": (False, True), "cur_real": (False, True)},
    )
