"""Vector clocks with age-bounded gossip.

Each process owns one component (``own``, a free counter) and keeps its view
of the other components as dependent cells tagged ``[peer, age]``. Gossip
sends the whole known vector to neighbours in rotation; a receive ticks the
own component and merges pointwise by maximum.

The age in the tag is a staleness account: how many regions old the entry
was, at worst, when the cell was created. A held entry's current staleness
is that plus the cell's age, and a forwarded entry adds the message lifetime
bound on top. Entries whose accounted staleness could outgrow the family's
lookback are not adopted (and not forwarded), so every stored value always
lifts. That makes relayed knowledge honest: a component is only kept as
fresh as the window can prove it.
"""

from __future__ import annotations

from ..transform import ActionSpec
from .base import (BuildInfo, CollDecl, DepSpec, MsgDecl, ProcInit,
                   ProtocolDef, floor_value)


def build(info: BuildInfo) -> ProtocolDef:
    fam = info.family("vc")
    lt2 = info.lifetime_regions + 2
    expiry = info.params.get("view_expiry", 2)
    r_b, r_f = info.bounds("vc")
    info.require_lookback("vc", lt2, "adopting a neighbour's own component")
    info.require_lifetime("vc", expiry + 1, "view cells reaching their expiry")
    # staleness budget an entry may have accumulated and still be held for
    # its whole residency without leaving the dependent window
    adopt_cap = fam.max_r + 1 - expiry
    n = info.n

    def view_entry(ctx, peer):
        for cid, value, tag, age in ctx.cells("view"):
            if tag[0] == peer:
                return cid, value
        return None

    def g_recv(ctx):
        return ctx.first_msg("VIEW") is not None and ctx.can_spend(ctx.d)

    def b_recv(ctx):
        m = ctx.first_msg("VIEW")
        ctx.consume(m.mid)
        ctx.spend(ctx.d)
        ctx.set_free("own", ctx.free("own") + ctx.d)
        ages = m.var("ages")
        for fld in m.cell_fields():
            peer = int(fld[1:])
            if peer == ctx.pid:
                continue
            eff = ages[fld] + lt2
            if eff > adopt_cap:
                continue
            value = m.cell(fld)
            cur = view_entry(ctx, peer)
            if cur is not None:
                if cur[1] >= value:
                    continue
                ctx.remove_cell("view", cur[0])
            ctx.create_cell("view", value, tag=[peer, eff])

    def g_gossip(ctx):
        return ctx.can_spend(ctx.d)

    def b_gossip(ctx):
        ctx.spend(ctx.d)
        own = ctx.free("own") + ctx.d
        ctx.set_free("own", own)
        if not ctx.neighbors:
            return
        rot = ctx.var("rot")
        dst = ctx.neighbors[rot % len(ctx.neighbors)]
        ctx.set_var("rot", (rot + 1) % len(ctx.neighbors))
        cells = {f"c{ctx.pid}": own}
        ages = {f"c{ctx.pid}": 0}
        for _cid, value, tag, age in ctx.cells("view"):
            peer, eff = tag
            if eff + age + lt2 <= adopt_cap:
                cells[f"c{peer}"] = value
                ages[f"c{peer}"] = eff + age
        ctx.send(dst, "VIEW", cells, {"ages": ages})

    start = floor_value(info, "vc")
    fields = {f"c{i}": "vc" for i in range(n)}

    return ProtocolDef(
        name="vector_clocks",
        n=n,
        families=dict(info.families),
        free_cells={"own": "vc"},
        colls={"view": CollDecl("vc", DepSpec(r_b, r_f), expiry,
                                tag_domain=tuple((p, a) for p in range(n)
                                                 for a in (lt2, lt2 + 1)))},
        msgs={"VIEW": MsgDecl(cell_fields=fields)},
        actions=[
            ActionSpec("receive", g_recv, b_recv),
            ActionSpec("gossip", g_gossip, b_gossip),
        ],
        budget_family="vc",
        init=lambda pid: ProcInit(free={"own": start}, vars={"rot": 0}),
        neighbors=info.neighbors,
        var_domains={"rot": tuple(range(max(1, n - 1)))},
    )
