"""Single-decree consensus with counter-valued ballots.

Every process plays proposer, acceptor, and learner. Ballots are pairs
(seq, pid): the sequence comes from the proposer's free counter, the pid
breaks ties. A proposer prepares a ballot, gathers promises from a majority
(counting itself), then asks the same majority to accept either its own
value or the value of the highest-ballot acceptance reported in a promise;
a majority of acceptances decides, and the decision is flooded.

Acceptor state (promised ballot, accepted ballot) lives in dependent cells
of a family whose forward reach is the deployment's memory knob: sized past
the run length, the cells behave like stable storage; sized shorter,
acceptors legitimately forget old ballots when the window moves on, and
only the decided flag (a plain variable) survives. Proposer bookkeeping
(pending ballot, vote tallies) is deliberately short-lived: an unanswered
proposal expires and the run retries with a higher sequence. Rejections
carry the conflicting promised sequence, letting the loser leapfrog it.

Decisions are observable as ``decide`` marks; :func:`check_agreement`
scans a trace suffix for two different decided values.
"""

from __future__ import annotations

from .. import trace as tr
from ..errors import ConfigError
from ..transform import ActionSpec
from .base import (BuildInfo, CollDecl, DepSpec, MsgDecl, ProcInit,
                   ProtocolDef, floor_value)


def check_agreement(trace, start_step: int = 0) -> tuple[bool, str]:
    """All decide marks from ``start_step`` onward must carry one value."""
    decided: dict[int, int] = {}
    for ev in trace.events:
        if ev[0] < start_step or ev[1] != tr.EV_MARK or ev[2] != "decide":
            continue
        decided[ev[3]] = ev[4]["val"]
    values = set(decided.values())
    if len(values) > 1:
        return False, f"conflicting decisions {decided}"
    if not values:
        return True, "no decisions in the checked suffix (vacuous)"
    return True, f"{len(decided)} processes decided {values.pop()}"


def build(info: BuildInfo) -> ProtocolDef:
    info.family("nextseq")
    info.family("pending")
    info.family("aseq")
    n = info.n
    for pid, nbrs in enumerate(info.neighbors):
        if len(nbrs) != n - 1:
            raise ConfigError(
                "consensus runs on a complete graph (majorities must be "
                f"reachable from everyone; pid {pid} has {len(nbrs)} "
                f"neighbours, wants {n - 1})")
    rates = {fam: info.families[fam].maxinc
             for fam in ("nextseq", "pending", "aseq")}
    if len(set(rates.values())) != 1:
        raise ConfigError(
            "consensus stores ballot sequences across all three families, "
            f"so their growth rates must match; got {rates}")
    lt2 = info.lifetime_regions + 2
    pend_expiry = info.params.get("proposal_expiry", 2)
    if pend_expiry > lt2:
        raise ConfigError(
            f"proposal_expiry {pend_expiry} exceeds the message staleness "
            f"bound {lt2}; reply candidates could outlive their window")
    acc_r_b, acc_r_f = info.bounds("aseq")
    acc_expiry = info.params.get("acceptor_expiry", acc_r_f - 1)
    pend_r_b, pend_r_f = info.bounds("pending")
    info.require_lookback("pending", 2 * lt2,
                          "ballot sequences echoed in replies")
    info.require_lifetime("pending", pend_expiry + 1,
                          "proposals reaching their expiry")
    info.require_lookback("aseq", 2 * lt2,
                          "promised/accepted sequences in replies")
    info.require_lifetime("aseq", acc_expiry + 1,
                          "acceptor memory reaching its expiry")
    majority = n // 2 + 1

    def single(ctx, coll):
        cells = ctx.cells(coll)
        return cells[0] if cells else None

    def replace_single(ctx, coll, value, tag):
        cur = single(ctx, coll)
        if cur is not None:
            ctx.remove_cell(coll, cur[0])
        ctx.create_cell(coll, value, tag=tag)

    def clear(ctx, coll, phase=None):
        for cid, _value, tag, _age in ctx.cells(coll):
            if phase is None or tag[1] == phase:
                ctx.remove_cell(coll, cid)

    def votes_for(ctx, seq, phase):
        return sum(1 for _cid, value, tag, _age in ctx.cells("votes")
                   if value == seq and tag[1] == phase)

    def bump_seq(ctx, floor):
        seq = max(ctx.free("nseq"), floor) + ctx.d
        ctx.set_free("nseq", seq)
        return seq

    def accept_locally(ctx, seq, bpid, val):
        replace_single(ctx, "prom", seq, bpid)
        replace_single(ctx, "acc", seq, bpid)
        ctx.set_var("accepted_val", val)

    def holds_own(ctx, coll, seq):
        # A proposer's own promise/acceptance counts towards the majority
        # only while it is still the one on record; a higher ballot from
        # elsewhere may have displaced it mid-round.
        cur = single(ctx, coll)
        return cur is not None and (cur[1], cur[2]) == (seq, ctx.pid)

    def g_handle_prepare(ctx):
        return ctx.first_msg("PREPARE") is not None

    def b_handle_prepare(ctx):
        m = ctx.first_msg("PREPARE")
        ctx.consume(m.mid)
        seq = m.cell("bseq")
        prom = single(ctx, "prom")
        if prom is not None and (seq, m.src) <= (prom[1], prom[2]):
            ctx.send(m.src, "NACK", {"bseq": seq, "promised": prom[1]},
                     {"prom_bpid": prom[2]})
            return
        replace_single(ctx, "prom", seq, m.src)
        acc = single(ctx, "acc")
        if acc is None:
            ctx.send(m.src, "PROMISE", {"bseq": seq}, {"has_acc": False})
        else:
            ctx.send(m.src, "PROMISE", {"bseq": seq, "aseq": acc[1]},
                     {"has_acc": True, "acc_bpid": acc[2],
                      "acc_val": ctx.var("accepted_val")})

    def g_handle_promise(ctx):
        return ctx.first_msg("PROMISE") is not None

    def b_handle_promise(ctx):
        m = ctx.first_msg("PROMISE")
        ctx.consume(m.mid)
        pend = single(ctx, "pend")
        if ctx.var("phase") != "prepare" or pend is None:
            return
        seq = m.cell("bseq")
        if seq != pend[1]:
            return
        clear_tag = [m.src, "p"]
        for cid, _value, tag, _age in ctx.cells("votes"):
            if tag == clear_tag:
                ctx.remove_cell("votes", cid)
        ctx.create_cell("votes", seq, tag=clear_tag)
        if m.var("has_acc"):
            cand = single(ctx, "cand")
            better = (cand is None
                      or (m.cell("aseq"), m.var("acc_bpid")) > (cand[1], cand[2]))
            if better:
                replace_single(ctx, "cand", m.cell("aseq"), m.var("acc_bpid"))
                ctx.set_var("cand_val", m.var("acc_val"))
        if votes_for(ctx, seq, "p") + holds_own(ctx, "prom", seq) < majority:
            return
        cand = single(ctx, "cand")
        chosen = ctx.var("cand_val") if cand is not None else ctx.pid
        ctx.set_var("phase", "accept")
        ctx.set_var("chosen_val", chosen)
        clear(ctx, "votes", "p")
        if holds_own(ctx, "prom", seq):
            accept_locally(ctx, seq, ctx.pid, chosen)
        ctx.broadcast("ACCEPT", {"bseq": seq}, {"val": chosen})

    def g_handle_nack(ctx):
        return ctx.first_msg("NACK") is not None

    def b_handle_nack(ctx):
        m = ctx.first_msg("NACK")
        ctx.consume(m.mid)
        # Fold the rejecting promise into the sequence source so the next
        # proposal leapfrogs it; folding alone never raises the family
        # maximum, so it costs no budget.
        merged = max(ctx.free("nseq"), m.cell("promised"))
        ctx.set_free("nseq", merged)
        pend = single(ctx, "pend")
        if pend is not None and m.cell("bseq") == pend[1]:
            ctx.remove_cell("pend", pend[0])
            clear(ctx, "votes")
            clear(ctx, "cand")
            ctx.set_var("phase", "idle")

    def g_handle_accept(ctx):
        return ctx.first_msg("ACCEPT") is not None

    def b_handle_accept(ctx):
        m = ctx.first_msg("ACCEPT")
        ctx.consume(m.mid)
        seq = m.cell("bseq")
        prom = single(ctx, "prom")
        if prom is not None and (seq, m.src) < (prom[1], prom[2]):
            ctx.send(m.src, "NACK", {"bseq": seq, "promised": prom[1]},
                     {"prom_bpid": prom[2]})
            return
        accept_locally(ctx, seq, m.src, m.var("val"))
        ctx.send(m.src, "ACCEPTED", {"bseq": seq})

    def g_handle_accepted(ctx):
        return ctx.first_msg("ACCEPTED") is not None

    def b_handle_accepted(ctx):
        m = ctx.first_msg("ACCEPTED")
        ctx.consume(m.mid)
        pend = single(ctx, "pend")
        if ctx.var("phase") != "accept" or pend is None:
            return
        seq = m.cell("bseq")
        if seq != pend[1]:
            return
        clear_tag = [m.src, "a"]
        for cid, _value, tag, _age in ctx.cells("votes"):
            if tag == clear_tag:
                ctx.remove_cell("votes", cid)
        ctx.create_cell("votes", seq, tag=clear_tag)
        if votes_for(ctx, seq, "a") + holds_own(ctx, "acc", seq) < majority:
            return
        val = ctx.var("chosen_val")
        if ctx.var("decided") is None:
            ctx.set_var("decided", val)
            ctx.mark("decide", {"val": val})
        ctx.set_var("phase", "idle")
        ctx.remove_cell("pend", pend[0])
        clear(ctx, "votes")
        clear(ctx, "cand")
        ctx.broadcast("DECIDE", {}, {"val": val})

    def g_handle_decide(ctx):
        return ctx.first_msg("DECIDE") is not None

    def b_handle_decide(ctx):
        m = ctx.first_msg("DECIDE")
        ctx.consume(m.mid)
        if ctx.var("decided") is None:
            ctx.set_var("decided", m.var("val"))
            ctx.mark("decide", {"val": m.var("val")})

    def g_propose(ctx):
        return (ctx.var("phase") == "idle" and ctx.var("decided") is None
                and single(ctx, "pend") is None and ctx.can_spend(ctx.d)
                and ctx.u1 < 0.3)

    def b_propose(ctx):
        ctx.spend(ctx.d)
        seq = bump_seq(ctx, 0)
        ctx.create_cell("pend", seq, tag="own")
        clear(ctx, "cand")
        ctx.set_var("cand_val", None)
        ctx.set_var("phase", "prepare")
        prom = single(ctx, "prom")
        if prom is None or (seq, ctx.pid) > (prom[1], prom[2]):
            replace_single(ctx, "prom", seq, ctx.pid)
        ctx.broadcast("PREPARE", {"bseq": seq})

    def g_reset(ctx):
        return ctx.var("phase") != "idle" and single(ctx, "pend") is None

    def b_reset(ctx):
        ctx.set_var("phase", "idle")
        clear(ctx, "votes")
        clear(ctx, "cand")

    start = floor_value(info, "nextseq")
    pids = tuple(range(n))

    return ProtocolDef(
        name="consensus",
        n=n,
        families=dict(info.families),
        free_cells={"nseq": "nextseq"},
        colls={
            "pend": CollDecl("pending", DepSpec(pend_r_b, pend_r_f),
                             pend_expiry, tag_domain=("own",)),
            "votes": CollDecl("pending", DepSpec(pend_r_b, pend_r_f),
                              pend_expiry,
                              tag_domain=tuple((p, ph) for p in pids
                                               for ph in ("p", "a"))),
            "prom": CollDecl("aseq", DepSpec(acc_r_b, acc_r_f), acc_expiry,
                             tag_domain=pids),
            "acc": CollDecl("aseq", DepSpec(acc_r_b, acc_r_f), acc_expiry,
                            tag_domain=pids),
            "cand": CollDecl("aseq", DepSpec(acc_r_b, acc_r_f), pend_expiry,
                             tag_domain=pids),
        },
        msgs={
            "PREPARE": MsgDecl(cell_fields={"bseq": "pending"}),
            "PROMISE": MsgDecl(cell_fields={"bseq": "pending",
                                            "aseq": "aseq"}),
            "NACK": MsgDecl(cell_fields={"bseq": "pending",
                                         "promised": "aseq"}),
            "ACCEPT": MsgDecl(cell_fields={"bseq": "pending"}),
            "ACCEPTED": MsgDecl(cell_fields={"bseq": "pending"}),
            "DECIDE": MsgDecl(),
        },
        actions=[
            ActionSpec("handle_prepare", g_handle_prepare, b_handle_prepare),
            ActionSpec("handle_promise", g_handle_promise, b_handle_promise),
            ActionSpec("handle_nack", g_handle_nack, b_handle_nack),
            ActionSpec("handle_accept", g_handle_accept, b_handle_accept),
            ActionSpec("handle_accepted", g_handle_accepted,
                       b_handle_accepted),
            ActionSpec("handle_decide", g_handle_decide, b_handle_decide),
            ActionSpec("propose", g_propose, b_propose),
            ActionSpec("reset_phase", g_reset, b_reset),
        ],
        budget_family="nextseq",
        init=lambda pid: ProcInit(
            free={"nseq": start},
            vars={"phase": "idle", "decided": None, "accepted_val": None,
                  "cand_val": None, "chosen_val": None}),
        neighbors=info.neighbors,
        var_domains={
            "phase": ("idle", "prepare", "accept"),
            "decided": (None, *pids),
            "accepted_val": (None, *pids),
            "cand_val": (None, *pids),
            "chosen_val": (None, *pids),
        },
        safety=check_agreement,
    )
