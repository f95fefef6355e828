"""Case studies: reader-writer lock and lock-per-slot hash table.

Builds executable scenarios for the explorer: the programs (desugared to
the core language), the ghost script that mirrors the locking discipline
(begin/acquire/retry/release transitions, withdraws and deposits of the
protected content, guard windows around reader accesses), the safety
properties asserted in every reached state, and the independent
sequential oracle used to judge terminal outcomes.

Thread results are nested pairs of the thread's query results, so
explorer outcomes can be compared against the oracle's outcome set.
"""

from __future__ import annotations

from dataclasses import dataclass

from .explore import (
    PropertySpec,
    ResolveCtx,
    Scenario,
    ScriptEntry,
    register_property,
    register_resolver,
)
from .ghost import ExchangeAction, GhostViolation, OpenGuardAction, TransferAction
from .lang import (
    abort,
    add,
    app,
    cas,
    do_until,
    eq,
    fetch_add,
    if_,
    index_chain,
    label,
    let,
    load,
    loc,
    match,
    pair,
    proj,
    rec,
    seq,
    store,
    var,
)
from .library import (
    EX,
    NONE,
    HashFunctionSpec,
    build_hashtable_protocol,
    build_rwlock,
    build_rwlock_multi,
    ex,
    some,
)
from .terms import (
    UNIT,
    Term,
    con_args,
    map_entries,
    map_get,
    pretty,
    tbool,
    tcon,
    tint,
    tmap,
    ttuple,
)

__all__ = [
    "RwLockScenarioParams",
    "HashTableScenarioParams",
    "build_rwlock_scenario",
    "build_race_scenario",
    "build_hashtable_scenario",
    "build_abort_scenario",
    "sequential_oracle",
    "explorer_outcomes",
    "opt_to_ghost",
    "ghost_to_opt",
    "decode_results",
]


FALSE, TRUE = tbool(False), tbool(True)


def _set_comp(p: Term, i: int, v: Term) -> Term:
    parts = list(p[1])
    parts[i] = v
    return ttuple(*parts)


def opt_to_ghost(v: Term) -> Term:
    """Language option (inl ()/inr x) to ghost option (none/some x)."""
    if con_args(v, "inl") is not None:
        return NONE
    got = con_args(v, "inr")
    if got is None:
        raise ValueError(f"not an option value: {pretty(v)}")
    return some(got[0])


def ghost_to_opt(t: Term) -> Term:
    if t == NONE:
        return tcon("inl", UNIT)
    got = con_args(t, "some")
    if got is None:
        raise ValueError(f"not a ghost option: {pretty(t)}")
    return tcon("inr", got[0])


def _region(iid: str) -> str:
    return f"region:{iid}"


def _entry(label_name, resolver, when=None, negate=False, **args):
    return ScriptEntry(
        label_name,
        resolver,
        tuple(sorted(args.items())),
        when_result=when,
        negate=negate,
    )


def _prop(name, kind, **params):
    return PropertySpec(name, kind, tuple(sorted(params.items())))


# ---------------------------------------------------------------------------
# Reader-writer lock resolvers (single counter)


def _rw_parts(ctx: ResolveCtx, entry: ScriptEntry):
    iid = ctx.instance_for(entry)
    sp = ctx.scenario.protocols[iid]
    named = ctx.scenario.named[iid]
    inst = ctx.ledger.instance(iid)
    region = inst.fragment_of(_region(iid), sp.protocol.unit)
    mine = inst.fragment_of(ctx.self_owner, sp.protocol.unit)
    return iid, sp, named, region, mine


@register_resolver("rw.exc-begin")
def _rw_exc_begin(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    _, rc, x = got
    comp = sp.protocol.compose_fn
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(True, rc, x)),
                (ctx.self_owner, comp(mine, named.exc_pending())),
            ),
            kind="update",
            note="exclusive acquisition begins",
        )
    ]


@register_resolver("rw.exc-acquire")
def _rw_exc_acquire(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    if not named.has_exc_pending(mine):
        return GhostViolation("missing-token", iid, detail="no pending-exclusive token")
    x = got[2]
    new_mine = _set_comp(_set_comp(mine, 1, UNIT), 2, EX)
    return [
        ExchangeAction(
            iid,
            ((_region(iid), region), (ctx.self_owner, new_mine)),
            withdrawn=ex(x),
            kind="withdraw",
            note="exclusive lock acquired, content withdrawn",
        )
    ]


@register_resolver("rw.exc-release")
def _rw_exc_release(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    _, rc, _ = got
    cell = entry.arg("cell") or ctx.scenario.protected_cells[iid]
    raw = ctx.cell_value(cell)
    if raw is None:
        return GhostViolation("protected-cell-freed", iid)
    x_new = raw if entry.arg("raw_cell", True) else opt_to_ghost(raw)
    if not named.has_exc(mine):
        return GhostViolation("missing-token", iid, detail="no exclusive token held")
    new_mine = _set_comp(mine, 2, UNIT)
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(False, rc, x_new)),
                (ctx.self_owner, new_mine),
            ),
            deposited=ex(x_new),
            kind="deposit",
            note="exclusive lock released, content deposited",
        )
    ]


@register_resolver("rw.shared-begin")
def _rw_shared_begin(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    exc_b, rc, x = got
    new_mine = _set_comp(mine, 3, tint(mine[1][3][1] + 1))
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(exc_b, rc + 1, x)),
                (ctx.self_owner, new_mine),
            ),
            kind="update",
            note="reader registered",
        )
    ]


@register_resolver("rw.shared-acquire")
def _rw_shared_acquire(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    x = got[2]
    pending = mine[1][3][1]
    if pending < 1:
        return GhostViolation("missing-token", iid, detail="no pending-reader token")
    comp = sp.protocol.compose_fn
    new_mine = comp(_set_comp(mine, 3, tint(pending - 1)), named.sh(x))
    return [
        ExchangeAction(
            iid,
            ((_region(iid), region), (ctx.self_owner, new_mine)),
            kind="update",
            note="shared lock acquired",
        )
    ]


@register_resolver("rw.shared-retry")
def _rw_shared_retry(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    exc_b, rc, x = got
    pending = mine[1][3][1]
    if pending < 1:
        return GhostViolation("missing-token", iid, detail="no pending-reader token")
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(exc_b, rc - 1, x)),
                (ctx.self_owner, _set_comp(mine, 3, tint(pending - 1))),
            ),
            kind="update",
            note="reader backed out",
        )
    ]


@register_resolver("rw.shared-release")
def _rw_shared_release(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    exc_b, rc, x = got
    agn_got = con_args(mine[1][4], "agn")
    if agn_got is None:
        return GhostViolation("missing-token", iid, detail="no reader token held")
    y, n = agn_got[0], agn_got[1][1]
    new_sh = UNIT if n == 1 else tcon("agn", y, tint(n - 1))
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(exc_b, rc - 1, x)),
                (ctx.self_owner, _set_comp(mine, 4, new_sh)),
            ),
            kind="update",
            note="shared lock released",
        )
    ]


@register_resolver("rw.shared-read")
def _rw_shared_read(ctx, entry):
    """Open a one-step guard window for the reader's agreed value and
    check the physically read value against it."""
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    x = named.sh_value(mine)
    if x is None:
        return GhostViolation("missing-token", iid, detail="read outside a shared lock")
    want = x if entry.arg("raw_cell", True) else ghost_to_opt(x)
    if ctx.result != want:
        return GhostViolation(
            "reader-value-mismatch",
            iid,
            detail=f"read {pretty(ctx.result)}, lock agrees on {pretty(x)}",
        )
    return [OpenGuardAction(iid, ctx.self_owner, ex(x), licenses=ctx.label)]


# ---------------------------------------------------------------------------
# Multi-counter resolvers


@register_resolver("rwm.exc-begin")
def _rwm_exc_begin(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    _, rcs, x = got
    comp = sp.protocol.compose_fn
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(True, rcs, x)),
                (ctx.self_owner, comp(mine, named.exc_pending(0))),
            ),
            kind="update",
            note="exclusive acquisition begins",
        )
    ]


@register_resolver("rwm.exc-progress")
def _rwm_exc_progress(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    _, rcs, x = got
    j = named.exc_pending_index(mine)
    if j is None:
        return GhostViolation("missing-token", iid, detail="no pending-exclusive token")
    if j != entry.arg("counter"):
        return GhostViolation(
            "wrong-counter", iid, detail=f"checked counter {entry.arg('counter')}, expected {j}"
        )
    actions = [
        ExchangeAction(
            iid,
            (
                (_region(iid), region),
                (ctx.self_owner, _set_comp(mine, 1, ex(tint(j + 1)))),
            ),
            kind="update",
            note=f"counter {j} observed zero",
        )
    ]
    if j + 1 == named.k:
        acquired = _set_comp(_set_comp(mine, 1, UNIT), 2, EX)
        actions.append(
            ExchangeAction(
                iid,
                ((_region(iid), region), (ctx.self_owner, acquired)),
                withdrawn=ex(x),
                kind="withdraw",
                note="all counters checked, content withdrawn",
            )
        )
    return actions


@register_resolver("rwm.exc-release")
def _rwm_exc_release(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    _, rcs, _ = got
    cell = entry.arg("cell") or ctx.scenario.protected_cells[iid]
    raw = ctx.cell_value(cell)
    if raw is None:
        return GhostViolation("protected-cell-freed", iid)
    if not named.has_exc(mine):
        return GhostViolation("missing-token", iid, detail="no exclusive token held")
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(False, rcs, raw)),
                (ctx.self_owner, _set_comp(mine, 2, UNIT)),
            ),
            deposited=ex(raw),
            kind="deposit",
            note="exclusive lock released, content deposited",
        )
    ]


def _vec_update(rcs: tuple[int, ...], k: int, delta: int) -> tuple[int, ...]:
    return rcs[:k] + (rcs[k] + delta,) + rcs[k + 1 :]


def _sp_vec_update(mine: Term, k: int, delta: int) -> Term:
    vec = list(mine[1][3][1])
    vec[k] = tint(vec[k][1] + delta)
    return _set_comp(mine, 3, ttuple(*vec))


@register_resolver("rwm.shared-begin")
def _rwm_shared_begin(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    exc_b, rcs, x = got
    k = entry.arg("counter")
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(exc_b, _vec_update(rcs, k, 1), x)),
                (ctx.self_owner, _sp_vec_update(mine, k, 1)),
            ),
            kind="update",
            note=f"reader registered on counter {k}",
        )
    ]


@register_resolver("rwm.shared-acquire")
def _rwm_shared_acquire(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    x = got[2]
    k = entry.arg("counter")
    if mine[1][3][1][k][1] < 1:
        return GhostViolation("missing-token", iid, detail="no pending-reader token")
    comp = sp.protocol.compose_fn
    new_mine = comp(_sp_vec_update(mine, k, -1), named.sh(k, x))
    return [
        ExchangeAction(
            iid,
            ((_region(iid), region), (ctx.self_owner, new_mine)),
            kind="update",
            note="shared lock acquired",
        )
    ]


@register_resolver("rwm.shared-retry")
def _rwm_shared_retry(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    exc_b, rcs, x = got
    k = entry.arg("counter")
    if mine[1][3][1][k][1] < 1:
        return GhostViolation("missing-token", iid, detail="no pending-reader token")
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(exc_b, _vec_update(rcs, k, -1), x)),
                (ctx.self_owner, _sp_vec_update(mine, k, -1)),
            ),
            kind="update",
            note="reader backed out",
        )
    ]


@register_resolver("rwm.shared-release")
def _rwm_shared_release(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    got = named.fields_of(region)
    if got is None:
        return GhostViolation("missing-fields", iid)
    exc_b, rcs, x = got
    k = entry.arg("counter")
    agn_got = con_args(mine[1][4], "agn")
    if agn_got is None or agn_got[1][1][k][1] < 1:
        return GhostViolation("missing-token", iid, detail="no reader token held")
    vec = list(agn_got[1][1])
    vec[k] = tint(vec[k][1] - 1)
    new_sh = UNIT if not any(c[1] for c in vec) else tcon("agn", agn_got[0], ttuple(*vec))
    return [
        ExchangeAction(
            iid,
            (
                (_region(iid), named.fields(exc_b, _vec_update(rcs, k, -1), x)),
                (ctx.self_owner, _set_comp(mine, 4, new_sh)),
            ),
            kind="update",
            note="shared lock released",
        )
    ]


@register_resolver("rwm.shared-read")
def _rwm_shared_read(ctx, entry):
    iid, sp, named, region, mine = _rw_parts(ctx, entry)
    x = named.sh_value(mine)
    if x is None:
        return GhostViolation("missing-token", iid, detail="read outside a shared lock")
    if ctx.result != x:
        return GhostViolation(
            "reader-value-mismatch",
            iid,
            detail=f"read {pretty(ctx.result)}, lock agrees on {pretty(x)}",
        )
    return [OpenGuardAction(iid, ctx.self_owner, ex(x), licenses=ctx.label)]


# ---------------------------------------------------------------------------
# Lock properties


def _instance_fragments(scenario, state, iid):
    sp = scenario.protocols[iid]
    return sp, state.ledger.instance(iid).fragments


@register_property("rw-mutual-exclusion")
def _prop_rw_mutex(scenario, state, prop):
    iid = prop.param("instance")
    _, fragments = _instance_fragments(scenario, state, iid)
    holders = [o for o, el in fragments if el[1][2] != UNIT]
    return len(holders) <= 1, f"{iid}: exclusive holders {holders}"


@register_property("rw-reader-agreement")
def _prop_rw_agree(scenario, state, prop):
    iid = prop.param("instance")
    _, fragments = _instance_fragments(scenario, state, iid)
    values = set()
    for _, el in fragments:
        got = con_args(el[1][4], "agn")
        if got is not None:
            values.add(got[0])
    return len(values) <= 1, f"{iid}: readers disagree: {[pretty(v) for v in values]}"


@register_property("rw-fields-match-heap")
def _prop_rw_fields(scenario, state, prop):
    iid = prop.param("instance")
    named = scenario.named[iid]
    sp = scenario.protocols[iid]
    region = state.ledger.instance(iid).fragment_of(_region(iid), sp.protocol.unit)
    got = named.fields_of(region)
    if got is None:
        return False, f"{iid}: region fragment lost"
    exc_b, rc, _ = got
    heap_exc = state.machine.heap_value(scenario.cell_loc(prop.param("exc_cell")))
    if heap_exc != tbool(exc_b):
        return False, f"{iid}: exc flag ghost {exc_b} vs heap {pretty(heap_exc)}"
    rc_cells = prop.param("rc_cells")
    rcs = rc if isinstance(rc, tuple) else (rc,)
    for k, cell in enumerate(rc_cells):
        heap_rc = state.machine.heap_value(scenario.cell_loc(cell))
        if heap_rc != tint(rcs[k]):
            return False, f"{iid}: counter {k} ghost {rcs[k]} vs heap {pretty(heap_rc)}"
    return True, ""


@register_property("rw-stored-matches-cell")
def _prop_rw_stored(scenario, state, prop):
    iid = prop.param("instance")
    inst = state.ledger.instance(iid)
    got = con_args(inst.stored, "ex")
    if got is None:
        return True, ""  # exclusively held: nothing stored to compare
    cell = prop.param("cell")
    raw = state.machine.heap_value(scenario.cell_loc(cell))
    if raw is None:
        return False, f"{iid}: protected cell {cell} freed"
    value = raw if prop.param("raw_cell", True) else opt_to_ghost(raw)
    return value == got[0], (
        f"{iid}: stored {pretty(got[0])} vs cell {cell} = {pretty(value)}"
    )


# ---------------------------------------------------------------------------
# Lock program fragments


def _lock_exc_program(t: str, exc_loc, rc_locs: list, labels_suffix: str = ""):
    sfx = labels_suffix
    steps = [
        do_until(
            label(f"{t}.exc_begin{sfx}", cas(exc_loc, FALSE, TRUE)), "s", var("s")
        )
    ]
    for k, rl in enumerate(rc_locs):
        steps.append(
            do_until(
                label(f"{t}.exc_check{k}{sfx}", load("sc", rl)),
                "r",
                eq(var("r"), tint(0)),
            )
        )
    return seq(*steps, UNIT)


def _lock_shared_program(t: str, exc_loc, rc_loc, sfx: str = ""):
    body = let(
        "_",
        label(f"{t}.sh_begin{sfx}", fetch_add(rc_loc, tint(1))),
        let(
            "e",
            label(f"{t}.sh_check{sfx}", load("sc", exc_loc)),
            seq(
                if_(
                    var("e"),
                    label(f"{t}.sh_retry{sfx}", fetch_add(rc_loc, tint(-1))),
                    UNIT,
                ),
                var("e"),
            ),
        ),
    )
    return do_until(body, "e", eq(var("e"), FALSE))


# ---------------------------------------------------------------------------
# Reader-writer lock scenarios


@dataclass(frozen=True)
class RwLockScenarioParams:
    """counters=1 gives the single-counter lock; writers are ("incr", n)
    or ("write", value); readers list the counter index each reader uses."""

    counters: int = 1
    writers: tuple = (("incr", 1), ("incr", 1))
    readers: tuple = ()
    initial: int = 0
    locked: bool = True
    max_steps_per_thread: int = 5000

    def __post_init__(self):
        if self.counters < 1:
            raise ValueError("need at least one counter")
        for k in self.readers:
            if not 0 <= k < self.counters:
                raise ValueError("reader counter index out of range")


def _reachable_values(params: RwLockScenarioParams) -> tuple[Term, ...]:
    values = {params.initial}
    incr_total = sum(n for kind, n in params.writers if kind == "incr")
    base = {params.initial}
    for kind, n in params.writers:
        if kind == "write":
            base.add(n)
    for v in base:
        for extra in range(incr_total + 1):
            values.add(v + extra)
    return tuple(tint(v) for v in sorted(values))


def build_rwlock_scenario(params: RwLockScenarioParams) -> Scenario:
    k = params.counters
    multi = k > 1
    values = _reachable_values(params)
    nreaders = len(params.readers)
    if multi:
        sp, named = build_rwlock_multi(values, k, sp_max=max(1, nreaders))
    else:
        sp, named = build_rwlock(
            values, rc_range=(-2, max(4, nreaders + 1)), sp_max=max(4, nreaders)
        )
    pfx = "rwm" if multi else "rw"

    cells = [("exc", FALSE)] + [(f"rc{i}", tint(0)) for i in range(k)] + [
        ("cell", tint(params.initial))
    ]
    exc_loc = loc(0)
    rc_locs = [loc(1 + i) for i in range(k)]
    cell_loc = loc(1 + k)

    programs = []
    script: dict = {}
    properties = [
        _prop("ghost-invariant", "ghost-invariant"),
    ]
    tid = 0
    for kind, n in params.writers:
        t = f"t{tid}"
        if params.locked:
            lock = _lock_exc_program(t, exc_loc, rc_locs)
            if kind == "incr":
                crit = let(
                    "v", load("na", cell_loc), store("na", cell_loc, add(var("v"), tint(n)))
                )
            else:
                crit = store("na", cell_loc, tint(n))
            unlock = label(f"{t}.exc_release", store("sc", exc_loc, FALSE))
            programs.append(seq(lock, crit, unlock, UNIT))
            script[f"{t}.exc_begin"] = [
                _entry(f"{t}.exc_begin", f"{pfx}.exc-begin", when=TRUE, instance="lock")
            ]
            if multi:
                for j in range(k):
                    script[f"{t}.exc_check{j}"] = [
                        _entry(
                            f"{t}.exc_check{j}",
                            "rwm.exc-progress",
                            when=tint(0),
                            instance="lock",
                            counter=j,
                        )
                    ]
            else:
                script[f"{t}.exc_check0"] = [
                    _entry(
                        f"{t}.exc_check0", "rw.exc-acquire", when=tint(0), instance="lock"
                    )
                ]
            script[f"{t}.exc_release"] = [
                _entry(f"{t}.exc_release", f"{pfx}.exc-release", instance="lock", cell="cell")
            ]
        else:
            if kind == "incr":
                programs.append(
                    let("v", load("na", cell_loc), store("na", cell_loc, add(var("v"), tint(n))))
                )
            else:
                programs.append(store("na", cell_loc, tint(n)))
        tid += 1

    for kidx in params.readers:
        t = f"t{tid}"
        if params.locked:
            lock = _lock_shared_program(t, exc_loc, rc_locs[kidx])
            unlock_then_v = let(
                "v",
                label(f"{t}.sh_read", load("na", cell_loc)),
                seq(label(f"{t}.sh_release", fetch_add(rc_locs[kidx], tint(-1))), var("v")),
            )
            programs.append(seq(lock, unlock_then_v))
            counter_arg = {"counter": kidx} if multi else {}
            script[f"{t}.sh_begin"] = [
                _entry(f"{t}.sh_begin", f"{pfx}.shared-begin", instance="lock", **counter_arg)
            ]
            script[f"{t}.sh_check"] = [
                _entry(
                    f"{t}.sh_check",
                    f"{pfx}.shared-acquire",
                    when=FALSE,
                    instance="lock",
                    **counter_arg,
                )
            ]
            script[f"{t}.sh_retry"] = [
                _entry(f"{t}.sh_retry", f"{pfx}.shared-retry", instance="lock", **counter_arg)
            ]
            script[f"{t}.sh_read"] = [
                _entry(f"{t}.sh_read", f"{pfx}.shared-read", instance="lock", **counter_arg)
            ]
            script[f"{t}.sh_release"] = [
                _entry(
                    f"{t}.sh_release", f"{pfx}.shared-release", instance="lock", **counter_arg
                )
            ]
        else:
            programs.append(load("na", cell_loc))
        tid += 1

    protocols = {}
    initial_fragments = {}
    named_map = {}
    cell_instances = {}
    protected = {}
    if params.locked:
        protocols["lock"] = sp
        named_map["lock"] = named
        init_fields = (
            named.fields(False, (0,) * k, tint(params.initial))
            if multi
            else named.fields(False, 0, tint(params.initial))
        )
        initial_fragments["lock"] = ((_region("lock"), init_fields),)
        for name, _ in cells:
            cell_instances[name] = "lock"
        protected["lock"] = "cell"
        properties += [
            _prop("mutual-exclusion", "rw-mutual-exclusion", instance="lock"),
            _prop("reader-agreement", "rw-reader-agreement", instance="lock"),
            _prop(
                "fields-match-heap",
                "rw-fields-match-heap",
                instance="lock",
                exc_cell="exc",
                rc_cells=tuple(f"rc{i}" for i in range(k)),
            ),
            _prop("stored-matches-cell", "rw-stored-matches-cell", instance="lock", cell="cell"),
        ]

    terminal = [_prop("all-finished", "all-finished")]
    incr_total = sum(n for kind, n in params.writers if kind == "incr")
    if params.locked and all(kind == "incr" for kind, _ in params.writers):
        terminal.append(
            _prop(
                "cell-incremented",
                "heap-cell",
                cell="cell",
                op="eq",
                value=tint(params.initial + incr_total),
            )
        )
    if params.locked:
        for i, kidx in enumerate(params.readers):
            terminal.append(
                _prop(
                    f"reader-{i}-sane",
                    "thread-result-in",
                    tid=len(params.writers) + i,
                    values=values,
                )
            )

    from .terms import term_to_json

    protocol_json = {}
    if params.locked:
        if multi:
            protocol_json["lock"] = {
                "builtin": "rwlock-multi",
                "params": {
                    "values": [term_to_json(v) for v in values],
                    "k": k,
                    "rc_range": [-1, 2],
                    "sp_max": max(1, nreaders),
                    "agn_max": 1,
                },
            }
        else:
            protocol_json["lock"] = {
                "builtin": "rwlock",
                "params": {
                    "values": [term_to_json(v) for v in values],
                    "rc_range": [-2, max(4, nreaders + 1)],
                    "sp_max": max(4, nreaders),
                    "agn_max": 4,
                },
            }

    name = ("rwlock-multi" if multi else "rwlock") + ("" if params.locked else "-unlocked")
    return Scenario(
        name=name,
        cells=tuple(cells),
        programs=tuple(programs),
        protocols=protocols,
        initial_fragments=initial_fragments,
        script=script,
        properties=tuple(properties) if params.locked else (),
        terminal_properties=tuple(terminal) if params.locked else (),
        expectation="no-stuck" if params.locked else "stuck-reachable",
        max_steps_per_thread=params.max_steps_per_thread,
        named=named_map,
        cell_instances=cell_instances,
        protected_cells=protected,
        meta={"params": params, "protocol_json": protocol_json},
    )


def build_race_scenario(readers: int = 1, writers: int = 1) -> Scenario:
    """Locks removed, non-atomic accesses retained: a race must be found."""
    return build_rwlock_scenario(
        RwLockScenarioParams(
            writers=(("write", 7),) * writers, readers=(0,) * readers, locked=False
        )
    )


# ---------------------------------------------------------------------------
# Hash-table resolvers and properties


def _ht_slot_for_event(ctx: ResolveCtx, entry: ScriptEntry) -> tuple[str, int]:
    cell = ctx.event_cell()
    lock_iid = ctx.scenario.cell_instances.get(cell)
    slot = ctx.scenario.meta["lock_slot"].get(lock_iid)
    if slot is None:
        raise ReplayKeyError(f"no slot lock for cell {cell!r}")
    return lock_iid, slot


class ReplayKeyError(KeyError):
    pass


def _ht_total(scenario, ledger):
    sp = scenario.protocols["ht"]
    total = sp.protocol.unit
    for _, el in ledger.instance("ht").fragments:
        total = sp.protocol.compose_fn(total, el)
    return total


@register_resolver("ht.take-slot")
def _ht_take_slot(ctx, entry):
    """Exclusive acquisition also hands the slot fragment to the thread."""
    _, slot = _ht_slot_for_event(ctx, entry)
    sp = ctx.scenario.protocols["ht"]
    store_owner = f"store:slot{slot}"
    frag = ctx.ledger.instance("ht").fragment_of(store_owner, sp.protocol.unit)
    if map_get(frag[1][1], tint(slot)) is None:
        return GhostViolation(
            "missing-slot-fragment", "ht", detail=f"slot {slot} not in its store region"
        )
    return [TransferAction("ht", store_owner, ctx.self_owner, frag, sp.protocol.unit)]


@register_resolver("ht.give-slot")
def _ht_give_slot(ctx, entry):
    """Release returns the (possibly updated) slot fragment to its region."""
    _, slot = _ht_slot_for_event(ctx, entry)
    sp = ctx.scenario.protocols["ht"]
    mine = ctx.ledger.instance("ht").fragment_of(ctx.self_owner, sp.protocol.unit)
    got = map_get(mine[1][1], tint(slot))
    if got is None:
        return GhostViolation(
            "missing-slot-fragment", "ht", detail=f"thread does not hold slot {slot}"
        )
    element = ttuple(tmap(()), tmap([(tint(slot), got)]))
    remainder = ttuple(mine[1][0], _map_without(mine[1][1], tint(slot)))
    return [
        TransferAction("ht", ctx.self_owner, f"store:slot{slot}", element, remainder)
    ]


def _map_without(m: Term, key: Term) -> Term:
    return tmap((k, v) for k, v in map_entries(m) if k != key)


@register_resolver("ht.update")
def _ht_update(ctx, entry):
    """Slot write: move the logical map and the slot fragment together."""
    _, slot = _ht_slot_for_event(ctx, entry)
    sp = ctx.scenario.protocols["ht"]
    written = opt_to_ghost(ctx.event.written)
    kv = con_args(written, "some")
    if kv is None:
        return GhostViolation("ht-update-clears-slot", "ht")
    k, v = kv[0][1]
    mine = ctx.ledger.instance("ht").fragment_of(ctx.self_owner, sp.protocol.unit)
    if map_get(mine[1][0], k) is None:
        return GhostViolation(
            "missing-map-fragment", "ht",
            detail=f"thread updates {pretty(k)} without owning its map entry",
        )
    if map_get(mine[1][1], tint(slot)) is None:
        return GhostViolation(
            "missing-slot-fragment", "ht", detail=f"thread does not hold slot {slot}"
        )
    new_keymap = _map_set(mine[1][0], k, ex(some(v)))
    new_slotmap = _map_set(mine[1][1], tint(slot), ex(written))
    return [
        ExchangeAction(
            "ht",
            ((ctx.self_owner, ttuple(new_keymap, new_slotmap)),),
            kind="update",
            note=f"table write at slot {slot}",
        )
    ]


def _map_set(m: Term, key: Term, value: Term) -> Term:
    entries = [(k, v) for k, v in map_entries(m) if k != key]
    entries.append((key, value))
    return tmap(entries)


@register_resolver("ht.query-check")
def _ht_query_check(ctx, entry):
    """Pure observations at a probed slot: the physical read agrees with
    the ghost slot, and the overlap-composition premises hold."""
    from .monoid import and_premise

    _, slot = _ht_slot_for_event(ctx, entry)
    monoid = ctx.scenario.meta["ht_monoid"]
    elems = ctx.scenario.meta["ht_elems"]
    total = _ht_total(ctx.scenario, ctx.ledger)
    ghost_slot = elems.slot_value(total, slot)
    if ghost_slot is None:
        return GhostViolation("ht-slot-unowned", "ht", detail=f"slot {slot}")
    phys = opt_to_ghost(ctx.result)
    if phys != ghost_slot:
        return GhostViolation(
            "ht-slot-desync", "ht",
            detail=f"slot {slot} reads {pretty(phys)}, ghost holds {pretty(ghost_slot)}",
        )
    key = entry.arg("key")
    vm = elems.map_value(total, key)
    if vm is not None:
        x = ttuple(tmap([(key, ex(vm))]), tmap(()))
        y = elems.slot(slot, ghost_slot)
        cache_key = ("addendum", key, vm, slot, ghost_slot)
        verdict = monoid._cache.get(cache_key)
        if verdict is None:
            verdict = and_premise(monoid, x, y, monoid.compose_fn(x, y)).ok
            monoid._cache[cache_key] = verdict
        if not verdict:
            return GhostViolation(
                "overlap-composition-failed", "ht",
                detail=f"m({pretty(key)}) ∧ slot({slot}) does not compose",
            )
    return []


@register_property("ht-valid")
def _prop_ht_valid(scenario, state, prop):
    sp = scenario.protocols["ht"]
    total = _ht_total(scenario, state.ledger)
    return sp.complete(total), "joint table state violates the table invariants"


@register_property("ht-slots-match-heap")
def _prop_ht_slots(scenario, state, prop):
    elems = scenario.meta["ht_elems"]
    total = _ht_total(scenario, state.ledger)
    for i in range(elems.length):
        ghost_slot = elems.slot_value(total, i)
        if ghost_slot is None:
            return False, f"slot {i} unowned"
        raw = state.machine.heap_value(scenario.cell_loc(f"slot{i}"))
        if raw is None:
            return False, f"slot {i} cell freed"
        if opt_to_ghost(raw) != ghost_slot:
            return False, (
                f"slot {i}: heap {pretty(opt_to_ghost(raw))} vs ghost {pretty(ghost_slot)}"
            )
    return True, ""


# ---------------------------------------------------------------------------
# Hash-table scenario


@dataclass(frozen=True)
class HashTableScenarioParams:
    """Per-thread operation lists over a fixed table; collisions are
    chosen through the hash table spec."""

    hash_spec: HashFunctionSpec
    values: tuple  # value terms
    thread_ops: tuple  # per thread: tuple of ("update", k, v) | ("query", k)
    rc_range: tuple = (-1, 2)
    sp_max: int = 2
    agn_max: int = 2
    max_steps_per_thread: int = 10000

    def updater_of(self, key: Term) -> int | None:
        owner = None
        for t, ops in enumerate(self.thread_ops):
            for op in ops:
                if op[0] == "update" and op[1] == key:
                    if owner is not None and owner != t:
                        raise ValueError(
                            f"key {pretty(key)} updated by threads {owner} and {t}"
                        )
                    owner = t
        return owner


def _ht_query_program(t, op_idx, key, hash_spec, exc_locs, rc_locs, slot_locs, script):
    sfx = f".{op_idx}"
    length = hash_spec.length
    i = var("i")
    exc_at = index_chain(i, exc_locs, abort())
    rc_at = index_chain(i, rc_locs, abort())
    slot_at = index_chain(i, slot_locs, abort())
    read_lbl = f"{t}.read{sfx}"
    release_lbl = f"{t}.sh_release{sfx}"
    lock = _lock_shared_program(t, exc_at, rc_at, sfx)
    body = if_(
        eq(i, tint(length)),
        abort(),
        seq(
            lock,
            let(
                "r",
                match(
                    label(read_lbl, load("na", slot_at)),
                    "n",
                    tcon("inl", UNIT),
                    "kv",
                    if_(
                        eq(proj(1, var("kv")), key),
                        ("con", "inr", (proj(2, var("kv")),)),
                        app(var("probe"), add(i, tint(1))),
                    ),
                ),
                seq(label(release_lbl, fetch_add(rc_at, tint(-1))), var("r")),
            ),
        ),
    )
    for lbl, resolver, kw in (
        (f"{t}.sh_begin{sfx}", "rw.shared-begin", {}),
        (f"{t}.sh_retry{sfx}", "rw.shared-retry", {}),
        (release_lbl, "rw.shared-release", {}),
    ):
        script[lbl] = [_entry(lbl, resolver, instance="@cell", **kw)]
    script[f"{t}.sh_check{sfx}"] = [
        _entry(f"{t}.sh_check{sfx}", "rw.shared-acquire", when=FALSE, instance="@cell")
    ]
    script[read_lbl] = [
        _entry(read_lbl, "rw.shared-read", instance="@cell", raw_cell=False),
        _entry(read_lbl, "ht.query-check", instance="ht", key=key),
    ]
    return app(rec("probe", "i", body), tint(hash_spec.hash_of(key)))


def _ht_update_program(t, op_idx, key, value, hash_spec, exc_locs, rc_locs, slot_locs, script):
    sfx = f".{op_idx}"
    length = hash_spec.length
    i = var("i")
    exc_at = index_chain(i, exc_locs, abort())
    rc_at = index_chain(i, rc_locs, abort())
    slot_at = index_chain(i, slot_locs, abort())
    write_lbl = f"{t}.write{sfx}"
    unlock_lbl = f"{t}.unlock{sfx}"
    new_entry = tcon("inr", ttuple(key, value))
    write = label(write_lbl, store("na", slot_at, new_entry))
    body = if_(
        eq(i, tint(length)),
        abort(),
        seq(
            _lock_exc_program(t, exc_at, [rc_at], sfx),
            let(
                "s",
                load("na", slot_at),
                match(
                    var("s"),
                    "n",
                    write,
                    "kv",
                    if_(
                        eq(proj(1, var("kv")), key),
                        write,
                        app(var("probe"), add(i, tint(1))),
                    ),
                ),
            ),
            label(unlock_lbl, store("sc", exc_at, FALSE)),
            UNIT,
        ),
    )
    begin_lbl = f"{t}.exc_begin{sfx}"
    check_lbl = f"{t}.exc_check0{sfx}"
    script[begin_lbl] = [_entry(begin_lbl, "rw.exc-begin", when=TRUE, instance="@cell")]
    script[check_lbl] = [
        _entry(check_lbl, "rw.exc-acquire", when=tint(0), instance="@cell"),
        _entry(check_lbl, "ht.take-slot", when=tint(0), instance="ht"),
    ]
    script[write_lbl] = [_entry(write_lbl, "ht.update", instance="ht")]
    script[unlock_lbl] = [
        _entry(unlock_lbl, "ht.give-slot", instance="ht"),
        _entry(unlock_lbl, "rw.exc-release", instance="@cell", raw_cell=False),
    ]
    return app(rec("probe", "i", body), tint(hash_spec.hash_of(key)))


def build_hashtable_scenario(params: HashTableScenarioParams) -> Scenario:
    hash_spec = params.hash_spec
    length = hash_spec.length
    keys = hash_spec.keys
    none_opt = tcon("inl", UNIT)

    cells = [(f"slot{i}", none_opt) for i in range(length)]
    for i in range(length):
        cells += [(f"exc{i}", FALSE), (f"rc{i}", tint(0))]
    slot_locs = [loc(i) for i in range(length)]
    exc_locs = [loc(length + 2 * i) for i in range(length)]
    rc_locs = [loc(length + 2 * i + 1) for i in range(length)]

    ht_sp, ht_elems = build_hashtable_protocol(hash_spec, params.values)
    slot_states = (NONE,) + tuple(
        some(ttuple(k, v)) for k in keys for v in params.values
    )

    protocols = {"ht": ht_sp}
    named_map = {}
    initial_fragments = {
        "ht": tuple(
            [
                (
                    f"thread:{params.updater_of(k)}"
                    if params.updater_of(k) is not None
                    else "client",
                    ht_elems.m(k, NONE),
                )
                for k in keys
            ]
            + [(f"store:slot{i}", ht_elems.slot(i, NONE)) for i in range(length)]
        )
    }
    cell_instances = {}
    protected = {}
    lock_slot = {}
    properties = [
        _prop("ghost-invariant", "ghost-invariant"),
        _prop("table-invariants", "ht-valid"),
        _prop("slots-match-heap", "ht-slots-match-heap"),
    ]
    for i in range(length):
        iid = f"lock{i}"
        sp, named = build_rwlock(
            slot_states,
            rc_range=params.rc_range,
            sp_max=params.sp_max,
            agn_max=params.agn_max,
        )
        protocols[iid] = sp
        named_map[iid] = named
        initial_fragments[iid] = ((_region(iid), named.fields(False, 0, NONE)),)
        for cell in (f"slot{i}", f"exc{i}", f"rc{i}"):
            cell_instances[cell] = iid
        protected[iid] = f"slot{i}"
        lock_slot[iid] = i
        properties += [
            _prop(f"mutual-exclusion-{i}", "rw-mutual-exclusion", instance=iid),
            _prop(f"reader-agreement-{i}", "rw-reader-agreement", instance=iid),
            _prop(
                f"fields-match-heap-{i}",
                "rw-fields-match-heap",
                instance=iid,
                exc_cell=f"exc{i}",
                rc_cells=(f"rc{i}",),
            ),
            _prop(
                f"stored-matches-cell-{i}",
                "rw-stored-matches-cell",
                instance=iid,
                cell=f"slot{i}",
                raw_cell=False,
            ),
        ]

    script: dict = {}
    programs = []
    for t, ops in enumerate(params.thread_ops):
        tname = f"t{t}"
        qvars = [f"qr{idx}" for idx, op in enumerate(ops) if op[0] == "query"]
        results: list = []

        def build(idx: int):
            if idx == len(ops):
                out = UNIT
                for q in reversed(results):
                    out = pair(var(q), out)
                return out
            op = ops[idx]
            if op[0] == "update":
                expr = _ht_update_program(
                    tname, idx, op[1], op[2], hash_spec, exc_locs, rc_locs, slot_locs, script
                )
                return seq(expr, build(idx + 1))
            results.append(f"qr{idx}")
            expr = _ht_query_program(
                tname, idx, op[1], hash_spec, exc_locs, rc_locs, slot_locs, script
            )
            return let(f"qr{idx}", expr, build(idx + 1))

        programs.append(build(0))

    from .library import build_hashtable_monoid
    from .terms import term_to_json

    raw_monoid, _ = build_hashtable_monoid(hash_spec, params.values)

    protocol_json = {
        "ht": {
            "builtin": "hashtable",
            "params": {
                "length": length,
                "hash": [[term_to_json(key), h] for key, h in hash_spec.table],
                "values": [term_to_json(v) for v in params.values],
            },
        }
    }
    for i in range(length):
        protocol_json[f"lock{i}"] = {
            "builtin": "rwlock",
            "params": {
                "values": [term_to_json(v) for v in slot_states],
                "rc_range": list(params.rc_range),
                "sp_max": params.sp_max,
                "agn_max": params.agn_max,
            },
        }
    thread_ops_json = [
        [
            ["update", term_to_json(op[1]), term_to_json(op[2])]
            if op[0] == "update"
            else ["query", term_to_json(op[1])]
            for op in ops
        ]
        for ops in params.thread_ops
    ]

    return Scenario(
        name="hashtable",
        cells=tuple(cells),
        programs=tuple(programs),
        protocols=protocols,
        initial_fragments=initial_fragments,
        script=script,
        properties=tuple(properties),
        terminal_properties=(_prop("all-finished", "all-finished"),),
        expectation="no-stuck",
        max_steps_per_thread=params.max_steps_per_thread,
        named=named_map,
        cell_instances=cell_instances,
        protected_cells=protected,
        meta={
            "params": params,
            "lock_slot": lock_slot,
            "ht_monoid": raw_monoid,
            "ht_elems": ht_elems,
            "slot_cells": {f"slot{i}": i for i in range(length)},
            "protocol_json": protocol_json,
            "thread_ops_json": thread_ops_json,
        },
    )


def build_abort_scenario() -> Scenario:
    """Probing past the end of the table aborts, which the machine reports
    as a stuck state."""
    k0, k1 = tint(0), tint(1)
    hash_spec = HashFunctionSpec(1, ((k0, 0), (k1, 0)))
    params = HashTableScenarioParams(
        hash_spec,
        (tint(10), tint(11)),
        ((("update", k0, tint(10)), ("update", k1, tint(11))),),
    )
    scenario = build_hashtable_scenario(params)
    return Scenario(
        name="hashtable-abort",
        cells=scenario.cells,
        programs=scenario.programs,
        protocols=scenario.protocols,
        initial_fragments=scenario.initial_fragments,
        script=scenario.script,
        properties=scenario.properties,
        terminal_properties=(),
        expectation="stuck-reachable",
        max_steps_per_thread=scenario.max_steps_per_thread,
        named=scenario.named,
        cell_instances=scenario.cell_instances,
        protected_cells=scenario.protected_cells,
        meta=scenario.meta,
    )


# ---------------------------------------------------------------------------
# Sequential oracle and outcome comparison


def sequential_oracle(ops_per_thread) -> frozenset:
    """All interleavings of the per-thread operation lists over an atomic
    map; outcomes are (per-thread query results, terminal map) pairs."""
    from .terms import term_key

    seqs = [tuple(ops) for ops in ops_per_thread]
    outcomes = set()

    def go(pos, mapping, results):
        live = [i for i, s in enumerate(seqs) if pos[i] < len(s)]
        if not live:
            frozen_map = tuple(sorted(mapping.items(), key=lambda kv: term_key(kv[0])))
            outcomes.add((tuple(tuple(r) for r in results), frozen_map))
            return
        for i in live:
            op = seqs[i][pos[i]]
            new_pos = pos[:i] + (pos[i] + 1,) + pos[i + 1 :]
            if op[0] == "update":
                new_map = dict(mapping)
                new_map[op[1]] = op[2]
                go(new_pos, new_map, results)
            else:
                got = mapping.get(op[1])
                res = NONE if got is None else some(got)
                new_results = list(results)
                new_results[i] = results[i] + (res,)
                go(new_pos, mapping, new_results)

    go((0,) * len(seqs), {}, [()] * len(seqs))
    return frozenset(outcomes)


def decode_results(v: Term) -> tuple:
    """Nested-pair list of language options -> tuple of ghost options."""
    out = []
    while v != UNIT:
        if v[0] != "tuple" or len(v[1]) != 2:
            raise ValueError(f"not a result list: {pretty(v)}")
        out.append(opt_to_ghost(v[1][0]))
        v = v[1][1]
    return tuple(out)


def explorer_outcomes(scenario: Scenario, result) -> frozenset:
    """Terminal summaries in the oracle's outcome shape."""
    from .terms import term_key

    slot_cells = scenario.meta["slot_cells"]
    outcomes = set()
    for summary in result.terminal_summaries:
        results = tuple(decode_results(v) for v in summary.thread_values)
        mapping = {}
        for name, value in summary.cells:
            if name not in slot_cells:
                continue
            ghost = opt_to_ghost(value)
            kv = con_args(ghost, "some")
            if kv is not None:
                k, v = kv[0][1]
                mapping[k] = v
        frozen_map = tuple(sorted(mapping.items(), key=lambda kv: term_key(kv[0])))
        outcomes.add((results, frozen_map))
    return frozenset(outcomes)
