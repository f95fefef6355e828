"""Small-step semantics: head reductions, the two-step non-atomic
operations, race-to-stuck behavior, and determinism."""

import pytest
from hypothesis import given, settings, strategies as st

from guardcheck.lang import (
    MachineConfig,
    UsageError,
    abort,
    add,
    app,
    ast_from_json,
    ast_to_json,
    canonical_hash,
    cas,
    do_until,
    enabled_threads,
    eq,
    fetch_add,
    fork,
    free,
    if_,
    index_chain,
    initial_config,
    label,
    let,
    load,
    loc,
    match,
    pair,
    proj,
    rec,
    ref,
    seq,
    step,
    store,
    subst,
    var,
)
from guardcheck.terms import UNIT, tbool, tcon, tint


def run_to_end(cfg, tid=0, limit=500):
    for _ in range(limit):
        if cfg.threads[tid][0] != "run":
            return cfg
        out = step(cfg, tid)
        assert out.kind != "stuck", out.reason
        cfg = out.config
    raise AssertionError("did not finish")


def run_single(prog, cells=(), limit=500):
    cfg = run_to_end(initial_config(list(cells), [prog]), limit=limit)
    return cfg.threads[0][1], cfg


def first_stuck(prog, cells=()):
    cfg = initial_config(list(cells), [prog])
    for _ in range(500):
        if not enabled_threads(cfg):
            raise AssertionError("finished without getting stuck")
        out = step(cfg, 0)
        if out.kind == "stuck":
            return out.reason
        cfg = out.config
    raise AssertionError("never got stuck")


class TestPureReductions:
    def test_arithmetic_and_let(self):
        v, _ = run_single(let("x", add(tint(2), tint(3)), add(var("x"), tint(1))))
        assert v == tint(6)

    def test_recursion(self):
        # sum 0..3 via rec
        f = rec(
            "f",
            "n",
            if_(eq(var("n"), tint(0)), tint(0), add(var("n"), app(var("f"), add(var("n"), tint(-1))))),
        )
        v, _ = run_single(app(f, tint(3)))
        assert v == tint(6)

    def test_pairs_and_projections(self):
        v, _ = run_single(proj(2, pair(tint(1), tint(2))))
        assert v == tint(2)

    def test_match_on_sums(self):
        prog = match(tcon("inr", tint(5)), "l", tint(0), "r", add(var("r"), tint(1)))
        v, _ = run_single(prog)
        assert v == tint(6)

    def test_sequencing_discards(self):
        v, _ = run_single(seq(tint(1), tint(2)))
        assert v == tint(2)

    def test_capture_avoiding_shadowing(self):
        # inner binder shadows: substitution must not descend
        prog = let("x", tint(1), let("x", tint(2), var("x")))
        v, _ = run_single(prog)
        assert v == tint(2)
        body = let("x", var("y"), var("x"))
        assert subst(body, "x", tint(9)) == body


class TestHeapOps:
    def test_ref_allocates_at_cursor(self):
        cfg = initial_config([tint(0)], [ref(tint(7))])
        out = step(cfg, 0)
        assert out.event.op == "ref" and out.event.loc == 1
        assert out.config.cursor == 2

    def test_cas_success_and_failure(self):
        v, cfg = run_single(cas(loc(0), tint(0), tint(9)), cells=[tint(0)])
        assert v == tbool(True) and cfg.heap[0][1] == tint(9)
        v, cfg = run_single(cas(loc(0), tint(1), tint(9)), cells=[tint(0)])
        assert v == tbool(False) and cfg.heap[0][1] == tint(0)

    def test_fetch_add_returns_old(self):
        v, cfg = run_single(fetch_add(loc(0), tint(5)), cells=[tint(2)])
        assert v == tint(2) and cfg.heap[0][1] == tint(7)

    def test_fetch_add_negative(self):
        v, cfg = run_single(fetch_add(loc(0), tint(-1)), cells=[tint(2)])
        assert cfg.heap[0][1] == tint(1)

    def test_free_then_use(self):
        assert first_stuck(seq(free(loc(0)), load("sc", loc(0))), cells=[tint(0)]) == "use-after-free"

    def test_free_absent(self):
        assert first_stuck(free(loc(3)), cells=[tint(0)]) == "free-absent"

    def test_boolean_cell(self):
        v, _ = run_single(load("sc", loc(0)), cells=[tbool(True)])
        assert v == tbool(True)


class TestNonAtomic:
    def test_na_read_two_steps_and_counts(self):
        cfg = initial_config([tint(4)], [load("na", loc(0))])
        out = step(cfg, 0)
        assert out.config.heap[0][2] == ("r", 1)  # begin bumps the count
        out2 = step(out.config, 0)
        assert out2.config.heap[0][2] == ("r", 0)
        assert out2.config.threads[0] == ("done", tint(4))

    def test_na_write_goes_through_writing(self):
        cfg = initial_config([tint(0)], [store("na", loc(0), tint(8))])
        out = step(cfg, 0)
        assert out.config.heap[0][2] == ("w",)
        out2 = step(out.config, 0)
        assert out2.config.heap[0] == (0, tint(8), ("r", 0))

    def test_na_roundtrip_matches_sc_on_race_free_program(self):
        for ordering in ("na", "sc"):
            v, cfg = run_single(load(ordering, loc(0)), cells=[tint(3)])
            assert v == tint(3)
            assert cfg.heap[0] == (0, tint(3), ("r", 0))

    def test_sc_read_allowed_during_na_read(self):
        cfg = initial_config([tint(1)], [load("na", loc(0)), load("sc", loc(0))])
        mid = step(cfg, 0).config
        out = step(mid, 1)
        assert out.kind == "next"

    def test_race_table(self):
        races = [
            # (first op, second op, stuck reason of the second)
            (load("na", loc(0)), store("na", loc(0), tint(1)), "race-na-write"),
            (load("na", loc(0)), store("sc", loc(0), tint(1)), "race-sc-write"),
            (load("na", loc(0)), cas(loc(0), tint(0), tint(1)), "race-cas"),
            (load("na", loc(0)), fetch_add(loc(0), tint(1)), "race-faa"),
            (store("na", loc(0), tint(1)), load("na", loc(0)), "race-na-read"),
            (store("na", loc(0), tint(1)), load("sc", loc(0)), "race-sc-read"),
            (load("na", loc(0)), free(loc(0)), "free-race"),
        ]
        for first, second, reason in races:
            cfg = initial_config([tint(0)], [first, second])
            mid = step(cfg, 0).config  # first op begins
            out = step(mid, 1)
            assert out.kind == "stuck" and out.reason == reason, (first, second)

    def test_reading_count_conservation(self):
        # two overlapping na reads: counts go 0 -> 1 -> 2 -> 1 -> 0
        cfg = initial_config([tint(0)], [load("na", loc(0)), load("na", loc(0))])
        counts = [cfg.heap[0][2][1]]
        for tid in (0, 1, 0, 1):
            cfg = step(cfg, tid).config
            counts.append(cfg.heap[0][2][1])
        assert counts == [0, 1, 2, 1, 0]


class TestStuckReasons:
    def test_abort(self):
        assert first_stuck(abort()) == "abort"

    def test_type_errors(self):
        assert first_stuck(proj(1, tint(1))) == "type-proj"
        assert first_stuck(app(tint(1), tint(2))) == "type-app"
        assert first_stuck(if_(tint(1), tint(2), tint(3))) == "type-if"
        assert first_stuck(add(tbool(True), tint(1))) == "type-add"
        assert first_stuck(match(tint(3), "l", UNIT, "r", UNIT)) == "type-match"

    def test_overflow_traps(self):
        big = tint(2**62)
        assert first_stuck(add(add(big, big), add(big, big))) == "overflow"


class TestThreading:
    def test_fork_spawns(self):
        cfg = initial_config([tint(0)], [seq(fork(store("sc", loc(0), tint(1))), tint(2))])
        out = step(cfg, 0)
        assert len(out.config.threads) == 2
        assert enabled_threads(out.config) == [0, 1]

    def test_enabled_excludes_done_and_stuck(self):
        cfg = initial_config([tint(0)], [tint(1), abort(), store("sc", loc(0), tint(2))])
        assert enabled_threads(cfg) == [1, 2]  # thread 0 starts as a value
        out = step(cfg, 1)
        assert enabled_threads(out.config) == [2]

    def test_step_usage_errors(self):
        cfg = initial_config([], [tint(1)])
        with pytest.raises(UsageError):
            step(cfg, 5)
        with pytest.raises(UsageError):
            step(cfg, 0)  # thread is done, not running

    def test_done_outcome_for_value_thread(self):
        cfg = MachineConfig((), (("run", tint(3)),), 0, ())
        out = step(cfg, 0)
        assert out.kind == "done" and out.value == tint(3)


class TestDeterminism:
    def test_step_is_a_function(self):
        prog = do_until(fetch_add(loc(0), tint(1)), "r", eq(var("r"), tint(2)))
        cfg = initial_config([tint(0)], [prog])
        a = step(cfg, 0)
        b = step(cfg, 0)
        assert a == b

    def test_canonical_hash_distinguishes_heaps(self):
        c1 = initial_config([tint(0)], [tint(1)])
        c2 = initial_config([tint(1)], [tint(1)])
        assert canonical_hash(c1) == canonical_hash(c1)
        assert canonical_hash(c1) != canonical_hash(c2)

    def test_config_changes_after_step(self):
        prog = store("sc", loc(0), tint(5))
        cfg = initial_config([tint(0)], [prog])
        out = step(cfg, 0)
        assert canonical_hash(cfg) != canonical_hash(out.config)


class TestLabels:
    def test_label_fires_on_completion_with_result(self):
        cfg = initial_config([tint(2)], [label("a", fetch_add(loc(0), tint(1)))])
        out = step(cfg, 0)
        assert out.fired == (("a", tint(2)),)

    def test_na_label_fires_on_second_step(self):
        cfg = initial_config([tint(2)], [label("a", load("na", loc(0)))])
        out = step(cfg, 0)
        assert out.fired == ()
        out2 = step(out.config, 0)
        assert out2.fired == (("a", tint(2)),)


class TestSugar:
    def test_index_chain(self):
        prog = app(
            rec("f", "i", index_chain(var("i"), [tint(10), tint(11), tint(12)], abort())),
            tint(2),
        )
        v, _ = run_single(prog)
        assert v == tint(12)

    def test_index_chain_fallback(self):
        prog = index_chain(tint(5), [tint(10)], abort())
        assert first_stuck(prog) == "abort"

    def test_do_until_runs_body_at_least_once(self):
        prog = do_until(fetch_add(loc(0), tint(1)), "r", tbool(True))
        v, cfg = run_single(prog, cells=[tint(0)])
        assert cfg.heap[0][1] == tint(1)


def programs():
    base = st.one_of(
        st.integers(-5, 5).map(tint),
        st.booleans().map(tbool),
        st.just(UNIT),
        st.just(var("x")),
    )
    return st.recursive(
        base,
        lambda inner: st.one_of(
            st.tuples(inner, inner).map(lambda p: add(*p)),
            st.tuples(inner, inner).map(lambda p: eq(*p)),
            st.tuples(inner, inner, inner).map(lambda t: if_(*t)),
            st.tuples(inner, inner).map(lambda p: let("x", p[0], p[1])),
            st.tuples(inner, inner).map(lambda p: pair(*p)),
            inner.map(lambda e: proj(1, e)),
        ),
        max_leaves=10,
    )


@given(programs())
@settings(max_examples=60)
def test_prop_ast_json_roundtrip(prog):
    assert ast_from_json(ast_to_json(prog)) == prog


@given(programs())
@settings(max_examples=60)
def test_prop_closed_programs_terminate_or_stick(prog):
    closed = subst(prog, "x", tint(0))
    cfg = initial_config([], [closed])
    for _ in range(200):
        if cfg.threads[0][0] != "run":
            break
        out = step(cfg, 0)
        cfg = out.config
        if out.kind == "stuck":
            break
    assert cfg.threads[0][0] in ("done", "stuck")
