"""Monoid relations decided by enumeration, pinned to hand-derived facts."""

import pytest
from hypothesis import given, settings, strategies as st

from guardcheck.library import build_agn, build_excl, build_int, build_nat, ex
from guardcheck.monoid import (
    FAILS,
    HOLDS,
    UP_TO_BOUND,
    ElementEnumerator,
    MonoidSpec,
    and_premise,
    carrier,
    check_pcm_laws,
    compose,
    frame_preserving_update,
    leq,
    leq_witness,
)
from guardcheck.terms import BOT, UNIT, tint, tsym


EXCL2 = build_excl((tint(0), tint(1)))
NAT = build_nat(8)


def test_compose_excl_conflict():
    # two exclusive claims always clash
    assert compose(EXCL2, ex(tint(0)), ex(tint(1))) == BOT
    assert compose(EXCL2, ex(tint(0)), ex(tint(0))) == BOT


def test_compose_unit_law():
    for a in carrier(EXCL2):
        assert compose(EXCL2, a, UNIT) == a


def test_leq_unit_below_everything():
    for a in carrier(EXCL2):
        assert leq(EXCL2, UNIT, a)


def test_leq_excl_incomparable():
    # exhaustive enumeration of the 4-element carrier
    assert not leq(EXCL2, ex(tint(0)), ex(tint(1)))


def test_leq_nat_witness():
    assert leq_witness(NAT, tint(2), tint(5)) == tint(3)


def test_fpu_excl_swap_holds():
    r = frame_preserving_update(EXCL2, ex(tint(0)), ex(tint(1)))
    assert r.verdict == HOLDS


def test_fpu_reflexive():
    for a in carrier(EXCL2):
        assert frame_preserving_update(EXCL2, a, a).ok


def test_fpu_unit_to_excl_fails_with_self_verifying_witness():
    r = frame_preserving_update(EXCL2, UNIT, ex(tint(1)))
    assert r.verdict == FAILS
    # the witness frame is valid with ε but clashes with ex(1)
    assert EXCL2.valid_fn(compose(EXCL2, UNIT, r.witness))
    assert not EXCL2.valid_fn(compose(EXCL2, ex(tint(1)), r.witness))


def test_and_premise_conflicting_exclusives():
    r = and_premise(EXCL2, ex(tint(0)), ex(tint(1)), BOT)
    assert r.verdict == HOLDS  # no valid state extends both


def test_and_premise_unit_always():
    for x in carrier(EXCL2):
        for y in carrier(EXCL2):
            assert and_premise(EXCL2, x, y, UNIT).ok


def test_and_premise_failure_witness():
    # 1 and 2 both sit below 3 in (ℕ, +), but 5 does not
    r = and_premise(NAT, tint(1), tint(2), tint(5))
    assert r.verdict == FAILS
    t = r.witness
    assert leq(NAT, tint(1), t) and leq(NAT, tint(2), t) and not leq(NAT, tint(5), t)


def test_and_premise_antitone_in_target():
    agn = build_agn((tsym("a"), tsym("b")), max_count=3)
    x, y = ("con", "agn", (tsym("a"), tint(1))), ("con", "agn", (tsym("a"), tint(2)))
    z = ("con", "agn", (tsym("a"), tint(2)))
    if and_premise(agn, x, y, z).ok:
        for z2 in carrier(agn):
            if leq(agn, z2, z):
                assert and_premise(agn, x, y, z2).ok


def test_check_pcm_laws_excl_exhaustive():
    report = check_pcm_laws(EXCL2)
    assert report.ok
    assert report.carrier_size == 4
    assert all(c.exhaustive for c in report.checks)


def test_check_pcm_laws_broken_commutativity():
    def bad_compose(a, b):
        if a == UNIT:
            return b
        return a  # left-biased: not commutative

    spec = MonoidSpec(
        "broken",
        UNIT,
        bad_compose,
        lambda t: True,
        ElementEnumerator("exhaustive", lambda: iter([UNIT, tint(1), tint(2)])),
    )
    report = check_pcm_laws(spec)
    law = {c.law: c for c in report.checks}["commutativity"]
    assert not law.ok
    a, b = law.witness
    assert bad_compose(a, b) != bad_compose(b, a)


def test_check_pcm_laws_validity_closure():
    # valid only on even numbers: 2 ≼ 4 keeps validity, but 2 ≼ 3 breaks it
    spec = MonoidSpec(
        "evens-valid",
        tint(0),
        lambda a, b: tint(a[1] + b[1]),
        lambda t: t[1] % 2 == 0,
        ElementEnumerator("bounded", lambda: iter([tint(n) for n in range(6)])),
    )
    report = check_pcm_laws(spec)
    law = {c.law: c for c in report.checks}["validity-downward-closed"]
    assert not law.ok


def test_bounded_mode_reports_up_to_bound():
    r = frame_preserving_update(NAT, tint(0), tint(1))
    assert r.verdict == UP_TO_BOUND


def test_enumerator_must_start_with_unit():
    spec = MonoidSpec(
        "bad",
        tint(0),
        lambda a, b: tint(a[1] + b[1]),
        lambda t: True,
        ElementEnumerator("exhaustive", lambda: iter([tint(1), tint(0)])),
    )
    with pytest.raises(ValueError):
        carrier(spec)


def test_verdicts_stable_under_enumeration_permutation():
    reversed_enum = ElementEnumerator(
        "exhaustive",
        lambda: iter([UNIT] + list(reversed([e for e in carrier(EXCL2) if e != UNIT]))),
    )
    permuted = MonoidSpec("excl-perm", UNIT, EXCL2.compose_fn, EXCL2.valid_fn, reversed_enum)
    for a in carrier(EXCL2):
        for b in carrier(EXCL2):
            assert (
                frame_preserving_update(EXCL2, a, b).ok
                == frame_preserving_update(permuted, a, b).ok
            )


# -- property-based invariants

_elements = st.sampled_from(carrier(EXCL2))
_nat_elements = st.sampled_from(carrier(NAT))


@given(_elements)
def test_prop_leq_reflexive(a):
    assert leq(EXCL2, a, a)


@given(_nat_elements, _nat_elements, _nat_elements)
@settings(max_examples=30)
def test_prop_leq_transitive(a, b, c):
    if leq(NAT, a, b) and leq(NAT, b, c):
        assert leq(NAT, a, c)


@given(_elements, _elements, _elements)
@settings(max_examples=30)
def test_prop_fpu_transitive_on_samples(a, b, c):
    if frame_preserving_update(EXCL2, a, b).ok and frame_preserving_update(EXCL2, b, c).ok:
        assert frame_preserving_update(EXCL2, a, c).ok


@given(_elements, _elements)
def test_prop_fpu_failure_witness_self_verifies(a, b):
    r = frame_preserving_update(EXCL2, a, b)
    if r.verdict == FAILS:
        c = r.witness
        assert EXCL2.valid_fn(compose(EXCL2, a, c))
        assert not EXCL2.valid_fn(compose(EXCL2, b, c))


@given(_elements, _elements)
def test_prop_commutative(a, b):
    assert compose(EXCL2, a, b) == compose(EXCL2, b, a)


def test_int_monoid_has_inverses():
    ints = build_int(-3, 3)
    assert leq(ints, tint(2), tint(-1))  # witness -3 exists in the bounded carrier
