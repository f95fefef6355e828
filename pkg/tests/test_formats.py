"""JSON schemas: combinator loading, custom protocols, queries, scenario
round-trips, and report stability."""

import json

import pytest

from guardcheck.explore import explore
from guardcheck.formats import (
    FormatError,
    dumps,
    element_from_json,
    load_monoid,
    load_protocol,
    load_queries,
    result_to_json,
    scenario_from_json,
    scenario_to_json,
)
from guardcheck.monoid import carrier, check_pcm_laws
from guardcheck.protocol import check_wellformed, guard_holds
from guardcheck.studies import RwLockScenarioParams, build_rwlock_scenario
from guardcheck.terms import UNIT, tfrac, tint, tmap


class TestMonoidLoading:
    def test_excl(self):
        spec = load_monoid({"kind": "excl", "values": [["int", 0], ["int", 1]]})
        assert len(carrier(spec)) == 4

    def test_agn_and_agnvec(self):
        spec = load_monoid({"kind": "agn", "values": [["sym", "a"]], "max_count": 2})
        assert check_pcm_laws(spec).ok
        spec = load_monoid(
            {"kind": "agnvec", "values": [["sym", "a"]], "k": 2, "max_count": 1}
        )
        assert check_pcm_laws(spec).ok

    def test_numeric_kinds(self):
        assert len(carrier(load_monoid({"kind": "nat", "limit": 3}))) == 4
        assert len(carrier(load_monoid({"kind": "int", "lo": -1, "hi": 1}))) == 3
        frac = load_monoid({"kind": "frac", "den_bound": 2, "max_value": 1})
        assert tfrac(1, 2) in carrier(frac)

    def test_product_and_finmap(self):
        doc = {
            "kind": "product",
            "parts": [{"kind": "nat", "limit": 1}, {"kind": "excl", "values": [["int", 0]]}],
        }
        spec = load_monoid(doc)
        assert check_pcm_laws(spec).ok
        fm = load_monoid(
            {"kind": "finmap", "keys": [["sym", "a"]], "value": {"kind": "nat", "limit": 2}}
        )
        assert tmap(()) == fm.unit

    def test_table_monoid(self):
        u, x = ["unit"], ["sym", "x"]
        doc = {
            "kind": "table",
            "elements": [u, x],
            "unit": u,
            "compose": [[u, u, u], [u, x, x], [x, x, x]],
        }
        spec = load_monoid(doc)
        assert check_pcm_laws(spec).ok

    def test_errors(self):
        with pytest.raises(FormatError):
            load_monoid({"kind": "martian"})
        with pytest.raises(FormatError):
            load_monoid({"kind": "excl"})
        with pytest.raises(FormatError):
            load_monoid([1, 2, 3])


class TestProtocolLoading:
    def test_builtins(self):
        for doc in (
            {"builtin": "fractional"},
            {"builtin": "counting"},
            {"builtin": "forever"},
            {"builtin": "rwlock", "params": {"values": [["sym", "a"], ["sym", "b"]]}},
            {
                "builtin": "hashtable",
                "params": {
                    "length": 2,
                    "hash": [[["int", 0], 0]],
                    "values": [["int", 5]],
                },
            },
        ):
            sp, _ = load_protocol(doc)
            assert check_wellformed(sp).ok, doc

    def test_unknown_builtin(self):
        with pytest.raises(FormatError):
            load_protocol({"builtin": "alchemy"})

    def test_custom_protocol_tables(self):
        # the one-item forever pattern written out longhand
        doc = {
            "name": "custom-forever",
            "protocol": {"kind": "trivial"},
            "storage": {"kind": "excl", "values": [["int", 1]]},
            "complete": {"table": [["unit"]]},
            "stored_of": {"table": [[["unit"], ["con", "ex", [["int", 1]]]]]},
        }
        sp, _ = load_protocol(doc)
        assert check_wellformed(sp).ok
        assert guard_holds(sp, UNIT, ("con", "ex", (tint(1),))).ok

    def test_custom_protocol_missing_stored(self):
        doc = {
            "protocol": {"kind": "trivial"},
            "storage": {"kind": "excl", "values": [["int", 1]]},
            "complete": {"table": [["unit"]]},
            "stored_of": {"table": []},
        }
        with pytest.raises(FormatError):
            load_protocol(doc)


class TestElements:
    def test_named_and_compose(self):
        sp, named = load_protocol(
            {"builtin": "rwlock", "params": {"values": [["sym", "a"]]}}
        )
        el = element_from_json(
            ["compose", [["named", "fields", [["bool", False], ["int", 0], ["sym", "a"]]],
                         ["named", "shPending", []]]],
            named,
            sp.protocol.compose_fn,
        )
        assert not sp.complete(el)  # rc=0 but one pending reader

    def test_named_requires_constructors(self):
        with pytest.raises(FormatError):
            element_from_json(["named", "fields", []], None)

    def test_queries_loading(self):
        doc = {
            "queries": [
                {"kind": "guard", "p": ["frac", 1, 2], "s": ["int", 1], "expect": "holds"},
                {"kind": "valid-fragment", "p": ["frac", 1, 2]},
            ]
        }
        qs = load_queries(doc, None)
        assert qs[0]["p"] == tfrac(1, 2) and qs[1]["expect"] == "holds"
        with pytest.raises(FormatError):
            load_queries({"queries": [{"kind": "guard", "expect": "maybe", "p": ["unit"], "s": ["unit"]}]}, None)
        with pytest.raises(FormatError):
            load_queries({"queries": [{"kind": "zap"}]}, None)


class TestScenarioRoundtrip:
    def test_report_identical_after_roundtrip(self):
        s = build_rwlock_scenario(
            RwLockScenarioParams(writers=(("incr", 1),), readers=(0,))
        )
        doc = json.loads(json.dumps(scenario_to_json(s)))
        s2 = scenario_from_json(doc)
        r1 = dumps(result_to_json(explore(s)))
        r2 = dumps(result_to_json(explore(s2)))
        assert r1 == r2

    def test_dumps_sorted_and_stable(self):
        d1 = dumps({"b": 1, "a": [2, 3]})
        d2 = dumps({"a": [2, 3], "b": 1})
        assert d1 == d2
        assert d1.index('"a"') < d1.index('"b"')


class TestHandWrittenScenario:
    """A scenario document authored by hand (no builder), driving the
    generic literal ghost resolvers."""

    DOC = {
        "name": "hand-written",
        "cells": [["c", ["int", 5]]],
        "threads": [
            ["seq", ["label", "take", ["load", "sc", ["con", "loc", [["int", 0]]]]],
             ["label", "give", ["int", 0]]]
        ],
        "protocols": [
            {
                "id": "shares",
                "builtin": "fractional",
                "params": {"den_bound": 4, "max_value": 2, "nat_limit": 4},
                "fragments": [["thread:0", ["frac", 1, 1]]],
            }
        ],
        "script": [
            {
                "label": "take",
                "resolver": "ghost.exchange",
                "args": {
                    "instance": "shares",
                    "updates": {"list": [{"list": ["self", {"term": ["frac", 0, 1]}]}]},
                    "withdrawn": {"term": ["int", 1]},
                    "kind": "withdraw",
                },
            },
            {
                "label": "give",
                "resolver": "ghost.exchange",
                "args": {
                    "instance": "shares",
                    "updates": {"list": [{"list": ["self", {"term": ["frac", 1, 1]}]}]},
                    "deposited": {"term": ["int", 1]},
                    "kind": "deposit",
                },
            },
        ],
        "properties": [{"name": "ledger", "kind": "ghost-invariant", "params": {}}],
        "expectation": "no-stuck",
    }

    def test_runs_clean(self):
        s = scenario_from_json(self.DOC)
        r = explore(s)
        assert r.ok and not r.violations
        assert [t for _, t in r.terminal_summaries[0].stored] == [tint(1)]

    def test_withdraw_twice_is_a_ghost_violation(self):
        doc = json.loads(json.dumps(self.DOC))
        doc["script"][1] = dict(doc["script"][0], label="give")
        s = scenario_from_json(doc)
        r = explore(s)
        assert not r.ok
        assert any("rejected" in v.detail for v in r.violations)

    def test_open_guard_literal(self):
        doc = json.loads(json.dumps(self.DOC))
        doc["protocols"][0] = {
            "id": "shares",
            "builtin": "fractional",
            "params": {"den_bound": 4, "max_value": 2, "nat_limit": 4},
            "fragments": [["thread:0", ["frac", 1, 2]], ["region:other", ["frac", 1, 2]]],
        }
        doc["script"] = [
            {
                "label": "take",
                "resolver": "ghost.open-guard",
                "args": {"instance": "shares", "owner": "self", "element": {"term": ["int", 1]}},
            }
        ]
        s = scenario_from_json(doc)
        r = explore(s)
        assert r.ok, [v.describe() for v in r.violations]
