"""JSON schemas: monoid combinators, protocols, relation queries,
scenarios, and reports.

Monoids are combinator trees (excl | agn | agnvec | nat | int | frac |
product | finmap | table | trivial). Protocols are either a named builtin
with parameters or a custom pair of monoids with ``complete`` and
``stored_of`` given as decision tables over enumerated elements. Elements
are canonical term arrays, with ["named", ctor, [args...]] resolving
through a protocol's named-element constructors.

All emitters produce key-sorted JSON so identical inputs give
byte-identical outputs.
"""

from __future__ import annotations

import json

from .explore import ExplorationResult, PropertySpec, Scenario, ScriptEntry
from .lang import ast_from_json, ast_to_json
from .library import (
    HashFunctionSpec,
    build_agn,
    build_agnvec,
    build_counting,
    build_excl,
    build_finmap,
    build_forever,
    build_frac,
    build_fractional,
    build_fractional_memory,
    build_hashtable_monoid,
    build_hashtable_protocol,
    build_int,
    build_nat,
    build_product,
    build_rwlock,
    build_rwlock_multi,
    build_table_monoid,
    build_trivial,
)
from .monoid import MonoidSpec
from .protocol import StorageProtocolSpec
from .terms import Term, is_term, term_from_json, term_to_json

__all__ = [
    "FormatError",
    "load_monoid",
    "load_protocol",
    "element_from_json",
    "load_queries",
    "scenario_to_json",
    "scenario_from_json",
    "result_to_json",
    "dumps",
]


class FormatError(ValueError):
    """Input document does not match the schema."""


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _need(doc: dict, key: str):
    if key not in doc:
        raise FormatError(f"missing field {key!r} in {sorted(doc)}")
    return doc[key]


def _terms(docs) -> tuple[Term, ...]:
    return tuple(term_from_json(d) for d in docs)


# ---------------------------------------------------------------------------
# Monoids


def load_monoid(doc: dict) -> MonoidSpec:
    if not isinstance(doc, dict):
        raise FormatError(f"monoid must be an object, got {type(doc).__name__}")
    kind = _need(doc, "kind")
    try:
        if kind == "excl":
            return build_excl(_terms(_need(doc, "values")))
        if kind == "agn":
            return build_agn(_terms(_need(doc, "values")), doc.get("max_count", 4))
        if kind == "agnvec":
            return build_agnvec(
                _terms(_need(doc, "values")), _need(doc, "k"), doc.get("max_count", 2)
            )
        if kind == "nat":
            return build_nat(doc.get("limit", 8))
        if kind == "int":
            return build_int(doc.get("lo", -8), doc.get("hi", 8))
        if kind == "frac":
            return build_frac(doc.get("den_bound", 12), doc.get("max_value", 4))
        if kind == "product":
            return build_product(
                doc.get("name", "product"),
                [load_monoid(p) for p in _need(doc, "parts")],
                doc.get("total", False),
            )
        if kind == "finmap":
            return build_finmap(
                _terms(_need(doc, "keys")), load_monoid(_need(doc, "value"))
            )
        if kind in ("table", "custom-table"):
            table = {
                (term_from_json(a), term_from_json(b)): term_from_json(c)
                for a, b, c in _need(doc, "compose")
            }
            return build_table_monoid(
                doc.get("name", "table"),
                list(_terms(_need(doc, "elements"))),
                term_from_json(_need(doc, "unit")),
                table,
                _terms(doc.get("invalid", [])),
            )
        if kind == "trivial":
            return build_trivial()
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad {kind} monoid: {exc}") from exc
    raise FormatError(f"unknown monoid kind {kind!r}")


# ---------------------------------------------------------------------------
# Protocols

_HASH_PARAMS = ("length", "hash", "values")


def _hash_spec(params: dict) -> HashFunctionSpec:
    return HashFunctionSpec(
        _need(params, "length"),
        tuple((term_from_json(k), h) for k, h in _need(params, "hash")),
    )


def load_protocol(doc: dict):
    """Returns (StorageProtocolSpec, named-constructor map or None)."""
    if not isinstance(doc, dict):
        raise FormatError("protocol must be an object")
    if "builtin" in doc:
        name = doc["builtin"]
        params = doc.get("params", {})
        try:
            if name == "fractional":
                return (
                    build_fractional(
                        params.get("den_bound", 12),
                        params.get("max_value", 4),
                        params.get("nat_limit", 16),
                    ),
                    None,
                )
            if name == "fractional-memory":
                return build_fractional_memory(_terms(_need(params, "keys"))), None
            if name == "counting":
                sp, named = build_counting(
                    tuple(params.get("r_range", (-4, 4))),
                    params.get("c_max", 4),
                    params.get("nat_limit", 8),
                    params.get("drop_carrier_constraint", False),
                )
                return sp, named.constructors
            if name == "forever":
                return build_forever(), None
            if name == "rwlock":
                sp, named = build_rwlock(
                    _terms(_need(params, "values")),
                    tuple(params.get("rc_range", (-2, 4))),
                    params.get("sp_max", 4),
                    params.get("agn_max", 4),
                )
                return sp, named.constructors
            if name == "rwlock-multi":
                sp, named = build_rwlock_multi(
                    _terms(_need(params, "values")),
                    params.get("k", 2),
                    tuple(params.get("rc_range", (-1, 2))),
                    params.get("sp_max", 1),
                    params.get("agn_max", 1),
                )
                return sp, named.constructors
            if name == "hashtable":
                sp, elems = build_hashtable_protocol(
                    _hash_spec(params), _terms(_need(params, "values"))
                )
                return sp, None
        except FormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad builtin protocol {name}: {exc}") from exc
        raise FormatError(f"unknown builtin protocol {name!r}")

    protocol = load_monoid(_need(doc, "protocol"))
    storage = load_monoid(_need(doc, "storage"))
    complete_doc = _need(doc, "complete")
    stored_doc = _need(doc, "stored_of")
    if "table" not in complete_doc or "table" not in stored_doc:
        raise FormatError("custom protocols give complete/stored_of as tables")
    complete_set = frozenset(_terms(complete_doc["table"]))
    stored_map = {
        term_from_json(p): term_from_json(s) for p, s in stored_doc["table"]
    }
    missing = complete_set - set(stored_map)
    if missing:
        raise FormatError(f"stored_of table missing {len(missing)} complete elements")
    return (
        StorageProtocolSpec(
            doc.get("name", "custom"),
            protocol,
            storage,
            lambda p: p in complete_set,
            lambda p: stored_map[p],
        ),
        None,
    )


def element_from_json(doc, named, compose_fn=None) -> Term:
    """A term, ["named", ctor, [term args...]] resolved via ``named``, or
    ["compose", [elements...]] composed in the protocol monoid."""
    if isinstance(doc, list) and doc and doc[0] == "named":
        if named is None:
            raise FormatError("protocol has no named elements")
        ctor = named.get(doc[1])
        if ctor is None:
            raise FormatError(f"unknown named element {doc[1]!r}")
        try:
            return ctor([term_from_json(a) for a in doc[2]])
        except (IndexError, TypeError, ValueError) as exc:
            raise FormatError(f"bad named element {doc!r}: {exc}") from exc
    if isinstance(doc, list) and doc and doc[0] == "compose":
        if compose_fn is None:
            raise FormatError("no composition available for compose elements")
        parts = [element_from_json(d, named, compose_fn) for d in doc[1]]
        if not parts:
            raise FormatError("compose needs at least one element")
        out = parts[0]
        for p in parts[1:]:
            out = compose_fn(out, p)
        return out
    return term_from_json(doc)


# ---------------------------------------------------------------------------
# Relation query files

_QUERY_KINDS = ("exchange", "deposit", "withdraw", "update", "guard", "valid-fragment")


def load_queries(doc: dict, named, compose_fn=None) -> list[dict]:
    out = []
    for i, q in enumerate(_need(doc, "queries")):
        kind = _need(q, "kind")
        if kind not in _QUERY_KINDS:
            raise FormatError(f"query {i}: unknown kind {kind!r}")
        expect = q.get("expect", "holds")
        if expect not in ("holds", "fails"):
            raise FormatError(f"query {i}: expect must be holds|fails")
        fields = {"kind": kind, "expect": expect, "note": q.get("note", "")}
        for key in ("p", "s", "p_after", "s_after"):
            if key in q:
                fields[key] = element_from_json(q[key], named, compose_fn)
        out.append(fields)
    return out


# ---------------------------------------------------------------------------
# Scenario files


def _encode_value(v):
    if isinstance(v, bool) or isinstance(v, (int, str)):
        return v
    if isinstance(v, tuple) and v and isinstance(v[0], str) and is_term(v):
        return {"term": term_to_json(v)}
    if isinstance(v, tuple):
        return {"list": [_encode_value(x) for x in v]}
    raise FormatError(f"cannot encode value {v!r}")


def _decode_value(doc):
    if isinstance(doc, dict):
        if "term" in doc:
            return term_from_json(doc["term"])
        if "list" in doc:
            return tuple(_decode_value(x) for x in doc["list"])
        raise FormatError(f"bad encoded value {doc!r}")
    return doc


def _encode_kv(pairs):
    return {k: _encode_value(v) for k, v in pairs}


def _decode_kv(doc) -> tuple:
    return tuple(sorted((k, _decode_value(v)) for k, v in doc.items()))


def scenario_to_json(scenario: Scenario) -> dict:
    descriptors = scenario.meta.get("protocol_json")
    if descriptors is None:
        raise FormatError(f"scenario {scenario.name} carries no protocol descriptors")
    entries = []
    for lbl in sorted(scenario.script):
        for e in scenario.script[lbl]:
            entry = {"label": e.label, "resolver": e.resolver, "args": _encode_kv(e.args)}
            if e.when_result is not None:
                entry["when"] = term_to_json(e.when_result)
                if e.negate:
                    entry["negate"] = True
            entries.append(entry)
    return {
        "name": scenario.name,
        "cells": [[n, term_to_json(v)] for n, v in scenario.cells],
        "threads": [ast_to_json(p) for p in scenario.programs],
        "protocols": [
            {
                "id": iid,
                **descriptors[iid],
                "fragments": [
                    [o, term_to_json(el)]
                    for o, el in scenario.initial_fragments.get(iid, ())
                ],
            }
            for iid in sorted(scenario.protocols)
        ],
        "cell_instances": dict(sorted(scenario.cell_instances.items())),
        "protected_cells": dict(sorted(scenario.protected_cells.items())),
        "script": entries,
        "properties": [
            {"name": p.name, "kind": p.kind, "params": _encode_kv(p.params)}
            for p in scenario.properties
        ],
        "terminal_properties": [
            {"name": p.name, "kind": p.kind, "params": _encode_kv(p.params)}
            for p in scenario.terminal_properties
        ],
        "expectation": scenario.expectation,
        "max_states": scenario.max_states,
        "max_steps_per_thread": scenario.max_steps_per_thread,
        "meta": {
            "lock_slot": scenario.meta.get("lock_slot", {}),
            "slot_cells": scenario.meta.get("slot_cells", {}),
            "thread_ops": scenario.meta.get("thread_ops_json", []),
        },
    }


def scenario_from_json(doc: dict) -> Scenario:
    protocols = {}
    named_map = {}
    initial_fragments = {}
    descriptors = {}
    ht_meta = {}
    for p in _need(doc, "protocols"):
        iid = _need(p, "id")
        descriptor = {k: v for k, v in p.items() if k in ("builtin", "params")}
        sp, ctors = load_protocol(descriptor)
        protocols[iid] = sp
        descriptors[iid] = descriptor
        if p.get("builtin") == "rwlock":
            _, named = build_rwlock(
                _terms(_need(p["params"], "values")),
                tuple(p["params"].get("rc_range", (-2, 4))),
                p["params"].get("sp_max", 4),
                p["params"].get("agn_max", 4),
            )
            named_map[iid] = named
        elif p.get("builtin") == "rwlock-multi":
            _, named = build_rwlock_multi(
                _terms(_need(p["params"], "values")),
                p["params"].get("k", 2),
                tuple(p["params"].get("rc_range", (-1, 2))),
                p["params"].get("sp_max", 1),
                p["params"].get("agn_max", 1),
            )
            named_map[iid] = named
        elif p.get("builtin") == "hashtable":
            monoid, elems = build_hashtable_monoid(
                _hash_spec(p["params"]), _terms(_need(p["params"], "values"))
            )
            ht_meta["ht_monoid"] = monoid
            ht_meta["ht_elems"] = elems
        initial_fragments[iid] = tuple(
            (o, term_from_json(el)) for o, el in p.get("fragments", [])
        )
    script: dict = {}
    for e in doc.get("script", []):
        entry = ScriptEntry(
            _need(e, "label"),
            _need(e, "resolver"),
            _decode_kv(e.get("args", {})),
            term_from_json(e["when"]) if "when" in e else None,
            e.get("negate", False),
        )
        script.setdefault(entry.label, []).append(entry)
    meta = {
        "protocol_json": descriptors,
        "lock_slot": doc.get("meta", {}).get("lock_slot", {}),
        "slot_cells": doc.get("meta", {}).get("slot_cells", {}),
        "thread_ops_json": doc.get("meta", {}).get("thread_ops", []),
    }
    meta.update(ht_meta)
    return Scenario(
        name=_need(doc, "name"),
        cells=tuple((n, term_from_json(v)) for n, v in _need(doc, "cells")),
        programs=tuple(ast_from_json(t) for t in _need(doc, "threads")),
        protocols=protocols,
        initial_fragments=initial_fragments,
        script=script,
        properties=tuple(
            PropertySpec(_need(p, "name"), _need(p, "kind"), _decode_kv(p.get("params", {})))
            for p in doc.get("properties", [])
        ),
        terminal_properties=tuple(
            PropertySpec(_need(p, "name"), _need(p, "kind"), _decode_kv(p.get("params", {})))
            for p in doc.get("terminal_properties", [])
        ),
        expectation=doc.get("expectation", "no-stuck"),
        max_states=doc.get("max_states", 200_000),
        max_steps_per_thread=doc.get("max_steps_per_thread", 64),
        named=named_map,
        cell_instances=doc.get("cell_instances", {}),
        protected_cells=doc.get("protected_cells", {}),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Reports


def result_to_json(result: ExplorationResult) -> dict:
    return {
        "scenario": result.scenario,
        "mode": result.mode,
        "memo": result.memo,
        "expectation": result.expectation,
        "states": result.states,
        "transitions": result.transitions,
        "dedup_hits": result.dedup_hits,
        "schedules_completed": result.schedules_completed,
        "stuck_count": result.stuck_count,
        "stuck": [
            {"reason": reason, "schedule": list(sched)}
            for reason, sched in result.stuck_examples
        ],
        "violations": [
            {
                "kind": v.kind,
                "name": v.name,
                "detail": v.detail,
                "schedule": list(v.schedule),
            }
            for v in result.violations
        ],
        "terminal_summaries": [t.to_json() for t in result.terminal_summaries],
        "bound_exceeded": result.bound_exceeded,
        "warnings": list(result.warnings),
        "ok": result.ok,
    }
