"""Command-line front end.

Subcommands: ``check`` (protocol well-formedness plus relation queries
with expected verdicts), ``explore`` (run a scenario file through the
explorer), ``demo`` (run a named built-in input), ``report`` (render a
JSON report as text).

Exit codes: 0 success, 1 verdict mismatch or violation, 2 input error,
3 bound exceeded. JSON output is key-sorted and carries no timing, so
identical inputs produce byte-identical reports.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .demos import DEMOS, load_demo_document
from .explore import explore
from .formats import (
    FormatError,
    dumps,
    load_protocol,
    load_queries,
    result_to_json,
    scenario_from_json,
)
from .monoid import FAILS, LawReport
from .protocol import (
    ExchangeQuery,
    exchange_holds,
    guard_holds,
    valid_fragment,
    check_wellformed,
)
from .studies import explorer_outcomes, sequential_oracle
from .terms import pretty, term_from_json, term_to_json

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_BOUND = 3


def _law_report_json(report: LawReport) -> dict:
    return {
        "name": report.name,
        "mode": report.mode,
        "carrier_size": report.carrier_size,
        "ok": report.ok,
        "checks": [
            {
                "law": c.law,
                "ok": c.ok,
                "exhaustive": c.exhaustive,
                "checked": c.checked,
                "witness": [term_to_json(t) for t in c.witness] if c.witness else None,
            }
            for c in report.checks
        ],
    }


def _run_query(sp, q: dict) -> dict:
    eps = sp.storage.unit
    kind = q["kind"]
    if kind == "valid-fragment":
        got = valid_fragment(sp, q["p"])
        verdict = "holds" if got else "fails"
        result = {"verdict": verdict, "witness": None, "reason": ""}
    else:
        if kind == "exchange":
            query = ExchangeQuery.exchange(q["p"], q.get("s", eps), q["p_after"], q.get("s_after", eps))
        elif kind == "deposit":
            query = ExchangeQuery.deposit(q["p"], q["s"], q["p_after"], eps)
        elif kind == "withdraw":
            query = ExchangeQuery.withdraw(q["p"], q["p_after"], q["s_after"], eps)
        elif kind == "update":
            query = ExchangeQuery.update(q["p"], q["p_after"], eps)
        else:
            check = guard_holds(sp, q["p"], q["s"])
            return _verdict_json(q, check.verdict, check.witness, check.reason)
        check = exchange_holds(sp, query)
        return _verdict_json(q, check.verdict, check.witness, check.reason)
    return _verdict_json(q, result["verdict"], None, "")


def _verdict_json(q: dict, verdict: str, witness, reason: str) -> dict:
    matched = (verdict != FAILS) == (q["expect"] == "holds")
    return {
        "kind": q["kind"],
        "note": q["note"],
        "expect": q["expect"],
        "verdict": verdict,
        "matched": matched,
        "witness": term_to_json(witness) if witness is not None else None,
        "reason": reason,
    }


def run_check(protocol_doc: dict, relations_doc: dict | None, law_limits=None) -> dict:
    sp, named = load_protocol(protocol_doc)
    wf = check_wellformed(sp, **(law_limits or {}))
    queries = []
    if relations_doc is not None:
        for q in load_queries(relations_doc, named, sp.protocol.compose_fn):
            queries.append(_run_query(sp, q))
    return {
        "protocol": sp.name,
        "wellformed": {
            "ok": wf.ok,
            "protocol_laws": _law_report_json(wf.protocol_laws),
            "storage_laws": _law_report_json(wf.storage_laws),
            "extra": [
                {"law": c.law, "ok": c.ok, "checked": c.checked} for c in wf.extra
            ],
        },
        "queries": queries,
        "ok": wf.ok and all(q["matched"] for q in queries),
    }


def _render_check(report: dict) -> str:
    lines = [f"protocol {report['protocol']}: wellformed "
             + ("ok" if report["wellformed"]["ok"] else "FAILED")]
    for q in report["queries"]:
        status = "ok" if q["matched"] else "MISMATCH"
        note = f" ({q['note']})" if q["note"] else ""
        lines.append(
            f"  {q['kind']}: {q['verdict']} (expected {q['expect']}) {status}{note}"
        )
        if q["witness"] is not None:
            lines.append(f"    witness: {pretty(term_from_json(q['witness']))}")
    lines.append("result: " + ("PASS" if report["ok"] else "FAIL"))
    return "\n".join(lines)


def _render_explore(report: dict) -> str:
    lines = [
        f"scenario {report['scenario']} [{report['mode']} mode, expectation {report['expectation']}]",
        f"  states {report['states']}, transitions {report['transitions']}, "
        f"dedup hits {report['dedup_hits']}, schedules {report['schedules_completed']}",
        f"  stuck states: {report['stuck_count']}",
    ]
    for s in report["stuck"]:
        lines.append(f"    {s['reason']} @ {s['schedule']}")
    for v in report["violations"]:
        lines.append(f"  violation [{v['kind']}] {v['name']}: {v['detail']}")
        lines.append(f"    schedule {v['schedule']}")
    lines.append(f"  terminal outcomes: {len(report['terminal_summaries'])}")
    for w in report["warnings"]:
        lines.append(f"  warning: {w}")
    if report["bound_exceeded"]:
        lines.append("  BOUND EXCEEDED (partial exploration)")
    if "oracle_subset" in report:
        lines.append(
            "  oracle subset: " + ("confirmed" if report["oracle_subset"] else "VIOLATED")
        )
    lines.append("result: " + ("PASS" if report["ok"] else "FAIL"))
    return "\n".join(lines)


def run_explore_scenario(scenario, mode: str, max_states=None, max_steps=None) -> dict:
    updates = {}
    if max_states is not None:
        updates["max_states"] = max_states
    if max_steps is not None:
        updates["max_steps_per_thread"] = max_steps
    if updates:
        scenario = dataclasses.replace(scenario, **updates)
    result = explore(scenario, mode=mode)
    report = result_to_json(result)
    if scenario.meta.get("thread_ops_json"):
        ops = [
            [
                (op[0], term_from_json(op[1]))
                if op[0] == "query"
                else (op[0], term_from_json(op[1]), term_from_json(op[2]))
                for op in thread
            ]
            for thread in scenario.meta["thread_ops_json"]
        ]
        subset = explorer_outcomes(scenario, result) <= sequential_oracle(ops)
        report["oracle_subset"] = subset
        report["ok"] = report["ok"] and subset
    return report


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}") from exc


def _emit(args, report: dict, renderer) -> None:
    if args.quiet:
        return
    if args.format == "json":
        sys.stdout.write(dumps(report))
    else:
        print(renderer(report))


def _exit_code(report: dict) -> int:
    if report.get("bound_exceeded"):
        return EXIT_BOUND
    return EXIT_OK if report["ok"] else EXIT_MISMATCH


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="guardcheck",
        description="Check sharing-protocol laws and explore thread interleavings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--format", choices=("json", "text"), default="text")
        p.add_argument("--quiet", action="store_true", help="exit code only")

    p_check = sub.add_parser("check", help="check a protocol and relation queries")
    p_check.add_argument("protocol")
    p_check.add_argument("relations", nargs="?")
    p_check.add_argument("--bound", type=int, default=None,
                         help="fraction denominator bound for the fractional builtin")
    common(p_check)

    p_explore = sub.add_parser("explore", help="explore a scenario file")
    p_explore.add_argument("scenario")
    p_explore.add_argument("--mode", choices=("rule", "concrete"), default="rule")
    p_explore.add_argument("--max-states", type=int, default=None)
    p_explore.add_argument("--max-steps", type=int, default=None)
    common(p_explore)

    p_demo = sub.add_parser("demo", help="run a built-in demo")
    p_demo.add_argument("name")
    p_demo.add_argument("--mode", choices=("rule", "concrete"), default="rule")
    p_demo.add_argument("--max-states", type=int, default=None)
    p_demo.add_argument("--max-steps", type=int, default=None)
    common(p_demo)

    p_report = sub.add_parser("report", help="render a JSON report as text")
    p_report.add_argument("file")
    common(p_report)

    args = parser.parse_args(argv)
    try:
        if args.command == "check":
            protocol_doc = _read_json(args.protocol)
            if args.bound is not None and protocol_doc.get("builtin") == "fractional":
                protocol_doc.setdefault("params", {})["den_bound"] = args.bound
            relations_doc = _read_json(args.relations) if args.relations else None
            report = run_check(protocol_doc, relations_doc)
            _emit(args, report, _render_check)
            return EXIT_OK if report["ok"] else EXIT_MISMATCH

        if args.command == "explore":
            scenario = scenario_from_json(_read_json(args.scenario))
            report = run_explore_scenario(scenario, args.mode, args.max_states, args.max_steps)
            _emit(args, report, _render_explore)
            return _exit_code(report)

        if args.command == "demo":
            spec = DEMOS.get(args.name)
            if spec is None:
                print(
                    f"unknown demo {args.name!r}; available: {', '.join(sorted(DEMOS))}",
                    file=sys.stderr,
                )
                return EXIT_INPUT
            if spec["kind"] == "check":
                report = run_check(
                    load_demo_document(f"{args.name}.protocol.json"),
                    load_demo_document(f"{args.name}.relations.json"),
                )
                _emit(args, report, _render_check)
                return EXIT_OK if report["ok"] else EXIT_MISMATCH
            scenario = scenario_from_json(load_demo_document(f"{args.name}.scenario.json"))
            report = run_explore_scenario(scenario, args.mode, args.max_states, args.max_steps)
            _emit(args, report, _render_explore)
            return _exit_code(report)

        if args.command == "report":
            report = _read_json(args.file)
            renderer = _render_check if "queries" in report else _render_explore
            if not args.quiet:
                print(renderer(report))
            return EXIT_OK
    except FormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
