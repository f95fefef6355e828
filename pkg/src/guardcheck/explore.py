"""Exhaustive bounded exploration of thread interleavings.

A scenario bundles programs, an initial heap, protocol instances with
their initial fragment distribution, a ghost script (label-triggered
actions resolved against the live state), safety and terminal properties,
and an expectation about stuck states. Exploration is a deterministic DFS
over scheduler choices with state memoization; each transition carries
the machine step, the ghost actions it fires, and property evaluation,
so every schedule sees the same combined semantics as a replay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ghost import (
    AllocAction,
    ExchangeAction,
    GhostLedger,
    GhostViolation,
    OpenGuardAction,
    TransferAction,
    apply_action,
    close_windows,
    empty_ledger,
    ledger_snapshot,
)
from .lang import MachineConfig, enabled_threads, initial_config, step
from .monoid import leq
from .protocol import valid_fragment
from .terms import Term, pretty, term_to_json

__all__ = [
    "Scenario",
    "ScriptEntry",
    "PropertySpec",
    "ExplState",
    "Violation",
    "TerminalSummary",
    "ExplorationResult",
    "ReplayError",
    "explore",
    "replay",
    "check_property",
    "register_resolver",
    "register_property",
    "RESOLVERS",
    "PROPERTY_EVALUATORS",
]


@dataclass(frozen=True)
class ScriptEntry:
    """One label binding: when the label fires (optionally filtered on the
    step's observable result), run the named resolver."""

    label: str
    resolver: str
    args: tuple = ()  # sorted (key, value) pairs; values are terms/strs/ints
    when_result: Term | None = None
    negate: bool = False

    def matches(self, result: Term) -> bool:
        if self.when_result is None:
            return True
        hit = result == self.when_result
        return not hit if self.negate else hit

    def arg(self, key, default=None):
        for k, v in self.args:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class PropertySpec:
    name: str
    kind: str
    params: tuple = ()  # sorted (key, value) pairs

    def param(self, key, default=None):
        for k, v in self.params:
            if k == key:
                return v
        return default


@dataclass(eq=False)
class Scenario:
    """Declarative test case; immutable after construction."""

    name: str
    cells: tuple  # (name, initial value) in allocation order
    programs: tuple
    protocols: dict  # iid -> StorageProtocolSpec
    initial_fragments: dict  # iid -> tuple[(owner, element)]
    script: dict = field(default_factory=dict)  # label -> [ScriptEntry]
    properties: tuple = ()
    terminal_properties: tuple = ()
    expectation: str = "no-stuck"  # or "stuck-reachable"
    max_states: int = 200_000
    max_steps_per_thread: int = 64
    named: dict = field(default_factory=dict)  # iid -> named-element helper
    cell_instances: dict = field(default_factory=dict)  # cell name -> iid
    protected_cells: dict = field(default_factory=dict)  # iid -> cell name
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [n for n, _ in self.cells]
        if len(set(names)) != len(names):
            raise ValueError("duplicate cell names")
        if self.expectation not in ("no-stuck", "stuck-reachable"):
            raise ValueError(f"bad expectation {self.expectation!r}")
        pnames = [p.name for p in self.properties + self.terminal_properties]
        if len(set(pnames)) != len(pnames):
            raise ValueError("property names must be unique")

    def cell_loc(self, name: str) -> int:
        for i, (n, _) in enumerate(self.cells):
            if n == name:
                return i
        raise KeyError(f"unknown cell {name!r}")

    def loc_cell(self, l: int) -> str | None:
        return self.cells[l][0] if 0 <= l < len(self.cells) else None


@dataclass(frozen=True)
class ExplState:
    machine: MachineConfig
    ledger: GhostLedger


@dataclass(frozen=True)
class Violation:
    kind: str  # ghost | property | terminal | replay
    name: str
    detail: str
    schedule: tuple

    def describe(self) -> str:
        return f"{self.kind} {self.name}: {self.detail} @ schedule {list(self.schedule)}"


@dataclass(frozen=True)
class TerminalSummary:
    thread_values: tuple
    cells: tuple
    stored: tuple

    def to_json(self):
        return {
            "threads": [term_to_json(v) for v in self.thread_values],
            "cells": [[n, term_to_json(v)] for n, v in self.cells],
            "stored": [[iid, term_to_json(s)] for iid, s in self.stored],
        }


@dataclass
class ExplorationResult:
    scenario: str
    mode: str
    memo: bool
    expectation: str
    states: int = 0
    transitions: int = 0
    dedup_hits: int = 0
    schedules_completed: int = 0
    stuck_count: int = 0
    stuck_examples: tuple = ()  # (reason, schedule)
    violations: tuple = ()
    terminal_summaries: tuple = ()
    bound_exceeded: bool = False
    warnings: tuple = ()

    @property
    def ok(self) -> bool:
        if self.bound_exceeded or self.violations:
            return False
        if self.expectation == "no-stuck":
            return self.stuck_count == 0
        return self.stuck_count > 0


class ReplayError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Resolver and property registries

RESOLVERS: dict = {}
PROPERTY_EVALUATORS: dict = {}


def register_resolver(name: str):
    def wrap(fn):
        RESOLVERS[name] = fn
        return fn

    return wrap


def register_property(kind: str):
    def wrap(fn):
        PROPERTY_EVALUATORS[kind] = fn
        return fn

    return wrap


@dataclass
class ResolveCtx:
    """What a script resolver sees: the post-step machine, the ledger as
    actions apply, and the step's observable result and heap event."""

    scenario: Scenario
    ledger: GhostLedger
    machine: MachineConfig
    tid: int
    label: str
    result: Term
    event: object

    @property
    def self_owner(self) -> str:
        return f"thread:{self.tid}"

    def event_cell(self) -> str | None:
        if self.event is None or self.event.loc is None:
            return None
        return self.scenario.loc_cell(self.event.loc)

    def instance_for(self, entry: ScriptEntry) -> str:
        iid = entry.arg("instance")
        if iid == "@cell" or iid is None:
            cell = self.event_cell()
            iid = self.scenario.cell_instances.get(cell)
            if iid is None:
                raise ReplayError(
                    f"label {self.label}: no protocol instance for cell {cell!r}"
                )
        return iid

    def cell_value(self, name: str) -> Term | None:
        return self.machine.heap_value(self.scenario.cell_loc(name))


def check_property(scenario: Scenario, state: ExplState, prop: PropertySpec):
    """Evaluate one registered property; (ok, reason)."""
    fn = PROPERTY_EVALUATORS.get(prop.kind)
    if fn is None:
        return False, f"unknown property kind {prop.kind!r}"
    try:
        return fn(scenario, state, prop)
    except KeyError as exc:
        return False, f"evaluator error: {exc}"


# -- generic resolvers: literal ghost actions spelled out in the script
#    (the case-study modules register richer, state-aware resolvers)


def _owner(ctx: ResolveCtx, name) -> str:
    return ctx.self_owner if name in (None, "self") else name


@register_resolver("ghost.exchange")
def _resolve_exchange(ctx: ResolveCtx, entry: ScriptEntry):
    updates = tuple(
        (_owner(ctx, o), el) for o, el in (entry.arg("updates") or ())
    )
    return [
        ExchangeAction(
            ctx.instance_for(entry),
            updates,
            deposited=entry.arg("deposited"),
            withdrawn=entry.arg("withdrawn"),
            kind=entry.arg("kind", "exchange"),
        )
    ]


@register_resolver("ghost.open-guard")
def _resolve_open_guard(ctx: ResolveCtx, entry: ScriptEntry):
    return [
        OpenGuardAction(
            ctx.instance_for(entry),
            _owner(ctx, entry.arg("owner")),
            entry.arg("element"),
            licenses=ctx.label,
        )
    ]


@register_resolver("ghost.transfer")
def _resolve_transfer(ctx: ResolveCtx, entry: ScriptEntry):
    return [
        TransferAction(
            ctx.instance_for(entry),
            _owner(ctx, entry.arg("from")),
            _owner(ctx, entry.arg("to")),
            entry.arg("element"),
            entry.arg("remainder"),
        )
    ]


# -- generic property evaluators


@register_property("ghost-invariant")
def _prop_ghost_invariant(scenario, state, prop):
    for iid, inst in state.ledger.instances:
        sp = scenario.protocols[iid]
        total = sp.protocol.unit
        for _, el in inst.fragments:
            total = sp.protocol.compose_fn(total, el)
        if not valid_fragment(sp, total):
            return False, f"{iid}: joint fragment state not completable"
        if not sp.storage.valid_fn(inst.stored):
            return False, f"{iid}: stored content invalid"
        if sp.complete(total) and sp.stored(total) != inst.stored:
            return False, f"{iid}: stored content out of sync with joint state"
        for w in inst.windows:
            if not leq(sp.storage, w.element, inst.stored):
                return False, f"{iid}: open window no longer covered"
    return True, ""


@register_property("heap-cell")
def _prop_heap_cell(scenario, state, prop):
    name = prop.param("cell")
    value = state.machine.heap_value(scenario.cell_loc(name))
    if value is None:
        return False, f"cell {name} freed or absent"
    op = prop.param("op", "eq")
    if op == "eq":
        want = prop.param("value")
        return value == want, f"{name} = {pretty(value)}, want {pretty(want)}"
    if op == "in":
        allowed = prop.param("values")
        return value in allowed, f"{name} = {pretty(value)} not in allowed set"
    return False, f"unknown heap-cell op {op!r}"


@register_property("all-finished")
def _prop_all_finished(scenario, state, prop):
    bad = [i for i, t in enumerate(state.machine.threads) if t[0] != "done"]
    return not bad, f"threads not finished: {bad}"


@register_property("thread-result-eq")
def _prop_thread_result_eq(scenario, state, prop):
    tid = prop.param("tid")
    t = state.machine.threads[tid]
    if t[0] != "done":
        return False, f"thread {tid} not finished"
    want = prop.param("value")
    return t[1] == want, f"thread {tid} returned {pretty(t[1])}, want {pretty(want)}"


@register_property("thread-result-in")
def _prop_thread_result_in(scenario, state, prop):
    tid = prop.param("tid")
    t = state.machine.threads[tid]
    if t[0] != "done":
        return False, f"thread {tid} not finished"
    allowed = prop.param("values")
    return t[1] in allowed, f"thread {tid} returned {pretty(t[1])}"


# ---------------------------------------------------------------------------
# The combined transition: machine step + script + properties


def initial_state(scenario: Scenario) -> ExplState:
    machine = initial_config([v for _, v in scenario.cells], scenario.programs)
    ledger = empty_ledger()
    for iid in sorted(scenario.protocols):
        out = apply_action(
            scenario.protocols,
            ledger,
            AllocAction(iid, tuple(scenario.initial_fragments.get(iid, ()))),
        )
        if not out.ok:
            raise ValueError(f"scenario setup: {out.violation.describe()}")
        ledger = out.ledger
    return ExplState(machine, ledger)


def transition(scenario: Scenario, state: ExplState, tid: int, mode: str):
    """Returns (kind, new_state, violations, fired_labels, stuck_reason)."""
    out = step(state.machine, tid)
    if out.kind == "done":
        return "next", ExplState(out.config, state.ledger), [], (), ""
    if out.kind == "stuck":
        return "stuck", ExplState(out.config, state.ledger), [], (), out.reason

    ledger = state.ledger
    violations: list[tuple[str, str, str]] = []
    crossed = tuple(lbl for lbl, _ in out.fired)
    for lbl, result in out.fired:
        for entry in scenario.script.get(lbl, ()):
            if not entry.matches(result):
                continue
            fn = RESOLVERS.get(entry.resolver)
            if fn is None:
                violations.append(("ghost", lbl, f"unknown resolver {entry.resolver!r}"))
                continue
            ctx = ResolveCtx(scenario, ledger, out.config, tid, lbl, result, out.event)
            resolved = fn(ctx, entry)
            if isinstance(resolved, GhostViolation):
                violations.append(("ghost", lbl, resolved.describe()))
                continue
            for action in resolved:
                applied = apply_action(scenario.protocols, ledger, action, mode)
                if not applied.ok:
                    violations.append(("ghost", lbl, applied.violation.describe()))
                    break
                ledger = applied.ledger

    mid = ExplState(out.config, ledger)
    for prop in scenario.properties:
        ok, reason = check_property(scenario, mid, prop)
        if not ok:
            violations.append(("property", prop.name, reason))

    closed = close_windows(scenario.protocols, ledger)
    if not closed.ok:
        violations.append(("ghost", "close-window", closed.violation.describe()))
    else:
        ledger = closed.ledger

    return "next", ExplState(out.config, ledger), violations, crossed, ""


def _terminal_checks(scenario: Scenario, state: ExplState):
    violations = []
    for prop in scenario.terminal_properties:
        ok, reason = check_property(scenario, state, prop)
        if not ok:
            violations.append(("terminal", prop.name, reason))
    return violations


def _summary(scenario: Scenario, state: ExplState) -> TerminalSummary:
    heap = state.machine.heap_dict()
    cells = tuple(
        (name, heap[scenario.cell_loc(name)][0])
        for name, _ in scenario.cells
        if scenario.cell_loc(name) in heap
    )
    stored = tuple((iid, inst.stored) for iid, inst in state.ledger.instances)
    return TerminalSummary(
        tuple(t[1] for t in state.machine.threads), cells, stored
    )


def explore(scenario: Scenario, mode: str = "rule", memo: bool = True) -> ExplorationResult:
    """DFS over scheduler choices; see the module docstring."""
    result = ExplorationResult(scenario.name, mode, memo, scenario.expectation)
    root = initial_state(scenario)
    nodes = [(-1, -1)]  # nid -> (parent nid, tid taken to reach it)

    def trace(nid: int, tid: int) -> tuple:
        path = [tid]
        while nid > 0:
            parent, step_tid = nodes[nid]
            path.append(step_tid)
            nid = parent
        return tuple(reversed(path))

    def schedule_to(nid: int) -> tuple:
        if nid == 0:
            return ()
        return trace(*nodes[nid])

    seen_violations: dict = {}
    stuck_examples: dict = {}
    terminals: set = set()
    crossed_labels: set = set()
    max_depth = scenario.max_steps_per_thread

    def record_violations(vios, sched):
        for kind, name, detail in vios:
            key = (kind, name, detail)
            if key not in seen_violations:
                seen_violations[key] = Violation(kind, name, detail, sched)

    # initial-state property check
    init_vios = []
    for prop in scenario.properties:
        ok, reason = check_property(scenario, root, prop)
        if not ok:
            init_vios.append(("property", prop.name, reason))
    record_violations(init_vios, ())

    visited = {root: 0}
    on_path: set = set()  # memo-off cycle pruning
    result.states = 1
    stack = [(0, root, (0,) * len(scenario.programs), True)]
    while stack:
        nid, st, counts, entering = stack.pop()
        if not memo:
            if not entering:
                on_path.discard(st)
                continue
            stack.append((nid, st, counts, False))
            on_path.add(st)
        enabled = enabled_threads(st.machine)
        if not enabled:
            result.schedules_completed += 1
            record_violations(_terminal_checks(scenario, st), schedule_to(nid))
            terminals.add(_summary(scenario, st))
            continue
        if result.states >= scenario.max_states:
            result.bound_exceeded = True
            continue
        for tid in reversed(enabled):
            if counts[tid] >= max_depth:
                result.bound_exceeded = True
                continue
            kind, st2, vios, crossed, stuck_reason = transition(scenario, st, tid, mode)
            result.transitions += 1
            crossed_labels.update(crossed)
            sched = trace(nid, tid)
            if kind == "stuck":
                result.stuck_count += 1
                result.schedules_completed += 1
                if stuck_reason not in stuck_examples:
                    stuck_examples[stuck_reason] = sched
                continue
            record_violations(vios, sched)
            if vios:
                result.schedules_completed += 1
                continue
            if memo:
                if st2 in visited:
                    result.dedup_hits += 1
                    continue
                visited[st2] = len(nodes)
            else:
                if st2 in on_path:
                    result.dedup_hits += 1
                    continue
            new_counts = counts[:tid] + (counts[tid] + 1,) + counts[tid + 1 :]
            if len(st2.machine.threads) > len(new_counts):
                new_counts = new_counts + (0,) * (
                    len(st2.machine.threads) - len(new_counts)
                )
            nodes.append((nid, tid))
            result.states += 1
            stack.append((len(nodes) - 1, st2, new_counts, True))

    result.stuck_examples = tuple(
        sorted((reason, sched) for reason, sched in stuck_examples.items())
    )
    result.violations = tuple(
        sorted(seen_violations.values(), key=lambda v: (v.kind, v.name, v.detail))
    )
    result.terminal_summaries = tuple(
        sorted(
            terminals,
            key=lambda s: repr((s.thread_values, s.cells, s.stored)),
        )
    )
    unused = sorted(set(scenario.script) - crossed_labels)
    if unused:
        result.warnings = tuple(
            f"script label never crossed: {lbl}" for lbl in unused
        )
    return result


@dataclass(frozen=True)
class TraceEntry:
    tid: int
    kind: str
    fired: tuple
    stuck_reason: str
    state: ExplState


def replay(scenario: Scenario, schedule, mode: str = "rule"):
    """Deterministic replay of a schedule; returns the trace entries.

    Raises ReplayError when the schedule picks a non-enabled thread.
    """
    st = initial_state(scenario)
    entries = [TraceEntry(-1, "init", (), "", st)]
    for i, tid in enumerate(schedule):
        if tid not in enabled_threads(st.machine):
            raise ReplayError(f"schedule step {i}: thread {tid} not enabled")
        kind, st2, vios, crossed, stuck_reason = transition(scenario, st, tid, mode)
        entries.append(TraceEntry(tid, kind, crossed, stuck_reason, st2))
        st = st2
        if kind == "stuck":
            break
    return entries


def state_snapshot(state: ExplState):
    return {
        "heap": [[l, term_to_json(v), list(rw)] for l, v, rw in state.machine.heap],
        "threads": [
            [t[0], term_to_json(t[1]) if t[0] == "done" else (t[1] if t[0] == "stuck" else None)]
            for t in state.machine.threads
        ],
        "ledger": ledger_snapshot(state.ledger),
    }
