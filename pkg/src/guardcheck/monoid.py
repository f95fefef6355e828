"""Partial commutative monoids as explicit, enumerable algebras.

A :class:`MonoidSpec` packages a carrier (via a deterministic enumerator),
a total composition function, a unit, and a validity predicate. The
derived relations — extension order, frame-preserving update, and the
overlapping-conjunction premise — are decided by enumeration over the
carrier, exactly or up to the enumerator's declared bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

from .terms import Term, pretty, sort_terms, term_key

__all__ = [
    "ElementEnumerator",
    "MonoidSpec",
    "CheckResult",
    "LawCheck",
    "LawReport",
    "HOLDS",
    "FAILS",
    "UP_TO_BOUND",
    "carrier",
    "compose",
    "valid",
    "leq",
    "leq_witness",
    "frame_preserving_update",
    "and_premise",
    "check_pcm_laws",
    "DEFAULT_PAIR_LIMIT",
    "DEFAULT_TRIPLE_LIMIT",
]

HOLDS = "holds"
FAILS = "fails"
UP_TO_BOUND = "holds-up-to-bound"

# Law checks over big carriers sample a deterministic prefix; see LawReport.
DEFAULT_PAIR_LIMIT = 256
DEFAULT_TRIPLE_LIMIT = 48


@dataclass(frozen=True)
class ElementEnumerator:
    """Deterministic, duplicate-free stream of carrier elements.

    ``exhaustive`` mode promises to yield the whole carrier; ``bounded``
    mode yields a fixed, reproducible prefix (unit first).
    """

    mode: str  # "exhaustive" | "bounded"
    generate: Callable[[], Iterable[Term]]
    note: str = ""

    def __post_init__(self):
        if self.mode not in ("exhaustive", "bounded"):
            raise ValueError(f"bad enumerator mode {self.mode!r}")


@dataclass(eq=False)
class MonoidSpec:
    """A monoid (M, ·, ε, 𝒱) with an enumerable carrier.

    ``compose`` must be total on the carrier encoding and return canonical
    terms. Specs compare by identity; results of carrier enumeration and
    relation checks are cached on the instance.
    """

    name: str
    unit: Term
    compose_fn: Callable[[Term, Term], Term]
    valid_fn: Callable[[Term], bool]
    enumerator: ElementEnumerator
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def bounded(self) -> bool:
        return self.enumerator.mode == "bounded"


def carrier(spec: MonoidSpec) -> tuple[Term, ...]:
    """Enumerated carrier (unit first). Cached; duplicates rejected."""
    got = spec._cache.get("carrier")
    if got is None:
        elems = list(spec.enumerator.generate())
        if not elems or elems[0] != spec.unit:
            raise ValueError(f"{spec.name}: enumerator must yield the unit first")
        if len(set(elems)) != len(elems):
            raise ValueError(f"{spec.name}: enumerator yielded duplicates")
        got = tuple(elems)
        spec._cache["carrier"] = got
    return got


def compose(spec: MonoidSpec, a: Term, b: Term) -> Term:
    return spec.compose_fn(a, b)


def valid(spec: MonoidSpec, a: Term) -> bool:
    return spec.valid_fn(a)


def _image(spec: MonoidSpec, a: Term) -> frozenset[Term]:
    """{a·c : c enumerated} — decides x ≼ t by membership."""
    comp = spec.compose_fn
    return frozenset(comp(a, c) for c in carrier(spec))


def leq(spec: MonoidSpec, a: Term, b: Term) -> bool:
    """a ≼ b: some enumerated c satisfies a·c = b."""
    return leq_witness(spec, a, b) is not None


def leq_witness(spec: MonoidSpec, a: Term, b: Term) -> Term | None:
    comp = spec.compose_fn
    for c in carrier(spec):
        if comp(a, c) == b:
            return c
    return None


def _verdict(spec: MonoidSpec) -> str:
    return UP_TO_BOUND if spec.bounded else HOLDS


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one enumerated relation check.

    A failing result carries a frame that, substituted back into the
    quantified body, falsifies it.
    """

    verdict: str  # HOLDS | FAILS | UP_TO_BOUND
    witness: Term | None = None
    reason: str = ""
    frames: int = 0

    @property
    def ok(self) -> bool:
        return self.verdict != FAILS

    def describe(self) -> str:
        if self.ok:
            return f"{self.verdict} ({self.frames} frames)"
        return f"{self.verdict}: {self.reason} [witness {pretty(self.witness)}]"


def frame_preserving_update(spec: MonoidSpec, a: Term, b: Term) -> CheckResult:
    """a ⇝ b: every frame c with 𝒱(a·c) also satisfies 𝒱(b·c)."""
    comp, ok = spec.compose_fn, spec.valid_fn
    n = 0
    for c in carrier(spec):
        n += 1
        if ok(comp(a, c)) and not ok(comp(b, c)):
            return CheckResult(
                FAILS,
                witness=c,
                reason=f"frame keeps {pretty(a)} valid but not {pretty(b)}",
                frames=n,
            )
    return CheckResult(_verdict(spec), frames=n)


def and_premise(spec: MonoidSpec, x: Term, y: Term, z: Term) -> CheckResult:
    """∀t. (x ≼ t ∧ y ≼ t ∧ 𝒱(t)) ⟹ z ≼ t, over the enumerated carrier."""
    above_x = _image(spec, x)
    above_y = _image(spec, y)
    above_z = _image(spec, z)
    ok = spec.valid_fn
    n = 0
    for t in carrier(spec):
        n += 1
        if t in above_x and t in above_y and ok(t) and t not in above_z:
            return CheckResult(
                FAILS,
                witness=t,
                reason=f"{pretty(t)} extends both operands but not {pretty(z)}",
                frames=n,
            )
    return CheckResult(_verdict(spec), frames=n)


@dataclass(frozen=True)
class LawCheck:
    law: str
    ok: bool
    exhaustive: bool
    checked: int
    witness: tuple[Term, ...] | None = None

    def describe(self) -> str:
        status = "ok" if self.ok else "FAILED"
        scope = "exhaustive" if self.exhaustive else "sampled"
        out = f"{self.law}: {status} ({scope}, {self.checked} cases)"
        if self.witness is not None:
            out += " witness " + ", ".join(pretty(t) for t in self.witness)
        return out


@dataclass(frozen=True)
class LawReport:
    name: str
    mode: str
    carrier_size: int
    checks: tuple[LawCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def describe(self) -> str:
        head = f"{self.name} [{self.mode}, {self.carrier_size} elements]"
        return "\n".join([head] + ["  " + c.describe() for c in self.checks])


def check_pcm_laws(
    spec: MonoidSpec,
    pair_limit: int = DEFAULT_PAIR_LIMIT,
    triple_limit: int = DEFAULT_TRIPLE_LIMIT,
) -> LawReport:
    """Unit, commutativity, associativity, and validity downward closure.

    Unit laws run over the whole enumerated carrier. Pair and triple laws
    run over a deterministic prefix capped at ``pair_limit``/``triple_limit``
    elements; each check reports whether it covered the full carrier.
    """
    elems = carrier(spec)
    comp, ok = spec.compose_fn, spec.valid_fn
    exhaustive_carrier = not spec.bounded
    pair_elems = elems[: max(pair_limit, 1)]
    triple_elems = elems[: max(triple_limit, 1)]
    pairs_full = exhaustive_carrier and len(pair_elems) == len(elems)
    triples_full = exhaustive_carrier and len(triple_elems) == len(elems)
    checks = []

    witness = None
    for a in elems:
        if comp(a, spec.unit) != a:
            witness = (a,)
            break
    checks.append(
        LawCheck("unit-right-identity", witness is None, exhaustive_carrier, len(elems), witness)
    )

    checks.append(
        LawCheck("unit-valid", ok(spec.unit), True, 1, None if ok(spec.unit) else (spec.unit,))
    )

    witness = None
    n = 0
    for i, a in enumerate(pair_elems):
        for b in pair_elems[i:]:
            n += 1
            if comp(a, b) != comp(b, a):
                witness = (a, b)
                break
        if witness:
            break
    checks.append(LawCheck("commutativity", witness is None, pairs_full, n, witness))

    witness = None
    n = 0
    for a in triple_elems:
        for b in triple_elems:
            ab = comp(a, b)
            for c in triple_elems:
                n += 1
                if comp(ab, c) != comp(a, comp(b, c)):
                    witness = (a, b, c)
                    break
            if witness:
                break
        if witness:
            break
    checks.append(LawCheck("associativity", witness is None, triples_full, n, witness))

    # a ≼ b ∧ 𝒱(b) ⟹ 𝒱(a), phrased over extensions b = a·c.
    witness = None
    n = 0
    for a in pair_elems:
        if ok(a):
            continue
        for c in pair_elems:
            n += 1
            if ok(comp(a, c)):
                witness = (a, c)
                break
        if witness:
            break
    checks.append(LawCheck("validity-downward-closed", witness is None, pairs_full, n, witness))

    return LawReport(spec.name, spec.enumerator.mode, len(elems), tuple(checks))


def sorted_carrier_from(elements: Iterable[Term], unit: Term) -> Iterator[Term]:
    """Helper for builders: unit first, then the rest in canonical order."""
    rest = [e for e in set(elements) if e != unit]
    yield unit
    for e in sort_terms(rest):
        yield e


def term_sort_key(t: Term):
    return term_key(t)
