"""Ready-made monoids and storage protocols.

Combinators (excl, agn, agnvec, nat, int, frac, product, finmap) plus the
named constructions used by the case studies: the fractional, counting and
forever protocols, the reader-writer lock protocol (single and
multi-counter), and the linear-probing hash-table monoid with its
closure-based validity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .monoid import ElementEnumerator, MonoidSpec, carrier
from .protocol import StorageProtocolSpec
from .terms import (
    BOT,
    UNIT,
    Term,
    con_args,
    map_entries,
    map_get,
    sort_terms,
    tbool,
    tcon,
    tfrac,
    tint,
    tmap,
    tsym,
    ttuple,
)

__all__ = [
    "EX",
    "build_excl",
    "build_agn",
    "build_agnvec",
    "build_nat",
    "build_int",
    "build_frac",
    "build_product",
    "build_finmap",
    "build_table_monoid",
    "build_trivial",
    "as_total",
    "pcm_as_protocol",
    "build_fractional",
    "build_fractional_memory",
    "build_counting",
    "CountingElems",
    "build_forever",
    "build_rwlock",
    "RwLockElems",
    "build_rwlock_multi",
    "RwLockMultiElems",
    "HashFunctionSpec",
    "build_hashtable_monoid",
    "build_hashtable_protocol",
    "HashTableElems",
    "NONE",
    "some",
    "ex",
]

EX = tcon("ex")  # payload-free exclusive token
NONE = tcon("none")


def some(t: Term) -> Term:
    return tcon("some", t)


def ex(t: Term) -> Term:
    return tcon("ex", t)


def _enum(elements, unit, mode, note=""):
    elems = tuple([unit] + sort_terms(set(elements) - {unit}))
    return ElementEnumerator(mode, lambda: iter(elems), note)


# ---------------------------------------------------------------------------
# Combinators


def build_excl(values: tuple[Term, ...], name: str = "excl") -> MonoidSpec:
    """Exclusive-ownership monoid: ε, ex(x), and the conflict element ⊥."""

    def compose(a, b):
        if a == UNIT:
            return b
        if b == UNIT:
            return a
        return BOT

    elems = [UNIT, BOT] + [ex(v) for v in values]
    return MonoidSpec(
        name, UNIT, compose, lambda t: t != BOT, _enum(elems, UNIT, "exhaustive")
    )


def build_excl_token(name: str = "excl-token") -> MonoidSpec:
    """Excl(1): ε, a single payload-free token, ⊥."""

    def compose(a, b):
        if a == UNIT:
            return b
        if b == UNIT:
            return a
        return BOT

    return MonoidSpec(
        name, UNIT, compose, lambda t: t != BOT, _enum([UNIT, EX, BOT], UNIT, "exhaustive")
    )


def agn(x: Term, n: int) -> Term:
    if n < 1:
        raise ValueError("agreement count must be >= 1")
    return tcon("agn", x, tint(n))


def build_agn(values: tuple[Term, ...], max_count: int = 4, name: str = "agn") -> MonoidSpec:
    """Agreement monoid: agn(x, n) sums counts on agreement, ⊥ otherwise."""

    def compose(a, b):
        if a == UNIT:
            return b
        if b == UNIT:
            return a
        if a == BOT or b == BOT:
            return BOT
        ax, an = a[2]
        bx, bn = b[2]
        if ax != bx:
            return BOT
        return tcon("agn", ax, tint(an[1] + bn[1]))

    elems = [UNIT, BOT] + [agn(v, n) for v in values for n in range(1, max_count + 1)]
    return MonoidSpec(
        name,
        UNIT,
        compose,
        lambda t: t != BOT,
        _enum(elems, UNIT, "bounded", f"counts <= {max_count}"),
    )


def agnvec(x: Term, counts: tuple[int, ...]) -> Term:
    if not any(counts) or any(c < 0 for c in counts):
        raise ValueError("agreement count vector must be nonzero and nonnegative")
    return tcon("agn", x, ttuple(*(tint(c) for c in counts)))


def build_agnvec(
    values: tuple[Term, ...], k: int, max_count: int = 2, name: str = "agnvec"
) -> MonoidSpec:
    """Vector-count agreement monoid (elementwise count addition)."""
    if k < 1:
        raise ValueError("need at least one counter")

    def compose(a, b):
        if a == UNIT:
            return b
        if b == UNIT:
            return a
        if a == BOT or b == BOT:
            return BOT
        ax, an = a[2]
        bx, bn = b[2]
        if ax != bx:
            return BOT
        summed = tuple(tint(u[1] + v[1]) for u, v in zip(an[1], bn[1]))
        return tcon("agn", ax, ttuple(*summed))

    vecs = [
        vec
        for vec in itertools.product(range(max_count + 1), repeat=k)
        if any(vec)
    ]
    elems = [UNIT, BOT] + [agnvec(v, vec) for v in values for vec in vecs]
    return MonoidSpec(
        name,
        UNIT,
        compose,
        lambda t: t != BOT,
        _enum(elems, UNIT, "bounded", f"K={k}, counts <= {max_count}"),
    )


def build_nat(limit: int = 8, name: str = "nat") -> MonoidSpec:
    def compose(a, b):
        return tint(a[1] + b[1])

    return MonoidSpec(
        name,
        tint(0),
        compose,
        lambda t: True,
        _enum([tint(n) for n in range(limit + 1)], tint(0), "bounded", f"0..{limit}"),
    )


def build_int(lo: int = -8, hi: int = 8, name: str = "int") -> MonoidSpec:
    def compose(a, b):
        return tint(a[1] + b[1])

    return MonoidSpec(
        name,
        tint(0),
        compose,
        lambda t: True,
        _enum([tint(n) for n in range(lo, hi + 1)], tint(0), "bounded", f"{lo}..{hi}"),
    )


def build_frac(den_bound: int = 12, max_value: int = 4, name: str = "frac") -> MonoidSpec:
    """Nonnegative rationals under addition, enumerated as the reduced
    fractions in [0, max_value] with denominator <= den_bound."""

    def compose(a, b):
        return tfrac(a[1] * b[2] + b[1] * a[2], a[2] * b[2])

    seen = {Fraction(0)}
    elems = [tfrac(0)]
    for den in range(1, den_bound + 1):
        for num in range(1, max_value * den + 1):
            q = Fraction(num, den)
            if q not in seen:
                seen.add(q)
                elems.append(tfrac(num, den))
    return MonoidSpec(
        name,
        tfrac(0),
        compose,
        lambda t: True,
        _enum(elems, tfrac(0), "bounded", f"den <= {den_bound}, value <= {max_value}"),
    )


def build_product(name: str, parts: list[MonoidSpec], total: bool = False) -> MonoidSpec:
    """Componentwise product. ``total`` forces validity to be constantly
    true (protocol-monoid convention); otherwise validity is componentwise."""
    units = ttuple(*(p.unit for p in parts))
    fns = [p.compose_fn for p in parts]
    vals = [p.valid_fn for p in parts]

    def compose(a, b):
        return ttuple(*(f(x, y) for f, x, y in zip(fns, a[1], b[1])))

    if total:
        def valid_fn(t):
            return True
    else:
        def valid_fn(t):
            return all(v(x) for v, x in zip(vals, t[1]))

    mode = "bounded" if any(p.bounded for p in parts) else "exhaustive"

    def generate():
        combos = itertools.product(*(carrier(p) for p in parts))
        elems = sort_terms(ttuple(*c) for c in combos)
        elems.remove(units)
        return iter([units] + elems)

    return MonoidSpec(name, units, compose, valid_fn, ElementEnumerator(mode, generate))


def build_finmap(keys: tuple[Term, ...], value: MonoidSpec, name: str = "finmap") -> MonoidSpec:
    """Finite maps into a monoid, composed pointwise; unit entries dropped."""
    vunit = value.unit
    vcomp = value.compose_fn
    vvalid = value.valid_fn

    def compose(a, b):
        merged = dict(map_entries(a))
        for k, v in map_entries(b):
            if k in merged:
                merged[k] = vcomp(merged[k], v)
            else:
                merged[k] = v
        return tmap((k, v) for k, v in merged.items() if v != vunit)

    def valid_fn(t):
        return all(vvalid(v) for _, v in map_entries(t))

    def generate():
        per_key = [[(k, v) for v in carrier(value) if v != vunit] + [None] for k in keys]
        elems = []
        for combo in itertools.product(*per_key):
            elems.append(tmap(kv for kv in combo if kv is not None))
        out = sort_terms(set(elems))
        out.remove(tmap(()))
        return iter([tmap(())] + out)

    mode = "bounded" if value.bounded else "exhaustive"
    return MonoidSpec(name, tmap(()), compose, valid_fn, ElementEnumerator(mode, generate))


def build_table_monoid(
    name: str,
    elements: list[Term],
    unit: Term,
    table: dict[tuple[Term, Term], Term],
    invalid: tuple[Term, ...] = (),
) -> MonoidSpec:
    """Small custom monoid given by an explicit composition table."""
    bad = frozenset(invalid)

    def compose(a, b):
        got = table.get((a, b))
        if got is None:
            got = table.get((b, a))
        if got is None:
            raise KeyError(f"{name}: no table entry for {a!r} · {b!r}")
        return got

    return MonoidSpec(
        name, unit, compose, lambda t: t not in bad, _enum(elements, unit, "exhaustive")
    )


def build_trivial(name: str = "trivial") -> MonoidSpec:
    return MonoidSpec(
        name, UNIT, lambda a, b: UNIT, lambda t: True, _enum([UNIT], UNIT, "exhaustive")
    )


def as_total(spec: MonoidSpec, name: str | None = None) -> MonoidSpec:
    """Same carrier and composition, validity constantly true."""
    return MonoidSpec(
        name or spec.name + "-total",
        spec.unit,
        spec.compose_fn,
        lambda t: True,
        spec.enumerator,
    )


def pcm_as_protocol(spec: MonoidSpec, name: str | None = None) -> StorageProtocolSpec:
    """View a PCM as a storage protocol with trivial storage.

    𝒞 is the PCM's validity and 𝒮 is constantly ε, so exchange with ε on
    both storage sides coincides with the frame-preserving update over
    validity-reachable frames.
    """
    trivial = build_trivial(f"{spec.name}-storage")
    return StorageProtocolSpec(
        name or spec.name,
        as_total(spec),
        trivial,
        spec.valid_fn,
        lambda p: UNIT,
    )


# ---------------------------------------------------------------------------
# Fractional, counting, forever


def build_fractional(den_bound: int = 12, max_value: int = 4, nat_limit: int = 16) -> StorageProtocolSpec:
    """One shared item split into rational shares.

    Protocol states are nonnegative rationals (addition), storage counts
    items; a state is complete exactly when it is an integer, and an
    integer state stores that many items.
    """
    protocol = build_frac(den_bound, max_value, name="frac")
    storage = build_nat(nat_limit, name="nat")
    return StorageProtocolSpec(
        "fractional",
        protocol,
        storage,
        lambda p: p[2] == 1 and p[1] >= 0,
        lambda p: tint(p[1]),
    )


def build_fractional_memory(
    keys: tuple[Term, ...], den_bound: int = 4, max_value: int = 2, nat_limit: int = 4
) -> StorageProtocolSpec:
    """Per-key fractional shares: everything defined elementwise over a
    finite key set (keys stand for location/value pairs)."""
    protocol = build_finmap(keys, build_frac(den_bound, max_value), name="frac-map")
    storage = build_finmap(keys, build_nat(nat_limit), name="nat-map")

    def complete(p):
        return all(v[2] == 1 and v[1] >= 0 for _, v in map_entries(p))

    def stored_of(p):
        return tmap((k, tint(v[1])) for k, v in map_entries(p) if v[1] != 0)

    return StorageProtocolSpec("fractional-memory", protocol, storage, complete, stored_of)


@dataclass(frozen=True)
class CountingElems:
    """Named elements of the counting protocol."""

    def ref(self) -> Term:
        return ttuple(tint(-1), tint(0))

    def counter(self, r: int) -> Term:
        return ttuple(tint(r), tint(1))

    def element(self, r: int, c: int) -> Term:
        if c < 0:
            raise ValueError("count must be nonnegative")
        if c == 0 and r > 0:
            raise ValueError(f"({r}, 0) is outside the counting carrier (needs r <= 0)")
        return ttuple(tint(r), tint(c))

    @property
    def constructors(self):
        return {
            "ref": lambda args: self.ref(),
            "counter": lambda args: self.counter(args[0][1]),
        }


def build_counting(
    r_range: tuple[int, int] = (-4, 4),
    c_max: int = 4,
    nat_limit: int = 8,
    drop_carrier_constraint: bool = False,
) -> tuple[StorageProtocolSpec, CountingElems]:
    """Counting protocol: pairs (r, c) under pairwise addition with the
    carrier constraint c = 0 ⟹ r <= 0; complete iff r = 0; stores c.

    ``drop_carrier_constraint`` admits the out-of-carrier elements (r > 0,
    c = 0) — a deliberately broken variant for negative controls.
    """

    def compose(a, b):
        return ttuple(tint(a[1][0][1] + b[1][0][1]), tint(a[1][1][1] + b[1][1][1]))

    lo, hi = r_range
    elems = []
    for r in range(lo, hi + 1):
        for c in range(c_max + 1):
            if c == 0 and r > 0 and not drop_carrier_constraint:
                continue
            elems.append(ttuple(tint(r), tint(c)))
    name = "counting" + ("-unconstrained" if drop_carrier_constraint else "")
    protocol = MonoidSpec(
        name,
        ttuple(tint(0), tint(0)),
        compose,
        lambda t: True,
        _enum(elems, ttuple(tint(0), tint(0)), "bounded", f"r in {r_range}, c <= {c_max}"),
    )
    storage = build_nat(nat_limit)
    sp = StorageProtocolSpec(
        name,
        protocol,
        storage,
        lambda p: p[1][0] == tint(0),
        lambda p: p[1][1],
    )
    return sp, CountingElems()


def build_forever() -> StorageProtocolSpec:
    """Trivial protocol monoid over Excl(1) storage: content goes in once
    and is guarded by ε forever; no interesting updates exist."""
    protocol = build_trivial("forever-protocol")
    storage = build_excl((tint(1),), name="excl-1")
    return StorageProtocolSpec(
        "forever", protocol, storage, lambda p: True, lambda p: ex(tint(1))
    )


# ---------------------------------------------------------------------------
# Reader-writer lock protocol (single counter)


@dataclass(frozen=True)
class RwLockElems:
    """Named elements of the reader-writer lock protocol.

    A full element is a 5-tuple (fields slot, exc-pending token,
    exc token, pending-reader count, reader agreement).
    """

    values: tuple[Term, ...]

    def fields(self, exc: bool, rc: int, x: Term) -> Term:
        return ttuple(ex(ttuple(tbool(exc), tint(rc), x)), UNIT, UNIT, tint(0), UNIT)

    def exc_pending(self) -> Term:
        return ttuple(UNIT, EX, UNIT, tint(0), UNIT)

    def exc(self) -> Term:
        return ttuple(UNIT, UNIT, EX, tint(0), UNIT)

    def sh_pending(self) -> Term:
        return ttuple(UNIT, UNIT, UNIT, tint(1), UNIT)

    def sh(self, x: Term) -> Term:
        return ttuple(UNIT, UNIT, UNIT, tint(0), tcon("agn", x, tint(1)))

    # -- inspection helpers used by resolvers and state properties

    def fields_of(self, p: Term) -> tuple[bool, int, Term] | None:
        got = con_args(p[1][0], "ex")
        if got is None:
            return None
        exc_t, rc_t, x = got[0][1]
        return exc_t[1], rc_t[1], x

    def has_exc_pending(self, p: Term) -> bool:
        return p[1][1] != UNIT

    def has_exc(self, p: Term) -> bool:
        return p[1][2] != UNIT

    def sh_pending_count(self, p: Term) -> int:
        return p[1][3][1]

    def sh_value(self, p: Term) -> Term | None:
        got = con_args(p[1][4], "agn")
        return got[0] if got else None

    @property
    def constructors(self):
        return {
            "fields": lambda args: self.fields(args[0][1], args[1][1], args[2]),
            "excPending": lambda args: self.exc_pending(),
            "exc": lambda args: self.exc(),
            "shPending": lambda args: self.sh_pending(),
            "sh": lambda args: self.sh(args[0]),
        }


def _rw_count(s: Term) -> int:
    got = con_args(s, "agn")
    return got[1][1] if got else 0


def build_rwlock(
    values: tuple[Term, ...] = (tsym("x0"), tsym("x1")),
    rc_range: tuple[int, int] = (-2, 4),
    sp_max: int = 4,
    agn_max: int = 4,
) -> tuple[StorageProtocolSpec, RwLockElems]:
    """Reader-writer lock protocol over an abstract value set.

    Completeness ties the reference count to the pending and acquired
    reader tokens, makes the exc flag account for the writer tokens, and
    forces reader agreement with the fields value.
    """
    fields_payloads = [
        ttuple(tbool(e), tint(rc), x)
        for e in (False, True)
        for rc in range(rc_range[0], rc_range[1] + 1)
        for x in values
    ]
    c_fields = build_excl(tuple(fields_payloads), name="rw-fields")
    c_ep = build_excl_token("rw-ep")
    c_e = build_excl_token("rw-e")
    c_sp = build_nat(sp_max, name="rw-sp")
    c_sh = build_agn(values, agn_max, name="rw-sh")
    product = build_product("rwlock-protocol", [c_fields, c_ep, c_e, c_sp, c_sh], total=True)
    storage = build_excl(values, name="rw-storage")

    def complete(p):
        c1, ep, e, spc, s = p[1]
        if BOT in (c1, ep, e, s):
            return False
        got = con_args(c1, "ex")
        if got is None:
            return False
        exc_t, rc_t, x = got[0][1]
        exc_b, rc = exc_t[1], rc_t[1]
        if rc != spc[1] + _rw_count(s):
            return False
        if not exc_b and (ep != UNIT or e != UNIT):
            return False
        if exc_b and not ((ep == EX or e == EX) and not (ep == EX and e == EX)):
            return False
        if e == EX and s != UNIT:
            return False
        got_s = con_args(s, "agn")
        if got_s is not None and got_s[0] != x:
            return False
        return True

    def stored_of(p):
        c1, _, e, _, _ = p[1]
        x = con_args(c1, "ex")[0][1][2]
        return UNIT if e == EX else ex(x)

    sp = StorageProtocolSpec("rwlock", product, storage, complete, stored_of)
    return sp, RwLockElems(tuple(values))


# ---------------------------------------------------------------------------
# Reader-writer lock protocol (multiple counters)


@dataclass(frozen=True)
class RwLockMultiElems:
    """Named elements of the multi-counter reader-writer lock protocol."""

    values: tuple[Term, ...]
    k: int

    def _vec(self, counts) -> Term:
        return ttuple(*(tint(c) for c in counts))

    def fields(self, exc: bool, rcs: tuple[int, ...], x: Term) -> Term:
        if len(rcs) != self.k:
            raise ValueError(f"need {self.k} counters")
        return ttuple(
            ex(ttuple(tbool(exc), self._vec(rcs), x)), UNIT, UNIT, self._vec([0] * self.k), UNIT
        )

    def exc_pending(self, j: int) -> Term:
        if not 0 <= j <= self.k:
            raise ValueError("checked-counter index out of range")
        return ttuple(UNIT, ex(tint(j)), UNIT, self._vec([0] * self.k), UNIT)

    def exc(self) -> Term:
        return ttuple(UNIT, UNIT, EX, self._vec([0] * self.k), UNIT)

    def sh_pending(self, k: int) -> Term:
        counts = [0] * self.k
        counts[k] = 1
        return ttuple(UNIT, UNIT, UNIT, self._vec(counts), UNIT)

    def sh(self, k: int, x: Term) -> Term:
        counts = [0] * self.k
        counts[k] = 1
        return ttuple(UNIT, UNIT, UNIT, self._vec([0] * self.k), tcon("agn", x, self._vec(counts)))

    def fields_of(self, p: Term) -> tuple[bool, tuple[int, ...], Term] | None:
        got = con_args(p[1][0], "ex")
        if got is None:
            return None
        exc_t, rcs_t, x = got[0][1]
        return exc_t[1], tuple(c[1] for c in rcs_t[1]), x

    def exc_pending_index(self, p: Term) -> int | None:
        got = con_args(p[1][1], "ex")
        return got[0][1] if got else None

    def has_exc(self, p: Term) -> bool:
        return p[1][2] != UNIT

    def sh_value(self, p: Term) -> Term | None:
        got = con_args(p[1][4], "agn")
        return got[0] if got else None

    @property
    def constructors(self):
        return {
            "fields": lambda args: self.fields(
                args[0][1], tuple(c[1] for c in args[1][1]), args[2]
            ),
            "excPending": lambda args: self.exc_pending(args[0][1]),
            "exc": lambda args: self.exc(),
            "shPending": lambda args: self.sh_pending(args[0][1]),
            "sh": lambda args: self.sh(args[0][1], args[1]),
        }


def _vec_count(s: Term, k: int) -> int:
    got = con_args(s, "agn")
    return got[1][1][k][1] if got else 0


def build_rwlock_multi(
    values: tuple[Term, ...] = (tsym("x0"), tsym("x1")),
    k: int = 2,
    rc_range: tuple[int, int] = (-1, 2),
    sp_max: int = 1,
    agn_max: int = 1,
) -> tuple[StorageProtocolSpec, RwLockMultiElems]:
    """Multi-counter variant: one reference counter per reader class, the
    writer checks them in order and records how many it has seen at zero."""
    rcs_vecs = list(itertools.product(range(rc_range[0], rc_range[1] + 1), repeat=k))
    fields_payloads = [
        ttuple(tbool(e), ttuple(*(tint(c) for c in vec)), x)
        for e in (False, True)
        for vec in rcs_vecs
        for x in values
    ]
    c_fields = build_excl(tuple(fields_payloads), name="rwm-fields")
    c_ep = build_excl(tuple(tint(j) for j in range(k + 1)), name="rwm-ep")
    c_e = build_excl_token("rwm-e")

    sp_vecs = [
        ttuple(*(tint(c) for c in vec))
        for vec in itertools.product(range(sp_max + 1), repeat=k)
    ]

    def sp_compose(a, b):
        return ttuple(*(tint(u[1] + v[1]) for u, v in zip(a[1], b[1])))

    zero_vec = ttuple(*(tint(0) for _ in range(k)))
    c_sp = MonoidSpec(
        "rwm-sp", zero_vec, sp_compose, lambda t: True, _enum(sp_vecs, zero_vec, "bounded")
    )
    c_sh = build_agnvec(values, k, agn_max, name="rwm-sh")
    product = build_product("rwlock-multi-protocol", [c_fields, c_ep, c_e, c_sp, c_sh], total=True)
    storage = build_excl(values, name="rwm-storage")

    def complete(p):
        c1, ep, e, spc, s = p[1]
        if BOT in (c1, ep, e, s):
            return False
        got = con_args(c1, "ex")
        if got is None:
            return False
        exc_t, rcs_t, x = got[0][1]
        exc_b = exc_t[1]
        for i in range(k):
            if rcs_t[1][i][1] != spc[1][i][1] + _vec_count(s, i):
                return False
        if not exc_b and (ep != UNIT or e != UNIT):
            return False
        if exc_b and not ((ep != UNIT or e != UNIT) and not (ep != UNIT and e != UNIT)):
            return False
        if e == EX and s != UNIT:
            return False
        got_s = con_args(s, "agn")
        if got_s is not None:
            if got_s[0] != x:
                return False
        ep_got = con_args(ep, "ex")
        if ep_got is not None:
            checked = ep_got[0][1]
            for i in range(min(checked, k)):
                if _vec_count(s, i) != 0:
                    return False
        return True

    def stored_of(p):
        c1, _, e, _, _ = p[1]
        x = con_args(c1, "ex")[0][1][2]
        return UNIT if e == EX else ex(x)

    sp = StorageProtocolSpec("rwlock-multi", product, storage, complete, stored_of)
    return sp, RwLockMultiElems(tuple(values), k)


# ---------------------------------------------------------------------------
# Linear-probing hash-table monoid


@dataclass(frozen=True)
class HashFunctionSpec:
    """Table length plus a total hash on the declared key set."""

    length: int
    table: tuple[tuple[Term, int], ...]

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("table length must be positive")
        for key, h in self.table:
            if not 0 <= h < self.length:
                raise ValueError(f"hash of {key!r} out of [0, {self.length})")

    def hash_of(self, key: Term) -> int:
        for k, h in self.table:
            if k == key:
                return h
        raise KeyError(f"key {key!r} not in hash table domain")

    @property
    def keys(self) -> tuple[Term, ...]:
        return tuple(k for k, _ in self.table)


@dataclass(frozen=True)
class HashTableElems:
    """Fragments of the hash-table monoid: logical map entries and slots."""

    keys: tuple[Term, ...]
    values: tuple[Term, ...]
    length: int

    def m(self, k: Term, v: Term) -> Term:
        """v is some(value) or none."""
        return ttuple(tmap([(k, ex(v))]), tmap(()))

    def slot(self, i: int, s: Term) -> Term:
        """s is some((key, value)) or none."""
        return ttuple(tmap(()), tmap([(tint(i), ex(s))]))

    def entry(self, k: Term, v: Term) -> Term:
        return some(ttuple(k, v))

    def map_value(self, z: Term, k: Term) -> Term | None:
        got = map_get(z[1][0], k)
        if got is None:
            return None
        inner = con_args(got, "ex")
        return inner[0] if inner else None

    def slot_value(self, z: Term, i: int) -> Term | None:
        got = map_get(z[1][1], tint(i))
        if got is None:
            return None
        inner = con_args(got, "ex")
        return inner[0] if inner else None


def _ht_compose(a, b):
    # entries are ex(...) or ⊥, never ε, so any coordinate overlap conflicts
    out = []
    for idx in (0, 1):
        merged = dict(map_entries(a[1][idx]))
        for kk, v in map_entries(b[1][idx]):
            merged[kk] = BOT if kk in merged else v
        out.append(tmap(merged.items()))
    return ttuple(*out)


def build_hashtable_monoid(
    hash_spec: HashFunctionSpec, values: tuple[Term, ...]
) -> tuple[MonoidSpec, HashTableElems]:
    """Product of two exclusive finite maps — logical key map and physical
    slot map — with validity 𝒱(z) = "z extends to a consistent table".

    Consistency of a full state: entries are all exclusive, slot keys are
    distinct, map and slots agree, and every occupied slot sits in a
    contiguous run starting at its key's hash index. Validity is
    precomputed as the downward closure of the consistent states.
    """
    keys = hash_spec.keys
    length = hash_spec.length
    elems_api = HashTableElems(keys, tuple(values), length)

    slot_opts = [NONE] + [some(ttuple(k, v)) for k in keys for v in values]
    map_opts = [NONE] + [some(v) for v in values]

    def consistent(keymap: dict, slotmap: dict) -> bool:
        filled = {}
        for i, s in slotmap.items():
            if s == NONE:
                continue
            k, v = con_args(s, "some")[0][1]
            filled[i] = (k, v)
        # distinct keys across slots
        ks = [k for k, _ in filled.values()]
        if len(ks) != len(set(ks)):
            return False
        # map entries point at a matching slot
        for k, mv in keymap.items():
            if mv == NONE:
                continue
            v = con_args(mv, "some")[0]
            if not any(fk == k and fv == v for fk, fv in filled.values()):
                return False
        # slot entries are registered in the map with a non-none value
        for i, (k, v) in filled.items():
            if k not in keymap or keymap[k] == NONE:
                return False
        # contiguous probe runs from the hash index
        for i, (k, _) in filled.items():
            h = hash_spec.hash_of(k)
            if h > i:
                return False
            for j in range(h, i + 1):
                if j not in slotmap or slotmap[j] == NONE:
                    return False
        return True

    valid_set: set[Term] = set()
    for slot_combo in itertools.product([None] + slot_opts, repeat=length):
        slotmap = {i: s for i, s in enumerate(slot_combo) if s is not None}
        for map_combo in itertools.product([None] + map_opts, repeat=len(keys)):
            keymap = {k: m for k, m in zip(keys, map_combo) if m is not None}
            if not consistent(keymap, slotmap):
                continue
            key_items = list(keymap.items())
            slot_items = list(slotmap.items())
            for key_mask in range(1 << len(key_items)):
                sub_keys = [key_items[b] for b in range(len(key_items)) if key_mask >> b & 1]
                for slot_mask in range(1 << len(slot_items)):
                    sub_slots = [
                        slot_items[b] for b in range(len(slot_items)) if slot_mask >> b & 1
                    ]
                    valid_set.add(
                        ttuple(
                            tmap((k, ex(v)) for k, v in sub_keys),
                            tmap((tint(i), ex(s)) for i, s in sub_slots),
                        )
                    )

    def generate():
        per_key = [[None, BOT] + [ex(o) for o in map_opts] for _ in keys]
        per_slot = [[None, BOT] + [ex(o) for o in slot_opts] for _ in range(length)]
        elems = []
        for key_combo in itertools.product(*per_key):
            kmap = tmap((k, v) for k, v in zip(keys, key_combo) if v is not None)
            for slot_combo in itertools.product(*per_slot):
                smap = tmap(
                    (tint(i), v) for i, v in enumerate(slot_combo) if v is not None
                )
                elems.append(ttuple(kmap, smap))
        out = sort_terms(elems)
        unit = ttuple(tmap(()), tmap(()))
        out.remove(unit)
        return iter([unit] + out)

    spec = MonoidSpec(
        "hashtable",
        ttuple(tmap(()), tmap(())),
        _ht_compose,
        lambda z: z in valid_set,
        ElementEnumerator("exhaustive", generate, f"L={length}, {len(keys)} keys"),
    )
    return spec, elems_api


def build_hashtable_protocol(
    hash_spec: HashFunctionSpec, values: tuple[Term, ...]
) -> tuple[StorageProtocolSpec, HashTableElems]:
    monoid, elems = build_hashtable_monoid(hash_spec, values)
    return pcm_as_protocol(monoid), elems
