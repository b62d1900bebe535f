"""The λI-resource calculus with memory.

Expressions are linear: applications take bags (finite multisets) of
resources, and the empty bag 1_X carries the set X of variables it
remembers.  Formal sums have ℕ coefficients; the empty sum 0_X also
carries its free variables.  α-conversion renames linear occurrences and
occurrences inside bag memories alike.

Reduction contracts (λx.s)b̄ to the resource substitution s⟨b̄/x⟩, which
distributes the bag over the linear occurrences of x (a sum over all
assignments) and then rewrites the memories.  It is strongly normalizing
and strongly confluent; `normalize` returns the unique normal form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

from .terms import LambdaError, fresh_name, sorted_names

RPosition = tuple  # steps: "L" (under λ), "F" (function), ("B", i) (bag item i)


class ResourceError(LambdaError):
    pass


# ---------------------------------------------------------------------------
# Expressions

@dataclass(frozen=True, eq=False)
class ResourceExpr:
    """Base class; equality and hashing are α-aware (canonical keys)."""

    fv: frozenset = field(init=False, compare=False, repr=False, default=frozenset())

    def key(self):
        k = self.__dict__.get("_ckey")
        if k is None:
            k = self._key(())
            object.__setattr__(self, "_ckey", k)
        return k

    def _key(self, env):
        raise NotImplementedError

    def __eq__(self, other):
        if not isinstance(other, ResourceExpr):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __str__(self) -> str:
        return rshow(self)


def _name_key(name: str, env):
    for i in range(len(env) - 1, -1, -1):
        if env[i] == name:
            return ("b", len(env) - 1 - i)
    return ("f", name)


def _memory_key(mem: frozenset, env):
    return tuple(sorted(_name_key(n, env) for n in mem))


@dataclass(frozen=True, eq=False)
class RVar(ResourceExpr):
    name: str

    def __post_init__(self):
        object.__setattr__(self, "fv", frozenset((self.name,)))

    def _key(self, env):
        return ("v", _name_key(self.name, env))


@dataclass(frozen=True, eq=False)
class RAbs(ResourceExpr):
    binder: str
    body: ResourceExpr

    def __post_init__(self):
        if self.binder not in self.body.fv:
            raise ResourceError(
                f"λ{self.binder} binds no occurrence (linear or memory) in {self.body}"
            )
        object.__setattr__(self, "fv", self.body.fv - {self.binder})

    def _key(self, env):
        return ("l", self.body._key(env + (self.binder,)))


@dataclass(frozen=True, eq=False)
class RApp(ResourceExpr):
    fun: ResourceExpr
    bag: "Bag"

    def __post_init__(self):
        object.__setattr__(self, "fv", self.fun.fv | self.bag.fv)

    def _key(self, env):
        return ("a", self.fun._key(env), self.bag._key(env))


@dataclass(frozen=True, eq=False)
class Bag(ResourceExpr):
    """Multiset of resource terms, or the annotated empty bag 1_X.

    Nonempty bags require all elements to share the same free variables;
    elements are stored sorted by canonical key, so bag equality is
    order-insensitive.
    """
    items: tuple
    memory: frozenset | None  # set for the empty bag, None otherwise

    def __post_init__(self):
        if self.items:
            if self.memory is not None:
                raise ResourceError("nonempty bag cannot carry a memory annotation")
            f0 = self.items[0].fv
            for t in self.items[1:]:
                if t.fv != f0:
                    raise ResourceError(
                        f"bag elements must share free variables: {sorted(f0)} vs {sorted(t.fv)}"
                    )
            object.__setattr__(self, "fv", f0)
        else:
            if self.memory is None:
                raise ResourceError("empty bag needs a memory annotation")
            object.__setattr__(self, "fv", self.memory)

    @staticmethod
    def empty(memory) -> "Bag":
        return Bag((), frozenset(memory))

    @staticmethod
    def of(items) -> "Bag":
        items = tuple(sorted(items, key=lambda t: t.key()))
        return Bag(items, None)

    def is_empty(self) -> bool:
        return not self.items

    def __len__(self) -> int:
        return len(self.items)

    def _key(self, env):
        if self.is_empty():
            return ("1", _memory_key(self.memory, env))
        return ("m", tuple(sorted(t._key(env) for t in self.items)))


def rfv(e: ResourceExpr) -> frozenset:
    return e.fv


def bag_union(a: Bag, b: Bag) -> Bag:
    if a.fv != b.fv:
        raise ResourceError("bag union requires equal free variables")
    if a.is_empty():
        return b
    if b.is_empty():
        return a
    return Bag.of(a.items + b.items)


def rsize(e: ResourceExpr) -> int:
    """SN-measure size: |x| = 1, |1_X| = 0, abstractions/applications add 1."""
    match e:
        case RVar():
            return 1
        case RAbs(_, b):
            return 1 + rsize(b)
        case RApp(f, b):
            return 1 + rsize(f) + rsize(b)
        case Bag(items, _):
            return sum(rsize(t) for t in items)
    raise TypeError(e)


def enum_size(e: ResourceExpr) -> int:
    """Taylor-enumeration size: node count with |1_X| = 1; bags add elements."""
    match e:
        case RVar():
            return 1
        case RAbs(_, b):
            return 1 + enum_size(b)
        case RApp(f, b):
            return 1 + enum_size(f) + enum_size(b)
        case Bag(items, _):
            return 1 if not items else sum(enum_size(t) for t in items)
    raise TypeError(e)


# ---------------------------------------------------------------------------
# Sums

@dataclass(frozen=True, eq=False)
class Sum:
    """Finitely supported ℕ-weighted formal sum of same-fv resource expressions.

    Equality is α-aware and coefficient-exact.
    """
    fv: frozenset
    parts: tuple  # sorted tuple of (expr, coeff), coeff > 0

    def __eq__(self, other):
        if not isinstance(other, Sum):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    @staticmethod
    def zero(fv) -> "Sum":
        return Sum(frozenset(fv), ())

    @staticmethod
    def single(e: ResourceExpr, coeff: int = 1) -> "Sum":
        if coeff == 0:
            return Sum.zero(e.fv)
        return Sum(e.fv, ((e, coeff),))

    @staticmethod
    def of(pairs, fv=None) -> "Sum":
        acc: dict = {}
        exprs: dict = {}
        seen_fv = None
        for e, c in pairs:
            if c == 0:
                continue
            if seen_fv is None:
                seen_fv = e.fv
            elif e.fv != seen_fv:
                raise ResourceError("sum over expressions with different free variables")
            k = e.key()
            acc[k] = acc.get(k, 0) + c
            exprs[k] = e
        if seen_fv is None:
            if fv is None:
                raise ResourceError("empty sum needs an explicit free-variable set")
            return Sum.zero(fv)
        if fv is not None and frozenset(fv) != seen_fv:
            raise ResourceError("sum annotation disagrees with its support")
        parts = tuple(sorted(((exprs[k], c) for k, c in acc.items()), key=lambda p: p[0].key()))
        return Sum(seen_fv, parts)

    def is_zero(self) -> bool:
        return not self.parts

    def __add__(self, other: "Sum") -> "Sum":
        if self.fv != other.fv:
            raise ResourceError("cannot add sums with different free variables")
        return Sum.of(self.parts + other.parts, self.fv)

    def scale(self, c: int) -> "Sum":
        if c == 0:
            return Sum.zero(self.fv)
        return Sum(self.fv, tuple((e, k * c) for e, k in self.parts))

    def support(self) -> list[ResourceExpr]:
        return [e for e, _ in self.parts]

    def coeff(self, e: ResourceExpr) -> int:
        k = e.key()
        for t, c in self.parts:
            if t.key() == k:
                return c
        return 0

    def key(self):
        return (tuple(sorted(self.fv)), tuple((e.key(), c) for e, c in self.parts))

    def __str__(self) -> str:
        return sum_show(self)


def sum_map(s: Sum, f) -> Sum:
    """Apply a linear expression-to-sum map to every summand."""
    total: Sum | None = None
    for e, c in s.parts:
        piece = f(e).scale(c)
        total = piece if total is None else total + piece
    if total is None:
        raise ResourceError("sum_map over an empty sum needs explicit handling")
    return total


# bilinear constructors -------------------------------------------------------

def abs_sum(x: str, body: Sum) -> Sum:
    fv = body.fv - {x}
    return Sum.of(((RAbs(x, e), c) for e, c in body.parts), fv)


def app_sum(fun: Sum, bag: Sum) -> Sum:
    fv = fun.fv | bag.fv
    return Sum.of(
        ((RApp(ef, eb), cf * cb) for ef, cf in fun.parts for eb, cb in bag.parts),
        fv,
    )


def bag_cons_sum(head: Sum, rest: Sum) -> Sum:
    """[h]·rest for a sum of heads and a sum of rest-bags."""
    fv = head.fv | rest.fv
    return Sum.of(
        ((bag_union(Bag.of((eh,)), eb), ch * cb) for eh, ch in head.parts for eb, cb in rest.parts),
        fv,
    )


# ---------------------------------------------------------------------------
# Memory substitution

def memory_subst_set(mem: frozenset, x: str, ys: frozenset) -> frozenset:
    if x in mem:
        return (mem - {x}) | ys
    return mem


def msubst(e: ResourceExpr, x: str, ys: frozenset) -> ResourceExpr:
    """Rewrite every memory X to X⟨ys/x⟩; linear occurrences of x are untouched."""
    match e:
        case RVar():
            return e
        case RAbs(b, body):
            if b == x:
                return e
            if b in ys:
                b2 = fresh_name(b, ys | body.fv | {x})
                body = rename_rvar(body, b, b2)
                b = b2
            return RAbs(b, msubst(body, x, ys))
        case RApp(f, bag):
            return RApp(msubst(f, x, ys), msubst(bag, x, ys))
        case Bag(items, mem):
            if not items:
                return Bag.empty(memory_subst_set(mem, x, ys))
            return Bag.of(tuple(msubst(t, x, ys) for t in items))
    raise TypeError(e)


def rename_rvar(e: ResourceExpr, old: str, new: str) -> ResourceExpr:
    """α-rename old to new (linear and memory occurrences)."""
    match e:
        case RVar(n):
            return RVar(new) if n == old else e
        case RAbs(b, body):
            if b == old:
                return e
            if b == new:
                b2 = fresh_name(b, body.fv | {old, new})
                body = rename_rvar(body, b, b2)
                b = b2
            return RAbs(b, rename_rvar(body, old, new))
        case RApp(f, bag):
            return RApp(rename_rvar(f, old, new), rename_rvar(bag, old, new))
        case Bag(items, mem):
            if not items:
                if old in mem:
                    return Bag.empty((mem - {old}) | {new})
                return e
            return Bag.of(tuple(rename_rvar(t, old, new) for t in items))
    raise TypeError(e)


# ---------------------------------------------------------------------------
# Linear degree and resource substitution

def lin_degree(e: ResourceExpr, x: str) -> int:
    match e:
        case RVar(n):
            return 1 if n == x else 0
        case RAbs(b, body):
            return 0 if b == x else lin_degree(body, x)
        case RApp(f, bag):
            return lin_degree(f, x) + lin_degree(bag, x)
        case Bag(items, _):
            return sum(lin_degree(t, x) for t in items)
    raise TypeError(e)


def bag_decompositions(u: Bag):
    """Yield (v, w, multiplicity) with u = v·w, over distinct sub-multisets.

    The multiplicity is the number of ways to pick the copies that go left,
    i.e. the product of binomial coefficients per distinct element; this is
    the counting the formal Σ over decompositions uses.
    """
    if u.is_empty():
        yield u, u, 1
        return
    groups: list[tuple[ResourceExpr, int]] = []
    seen: dict = {}
    for t in u.items:
        k = t.key()
        if k in seen:
            groups[seen[k]] = (groups[seen[k]][0], groups[seen[k]][1] + 1)
        else:
            seen[k] = len(groups)
            groups.append((t, 1))
    ranges = [range(m + 1) for _, m in groups]
    for pick in itertools.product(*ranges):
        mult = 1
        left: list[ResourceExpr] = []
        right: list[ResourceExpr] = []
        for (t, m), k in zip(groups, pick):
            mult *= math.comb(m, k)
            left.extend([t] * k)
            right.extend([t] * (m - k))
        v = Bag.of(left) if left else Bag.empty(u.fv)
        w = Bag.of(right) if right else Bag.empty(u.fv)
        yield v, w, mult


def rsubst(e: ResourceExpr, x: str, u: Bag) -> Sum:
    """Resource substitution e⟨u/x⟩: a sum in fv(e)⟨fv(u)/x⟩."""
    ys = u.fv
    if x not in e.fv:
        # x occurs neither linearly nor in any memory
        return Sum.single(e) if u.is_empty() else Sum.zero(e.fv)
    out_fv = memory_subst_set(e.fv, x, ys)
    match e:
        case RVar(n):
            if n == x:
                if len(u) == 1:
                    return Sum.single(u.items[0])
                return Sum.zero(ys)
            return Sum.single(e) if u.is_empty() else Sum.zero(e.fv)
        case RAbs(b, body):
            if b in ys:
                b2 = fresh_name(b, ys | body.fv | {x})
                body = rename_rvar(body, b, b2)
                b = b2
            inner = rsubst(body, x, u)
            if inner.is_zero():
                return Sum.zero(out_fv)
            return abs_sum(b, inner)
        case RApp(f, bag):
            total = Sum.zero(out_fv)
            for v, w, mult in bag_decompositions(u):
                fs = rsubst(f, x, v)
                if fs.is_zero():
                    continue
                bs = rsubst(bag, x, w)
                if bs.is_zero():
                    continue
                total = total + app_sum(fs, bs).scale(mult)
            return total
        case Bag(items, mem):
            if not items:
                if u.is_empty():
                    return Sum.single(Bag.empty(memory_subst_set(mem, x, ys)))
                return Sum.zero(memory_subst_set(mem, x, ys))
            head, rest = items[0], Bag.of(items[1:]) if items[1:] else Bag.empty(e.fv)
            total = Sum.zero(out_fv)
            for v, w, mult in bag_decompositions(u):
                hs = rsubst(head, x, v)
                if hs.is_zero():
                    continue
                rs = rsubst(rest, x, w)
                if rs.is_zero():
                    continue
                total = total + bag_cons_sum(hs, rs).scale(mult)
            return total
    raise TypeError(e)


def rsubst_sum(s: Sum, x: str, u: Bag) -> Sum:
    out_fv = memory_subst_set(s.fv, x, u.fv)
    total = Sum.zero(out_fv)
    for e, c in s.parts:
        total = total + rsubst(e, x, u).scale(c)
    return total


def rsubst_by_bagsum(e: ResourceExpr, x: str, us: Sum) -> Sum:
    """e⟨𝔲/x⟩ for a sum of bags, by linearity in the bag argument."""
    out_fv = memory_subst_set(e.fv, x, us.fv)
    total = Sum.zero(out_fv)
    for u, c in us.parts:
        total = total + rsubst(e, x, u).scale(c)
    return total


def rsubst_sum_by_bagsum(s: Sum, x: str, us: Sum) -> Sum:
    out_fv = memory_subst_set(s.fv, x, us.fv)
    total = Sum.zero(out_fv)
    for e, c in s.parts:
        total = total + rsubst_by_bagsum(e, x, us).scale(c)
    return total


# ---------------------------------------------------------------------------
# Permutation-formula oracle

def _occurrence_subst(e: ResourceExpr, x: str, assignment: list[ResourceExpr], counter: list[int]) -> ResourceExpr:
    match e:
        case RVar(n):
            if n == x:
                t = assignment[counter[0]]
                counter[0] += 1
                return t
            return e
        case RAbs(b, body):
            if b == x:
                return e
            avoid = frozenset().union(*(t.fv for t in assignment)) if assignment else frozenset()
            if b in avoid:
                b2 = fresh_name(b, avoid | body.fv | {x})
                body = rename_rvar(body, b, b2)
                b = b2
            return RAbs(b, _occurrence_subst(body, x, assignment, counter))
        case RApp(f, bag):
            f2 = _occurrence_subst(f, x, assignment, counter)
            return RApp(f2, _occurrence_subst(bag, x, assignment, counter))
        case Bag(items, _):
            if not items:
                return e
            return Bag.of(tuple(_occurrence_subst(t, x, assignment, counter) for t in items))
    raise TypeError(e)


def rsubst_oracle(e: ResourceExpr, x: str, u: Bag) -> Sum:
    """e⟨u/x⟩ by the explicit sum over permutations of the bag.

    When |u| = deg_x(e), every enumeration of u is substituted positionally
    into the occurrences of x and the memories are rewritten afterwards;
    otherwise the result is the empty sum.  Coefficient-exact.
    """
    n = lin_degree(e, x)
    ys = u.fv
    out_fv = memory_subst_set(e.fv, x, ys) if x in e.fv else e.fv
    if len(u) != n:
        return Sum.zero(out_fv)
    total = Sum.zero(out_fv)
    for perm in itertools.permutations(range(n)):
        assignment = [u.items[perm[i]] for i in range(n)]
        t = _occurrence_subst(e, x, assignment, [0])
        t = msubst(t, x, ys)
        total = total + Sum.single(t)
    return total


# ---------------------------------------------------------------------------
# Reduction

def is_rredex(e: ResourceExpr) -> bool:
    return isinstance(e, RApp) and isinstance(e.fun, RAbs)


def contract(e: ResourceExpr) -> Sum:
    assert is_rredex(e)
    return rsubst(e.fun.body, e.fun.binder, e.bag)


def redexes(t: ResourceExpr) -> list[tuple[RPosition, Sum]]:
    """All redex occurrences with their one-step contractum in context."""
    out = []
    for p in redex_positions(t):
        out.append((p, contract_at(t, p)))
    return out


def redex_positions(t: ResourceExpr) -> list[RPosition]:
    out: list[RPosition] = []

    def go(e: ResourceExpr, p: tuple):
        match e:
            case RVar():
                pass
            case RAbs(_, body):
                go(body, p + ("L",))
            case RApp(f, bag):
                if is_rredex(e):
                    out.append(p)
                go(f, p + ("F",))
                for i, item in enumerate(bag.items):
                    go(item, p + (("B", i),))
            case Bag(items, _):
                for i, item in enumerate(items):
                    go(item, p + (("B", i),))

    go(t, ())
    return out


def contract_at(t: ResourceExpr, p: RPosition) -> Sum:
    """One-step contractum of the redex at p, placed in context bilinearly."""
    if not p:
        if not is_rredex(t):
            raise ResourceError(f"no redex at {p}")
        return contract(t)
    step, rest = p[0], p[1:]
    match t, step:
        case RAbs(x, body), "L":
            return abs_sum(x, contract_at(body, rest))
        case RApp(f, bag), "F":
            return app_sum(contract_at(f, rest), Sum.single(bag))
        case RApp(f, bag), ("B", i):
            return app_sum(Sum.single(f), _bag_contract(bag, i, rest))
        case Bag(), ("B", i):
            return _bag_contract(t, i, rest)
    raise ResourceError(f"invalid position {p}")


def _bag_contract(bag: Bag, i: int, rest: RPosition) -> Sum:
    inner = contract_at(bag.items[i], rest)
    others = bag.items[:i] + bag.items[i + 1 :]
    rest_bag = Bag.of(others) if others else Bag.empty(bag.fv)
    return bag_cons_sum(inner, Sum.single(rest_bag))


def sum_steps(s: Sum, cap: int | None = None):
    """One-step reducts of a sum: one summand-occurrence steps, rest kept.

    A coefficient c summand stepping once leaves c-1 copies behind.  This
    enumerates single-redex steps; the reflexive-transitive closure of these
    reaches the same normal form.
    """
    out = []
    for idx, (e, c) in enumerate(s.parts):
        others = Sum(s.fv, s.parts[:idx] + s.parts[idx + 1 :])
        if c > 1:
            others = others + Sum.single(e, c - 1)
        for _, contractum in redexes(e):
            out.append(others + contractum)
            if cap is not None and len(out) >= cap:
                return out
    return out


_NF_CACHE: dict = {}


def normalize_expr(e: ResourceExpr) -> Sum:
    k = e.key()
    hit = _NF_CACHE.get(k)
    if hit is not None:
        return hit
    ps = redex_positions(e)
    if not ps:
        out = Sum.single(e)
    else:
        # leftmost-innermost on the canonical representative
        p = max(ps, key=len)
        stepped = contract_at(e, p)
        out = normalize(stepped)
    _NF_CACHE[k] = out
    return out


def normalize(s: Sum) -> Sum:
    """The unique r-normal form, with exact ℕ coefficients."""
    total = Sum.zero(s.fv)
    for e, c in s.parts:
        total = total + normalize_expr(e).scale(c)
    return total


def is_normal(e: ResourceExpr) -> bool:
    return not redex_positions(e)


def sum_size(s: Sum) -> list[int]:
    """Multiset (sorted list) of summand sizes — the SN measure."""
    out: list[int] = []
    for e, c in s.parts:
        out.extend([rsize(e)] * c)
    return sorted(out)


def multiset_less(a: list[int], b: list[int]) -> bool:
    """Dershowitz–Manna multiset order on finite ℕ-multisets (a < b)."""
    if a == b:
        return False
    ca, cb = dict(), dict()
    for x in a:
        ca[x] = ca.get(x, 0) + 1
    for x in b:
        cb[x] = cb.get(x, 0) + 1
    removed = {x: cb.get(x, 0) - ca.get(x, 0) for x in set(ca) | set(cb)}
    gained = [x for x, d in removed.items() if d < 0]
    lost = [x for x, d in removed.items() if d > 0]
    if not lost:
        return False
    top = max(lost)
    return all(x < top for x in gained)


# ---------------------------------------------------------------------------
# Parsing and printing

def rshow(e: ResourceExpr, unicode_lambda: bool = False) -> str:
    lam = "λ" if unicode_lambda else "\\"

    def fvs(mem) -> str:
        return "{" + ",".join(sorted(mem)) + "}"

    def atom(t) -> str:
        if isinstance(t, (RVar, Bag)):
            return go(t)
        return "(" + go(t) + ")"

    def go(t) -> str:
        match t:
            case RVar(n):
                return n
            case RAbs():
                binders = []
                while isinstance(t, RAbs):
                    binders.append(t.binder)
                    t = t.body
                return lam + " ".join(binders) + "." + go(t)
            case RApp(f, bag):
                fs = atom(f) if isinstance(f, (RAbs,)) else go(f)
                return fs + " " + go(bag)
            case Bag(items, mem):
                if not items:
                    return "1" + fvs(mem)
                return "[" + ", ".join(go(i) for i in items) + "]"
        raise TypeError(t)

    return go(e)


def sum_show(s: Sum, unicode_lambda: bool = False) -> str:
    if s.is_zero():
        return "0{" + ",".join(sorted(s.fv)) + "}"
    bits = []
    for e, c in s.parts:
        body = rshow(e, unicode_lambda)
        bits.append(body if c == 1 else f"{c}.{body}")
    return " + ".join(bits)


_RESOURCE_COMBINATORS = {
    "rI": "\\x.x",
    "rD0": "\\x.x 1{x}",
    "rD1": "\\x.x[x]",
    "rD2": "\\x.x[x, x]",
    "rD3": "\\x.x[x, x, x]",
}


class _RTokens:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def skip_ws(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.i] if self.i < len(self.text) else None

    def error(self, msg):
        from .terms import ParseError

        raise ParseError(msg, self.i)

    def name(self):
        from .terms import NAME_RE

        self.skip_ws()
        m = NAME_RE.match(self.text, self.i)
        if not m:
            self.error("expected a name")
        self.i = m.end()
        return m.group(0)

    def expect(self, ch):
        self.skip_ws()
        if self.i >= len(self.text) or self.text[self.i] != ch:
            self.error(f"expected {ch!r}")
        self.i += 1

    def number(self):
        self.skip_ws()
        j = self.i
        while j < len(self.text) and self.text[j].isdigit():
            j += 1
        if j == self.i:
            self.error("expected a number")
        n = int(self.text[self.i : j])
        self.i = j
        return n


def _parse_fvset(toks: _RTokens) -> frozenset:
    toks.expect("{")
    names = set()
    if toks.peek() != "}":
        names.add(toks.name())
        while toks.peek() == ",":
            toks.i += 1
            names.add(toks.name())
    toks.expect("}")
    return frozenset(names)


def parse_resource(text: str) -> ResourceExpr:
    toks = _RTokens(text)
    t = _parse_rterm(toks)
    toks.skip_ws()
    if toks.i != len(text):
        toks.error("trailing input")
    return t


def _parse_rterm(toks: _RTokens) -> ResourceExpr:
    c = toks.peek()
    if c in ("\\", "λ"):
        toks.i += 1
        binders = [toks.name()]
        while toks.peek() not in (".", None):
            binders.append(toks.name())
        toks.expect(".")
        body = _parse_rterm(toks)
        for b in reversed(binders):
            body = RAbs(b, body)
        return body
    t = _parse_ratom(toks)
    if t is None:
        toks.error("expected a resource term")
    while True:
        nxt = toks.peek()
        if nxt == "[":
            t = RApp(t, _parse_bag(toks))
        elif nxt == "1":
            toks.i += 1
            t = RApp(t, Bag.empty(_parse_fvset(toks)))
        elif nxt == "(" or (nxt is not None and nxt.isalpha()) or nxt in ("\\", "λ", "@"):
            arg = _parse_ratom(toks)
            if arg is None:
                break
            # applications need a bag argument; bare juxtaposition is an error
            toks.error("application argument must be a bag like [t] or 1{...}")
        else:
            break
    return t


def _parse_bag(toks: _RTokens) -> Bag:
    toks.expect("[")
    items = [_parse_rterm(toks)]
    while toks.peek() == ",":
        toks.i += 1
        items.append(_parse_rterm(toks))
    toks.expect("]")
    return Bag.of(items)


def _parse_ratom(toks: _RTokens) -> ResourceExpr | None:
    c = toks.peek()
    if c is None:
        return None
    if c == "(":
        toks.i += 1
        t = _parse_rterm(toks)
        toks.expect(")")
        return t
    if c in ("\\", "λ"):
        return _parse_rterm(toks)
    if c == "@":
        toks.i += 1
        name = toks.name()
        if name not in _RESOURCE_COMBINATORS:
            toks.error(f"unknown resource combinator @{name}")
        return parse_resource(_RESOURCE_COMBINATORS[name])
    if c.isalpha():
        return RVar(toks.name())
    return None


def parse_sum(text: str) -> Sum:
    """Sums: "2.t + u", empty sum "0{x,y}"."""
    toks = _RTokens(text)
    total: Sum | None = None

    def piece() -> Sum:
        c = toks.peek()
        if c == "0":
            save = toks.i
            toks.i += 1
            if toks.peek() == "{":
                return Sum.zero(_parse_fvset(toks))
            toks.i = save
        coeff = 1
        if c is not None and c.isdigit():
            coeff = toks.number()
            toks.expect(".")
        return Sum.single(_parse_rterm(toks), coeff)

    total = piece()
    while toks.peek() == "+":
        toks.i += 1
        nxt = piece()
        if total.is_zero() and nxt.fv != total.fv:
            toks.error("summand free variables disagree with 0_X annotation")
        total = total + nxt
    toks.skip_ws()
    if toks.i != len(text):
        toks.error("trailing input")
    return total


# ---------------------------------------------------------------------------
# JSON codec

def rexpr_to_json(e: ResourceExpr):
    match e:
        case RVar(n):
            return {"kind": "var", "name": n}
        case RAbs(b, body):
            return {"kind": "abs", "binder": b, "body": rexpr_to_json(body)}
        case RApp(f, bag):
            return {"kind": "app", "fun": rexpr_to_json(f), "bag": rexpr_to_json(bag)}
        case Bag(items, mem):
            if not items:
                return {"kind": "empty_bag", "fv": sorted(mem)}
            return {"kind": "bag", "items": [rexpr_to_json(t) for t in items]}
    raise TypeError(e)


def rexpr_from_json(obj) -> ResourceExpr:
    match obj.get("kind"):
        case "var":
            return RVar(obj["name"])
        case "abs":
            return RAbs(obj["binder"], rexpr_from_json(obj["body"]))
        case "app":
            return RApp(rexpr_from_json(obj["fun"]), rexpr_from_json(obj["bag"]))
        case "empty_bag":
            return Bag.empty(frozenset(obj["fv"]))
        case "bag":
            return Bag.of([rexpr_from_json(t) for t in obj["items"]])
    raise ResourceError(f"bad resource JSON: {obj!r}")


def sum_to_json(s: Sum):
    return {
        "fv": sorted(s.fv),
        "terms": [{"coeff": str(c), "term": rexpr_to_json(e)} for e, c in s.parts],
    }


def sum_from_json(obj) -> Sum:
    parts = [(rexpr_from_json(t["term"]), int(t["coeff"])) for t in obj["terms"]]
    return Sum.of(parts, frozenset(obj["fv"]))
