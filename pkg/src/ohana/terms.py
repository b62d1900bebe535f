"""Named λ-terms with a λI discipline: syntax, substitution, reduction.

Terms are immutable. Every node caches its free-variable set, and
α-equivalence goes through a de Bruijn style canonical key, so terms can
be used as dictionary keys up to renaming of bound variables.

Positions address subterms with sequences over {0, 1, 2}:
0 = under a binder, 1 = function side of an application, 2 = argument side.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

Position = tuple[int, ...]

NAME_RE = re.compile(r"[a-zA-Z][a-zA-Z0-9_']*")


class LambdaError(Exception):
    """Base error for the workbench."""


class ParseError(LambdaError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class NotLambdaI(LambdaError):
    """Raised when an operation requires a λI-term and the input is not one."""


def sorted_names(xs) -> tuple[str, ...]:
    return tuple(sorted(xs))


# ---------------------------------------------------------------------------
# Syntax

_MISSING = object()

# keys are interned to small ints so equality and dict lookups are O(1)
_KEY_INTERN: dict = {}


def intern_key(t) -> int:
    i = _KEY_INTERN.get(t)
    if i is None:
        i = len(_KEY_INTERN)
        _KEY_INTERN[t] = i
    return i


@dataclass(frozen=True)
class Term:
    fv: frozenset = field(init=False, compare=False, repr=False, default=frozenset())

    def key(self) -> int:
        """Canonical α-invariant encoding, interned (cached)."""
        k = self.__dict__.get("_ckey")
        if k is None:
            k = self._key({}, 0)
            object.__setattr__(self, "_ckey", k)
        return k

    def _fvs(self) -> tuple[str, ...]:
        t = self.__dict__.get("_fvs_sorted")
        if t is None:
            t = tuple(sorted(self.fv))
            object.__setattr__(self, "_fvs_sorted", t)
        return t

    def _key(self, lookup: dict, depth: int) -> int:
        """Key under a scope; memoized per node on the de Bruijn fingerprint
        of its free variables, so shared subterms are keyed once."""
        cache = self.__dict__.get("_kcache")
        if cache is None:
            cache = {}
            object.__setattr__(self, "_kcache", cache)
        fp = tuple(
            depth - lookup[n] - 1 if n in lookup else -1 for n in self._fvs()
        )
        hit = cache.get(fp)
        if hit is None:
            hit = self._compute_key(lookup, depth)
            cache[fp] = hit
        return hit

    def _compute_key(self, lookup: dict, depth: int) -> int:
        raise NotImplementedError

    def __str__(self) -> str:
        return show(self)


@dataclass(frozen=True)
class Var(Term):
    name: str

    def __post_init__(self):
        object.__setattr__(self, "fv", frozenset((self.name,)))

    def _compute_key(self, lookup, depth):
        d = lookup.get(self.name)
        if d is None:
            return intern_key(("f", self.name))
        return intern_key(("b", depth - d - 1))


@dataclass(frozen=True)
class Abs(Term):
    binder: str
    body: Term

    def __post_init__(self):
        object.__setattr__(self, "fv", self.body.fv - {self.binder})

    def _compute_key(self, lookup, depth):
        old = lookup.get(self.binder, _MISSING)
        lookup[self.binder] = depth
        k = intern_key(("l", self.body._key(lookup, depth + 1)))
        if old is _MISSING:
            del lookup[self.binder]
        else:
            lookup[self.binder] = old
        return k


@dataclass(frozen=True)
class App(Term):
    fun: Term
    arg: Term

    def __post_init__(self):
        object.__setattr__(self, "fv", self.fun.fv | self.arg.fv)

    def _compute_key(self, lookup, depth):
        return intern_key(
            ("a", self.fun._key(lookup, depth), self.arg._key(lookup, depth))
        )


def abss(binders, body: Term) -> Term:
    """λx1 … xn.body"""
    for x in reversed(list(binders)):
        body = Abs(x, body)
    return body


def apps(fun: Term, *args: Term) -> Term:
    for a in args:
        fun = App(fun, a)
    return fun


def alpha_eq(m: Term, n: Term) -> bool:
    return m.key() == n.key()


def size(m: Term) -> int:
    match m:
        case Var():
            return 1
        case Abs(_, b):
            return 1 + size(b)
        case App(f, a):
            return 1 + size(f) + size(a)
    raise TypeError(m)


# ---------------------------------------------------------------------------
# λI membership

def lambda_i_violations(m: Term) -> list[str]:
    """Binders that fail to bind a free occurrence, outermost first."""
    bad: list[str] = []

    def go(t: Term):
        match t:
            case Var():
                pass
            case Abs(x, b):
                if x not in b.fv:
                    bad.append(x)
                go(b)
            case App(f, a):
                go(f)
                go(a)

    go(m)
    return bad


def is_lambda_i(m: Term) -> bool:
    return not lambda_i_violations(m)


def require_lambda_i(m: Term):
    bad = lambda_i_violations(m)
    if bad:
        raise NotLambdaI(f"not a λI-term ({bad[0]} unused)")


# ---------------------------------------------------------------------------
# Substitution

def fresh_name(base: str, avoid) -> str:
    cand = base + "'"
    while cand in avoid:
        cand += "'"
    return cand


def rename_binder(a: Abs, avoid) -> Abs:
    y = fresh_name(a.binder, avoid | a.body.fv)
    return Abs(y, subst(a.body, a.binder, Var(y)))


def subst(m: Term, x: str, n: Term) -> Term:
    """Capture-free M[N/x]; binders in M are renamed away from fv(N)."""
    if x not in m.fv:
        return m
    match m:
        case Var():
            return n
        case App(f, a):
            return App(subst(f, x, n), subst(a, x, n))
        case Abs(y, body):
            if y in n.fv:
                m = rename_binder(m, n.fv | {x})
                y, body = m.binder, m.body
            return Abs(y, subst(body, x, n))
    raise TypeError(m)


# ---------------------------------------------------------------------------
# Positions and β-reduction

def subterm_at(m: Term, p: Position) -> Term:
    for step in p:
        match m, step:
            case Abs(_, b), 0:
                m = b
            case App(f, _), 1:
                m = f
            case App(_, a), 2:
                m = a
            case _:
                raise LambdaError(f"invalid position {p}")
    return m


def is_redex(m: Term) -> bool:
    return isinstance(m, App) and isinstance(m.fun, Abs)


def beta_redexes(m: Term) -> list[Position]:
    """All redex positions, in preorder."""
    out: list[Position] = []

    def go(t: Term, p: Position):
        if is_redex(t):
            out.append(p)
        match t:
            case Abs(_, b):
                go(b, p + (0,))
            case App(f, a):
                go(f, p + (1,))
                go(a, p + (2,))

    go(m, ())
    return out


def beta_step(m: Term, p: Position) -> Term:
    """Contract the redex at p.  λI-ness and fv are preserved for λI inputs."""

    def go(t: Term, rest: Position) -> Term:
        if not rest:
            if not is_redex(t):
                raise LambdaError(f"no redex at position {p}")
            return subst(t.fun.body, t.fun.binder, t.arg)
        step, rest = rest[0], rest[1:]
        match t, step:
            case Abs(x, b), 0:
                return Abs(x, go(b, rest))
            case App(f, a), 1:
                return App(go(f, rest), a)
            case App(f, a), 2:
                return App(f, go(a, rest))
        raise LambdaError(f"invalid position {p}")

    return go(m, p)


def one_step_reducts(m: Term, _memo: dict | None = None) -> list[tuple[Position, Term]]:
    """All one-step reducts with their redex positions.

    When a memo dict is supplied, contracta are cached per redex object:
    reduction graphs share subterm structure heavily, so the same redex
    object is contracted once.  (Callers must keep the terms alive while
    using the memo; the graph explorer does.)
    """
    out = []

    def contract(t: Term) -> Term:
        if _memo is None:
            return subst(t.fun.body, t.fun.binder, t.arg)
        k = id(t)
        hit = _memo.get(k)
        if hit is None:
            hit = (subst(t.fun.body, t.fun.binder, t.arg), t)
            _memo[k] = hit
        return hit[0]

    def go(t: Term, p: Position, rebuild):
        if is_redex(t):
            out.append((p, rebuild(contract(t))))
        match t:
            case Abs(x, b):
                go(b, p + (0,), lambda r, x=x, rb=rebuild: rb(Abs(x, r)))
            case App(f, a):
                go(f, p + (1,), lambda r, a=a, rb=rebuild: rb(App(r, a)))
                go(a, p + (2,), lambda r, f=f, rb=rebuild: rb(App(f, r)))

    go(m, (), lambda r: r)
    return out


# ---------------------------------------------------------------------------
# Head reduction

@dataclass(frozen=True)
class Hnf:
    """Head normal form λ binders . head args."""
    binders: tuple[str, ...]
    head: str
    args: tuple[Term, ...]
    steps: int

    def term(self) -> Term:
        return abss(self.binders, apps(Var(self.head), *self.args))


@dataclass(frozen=True)
class LoopDetected:
    cycle_length: int
    steps: int


@dataclass(frozen=True)
class FuelExhausted:
    steps: int


HeadOutcome = Hnf | LoopDetected | FuelExhausted

DEFAULT_FUEL = 10_000


def hnf_shape(m: Term) -> tuple[tuple[str, ...], str, tuple[Term, ...]] | None:
    """Decompose M = λ x⃗ . y M1 … Mk, or None when M has a head redex."""
    binders = []
    while isinstance(m, Abs):
        binders.append(m.binder)
        m = m.body
    args = []
    while isinstance(m, App):
        args.append(m.arg)
        m = m.fun
    if isinstance(m, Var):
        return tuple(binders), m.name, tuple(reversed(args))
    return None


def head_redex_position(m: Term) -> Position | None:
    p: list[int] = []
    while isinstance(m, Abs):
        p.append(0)
        m = m.body
    spine = 0
    while isinstance(m, App) and not isinstance(m.fun, Abs):
        p.append(1)
        m = m.fun
        spine += 1
    if isinstance(m, App):
        return tuple(p)
    return None


def head_step(m: Term) -> Term | None:
    p = head_redex_position(m)
    if p is None:
        return None
    return beta_step(m, p)


def head_reduce(m: Term, fuel: int = DEFAULT_FUEL) -> HeadOutcome:
    """Iterate head steps up to fuel, with a seen-set loop detector.

    Loop detection compares α-canonical keys along the head trajectory,
    so Ω and λy.Ωy are reported as loops rather than burning all fuel.
    """
    seen: dict = {m.key(): 0}
    cur = m
    for i in range(fuel):
        shape = hnf_shape(cur)
        if shape is not None:
            binders, head, args = shape
            return Hnf(binders, head, args, steps=i)
        cur = head_step(cur)
        k = cur.key()
        if k in seen:
            return LoopDetected(cycle_length=i + 1 - seen[k], steps=i + 1)
        seen[k] = i + 1
    if hnf_shape(cur) is not None:
        binders, head, args = hnf_shape(cur)
        return Hnf(binders, head, args, steps=fuel)
    return FuelExhausted(steps=fuel)


def head_trace(m: Term, fuel: int = DEFAULT_FUEL) -> tuple[list[Term], HeadOutcome]:
    """Head-reduction trajectory (for the CLI's reduce command)."""
    trace = [m]
    seen = {m.key(): 0}
    cur = m
    for i in range(fuel):
        if hnf_shape(cur) is not None:
            binders, head, args = hnf_shape(cur)
            return trace, Hnf(binders, head, args, steps=i)
        cur = head_step(cur)
        trace.append(cur)
        k = cur.key()
        if k in seen:
            return trace, LoopDetected(cycle_length=i + 1 - seen[k], steps=i + 1)
        seen[k] = i + 1
    if hnf_shape(cur) is not None:
        binders, head, args = hnf_shape(cur)
        return trace, Hnf(binders, head, args, steps=fuel)
    return trace, FuelExhausted(steps=fuel)


def leftmost_trace(m: Term, fuel: int = DEFAULT_FUEL) -> tuple[list[Term], HeadOutcome]:
    """Leftmost-outermost reduction, same outcome vocabulary as head_trace."""
    trace = [m]
    seen = {m.key(): 0}
    cur = m
    for i in range(fuel):
        redexes = beta_redexes(cur)
        if not redexes:
            shape = hnf_shape(cur)
            assert shape is not None
            binders, head, args = shape
            return trace, Hnf(binders, head, args, steps=i)
        cur = beta_step(cur, redexes[0])
        trace.append(cur)
        k = cur.key()
        if k in seen:
            return trace, LoopDetected(cycle_length=i + 1 - seen[k], steps=i + 1)
        seen[k] = i + 1
    return trace, FuelExhausted(steps=fuel)


# ---------------------------------------------------------------------------
# Reduction graphs (shared by trees / taylor / multitype searches)

@dataclass
class ReductionGraph:
    """BFS exploration of the β-reduction graph from a root term.

    nodes maps canonical keys to terms as first discovered; parent edges
    record the discovery tree so reduction paths can be replayed exactly.
    closed is True when every reduct of every node was already visited,
    i.e. the whole (finite) reduction graph has been seen.
    """
    root: Term
    nodes: dict
    parent: dict            # key -> (parent key, redex position)
    depth: dict             # key -> BFS layer
    closed: bool

    def terms(self) -> list[Term]:
        return list(self.nodes.values())

    def path_to(self, key) -> list[tuple[Term, Position]]:
        """(term, position) steps from the root to the given node."""
        steps = []
        while key in self.parent:
            pk, pos = self.parent[key]
            steps.append((self.nodes[pk], pos))
            key = pk
        steps.reverse()
        return steps


def reduction_graph(m: Term, max_steps: int, max_nodes: int = 100_000) -> ReductionGraph:
    root_key = m.key()
    nodes = {root_key: m}
    parent: dict = {}
    depth = {root_key: 0}
    frontier = [m]
    closed = True
    layer = 0
    contractum_memo: dict = {}
    while frontier and layer < max_steps:
        nxt = []
        for t in frontier:
            tk = t.key()
            for pos, r in one_step_reducts(t, contractum_memo):
                rk = r.key()
                if rk in nodes:
                    continue
                if len(nodes) >= max_nodes:
                    closed = False
                    continue
                nodes[rk] = r
                parent[rk] = (tk, pos)
                depth[rk] = layer + 1
                nxt.append(r)
        frontier = nxt
        layer += 1
    if frontier:
        # unexpanded frontier: check whether it only leads back into the graph
        for t in frontier:
            for _, r in one_step_reducts(t, contractum_memo):
                if r.key() not in nodes:
                    closed = False
                    break
            if not closed:
                break
    return ReductionGraph(m, nodes, parent, depth, closed)


# ---------------------------------------------------------------------------
# Parsing and printing

LAMBDA_CHARS = ("\\", "λ")


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def skip_ws(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self) -> str | None:
        self.skip_ws()
        return self.text[self.i] if self.i < len(self.text) else None

    def error(self, msg: str):
        raise ParseError(msg, self.i)

    def name(self) -> str:
        self.skip_ws()
        m = NAME_RE.match(self.text, self.i)
        if not m:
            self.error("expected a name")
        self.i = m.end()
        return m.group(0)

    def expect(self, ch: str):
        self.skip_ws()
        if self.i >= len(self.text) or self.text[self.i] != ch:
            self.error(f"expected {ch!r}")
        self.i += 1


def parse_term(text: str) -> Term:
    """Parse the term grammar; "@Name" resolves combinator names."""
    toks = _Tokens(text)
    t = _parse_term(toks)
    toks.skip_ws()
    if toks.i != len(text):
        toks.error("trailing input")
    return t


def _parse_term(toks: _Tokens) -> Term:
    c = toks.peek()
    if c in LAMBDA_CHARS:
        toks.i += 1
        binders = [toks.name()]
        while toks.peek() not in (".", None):
            binders.append(toks.name())
        toks.expect(".")
        return abss(binders, _parse_term(toks))
    return _parse_app(toks)


def _parse_app(toks: _Tokens) -> Term:
    t = _parse_atom(toks)
    if t is None:
        toks.error("expected a term")
    while True:
        a = _parse_atom(toks)
        if a is None:
            return t
        t = App(t, a)


def _parse_atom(toks: _Tokens) -> Term | None:
    c = toks.peek()
    if c is None:
        return None
    if c == "(":
        toks.i += 1
        t = _parse_term(toks)
        toks.expect(")")
        return t
    if c in LAMBDA_CHARS:
        return _parse_term(toks)
    if c == "@":
        toks.i += 1
        return combinator(toks.name())
    if NAME_RE.match(c):
        return Var(toks.name())
    return None


def show(m: Term, unicode_lambda: bool = False) -> str:
    lam = "λ" if unicode_lambda else "\\"

    def atom(t: Term) -> str:
        if isinstance(t, Var):
            return t.name
        return "(" + go(t) + ")"

    def go(t: Term) -> str:
        match t:
            case Var(x):
                return x
            case Abs():
                binders = []
                while isinstance(t, Abs):
                    binders.append(t.binder)
                    t = t.body
                return lam + " ".join(binders) + "." + go(t)
            case App(f, a):
                fs = atom(f) if isinstance(f, Abs) else go(f)
                return fs + " " + atom(a)
        raise TypeError(t)

    return go(m)


# ---------------------------------------------------------------------------
# Combinator library

_COMBINATOR_SOURCES = {
    "I": "\\x.x",
    "K": "\\x y.x",
    "F": "\\x y.y",
    "B": "\\f g x.f(g x)",
    "D": "\\x.x x",
    "W": "\\x y.y x y",
    "Omega": "@D @D",
    "Y": "\\f.(\\x.f(x x))(\\x.f(x x))",
    "V": "\\v l f.f(v v l f)",
    "ThetaL": "@V @V l",
    "Bible": "\\e.@B @Y @B e l",
    "R": "\\y l x.x(y(x l))",
    "YRl": "@Y @R l",
    "pair": "\\x y z.z x y",
    # Stream builders satisfying Ex = [Omega, [Omega x, Ex]] and
    # Ox = [Omega x, [Omega, Ox]] (pairing [M,N] = λz.z M N), taken as
    # Curry-style fixed points of the corresponding stream step.
    "Ex": "@Y (\\e.\\w.w @Omega (\\z.z (@Omega x) e))",
    "Ox": "@Y (\\e.\\w.w (@Omega x) (\\z.z @Omega e))",
}

_combinator_cache: dict[str, Term] = {}


def combinator(name: str) -> Term:
    if name not in _COMBINATOR_SOURCES:
        raise LambdaError(f"unknown combinator @{name}")
    if name not in _combinator_cache:
        _combinator_cache[name] = parse_term(_COMBINATOR_SOURCES[name])
    return _combinator_cache[name]


def combinator_names() -> list[str]:
    return list(_COMBINATOR_SOURCES)


# ---------------------------------------------------------------------------
# JSON codec

def term_to_json(m: Term):
    match m:
        case Var(x):
            return {"kind": "var", "name": x}
        case Abs(x, b):
            return {"kind": "abs", "binder": x, "body": term_to_json(b)}
        case App(f, a):
            return {"kind": "app", "fun": term_to_json(f), "arg": term_to_json(a)}
    raise TypeError(m)


def term_from_json(obj) -> Term:
    match obj.get("kind"):
        case "var":
            return Var(obj["name"])
        case "abs":
            return Abs(obj["binder"], term_from_json(obj["body"]))
        case "app":
            return App(term_from_json(obj["fun"]), term_from_json(obj["arg"]))
    raise LambdaError(f"bad term JSON: {obj!r}")
