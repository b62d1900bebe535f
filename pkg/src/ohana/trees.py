"""Ohana trees, Böhm trees and approximants with memory.

An Ohana tree is a Böhm tree whose edges carry the free variables of the
generating subterm and whose ⊥ leaves carry the free variables of the
looping subterm, so nothing pushed into infinity or hidden behind a
meaningless term is forgotten.

Trees here are always depth-truncated; fuel exhaustion shows up as an
explicit Unknown node, never as ⊥.  ⊥ is a semantic claim (no head normal
form), Unknown is a resource limit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .terms import (
    DEFAULT_FUEL,
    Abs,
    App,
    FuelExhausted,
    Hnf,
    LambdaError,
    LoopDetected,
    Position,
    Term,
    Var,
    abss,
    apps,
    combinator,
    head_reduce,
    hnf_shape,
    reduction_graph,
    require_lambda_i,
    sorted_names,
)


class TreeError(LambdaError):
    pass


# ---------------------------------------------------------------------------
# Approximants (finite trees over  ⊥_X | λx⃗.y A1…Ak)

@dataclass(frozen=True)
class Approximant:
    fv: frozenset = field(init=False, compare=False, repr=False, default=frozenset())

    def key(self):
        k = self.__dict__.get("_ckey")
        if k is None:
            k = self._key(())
            object.__setattr__(self, "_ckey", k)
        return k

    def __str__(self):
        return approx_show(self)


def _name_key(name, env):
    for i in range(len(env) - 1, -1, -1):
        if env[i] == name:
            return ("b", len(env) - 1 - i)
    return ("f", name)


def _set_key(names, env):
    return tuple(sorted(_name_key(n, env) for n in names))


@dataclass(frozen=True)
class Bot(Approximant):
    memory: frozenset

    def __post_init__(self):
        object.__setattr__(self, "fv", self.memory)

    def _key(self, env):
        return ("bot", _set_key(self.memory, env))


@dataclass(frozen=True)
class Head(Approximant):
    binders: tuple[str, ...]
    head: str
    children: tuple[Approximant, ...]

    def __post_init__(self):
        inner = frozenset((self.head,)).union(*(c.fv for c in self.children)) \
            if self.children else frozenset((self.head,))
        object.__setattr__(self, "fv", inner - frozenset(self.binders))

    def _key(self, env):
        env2 = env + self.binders
        return (
            "head",
            len(self.binders),
            _name_key(self.head, env2),
            tuple(c._key(env2) for c in self.children),
        )


def well_formed(a: Approximant) -> bool:
    """Each binder occurs in {head} ∪ ⋃ fv(child)."""
    match a:
        case Bot():
            return True
        case Head(binders, head, children):
            used = frozenset((head,)).union(*(c.fv for c in children)) \
                if children else frozenset((head,))
            return all(x in used for x in binders) and all(well_formed(c) for c in children)
    raise TypeError(a)


def approx_alpha_eq(a: Approximant, b: Approximant) -> bool:
    return a.key() == b.key()


def approx_size(a: Approximant) -> int:
    match a:
        case Bot():
            return 1
        case Head(_, _, children):
            return 1 + sum(approx_size(c) for c in children)
    raise TypeError(a)


def approx_depth(a: Approximant) -> int:
    match a:
        case Bot():
            return 1
        case Head(_, _, children):
            return 1 + max((approx_depth(c) for c in children), default=0)
    raise TypeError(a)


# --- the order  ⊑  ----------------------------------------------------------

def _fv_key(a: Approximant, env):
    return _set_key(a.fv, env)


def leq(a: Approximant, b: Approximant) -> bool:
    """⊥_X ⊑ B when fv(B) = X; head nodes compare componentwise with equal fv."""

    def go(a, b, env_a, env_b):
        if isinstance(a, Bot):
            return _set_key(a.memory, env_a) == _fv_key(b, env_b)
        if not isinstance(b, Head):
            return False
        if len(a.binders) != len(b.binders) or len(a.children) != len(b.children):
            return False
        ea = env_a + a.binders
        eb = env_b + b.binders
        if _name_key(a.head, ea) != _name_key(b.head, eb):
            return False
        for ca, cb in zip(a.children, b.children):
            if _fv_key(ca, ea) != _fv_key(cb, eb):
                return False
            if not go(ca, cb, ea, eb):
                return False
        return True

    return go(a, b, (), ())


def _approx_names(t: Approximant) -> frozenset:
    match t:
        case Bot(mem):
            return mem
        case Head(binders, head, children):
            out = frozenset(binders) | {head}
            for c in children:
                out |= _approx_names(c)
            return out
    raise TypeError(t)


def _approx_rename(t: Approximant, mapping: dict) -> Approximant:
    """Rename free names of an approximant, avoiding capture by inner binders."""
    if not mapping:
        return t
    match t:
        case Bot(mem):
            return Bot(frozenset(mapping.get(n, n) for n in mem))
        case Head(binders, head, children):
            inner = {k: v for k, v in mapping.items() if k not in binders}
            targets = set(inner.values())
            if any(b in targets for b in binders):
                avoid = targets | _approx_names(t) | set(inner)
                new_binders = []
                for b in binders:
                    if b in targets:
                        from .terms import fresh_name

                        nb = fresh_name(b, avoid)
                        avoid = avoid | {nb}
                        inner[b] = nb
                        new_binders.append(nb)
                    else:
                        new_binders.append(b)
                binders = tuple(new_binders)
            return Head(
                binders,
                inner.get(head, head),
                tuple(_approx_rename(c, inner) for c in children),
            )
    raise TypeError(t)


def join(a: Approximant, b: Approximant) -> Approximant | None:
    """Least upper bound of compatible approximants (None otherwise).

    Built with a's binder names; subtrees taken from b are renamed so their
    bound references point at a's binders.
    """

    def go(a, b, env_a, env_b, b_to_a: dict):
        if isinstance(a, Bot):
            if _set_key(a.memory, env_a) != _fv_key(b, env_b):
                return None
            return _approx_rename(b, b_to_a)
        if isinstance(b, Bot):
            return a if _set_key(b.memory, env_b) == _fv_key(a, env_a) else None
        if len(a.binders) != len(b.binders) or len(a.children) != len(b.children):
            return None
        ea = env_a + a.binders
        eb = env_b + b.binders
        if _name_key(a.head, ea) != _name_key(b.head, eb):
            return None
        mapping = {k: v for k, v in b_to_a.items() if k not in b.binders}
        mapping.update({y: x for x, y in zip(a.binders, b.binders) if x != y})
        kids = []
        for ca, cb in zip(a.children, b.children):
            if _fv_key(ca, ea) != _fv_key(cb, eb):
                return None
            j = go(ca, cb, ea, eb, mapping)
            if j is None:
                return None
            kids.append(j)
        return Head(a.binders, a.head, tuple(kids))

    return go(a, b, (), (), {})


# --- positions ---------------------------------------------------------------

def positions(a: Approximant) -> set[Position]:
    out = {()}
    if isinstance(a, Head):
        for i, c in enumerate(a.children, start=1):
            out |= {(i,) + p for p in positions(c)}
    return out


def at(a: Approximant, p: Position):
    """Node label at p: a Bot, or a (binders, head) pair."""
    if not p:
        if isinstance(a, Bot):
            return a
        return (a.binders, a.head)
    if not isinstance(a, Head) or not (1 <= p[0] <= len(a.children)):
        raise TreeError(f"invalid position {p}")
    return at(a.children[p[0] - 1], p[1:])


def subapprox_at(a: Approximant, p: Position) -> Approximant:
    if not p:
        return a
    if not isinstance(a, Head) or not (1 <= p[0] <= len(a.children)):
        raise TreeError(f"invalid position {p}")
    return subapprox_at(a.children[p[0] - 1], p[1:])


def prune_at(a: Approximant, p: Position) -> Approximant:
    """Replace the subtree at p by ⊥ labelled with its free variables."""
    if not p:
        return Bot(a.fv)
    assert isinstance(a, Head)
    i = p[0] - 1
    kids = list(a.children)
    kids[i] = prune_at(kids[i], p[1:])
    return Head(a.binders, a.head, tuple(kids))


# ---------------------------------------------------------------------------
# Ohana trees (depth-truncated, possibly with Unknown nodes)

@dataclass(frozen=True)
class OhanaTree:
    def key(self):
        k = self.__dict__.get("_ckey")
        if k is None:
            k = self._key(())
            object.__setattr__(self, "_ckey", k)
        return k

    def __str__(self):
        return tree_show(self)


@dataclass(frozen=True)
class TBot(OhanaTree):
    memory: frozenset

    def _key(self, env):
        return ("bot", _set_key(self.memory, env))


@dataclass(frozen=True)
class THead(OhanaTree):
    binders: tuple[str, ...]
    head: str
    edges: tuple[tuple[frozenset, OhanaTree], ...]  # (label X_i, child)

    def _key(self, env):
        env2 = env + self.binders
        return (
            "head",
            len(self.binders),
            _name_key(self.head, env2),
            tuple((_set_key(lbl, env2), c._key(env2)) for lbl, c in self.edges),
        )


@dataclass(frozen=True)
class TUnknown(OhanaTree):
    def _key(self, env):
        return ("unknown",)


def tree_alpha_eq(t1: OhanaTree, t2: OhanaTree) -> bool:
    """Structural equality of the truncated trees (Unknown == Unknown)."""
    return t1.key() == t2.key()


def tree_fv(t: OhanaTree) -> frozenset:
    match t:
        case TBot(mem):
            return mem
        case THead(binders, head, edges):
            inner = frozenset((head,)).union(*(lbl for lbl, _ in edges)) \
                if edges else frozenset((head,))
            return inner - frozenset(binders)
        case TUnknown():
            raise TreeError("free variables of an Unknown node are undetermined")
    raise TypeError(t)


def compare(t1: OhanaTree, t2: OhanaTree) -> str:
    """Three-valued semantic comparison: 'equal' | 'different' | 'unknown'.

    A definite structural mismatch decides 'different' even if other regions
    are Unknown; 'unknown' only when no mismatch was found but some
    comparison touched an Unknown node.
    """
    touched_unknown = False

    def go(a, b, env_a, env_b):
        nonlocal touched_unknown
        if isinstance(a, TUnknown) or isinstance(b, TUnknown):
            touched_unknown = True
            return None
        if isinstance(a, TBot) and isinstance(b, TBot):
            return _set_key(a.memory, env_a) == _set_key(b.memory, env_b)
        if isinstance(a, TBot) or isinstance(b, TBot):
            return False
        if len(a.binders) != len(b.binders) or len(a.edges) != len(b.edges):
            return False
        ea = env_a + a.binders
        eb = env_b + b.binders
        if _name_key(a.head, ea) != _name_key(b.head, eb):
            return False
        verdict = True
        for (la, ca), (lb, cb) in zip(a.edges, b.edges):
            if _set_key(la, ea) != _set_key(lb, eb):
                return False
            sub = go(ca, cb, ea, eb)
            if sub is False:
                return False
            if sub is None:
                verdict = None
        return verdict

    out = go(t1, t2, (), ())
    if out is False:
        return "different"
    if out is None or touched_unknown:
        return "unknown"
    return "equal"


def tree_depth(t: OhanaTree) -> int:
    match t:
        case TBot() | TUnknown():
            return 1
        case THead(_, _, edges):
            return 1 + max((tree_depth(c) for _, c in edges), default=0)
    raise TypeError(t)


def has_unknown(t: OhanaTree) -> bool:
    match t:
        case TUnknown():
            return True
        case TBot():
            return False
        case THead(_, _, edges):
            return any(has_unknown(c) for _, c in edges)
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Computing trees

def ohana_tree(m: Term, depth: int, fuel: int = DEFAULT_FUEL) -> OhanaTree:
    """Depth-truncated Ohana tree of a λI-term.

    Head normal form found: a head node with children at depth-1 and edges
    labelled with the free variables of the arguments.  Loop detected: ⊥
    with the term's free variables (at any depth).  Fuel exhausted: Unknown.
    """
    require_lambda_i(m)
    return _tree(m, depth, fuel, labelled=True)


def bohm_tree(m: Term, depth: int, fuel: int = DEFAULT_FUEL) -> OhanaTree:
    """Böhm tree: same algorithm with empty labels and unannotated ⊥."""
    return _tree(m, depth, fuel, labelled=False)


def _tree(m: Term, depth: int, fuel: int, labelled: bool) -> OhanaTree:
    out = head_reduce(m, fuel)
    match out:
        case LoopDetected():
            return TBot(m.fv if labelled else frozenset())
        case FuelExhausted():
            return TUnknown()
        case Hnf(binders, head, args):
            if depth <= 0:
                return TUnknown()
            edges = tuple(
                (a.fv if labelled else frozenset(), _tree(a, depth - 1, fuel, labelled))
                for a in args
            )
            return THead(binders, head, edges)
    raise TypeError(out)


def direct_approximant(m: Term) -> Approximant:
    """The ω-map: copy the outer hnf shape, ⊥_fv elsewhere."""
    require_lambda_i(m)
    return _dirapp(m)


def _dirapp(m: Term) -> Approximant:
    shape = hnf_shape(m)
    if shape is None:
        return Bot(m.fv)
    binders, head, args = shape
    return Head(binders, head, tuple(_dirapp(a) for a in args))


def approximants_up_to(m: Term, steps: int, fuel: int = 100_000):
    """Downward closure of {ω(N) : M →β≤steps N}; a finite, monotone-in-steps
    under-approximation of the approximant set of M."""
    require_lambda_i(m)
    g = reduction_graph(m, steps, max_nodes=fuel)
    seeds = {}
    for t in g.nodes.values():
        a = _dirapp(t)
        seeds[a.key()] = a
    return downward_closure(seeds.values()), g.closed


def downward_closure(approximants):
    out: dict = {}
    work = list(approximants)
    while work:
        a = work.pop()
        k = a.key()
        if k in out:
            continue
        out[k] = a
        for p in positions(a):
            sub = subapprox_at(a, p)
            if isinstance(sub, Bot):
                continue
            work.append(prune_at(a, p))
    return set(out.values()) if False else _ApproxSet(out)


class _ApproxSet:
    """Set of approximants with α-invariant membership."""

    def __init__(self, by_key: dict):
        self._by_key = dict(by_key)

    def __contains__(self, a: Approximant) -> bool:
        return a.key() in self._by_key

    def __iter__(self):
        return iter(self._by_key.values())

    def __len__(self):
        return len(self._by_key)

    def keys(self):
        return set(self._by_key)

    def __eq__(self, other):
        if isinstance(other, _ApproxSet):
            return set(self._by_key) == set(other._by_key)
        if isinstance(other, (set, frozenset)):
            return set(self._by_key) == {a.key() for a in other}
        return NotImplemented

    def __repr__(self):
        return "{" + ", ".join(sorted(str(a) for a in self)) + "}"


def approx_set(items) -> _ApproxSet:
    return _ApproxSet({a.key(): a for a in items})


# ---------------------------------------------------------------------------
# The bijection ι / ι⁻ with finite trees

def iota(a: Approximant) -> tuple[Term, OhanaTree]:
    """The λI-term M_A (⊥_{x1..xn} ↦ Ω x1…xn) and its finite Ohana tree."""
    if not well_formed(a):
        raise TreeError(f"ill-formed approximant {a}")
    m = _iota_term(a)
    t = ohana_tree(m, approx_depth(a) + 1)
    if has_unknown(t):  # pragma: no cover - ample depth above
        raise TreeError("iota produced a truncated tree; raise the depth")
    return m, t


def _iota_term(a: Approximant) -> Term:
    match a:
        case Bot(mem):
            return apps(combinator("Omega"), *(Var(x) for x in sorted_names(mem)))
        case Head(binders, head, children):
            return abss(binders, apps(Var(head), *(_iota_term(c) for c in children)))
    raise TypeError(a)


def iota_inv(t: OhanaTree) -> Approximant:
    """Label-erasing inverse of ι on finite trees without Unknown nodes."""
    match t:
        case TBot(mem):
            return Bot(mem)
        case THead(binders, head, edges):
            return Head(binders, head, tuple(iota_inv(c) for _, c in edges))
        case TUnknown():
            raise TreeError("cannot read an approximant off an Unknown node")
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Rebuilding a tree from a set of approximants (the (v,e) construction)

def tree_from_approximants(approximants, depth: int, complete: bool = False) -> OhanaTree:
    """The tree whose vertices/edges are read off a compatible approximant set.

    At positions where every approximant shows ⊥ the result is ⊥ only when
    the set is flagged complete; finite evidence cannot certify divergence,
    so the default is Unknown.
    """
    items = list(approximants)
    if not items:
        raise TreeError("empty approximant set")
    fv0 = items[0].fv
    for a in items:
        if a.fv != fv0:
            raise TreeError("approximants must share a common free-variable set")
    for a, b in itertools.combinations(items, 2):
        if join(a, b) is None:
            raise TreeError(f"set is not directed: {a} and {b} are incompatible")

    def build(nodes: list[Approximant], d: int) -> OhanaTree:
        heads = [a for a in nodes if isinstance(a, Head)]
        if not heads:
            mem = nodes[0].memory
            return TBot(mem) if complete else TUnknown()
        if d <= 0:
            return TUnknown()
        # all head nodes agree on shape by compatibility; take the first
        h0 = heads[0]
        edges = []
        for i in range(len(h0.children)):
            child_nodes = [h.children[i] for h in heads]
            label = child_nodes[0].fv
            edges.append((label, build(child_nodes, d - 1)))
        return THead(h0.binders, h0.head, tuple(edges))

    return build(items, depth)


# ---------------------------------------------------------------------------
# Text format, DOT, JSON

def _fvs(mem) -> str:
    return "{" + ",".join(sorted(mem)) + "}"


def approx_show(a: Approximant) -> str:
    match a:
        case Bot(mem):
            return "⊥" + _fvs(mem)
        case Head(binders, head, children):
            prefix = ("λ" + " ".join(binders) + ".") if binders else ""
            bits = [prefix + head]
            for c in children:
                s = approx_show(c)
                if isinstance(c, Head) and (c.binders or c.children):
                    s = "(" + s + ")"
                bits.append(s)
            return " ".join(bits)
    raise TypeError(a)


def tree_show(t: OhanaTree) -> str:
    match t:
        case TBot(mem):
            return "⊥" + _fvs(mem)
        case TUnknown():
            return "?"
        case THead(binders, head, edges):
            prefix = ("λ" + " ".join(binders) + ".") if binders else ""
            out = prefix + head
            for lbl, c in edges:
                s = tree_show(c)
                if isinstance(c, THead) and (c.binders or c.edges):
                    s = "(" + s + ")"
                out += " ·" + _fvs(lbl) + " " + s
            return out
    raise TypeError(t)


class _TTokens:
    def __init__(self, text):
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

    def fvset(self):
        self.expect("{")
        names = set()
        if self.peek() != "}":
            names.add(self.name())
            while self.peek() == ",":
                self.i += 1
                names.add(self.name())
        self.expect("}")
        return frozenset(names)


def parse_tree(text: str) -> OhanaTree:
    toks = _TTokens(text)
    t = _parse_tree(toks)
    toks.skip_ws()
    if toks.i != len(text):
        toks.error("trailing input")
    return t


def _parse_tree(toks: _TTokens) -> OhanaTree:
    c = toks.peek()
    if c == "?":
        toks.i += 1
        return TUnknown()
    if c == "⊥":
        toks.i += 1
        return TBot(toks.fvset())
    if c == "_":  # ASCII alias _|_{...}
        if toks.text[toks.i : toks.i + 3] == "_|_":
            toks.i += 3
            return TBot(toks.fvset())
        toks.error("expected _|_")
    binders: tuple[str, ...] = ()
    if c in ("λ", "\\"):
        toks.i += 1
        names = [toks.name()]
        while toks.peek() not in (".", None):
            names.append(toks.name())
        toks.expect(".")
        binders = tuple(names)
    head = toks.name()
    edges = []
    while toks.peek() == "·" or (toks.peek() == "." and toks.text[toks.i : toks.i + 1] == "."):
        toks.i += 1
        label = toks.fvset()
        edges.append((label, _parse_tree_atom(toks)))
    return THead(binders, head, tuple(edges))


def _parse_tree_atom(toks: _TTokens) -> OhanaTree:
    c = toks.peek()
    if c == "(":
        toks.i += 1
        t = _parse_tree(toks)
        toks.expect(")")
        return t
    if c == "?":
        toks.i += 1
        return TUnknown()
    if c == "⊥":
        toks.i += 1
        return TBot(toks.fvset())
    if c == "_" and toks.text[toks.i : toks.i + 3] == "_|_":
        toks.i += 3
        return TBot(toks.fvset())
    # a bare head with no edges
    return THead((), toks.name(), ())


def tree_to_json(t: OhanaTree):
    match t:
        case TBot(mem):
            return {"kind": "bot", "fv": sorted(mem)}
        case TUnknown():
            return {"kind": "unknown"}
        case THead(binders, head, edges):
            return {
                "kind": "head",
                "binders": list(binders),
                "head": head,
                "edges": [{"label": sorted(lbl), "child": tree_to_json(c)} for lbl, c in edges],
                "fv": sorted(tree_fv(t)),
            }
    raise TypeError(t)


def tree_from_json(obj) -> OhanaTree:
    match obj.get("kind"):
        case "bot":
            return TBot(frozenset(obj["fv"]))
        case "unknown":
            return TUnknown()
        case "head":
            return THead(
                tuple(obj["binders"]),
                obj["head"],
                tuple((frozenset(e["label"]), tree_from_json(e["child"])) for e in obj["edges"]),
            )
    raise TreeError(f"bad tree JSON: {obj!r}")


def tree_to_dot(t: OhanaTree, name: str = "tree") -> str:
    lines = [f"digraph {name} {{", '  node [shape=box, fontname="monospace"];']
    counter = itertools.count()

    def node(t) -> int:
        nid = next(counter)
        match t:
            case TBot(mem):
                lines.append(f'  n{nid} [label="⊥{_fvs(mem)}"];')
            case TUnknown():
                lines.append(f'  n{nid} [label="?"];')
            case THead(binders, head, edges):
                prefix = ("λ" + " ".join(binders) + ".") if binders else ""
                lines.append(f'  n{nid} [label="{prefix}{head}"];')
                for lbl, c in edges:
                    cid = node(c)
                    lines.append(f'  n{nid} -> n{cid} [label="{_fvs(lbl)}"];')
        return nid

    node(t)
    lines.append("}")
    return "\n".join(lines)
