"""Non-idempotent multi-types with memory for the λI-calculus.

Judgments are Γ; Δ ⊢ M : σ.  Γ assigns multisets of types to variables;
the separate environment Δ maps each free variable of the subject to the
free variables of the term that will ultimately be substituted for it.
Empty multisets []_X and the type 𝔢_X carry a memory X, exactly like the
empty bags and empty sums of the resource calculus.

The same rules, read with resource subjects, type λI-resource terms; the
Taylor expansion translates derivations back and forth transparently, and
`typable` exploits that: a judgment holds for M iff some normal resource
approximant of M's evaluation tree admits it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .resource import Bag, RAbs, RApp, RVar, ResourceExpr, enum_size, rshow
from .taylor import rdepth, spine_expand, _match_nf
from .terms import (
    Abs,
    App,
    LambdaError,
    Term,
    Var,
    parse_term,
    require_lambda_i,
    show,
)
from .trees import OhanaTree, TBot, THead, TUnknown, compare, has_unknown, ohana_tree


class TypeError_(LambdaError):
    pass


# ---------------------------------------------------------------------------
# Types

@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Arrow:
    dom: "MType"
    cod: "TypeT"

    def __str__(self):
        return f"{self.dom} -o {self.cod}"


TypeT = Atom | Arrow


@dataclass(frozen=True)
class MEmpty:
    """The annotated empty multiset []_X."""
    memory: frozenset

    def __str__(self):
        return "[]{" + ",".join(sorted(self.memory)) + "}"


@dataclass(frozen=True)
class MMulti:
    items: tuple  # nonempty, canonically sorted

    def __post_init__(self):
        if not self.items:
            raise TypeError_("use MEmpty for the empty multiset")
        object.__setattr__(self, "items", tuple(sorted(self.items, key=type_key)))

    def __str__(self):
        return "[" + ",".join(str(t) for t in self.items) + "]"


MType = MEmpty | MMulti


@dataclass(frozen=True)
class ESum:
    """The type 𝔢_X of terms remembered only through their free variables."""
    memory: frozenset

    def __str__(self):
        return "e{" + ",".join(sorted(self.memory)) + "}"


OType = ESum | Atom | Arrow


def type_key(t) -> tuple:
    match t:
        case Atom(n):
            return ("at", n)
        case Arrow(d, c):
            return ("ar", type_key(d), type_key(c))
        case MEmpty(mem):
            return ("m0", tuple(sorted(mem)))
        case MMulti(items):
            return ("m+", tuple(type_key(i) for i in items))
        case ESum(mem):
            return ("es", tuple(sorted(mem)))
    raise TypeError(t)


def mmulti(items) -> MType:
    items = tuple(items)
    if not items:
        raise TypeError_("an empty multiset needs a memory; use MEmpty")
    return MMulti(items)


def arrows(domains, cod: TypeT) -> TypeT:
    for d in reversed(list(domains)):
        cod = Arrow(d, cod)
    return cod


def atoms_in(obj) -> set[str]:
    out: set[str] = set()

    def go(t):
        match t:
            case Atom(n):
                out.add(n)
            case Arrow(d, c):
                go(d)
                go(c)
            case MMulti(items):
                for i in items:
                    go(i)
            case _:
                pass

    if isinstance(obj, (Atom, Arrow, MEmpty, MMulti, ESum)):
        go(obj)
    return out


def subtypes(t) -> list:
    """All sub-type objects (types and multiset types), including t."""
    out = []

    def go(t):
        out.append(t)
        match t:
            case Arrow(d, c):
                go(d)
                go(c)
            case MMulti(items):
                for i in items:
                    go(i)
            case _:
                pass

    go(t)
    return out


# ---------------------------------------------------------------------------
# Environments

@dataclass(frozen=True)
class TypeEnv:
    """Γ: finite-support map from names to multisets of types."""
    entries: tuple = ()  # sorted tuple of (name, tuple-of-types)

    @staticmethod
    def of(mapping) -> "TypeEnv":
        entries = []
        for name, items in sorted(mapping.items()):
            items = tuple(sorted(items, key=type_key))
            if items:
                entries.append((name, items))
        return TypeEnv(tuple(entries))

    def get(self, name: str) -> tuple:
        for n, items in self.entries:
            if n == name:
                return items
        return ()

    def support(self) -> frozenset:
        return frozenset(n for n, _ in self.entries)

    def without(self, name: str) -> "TypeEnv":
        return TypeEnv(tuple((n, i) for n, i in self.entries if n != name))

    def add(self, name: str, items) -> "TypeEnv":
        merged = dict(self.entries)
        merged[name] = tuple(sorted(self.get(name) + tuple(items), key=type_key))
        return TypeEnv.of(merged)

    def __add__(self, other: "TypeEnv") -> "TypeEnv":
        merged: dict = {n: list(i) for n, i in self.entries}
        for n, items in other.entries:
            merged.setdefault(n, []).extend(items)
        return TypeEnv.of(merged)

    def key(self):
        return tuple((n, tuple(type_key(t) for t in items)) for n, items in self.entries)

    def __str__(self):
        return ", ".join(
            f"{n}:[{','.join(str(t) for t in items)}]" for n, items in self.entries
        )


@dataclass(frozen=True)
class VarEnv:
    """Δ: finite partial map from names to free-variable sets."""
    entries: tuple = ()  # sorted tuple of (name, frozenset)

    @staticmethod
    def of(mapping) -> "VarEnv":
        return VarEnv(tuple(sorted((n, frozenset(v)) for n, v in mapping.items())))

    @staticmethod
    def identity(names) -> "VarEnv":
        return VarEnv.of({n: {n} for n in names})

    def get(self, name: str):
        for n, v in self.entries:
            if n == name:
                return v
        return None

    def dom(self) -> frozenset:
        return frozenset(n for n, _ in self.entries)

    def image_union(self) -> frozenset:
        out: frozenset = frozenset()
        for _, v in self.entries:
            out |= v
        return out

    def coherent(self, other: "VarEnv") -> bool:
        for n, v in self.entries:
            w = other.get(n)
            if w is not None and w != v:
                return False
        return True

    def join(self, other: "VarEnv") -> "VarEnv":
        if not self.coherent(other):
            raise TypeError_("incoherent variable environments cannot be joined")
        merged = dict(other.entries)
        merged.update(dict(self.entries))
        return VarEnv.of(merged)

    def restrict(self, names) -> "VarEnv":
        names = frozenset(names)
        return VarEnv(tuple((n, v) for n, v in self.entries if n in names))

    def without(self, name: str) -> "VarEnv":
        return VarEnv(tuple((n, v) for n, v in self.entries if n != name))

    def add(self, name: str, value) -> "VarEnv":
        merged = dict(self.entries)
        merged[name] = frozenset(value)
        return VarEnv.of(merged)

    def subset_of(self, other: "VarEnv") -> bool:
        return all(other.get(n) == v for n, v in self.entries)

    def key(self):
        return tuple((n, tuple(sorted(v))) for n, v in self.entries)

    def __str__(self):
        return ", ".join(f"{n}:{{{','.join(sorted(v))}}}" for n, v in self.entries)


# ---------------------------------------------------------------------------
# Judgments and derivations

@dataclass(frozen=True)
class Judgment:
    gamma: TypeEnv
    delta: VarEnv
    subject: object          # Term | ResourceExpr
    rhs: object              # OType, or MType for bang judgments
    bang: bool = False

    def key(self):
        subject_key = self.subject.key()
        return (self.gamma.key(), self.delta.key(), subject_key, type_key(self.rhs), self.bang)

    def __str__(self):
        turnstile = "|-!" if self.bang else "|-"
        subj = show(self.subject) if isinstance(self.subject, Term) else rshow(self.subject)
        return f"{self.gamma}; {self.delta} {turnstile} {subj} : {self.rhs}"


@dataclass(frozen=True)
class Derivation:
    rule: str
    conclusion: Judgment
    premises: tuple = ()


@dataclass(frozen=True)
class Validation:
    ok: bool
    error: str = ""
    path: tuple = ()

    def __bool__(self):
        return self.ok


TERM_RULES = {"esum", "ax", "app", "lam0", "lamPlus", "bang0", "bangPlus"}
RESOURCE_RULES = {"ax_r", "app_r", "lam0_r", "lamPlus_r", "bang0_r", "bangPlus_r"}


def check_derivation(d: Derivation) -> Validation:
    """Validate a derivation over λI-term subjects, bottom-up."""
    return _check(d, (), TERM_RULES, _check_term_node)


def check_resource_derivation(d: Derivation) -> Validation:
    """Validate a derivation over λI-resource subjects."""
    return _check(d, (), RESOURCE_RULES, _check_resource_node)


def _check(d: Derivation, path, rules, node_checker) -> Validation:
    if d.rule not in rules:
        return Validation(False, f"unknown rule {d.rule!r}", path)
    for i, p in enumerate(d.premises):
        sub = _check(p, path + (i,), rules, node_checker)
        if not sub:
            return sub
    err = node_checker(d)
    if err:
        return Validation(False, err, path)
    j = d.conclusion
    if not j.bang and isinstance(j.rhs, (Atom, Arrow, ESum)):
        fv = j.subject.fv
        if j.delta.dom() != fv:
            return Validation(False, f"dom(Δ) = {sorted(j.delta.dom())} but fv = {sorted(fv)}", path)
        if not j.gamma.support() <= j.delta.dom():
            return Validation(False, "supp(Γ) exceeds dom(Δ)", path)
    return Validation(True)


def _subject_eq(a, b) -> bool:
    return a.key() == b.key()


def _check_term_node(d: Derivation) -> str:
    j = d.conclusion
    m = j.subject
    if not isinstance(m, Term):
        return "subject is not a λ-term"
    match d.rule:
        case "esum":
            if j.bang or not isinstance(j.rhs, ESum):
                return "esum must conclude a 𝔢 type"
            if d.premises:
                return "esum takes no premises"
            if j.gamma.entries:
                return "esum requires an empty Γ"
            if j.delta.dom() != m.fv:
                return "esum requires dom(Δ) = fv(M)"
            if j.rhs.memory != j.delta.image_union():
                return "esum annotation must be ∪image(Δ)"
            return ""
        case "ax":
            return _ax_check(j, Var)
        case "app":
            if not isinstance(m, App):
                return "app subject must be an application"
            return _app_check(j, d, m.fun, m.arg, bang_subject=m.arg)
        case "lam0" | "lamPlus":
            if not isinstance(m, Abs):
                return "λ-rule subject must be an abstraction"
            return _lam_check(j, d, m.binder, m.body, d.rule == "lam0")
        case "bang0":
            return _bang0_term_check(j, d)
        case "bangPlus":
            return _bang_plus_check(j, d, subject_items=None)
    return f"unhandled rule {d.rule}"


def _check_resource_node(d: Derivation) -> str:
    j = d.conclusion
    m = j.subject
    match d.rule:
        case "ax_r":
            return _ax_check(j, RVar)
        case "app_r":
            if not isinstance(m, RApp):
                return "app subject must be a resource application"
            return _app_check(j, d, m.fun, m.bag, bang_subject=m.bag)
        case "lam0_r" | "lamPlus_r":
            if not isinstance(m, RAbs):
                return "λ-rule subject must be a resource abstraction"
            return _lam_check(j, d, m.binder, m.body, d.rule == "lam0_r")
        case "bang0_r":
            if not isinstance(m, Bag) or not m.is_empty():
                return "bang0 subject must be an empty bag"
            if j.gamma.entries or not j.bang or not isinstance(j.rhs, MEmpty):
                return "bang0 concludes ;Δ ⊢! 1_X : []_Y"
            if m.memory != j.delta.dom():
                return "bang0 subject must be 1_{dom(Δ)}"
            if j.rhs.memory != j.delta.image_union():
                return "bang0 annotation must be ∪image(Δ)"
            return ""
        case "bangPlus_r":
            if not isinstance(m, Bag) or m.is_empty():
                return "bang+ subject must be a nonempty bag"
            return _bang_plus_check(j, d, subject_items=m.items)
    return f"unhandled rule {d.rule}"


def _ax_check(j: Judgment, var_cls) -> str:
    m = j.subject
    if not isinstance(m, var_cls):
        return "ax subject must be a variable"
    if j.bang or not isinstance(j.rhs, (Atom, Arrow)):
        return "ax concludes x : α"
    if j.gamma.entries != ((m.name, (j.rhs,)),):
        return "ax requires Γ = x:[α]"
    if j.delta.dom() != frozenset((m.name,)):
        return "ax requires dom(Δ) = {x}"
    return ""


def _app_check(j: Judgment, d: Derivation, fun, arg, bang_subject) -> str:
    if j.bang or not isinstance(j.rhs, (Atom, Arrow)):
        return "app concludes a type in 𝕋ypes"
    if len(d.premises) != 2:
        return "app takes two premises"
    p0, p1 = d.premises[0].conclusion, d.premises[1].conclusion
    if p0.bang or not isinstance(p0.rhs, Arrow):
        return "first premise must type the function with an arrow"
    if not p1.bang:
        return "second premise must be a bang judgment"
    if not _subject_eq(p0.subject, fun):
        return "first premise subject mismatch"
    if not _subject_eq(p1.subject, bang_subject):
        return "second premise subject mismatch"
    if type_key(p0.rhs.dom) != type_key(p1.rhs):
        return "argument multiset disagrees with the arrow domain"
    if type_key(p0.rhs.cod) != type_key(j.rhs):
        return "conclusion type disagrees with the arrow codomain"
    if not p0.delta.coherent(p1.delta):
        return "premise variable environments are incoherent"
    if (p0.gamma + p1.gamma).key() != j.gamma.key():
        return "Γ must be the sum of the premises"
    if p0.delta.join(p1.delta).key() != j.delta.key():
        return "Δ must be the join of the premises"
    return ""


def _lam_check(j: Judgment, d: Derivation, binder: str, body, zero: bool) -> str:
    if j.bang or not isinstance(j.rhs, Arrow):
        return "λ-rule concludes an arrow type"
    if len(d.premises) != 1:
        return "λ-rule takes one premise"
    p = d.premises[0].conclusion
    if p.bang:
        return "λ-rule premise is not a bang judgment"
    if not _subject_eq(p.subject, body):
        return "premise subject must be the body"
    x_items = p.gamma.get(binder)
    x_set = p.delta.get(binder)
    if x_set is None:
        return "premise Δ must carry the binder"
    if zero:
        if x_items:
            return "λ0 requires Γ(x) = []"
        if not isinstance(j.rhs.dom, MEmpty) or j.rhs.dom.memory != x_set:
            return "λ0 domain must be []_{Δ(x)}"
    else:
        if not x_items:
            return "λ+ requires Γ(x) nonempty"
        if not isinstance(j.rhs.dom, MMulti) or type_key(j.rhs.dom) != type_key(MMulti(x_items)):
            return "λ+ domain must be the multiset of x's types"
    if p.gamma.without(binder).key() != j.gamma.key():
        return "Γ must be the premise's Γ without the binder"
    if p.delta.without(binder).key() != j.delta.key():
        return "Δ must be the premise's Δ without the binder"
    if type_key(p.rhs) != type_key(j.rhs.cod):
        return "codomain disagrees with the premise type"
    return ""


def _bang0_term_check(j: Judgment, d: Derivation) -> str:
    if not j.bang or not isinstance(j.rhs, MEmpty):
        return "bang0 concludes ⊢! M : []_X"
    if d.premises:
        return "bang0 takes no premises"
    if j.gamma.entries:
        return "bang0 requires an empty Γ"
    if j.delta.dom() != j.subject.fv:
        return "bang0 requires dom(Δ) = fv(M)"
    if j.rhs.memory != j.delta.image_union():
        return "bang0 annotation must be ∪image(Δ)"
    return ""


def _bang_plus_check(j: Judgment, d: Derivation, subject_items) -> str:
    if not j.bang or not isinstance(j.rhs, MMulti):
        return "bang+ concludes a nonempty multiset"
    if not d.premises:
        return "bang+ needs at least one premise"
    types = []
    gammas = TypeEnv()
    for p in d.premises:
        c = p.conclusion
        if c.bang:
            return "bang+ premises are plain judgments"
        if c.delta.key() != d.premises[0].conclusion.delta.key():
            return "bang+ premises must share Δ"
        types.append(c.rhs)
        gammas = gammas + c.gamma
    if subject_items is None:
        for p in d.premises:
            if not _subject_eq(p.conclusion.subject, j.subject):
                return "bang+ premises must type the same term"
    else:
        want = sorted(t.key() for t in subject_items)
        got = sorted(p.conclusion.subject.key() for p in d.premises)
        if want != got:
            return "bang+ premises must type the bag's elements"
    if d.premises[0].conclusion.delta.key() != j.delta.key():
        return "Δ must match the premises"
    if gammas.key() != j.gamma.key():
        return "Γ must be the sum of the premises"
    if type_key(MMulti(tuple(types))) != type_key(j.rhs):
        return "multiset must collect the premise types"
    return ""


# ---------------------------------------------------------------------------
# Syntax-directed enumeration for resource subjects

class _Engine:
    """Enumerates (Γ, α, derivation) for resource expressions, Δ given.

    tails: candidate result types for spine heads (the only free choice
    the syntax does not determine).  xcands(name): candidate Δ-images
    for λ-introduced binders.
    """

    def __init__(self, tails, xcands):
        self.tails = list(tails)
        self.xcands = xcands
        self.memo: dict = {}

    def judgments(self, t: ResourceExpr, delta: VarEnv):
        if delta.dom() != t.fv:
            return []
        k = (t.key(), delta.key())
        hit = self.memo.get(k)
        if hit is not None:
            return hit
        out: dict = {}
        for g, ty, d in self._compute(t, delta):
            out[(g.key(), type_key(ty))] = (g, ty, d)
        res = list(out.values())
        self.memo[k] = res
        return res

    def _compute(self, t: ResourceExpr, delta: VarEnv):
        match t:
            case RVar(x):
                for tau in self.tails:
                    g = TypeEnv.of({x: (tau,)})
                    j = Judgment(g, delta, t, tau)
                    yield g, tau, Derivation("ax_r", j)
            case RAbs(x, body):
                for xset in self.xcands(x):
                    d2 = delta.add(x, xset)
                    for g, beta, dv in self.judgments(body, d2):
                        if isinstance(beta, ESum):
                            continue
                        items = g.get(x)
                        if items:
                            dom: MType = MMulti(items)
                            rule = "lamPlus_r"
                        else:
                            dom = MEmpty(xset)
                            rule = "lam0_r"
                        ty = Arrow(dom, beta)
                        g2 = g.without(x)
                        j = Judgment(g2, delta, t, ty)
                        yield g2, ty, Derivation(rule, j, (dv,))
            case RApp():
                # work on the whole spine: the head's arrow type is built
                # from the inferred bag types plus a tail, so variable heads
                # need no arrow guessing
                head = t
                bags: list[Bag] = []
                while isinstance(head, RApp):
                    bags.append(head.bag)
                    head = head.fun
                bags.reverse()
                bag_deltas = [delta.restrict(b.fv) for b in bags]
                bag_choices = [list(self.bang_judgments(b, dl)) for b, dl in zip(bags, bag_deltas)]
                head_delta = delta.restrict(head.fv)
                if isinstance(head, RVar):
                    x = head.name
                    for combo in itertools.product(*bag_choices):
                        doms = [mt for _, mt, _ in combo]
                        for tau in self.tails:
                            tau_h = arrows(doms, tau)
                            g = TypeEnv.of({x: (tau_h,)})
                            dv = Derivation(
                                "ax_r", Judgment(g, head_delta, head, tau_h)
                            )
                            cur_g, cur_ty, cur_d, cur_delta = g, tau_h, dv, head_delta
                            for (gb, mt, db), b in zip(combo, bags):
                                cur_g = cur_g + gb
                                cur_delta = cur_delta.join(delta.restrict(b.fv))
                                cur_ty = cur_ty.cod
                                cur_d = Derivation(
                                    "app_r",
                                    Judgment(cur_g, cur_delta, RApp(cur_d.conclusion.subject, b), cur_ty),
                                    (cur_d, db),
                                )
                            yield cur_g, cur_ty, cur_d
                else:

                    def fold(i, g0, ty0, dv0, d_acc):
                        if i == len(bags):
                            yield g0, ty0, dv0
                            return
                        if not isinstance(ty0, Arrow):
                            return
                        b = bags[i]
                        for gb, mt, db in bag_choices[i]:
                            if type_key(mt) != type_key(ty0.dom):
                                continue
                            g2 = g0 + gb
                            d2 = d_acc.join(delta.restrict(b.fv))
                            dv2 = Derivation(
                                "app_r",
                                Judgment(g2, d2, RApp(dv0.conclusion.subject, b), ty0.cod),
                                (dv0, db),
                            )
                            yield from fold(i + 1, g2, ty0.cod, dv2, d2)

                    for g0, ty0, dv0 in self.judgments(head, head_delta):
                        yield from fold(0, g0, ty0, dv0, head_delta)

    def bang_judgments(self, bag: Bag, delta: VarEnv):
        if delta.dom() != bag.fv:
            return
        if bag.is_empty():
            mt = MEmpty(delta.image_union())
            j = Judgment(TypeEnv(), delta, bag, mt, bang=True)
            yield TypeEnv(), mt, Derivation("bang0_r", j)
            return
        per_item = [self.judgments(item, delta) for item in bag.items]
        for combo in itertools.product(*per_item):
            g = TypeEnv()
            types = []
            for gi, ti, _ in combo:
                if isinstance(ti, ESum):
                    break
                g = g + gi
                types.append(ti)
            else:
                mt = MMulti(tuple(types))
                j = Judgment(g, delta, bag, mt, bang=True)
                yield g, mt, Derivation("bangPlus_r", j, tuple(d for _, _, d in combo))


def infer_resource(t: ResourceExpr, atom_budget: int = 1, images=None, tails=None):
    """All judgments (Γ, Δ, α) derivable for t, with Δ-images drawn from the
    supplied candidates (identity by default) and spine tails from
    `atom_budget` fresh atoms (or the supplied tails)."""
    if images is None:
        images = lambda v: [frozenset((v,))]
    elif isinstance(images, dict):
        mapping = images
        images = lambda v: mapping.get(v, [frozenset((v,))])
    tail_types = list(tails) if tails is not None else [Atom(f"a{i}") for i in range(atom_budget)]
    engine = _Engine(tail_types, images)
    out = []
    names = sorted(t.fv)
    for assignment in itertools.product(*(images(v) for v in names)):
        delta = VarEnv.of(dict(zip(names, assignment)))
        for g, ty, d in engine.judgments(t, delta):
            out.append((g, delta, ty, d))
    return out


def check_resource_judgment(t: ResourceExpr, gamma: TypeEnv, delta: VarEnv, rhs) -> Derivation | None:
    """Decide Γ; Δ ⊢ t : α by directed search; returns a derivation or None.

    Complete for this judgment: in a normal or arbitrary resource term the
    only free choices are spine tails (which must be subtypes of the
    judgment) and λ+ binder images (searched over subsets of the judgment's
    variable universe).
    """
    if isinstance(rhs, ESum):
        return None  # resource judgments never carry 𝔢
    tails = _tails_from_judgment(gamma, rhs)
    universe = _universe_from_judgment(gamma, delta, rhs, t)
    xc = _subset_candidates(universe)
    engine = _Engine(tails, xc)
    for g, ty, d in engine.judgments(t, delta):
        if g.key() == gamma.key() and type_key(ty) == type_key(rhs):
            return d
    return None


def _tails_from_judgment(gamma: TypeEnv, rhs) -> list:
    seen: dict = {}
    for t in subtypes(rhs):
        if isinstance(t, (Atom, Arrow)):
            seen[type_key(t)] = t
    for _, items in gamma.entries:
        for it in items:
            for t in subtypes(it):
                if isinstance(t, (Atom, Arrow)):
                    seen[type_key(t)] = t
    return list(seen.values())


def _universe_from_judgment(gamma, delta, rhs, t) -> frozenset:
    names: set = set()
    for _, v in delta.entries:
        names |= v
    for ty in subtypes(rhs):
        if isinstance(ty, (MEmpty, ESum)):
            names |= ty.memory
    for _, items in gamma.entries:
        for it in items:
            for ty in subtypes(it):
                if isinstance(ty, MEmpty):
                    names |= ty.memory
    names |= set(_expr_names(t))
    return frozenset(names)


def _expr_names(t: ResourceExpr):
    match t:
        case RVar(n):
            return {n}
        case RAbs(b, body):
            return {b} | _expr_names(body)
        case RApp(f, bag):
            return _expr_names(f) | _expr_names(bag)
        case Bag(items, mem):
            out = set(mem or ())
            for i in items:
                out |= _expr_names(i)
            return out
    raise TypeError(t)


def _subset_candidates(universe: frozenset):
    if len(universe) > 10:
        raise TypeError_("variable universe too large for subset search")
    subsets = []
    items = sorted(universe)
    for r in range(len(items) + 1):
        subsets.extend(frozenset(c) for c in itertools.combinations(items, r))

    def xc(name: str):
        return subsets

    return xc


# ---------------------------------------------------------------------------
# Typability of λI-terms

@dataclass(frozen=True)
class Typability:
    status: str  # "yes" | "no" | "unknown"
    derivation: Derivation | None = None      # term derivation for a reduct
    witness: ResourceExpr | None = None       # typed Taylor approximant
    reduct: Term | None = None
    detail: str = ""


def _judgment_bounds(gamma: TypeEnv, rhs) -> tuple[int, int, int]:
    """(max bag arity, max witness size, max witness depth) justified by the
    shape of the judgment: normal typed witnesses draw every type and every
    multiset from the judgment itself."""
    arity = 1
    symbols = 0
    depth = 1
    todo = list(subtypes(rhs))
    for _, items in gamma.entries:
        for it in items:
            todo.extend(subtypes(it))
    for t in todo:
        symbols += 1
        if isinstance(t, MMulti):
            arity = max(arity, len(t.items))
        if isinstance(t, Arrow):
            depth += 1
    return arity, 2 * symbols + 4, depth + 1


def typable(m: Term, gamma: TypeEnv, delta: VarEnv, sigma, steps: int = 40) -> Typability:
    """Decide Γ; Δ ⊢ M : σ through the Taylor correspondence.

    𝔢-typings are decided directly by the side condition of their rule.
    Other typings search normal approximants of the evaluation tree whose
    shape fits the judgment; No is returned only when that finite space is
    exhausted over a fully decided tree region.
    """
    require_lambda_i(m)
    if isinstance(sigma, ESum):
        ok = (
            not gamma.entries
            and delta.dom() == m.fv
            and delta.image_union() == sigma.memory
        )
        if ok:
            d = Derivation("esum", Judgment(TypeEnv(), delta, m, sigma))
            return Typability("yes", derivation=d, reduct=m)
        return Typability("no", detail="𝔢 rule side condition fails")
    if delta.dom() != m.fv:
        return Typability("no", detail="dom(Δ) must equal fv(M)")
    if not gamma.support() <= delta.dom():
        return Typability("no", detail="supp(Γ) must lie inside dom(Δ)")

    arity, max_size, max_depth = _judgment_bounds(gamma, sigma)
    tree = ohana_tree(m, max_depth, fuel=max(steps, 1000))
    # witnesses shaped by this judgment probe at most max_depth tree levels,
    # so Unknown nodes at the depth cutoff itself do not spoil exhaustion
    lvl = _min_unknown_level(tree)
    decided = lvl is None or lvl > max_depth
    expansion_term, _ = spine_expand(m, max_depth, steps)

    for t in _gen_matching(tree, arity, max_size):
        d = check_resource_judgment(t, gamma, delta, sigma)
        if d is not None:
            term_d = _term_derivation(d, expansion_term)
            return Typability("yes", derivation=term_d, witness=t, reduct=expansion_term)
    if decided:
        return Typability("no", detail="witness space exhausted over a decided tree")
    return Typability("unknown", detail="tree region undecided within budget")


def _min_unknown_level(t: OhanaTree, level: int = 1) -> int | None:
    match t:
        case TUnknown():
            return level
        case TBot():
            return None
        case THead(_, _, edges):
            found = None
            for _, c in edges:
                sub = _min_unknown_level(c, level + 1)
                if sub is not None and (found is None or sub < found):
                    found = sub
            return found
    raise TypeError(t)


def _gen_matching(tree: OhanaTree, max_bag: int, max_size: int):
    """Normal resource terms matching the decided regions of the tree."""

    def gen(node: OhanaTree, budget: int):
        if budget <= 0 or isinstance(node, (TBot, TUnknown)):
            return
        assert isinstance(node, THead)
        base = 1 + len(node.binders)

        def build(i: int, rem: int, acc: list):
            if i == len(node.edges):
                spine: ResourceExpr = RVar(node.head)
                for bag in acc:
                    spine = RApp(spine, bag)
                for b in reversed(node.binders):
                    spine = RAbs(b, spine)
                yield spine
                return
            label, child = node.edges[i]
            if rem >= 1:
                acc.append(Bag.empty(label))
                yield from build(i + 1, rem - 1, acc)
                acc.pop()
            kids = list(gen(child, rem))
            kids.sort(key=lambda t: (enum_size(t), t.key()))

            def grow(start: int, rem2: int, items: list):
                for jj in range(start, len(kids)):
                    tkid = kids[jj]
                    sz = enum_size(tkid)
                    if sz > rem2 or len(items) >= max_bag:
                        continue
                    items.append(tkid)
                    acc.append(Bag.of(tuple(items)))
                    yield from build(i + 1, rem2 - sz, acc)
                    acc.pop()
                    yield from grow(jj, rem2 - sz, items)
                    items.pop()

            yield from grow(0, rem, [])

        yield from build(0, budget - base, [])

    seen = set()
    for t in gen(tree, max_size):
        if t.key() not in seen:
            seen.add(t.key())
            yield t


def _term_derivation(d: Derivation, reduct: Term) -> Derivation:
    """Transport a resource derivation onto the matching reduct.

    The correspondence is transparent: every resource rule maps to the term
    rule of the same shape, with bag premises becoming bang premises on the
    argument subterm.
    """

    def walk(d: Derivation, m: Term) -> Derivation:
        j = d.conclusion
        match d.rule:
            case "ax_r":
                assert isinstance(m, Var)
                return Derivation("ax", Judgment(j.gamma, j.delta, m, j.rhs))
            case "lam0_r" | "lamPlus_r":
                assert isinstance(m, Abs)
                p = walk(d.premises[0], m.body)
                rule = "lam0" if d.rule == "lam0_r" else "lamPlus"
                return Derivation(rule, Judgment(j.gamma, j.delta, m, j.rhs), (p,))
            case "app_r":
                assert isinstance(m, App)
                p0 = walk(d.premises[0], m.fun)
                p1 = walk_bang(d.premises[1], m.arg)
                return Derivation("app", Judgment(j.gamma, j.delta, m, j.rhs), (p0, p1))
        raise TypeError_(f"cannot transport rule {d.rule}")

    def walk_bang(d: Derivation, arg: Term) -> Derivation:
        j = d.conclusion
        if d.rule == "bang0_r":
            return Derivation("bang0", Judgment(j.gamma, j.delta, arg, j.rhs, bang=True))
        assert d.rule == "bangPlus_r"
        premises = tuple(walk(p, arg) for p in d.premises)
        return Derivation(
            "bangPlus", Judgment(j.gamma, j.delta, arg, j.rhs, bang=True), premises
        )

    return walk(d, reduct)


# ---------------------------------------------------------------------------
# Bounded interpretation ⟦M⟧

@dataclass(frozen=True)
class InterpBounds:
    steps: int = 40
    size: int = 7
    atoms: int = 1
    universe: tuple | None = None  # names the Δ-images may draw from


def interp_enumerate(m: Term, bounds: InterpBounds = InterpBounds()):
    """A bounded fragment of ⟦M⟧ = {(Γ, Δ, σ) : Γ; Δ ⊢ M : σ}."""
    require_lambda_i(m)
    universe = frozenset(bounds.universe) if bounds.universe is not None else m.fv
    subsets = [frozenset(c) for r in range(len(universe) + 1)
               for c in itertools.combinations(sorted(universe), r)]
    out = set()
    names = sorted(m.fv)
    # 𝔢-rule instances
    for assignment in itertools.product(*(subsets for _ in names)):
        delta = VarEnv.of(dict(zip(names, assignment)))
        out.add(_judgment_key(TypeEnv(), delta, ESum(delta.image_union())))
    # α-typings via normal approximants
    tree = ohana_tree(m, bounds.size + 1, fuel=max(bounds.steps, 1000))
    images = {v: [frozenset((v,))] for v in m.fv}
    for t in _gen_matching(tree, bounds.size, bounds.size):
        for g, delta, ty, _ in infer_resource(t, atom_budget=bounds.atoms, images=images):
            out.add(_judgment_key(g, delta, ty))
    return out


def _judgment_key(gamma: TypeEnv, delta: VarEnv, sigma):
    """Canonical form modulo renaming of atoms: the lexicographically least
    serialisation over atom permutations (judgments here are small)."""
    names = sorted(atoms_in(sigma) | set().union(*(
        set().union(*(atoms_in(t) for t in items)) if items else set()
        for _, items in gamma.entries
    )) if gamma.entries else atoms_in(sigma))
    names = sorted(set(names))
    if len(names) > 6:
        raise TypeError_("too many atoms for canonical comparison")
    best = None
    for perm in itertools.permutations(range(len(names))):
        ren = {n: f"α{i}" for n, i in zip(names, perm)}
        key = (
            _rename_env_key(gamma, ren),
            delta.key(),
            _rename_type_key(sigma, ren),
        )
        if best is None or key < best:
            best = key
    return best


def _rename_type_key(t, ren):
    match t:
        case Atom(n):
            return ("at", ren.get(n, n))
        case Arrow(d, c):
            return ("ar", _rename_type_key(d, ren), _rename_type_key(c, ren))
        case MEmpty(mem):
            return ("m0", tuple(sorted(mem)))
        case MMulti(items):
            return ("m+", tuple(sorted(_rename_type_key(i, ren) for i in items)))
        case ESum(mem):
            return ("es", tuple(sorted(mem)))
    raise TypeError(t)


def _rename_env_key(gamma: TypeEnv, ren):
    return tuple(
        (n, tuple(sorted(_rename_type_key(t, ren) for t in items)))
        for n, items in gamma.entries
    )


# ---------------------------------------------------------------------------
# The separation procedure

def separating_judgment(m: Term, n: Term, depth: int, fuel: int = 10_000):
    """A judgment derivable for exactly one of M, N, built from the first
    difference of their Ohana trees and verified on both sides.

    Returns (Γ, Δ, σ, side) with side ∈ {"left", "right"}.
    """
    require_lambda_i(m)
    require_lambda_i(n)
    tm = ohana_tree(m, depth, fuel)
    tn = ohana_tree(n, depth, fuel)
    verdict = compare(tm, tn)
    if verdict == "equal":
        raise TypeError_("the trees agree to this depth; nothing separates them")
    if verdict == "unknown":
        raise TypeError_("the tree comparison is undecided at this depth")
    tm = _canon_tree(tm, m.fv | n.fv)
    tn = _canon_tree(tn, m.fv | n.fv)

    candidates = []
    built = _construct(tm, tn, _FreshAtoms())
    if built is not None:
        candidates.append(built)
    flipped = _construct(tn, tm, _FreshAtoms())
    if flipped is not None:
        gamma, delta, sigma = flipped
        candidates.append((gamma, delta, sigma, "flip"))

    for cand in candidates:
        if len(cand) == 3:
            gamma, delta, sigma = cand
            pos_side, pos, neg = "left", m, n
        else:
            gamma, delta, sigma, _ = cand
            pos_side, pos, neg = "right", n, m
        ok_pos = typable(pos, gamma, delta, sigma).status == "yes"
        ok_neg = typable(neg, gamma, delta, sigma).status == "no"
        if ok_pos and ok_neg:
            return gamma, delta, sigma, pos_side
    raise TypeError_("failed to verify a separating judgment at this depth")


class _FreshAtoms:
    def __init__(self):
        self.counter = 0

    def fresh(self) -> Atom:
        a = Atom(f"a{self.counter}")
        self.counter += 1
        return a


def _canon_tree(t: OhanaTree, avoid: frozenset, prefix: str | None = None) -> OhanaTree:
    """Rename binders canonically (v0, v1, … along each path) so that two
    trees with a shared spine use the same names there."""
    if prefix is None:
        prefix = "v"
        while any(name.startswith(prefix) and name[len(prefix):].isdigit() for name in avoid):
            prefix += "_"

    def go(node: OhanaTree, depth: int, ren: dict) -> OhanaTree:
        match node:
            case TBot(mem):
                return TBot(frozenset(ren.get(x, x) for x in mem))
            case TUnknown():
                return node
            case THead(binders, head, edges):
                ren2 = dict(ren)
                new_binders = []
                d = depth
                for b in binders:
                    nb = f"{prefix}{d}"
                    ren2[b] = nb
                    new_binders.append(nb)
                    d += 1
                new_edges = tuple(
                    (frozenset(ren2.get(x, x) for x in lbl), go(c, d, ren2))
                    for lbl, c in edges
                )
                return THead(tuple(new_binders), ren2.get(head, head), new_edges)
        raise TypeError(node)

    return go(t, 0, {})


def _construct(tm: OhanaTree, tn: OhanaTree, atoms: _FreshAtoms):
    """Judgment (Γ, Δ, σ) derivable for the tm side but not the tn side,
    or None when tm has no head to hang a judgment on."""
    if isinstance(tm, TUnknown) or isinstance(tn, TUnknown):
        return None
    if isinstance(tm, TBot):
        if isinstance(tn, TBot) and tm.memory != tn.memory:
            delta = VarEnv.identity(tm.memory)
            return TypeEnv(), delta, ESum(tm.memory)
        return None  # no α-judgment on a ⊥ side; caller tries the flip
    assert isinstance(tm, THead)
    shape_differs = (
        not isinstance(tn, THead)
        or len(tn.binders) != len(tm.binders)
        or tn.head != tm.head
        or len(tn.edges) != len(tm.edges)
        or any(l1 != l2 for (l1, _), (l2, _) in zip(tm.edges, tn.edges))
    )
    if shape_differs:
        return _head_judgment(tm, atoms, pierce=None)
    # same shape and labels: recurse into the first differing child
    for i, ((_, cm), (_, cn)) in enumerate(zip(tm.edges, tn.edges)):
        if compare(cm, cn) == "different":
            sub = _construct(cm, cn, atoms)
            if sub is None:
                return None
            g_i, _, alpha = sub
            if isinstance(alpha, ESum):
                return None  # label mismatch would have been caught above
            return _head_judgment(tm, atoms, pierce=(i, g_i, alpha))
    return None


def _head_judgment(tm: THead, atoms: _FreshAtoms, pierce):
    """The hnf-shaped judgment: y takes bags annotated with the edge labels;
    with `pierce`, position i instead carries the child's separating type."""
    a = atoms.fresh()
    gamma_extra = TypeEnv()
    domains = []
    for i, (label, _) in enumerate(tm.edges):
        if pierce is not None and i == pierce[0]:
            domains.append(MMulti((pierce[2],)))
        else:
            domains.append(MEmpty(label))
    tau_y = arrows(domains, a)
    if pierce is not None:
        gamma_extra = pierce[1]

    sigma_domains = []
    gamma = gamma_extra
    if tm.head in tm.binders:
        for b in tm.binders:
            if b == tm.head:
                sigma_domains.append(MMulti((tau_y,)))
            else:
                sigma_domains.append(MEmpty(frozenset((b,))))
    else:
        gamma = gamma + TypeEnv.of({tm.head: (tau_y,)})
        for b in tm.binders:
            sigma_domains.append(MEmpty(frozenset((b,))))
    sigma = arrows(sigma_domains, a)
    fv = _tree_fv_set(tm)
    delta = VarEnv.identity(fv)
    return gamma, delta, sigma


def _tree_fv_set(t: OhanaTree) -> frozenset:
    match t:
        case TBot(mem):
            return mem
        case THead(binders, head, edges):
            inner = frozenset((head,))
            for lbl, _ in edges:
                inner |= lbl
            return inner - frozenset(binders)
        case TUnknown():
            raise TypeError_("fv of an Unknown node is undetermined")
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Pretty parsing/printing and JSON for types, environments, judgments

def type_to_json(t):
    match t:
        case Atom(n):
            return n
        case Arrow(d, c):
            return {"arrow": {"dom": type_to_json(d), "cod": type_to_json(c)}}
        case MEmpty(mem):
            return {"empty": sorted(mem)}
        case MMulti(items):
            return [type_to_json(i) for i in items]
        case ESum(mem):
            return {"esum": sorted(mem)}
    raise TypeError(t)


def type_from_json(obj):
    if isinstance(obj, str):
        return Atom(obj)
    if isinstance(obj, list):
        return MMulti(tuple(type_from_json(i) for i in obj))
    if "arrow" in obj:
        return Arrow(type_from_json(obj["arrow"]["dom"]), type_from_json(obj["arrow"]["cod"]))
    if "empty" in obj:
        return MEmpty(frozenset(obj["empty"]))
    if "esum" in obj:
        return ESum(frozenset(obj["esum"]))
    raise TypeError_(f"bad type JSON: {obj!r}")


def judgment_to_json(j: Judgment):
    subj = show(j.subject) if isinstance(j.subject, Term) else rshow(j.subject)
    return {
        "gamma": {n: [type_to_json(t) for t in items] for n, items in j.gamma.entries},
        "delta": {n: sorted(v) for n, v in j.delta.entries},
        "subject": subj,
        "calculus": "term" if isinstance(j.subject, Term) else "resource",
        "bang": j.bang,
        "type": type_to_json(j.rhs),
    }


def judgment_from_json(obj) -> Judgment:
    gamma = TypeEnv.of({n: tuple(type_from_json(t) for t in items) for n, items in obj["gamma"].items()})
    delta = VarEnv.of({n: frozenset(v) for n, v in obj["delta"].items()})
    if obj.get("calculus", "term") == "term":
        subject = parse_term(obj["subject"])
    else:
        from .resource import parse_resource

        subject = parse_resource(obj["subject"])
    return Judgment(gamma, delta, subject, type_from_json(obj["type"]), bang=obj.get("bang", False))


def derivation_to_json(d: Derivation):
    return {
        "rule": d.rule,
        "conclusion": judgment_to_json(d.conclusion),
        "premises": [derivation_to_json(p) for p in d.premises],
    }


def derivation_from_json(obj) -> Derivation:
    return Derivation(
        obj["rule"],
        judgment_from_json(obj["conclusion"]),
        tuple(derivation_from_json(p) for p in obj["premises"]),
    )


# --- text format -------------------------------------------------------------

def type_show(t) -> str:
    match t:
        case Atom(n):
            return n
        case Arrow(d, c):
            return f"{type_show(d)} -o {type_show(c)}"
        case MEmpty(mem):
            return "[]{" + ",".join(sorted(mem)) + "}"
        case MMulti(items):
            return "[" + ",".join(type_show(i) for i in items) + "]"
        case ESum(mem):
            return "e{" + ",".join(sorted(mem)) + "}"
    raise TypeError(t)


def judgment_show(j: Judgment) -> str:
    subj = show(j.subject) if isinstance(j.subject, Term) else rshow(j.subject)
    turnstile = "|-!" if j.bang else "|-"
    return f"{j.gamma}; {j.delta} {turnstile} {subj} : {type_show(j.rhs)}"


class _TyTokens:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def skip(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def peek(self):
        self.skip()
        return self.text[self.i] if self.i < len(self.text) else None

    def error(self, msg):
        from .terms import ParseError

        raise ParseError(msg, self.i)

    def name(self):
        from .terms import NAME_RE

        self.skip()
        mt = NAME_RE.match(self.text, self.i)
        if not mt:
            self.error("expected a name")
        self.i = mt.end()
        return mt.group(0)

    def expect(self, s):
        self.skip()
        if not self.text.startswith(s, self.i):
            self.error(f"expected {s!r}")
        self.i += len(s)

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


def parse_type(text: str):
    toks = _TyTokens(text)
    t = _parse_otype(toks)
    toks.skip()
    if toks.i != len(text):
        toks.error("trailing input")
    return t


def _parse_otype(toks: _TyTokens):
    left = _parse_type_atom(toks)
    toks.skip()
    if toks.text.startswith("-o", toks.i):
        toks.i += 2
        cod = _parse_otype(toks)
        if not isinstance(left, (MEmpty, MMulti)):
            toks.error("arrow domain must be a multiset type")
        return Arrow(left, cod)
    return left


def _parse_type_atom(toks: _TyTokens):
    c = toks.peek()
    if c == "(":
        toks.i += 1
        t = _parse_otype(toks)
        toks.expect(")")
        return t
    if c == "[":
        toks.i += 1
        if toks.peek() == "]":
            toks.i += 1
            return MEmpty(toks.fvset())
        items = [_parse_otype(toks)]
        while toks.peek() == ",":
            toks.i += 1
            items.append(_parse_otype(toks))
        toks.expect("]")
        return MMulti(tuple(items))
    if c == "e" and toks.text.startswith("e{", toks.i):
        toks.i += 1
        return ESum(toks.fvset())
    return Atom(toks.name())


def parse_judgment(text: str, calculus: str = "term") -> Judgment:
    """"x:[a,b]; x:{y,z} |- M : [a] -o b" — Γ may be empty before ';'."""
    if "|-" not in text:
        raise TypeError_("a judgment needs a turnstile |-")
    left, right = text.split("|-", 1)
    bang = right.startswith("!")
    if bang:
        right = right[1:]
    subj_text, type_text = right.rsplit(":", 1)
    gamma_text, _, delta_text = left.partition(";")
    gamma = _parse_env(gamma_text.strip())
    delta = _parse_varenv(delta_text.strip())
    if calculus == "term":
        subject = parse_term(subj_text.strip())
    else:
        from .resource import parse_resource, parse_sum

        subject = parse_resource(subj_text.strip())
    return Judgment(gamma, delta, subject, parse_type(type_text.strip()), bang=bang)


def _parse_env(text: str) -> TypeEnv:
    if not text:
        return TypeEnv()
    mapping: dict = {}
    toks = _TyTokens(text)
    while True:
        name = toks.name()
        toks.expect(":")
        toks.expect("[")
        items = []
        if toks.peek() != "]":
            items.append(_parse_otype(toks))
            while toks.peek() == ",":
                toks.i += 1
                items.append(_parse_otype(toks))
        toks.expect("]")
        if items:
            mapping[name] = tuple(items)
        if toks.peek() != ",":
            break
        toks.i += 1
    return TypeEnv.of(mapping)


def _parse_varenv(text: str) -> VarEnv:
    if not text:
        return VarEnv()
    mapping: dict = {}
    toks = _TyTokens(text)
    while True:
        name = toks.name()
        toks.expect(":")
        mapping[name] = toks.fvset()
        if toks.peek() != ",":
            break
        toks.i += 1
    return VarEnv.of(mapping)
