"""Qualitative Taylor expansion of λI-terms, approximants and Ohana trees.

𝒯(M) is the set of resource approximants of M; bags in argument position
are either multisets of approximants of the argument or the empty bag
remembering the argument's free variables.  On approximants, a ⊥ in term
position has no approximants and a ⊥ in bag position only the empty bag.

The commutation harness checks, candidate by candidate, that membership in
the normal form of 𝒯(M) (decided by normalising an actual witness, or by a
decided region of the Ohana tree) agrees with membership in the Taylor
expansion of the tree (decided by reduct search).  The two routes share no
verdicts: a normalisation bug or a tree bug shows up as a mismatch.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .terms import (
    Abs,
    App,
    LambdaError,
    Position,
    Term,
    Var,
    beta_step,
    hnf_shape,
    parse_term,
    reduction_graph,
    require_lambda_i,
    show,
)
from .trees import (
    Approximant,
    Bot,
    Head,
    OhanaTree,
    TBot,
    THead,
    TUnknown,
    iota_inv,
    ohana_tree,
)
from .resource import (
    Bag,
    RAbs,
    RApp,
    RVar,
    ResourceExpr,
    enum_size,
    is_normal,
    normalize,
    rshow,
    Sum,
)


class TaylorError(LambdaError):
    pass


# ---------------------------------------------------------------------------
# Membership t ⋐ 𝒯(M)

def _trans(name: str, env: dict) -> str:
    return env.get(name, name)


def _trans_set(mem: frozenset, env: dict) -> frozenset:
    return frozenset(env.get(n, n) for n in mem)


def taylor_member(t: ResourceExpr, m: Term) -> bool:
    """Structural decision of t ⋐ 𝒯(M), α-aware."""
    require_lambda_i(m)
    return _member(t, m, {}, set())


def _member(t: ResourceExpr, m: Term, env: dict, shadowed: set) -> bool:
    """env maps resource-side binders to term-side binders; shadowed is the
    set of term-side binder names (a free resource name may not hit one)."""
    match t, m:
        case RVar(n), Var(x):
            if n in env:
                return env[n] == x
            return n == x and x not in shadowed
        case RAbs(rb, body), Abs(b, p):
            env2 = dict(env)
            env2[rb] = b
            return _member(body, p, env2, shadowed | {b})
        case RApp(f, bag), App(p, q):
            if not _member(f, p, env, shadowed):
                return False
            if bag.is_empty():
                return _trans_set(bag.memory, env) == q.fv and _memory_ok(bag.memory, env, shadowed, q.fv)
            return all(_member(item, q, env, shadowed) for item in bag.items)
    return False


def _memory_ok(mem: frozenset, env: dict, shadowed: set, target: frozenset) -> bool:
    # a free resource-side name may not accidentally collide with a
    # term-side binder it does not correspond to
    for n in mem:
        if n not in env and n in shadowed:
            return False
    return True


# ---------------------------------------------------------------------------
# Enumeration of 𝒯(M) up to a size bound

def taylor_enumerate(m: Term, size: int) -> set[ResourceExpr]:
    """Exactly { t ⋐ 𝒯(M) : enum_size(t) ≤ size }."""
    require_lambda_i(m)
    return set(_enum_term(m, size, {}))


def _enum_term(m: Term, bound: int, memo: dict) -> list[ResourceExpr]:
    if bound <= 0:
        return []
    k = (m, bound)
    hit = memo.get(k)
    if hit is not None:
        return hit
    out: list[ResourceExpr] = []
    match m:
        case Var(x):
            out.append(RVar(x))
        case Abs(x, p):
            out.extend(RAbs(x, s) for s in _enum_term(p, bound - 1, memo))
        case App(p, q):
            for s in _enum_term(p, bound - 2, memo):
                rem = bound - 1 - enum_size(s)
                for bag in _enum_bags(q, rem, memo):
                    out.append(RApp(s, bag))
    memo[k] = out
    return out


def _enum_bags(q: Term, bound: int, memo: dict) -> list[Bag]:
    """𝒯*(Q) members with enum_size ≤ bound."""
    out: list[Bag] = []
    if bound >= 1:
        out.append(Bag.empty(q.fv))
    cands = sorted(_enum_term(q, bound, memo), key=lambda t: (enum_size(t), t.key()))

    def grow(start: int, budget: int, acc: list):
        for i in range(start, len(cands)):
            sz = enum_size(cands[i])
            if sz > budget:
                continue
            acc.append(cands[i])
            out.append(Bag.of(tuple(acc)))
            grow(i, budget - sz, acc)
            acc.pop()

    grow(0, bound, [])
    return out


# ---------------------------------------------------------------------------
# Taylor expansion of approximants and finite trees

def approx_taylor_member(t: ResourceExpr, a: Approximant) -> bool:
    return _amember(t, a, {}, set())


def _amember(t: ResourceExpr, a: Approximant, env: dict, shadowed: set) -> bool:
    if isinstance(a, Bot):
        return False  # 𝒯(⊥_X) is empty in term position
    assert isinstance(a, Head)
    rbinders, rhead, rbags = _spine(t)
    if len(rbinders) != len(a.binders) or len(rbags) != len(a.children):
        return False
    env2 = dict(env)
    shadow2 = set(shadowed)
    for rb, b in zip(rbinders, a.binders):
        env2[rb] = b
        shadow2.add(b)
    if _trans(rhead, env2) != a.head or (rhead not in env2 and a.head in shadow2):
        return False
    for bag, child in zip(rbags, a.children):
        if bag.is_empty():
            if _trans_set(bag.memory, env2) != child.fv or not _memory_ok(bag.memory, env2, shadow2, child.fv):
                return False
        else:
            if isinstance(child, Bot):
                return False
            if not all(_amember(item, child, env2, shadow2) for item in bag.items):
                return False
    return True


def _spine(t: ResourceExpr):
    """Decompose λx⃗.h b̄1…b̄k; head h must be a variable, else None head."""
    binders = []
    while isinstance(t, RAbs):
        binders.append(t.binder)
        t = t.body
    bags = []
    while isinstance(t, RApp):
        bags.append(t.bag)
        t = t.fun
    bags.reverse()
    if not isinstance(t, RVar):
        return tuple(binders), None, tuple(bags)
    return tuple(binders), t.name, tuple(bags)


def approx_taylor_enumerate(a: Approximant, size: int) -> set[ResourceExpr]:
    return set(_enum_approx(a, size, {}))


def _enum_approx(a: Approximant, bound: int, memo: dict) -> list[ResourceExpr]:
    if bound <= 0 or isinstance(a, Bot):
        return []
    k = (a, bound)
    hit = memo.get(k)
    if hit is not None:
        return hit
    out = []
    assert isinstance(a, Head)
    base_cost = 1 + len(a.binders)  # head node + abstractions

    def build_bags(i: int, budget: int, acc: list):
        if i == len(a.children):
            spine: ResourceExpr = RVar(a.head)
            for bag in acc:
                spine = RApp(spine, bag)
            for b in reversed(a.binders):
                spine = RAbs(b, spine)
            out.append(spine)
            return
        child = a.children[i]
        if budget >= 1:
            acc.append(Bag.empty(child.fv))
            build_bags(i + 1, budget - 1, acc)
            acc.pop()
        if not isinstance(child, Bot):
            cands = sorted(
                _enum_approx(child, budget, memo), key=lambda t: (enum_size(t), t.key())
            )

            def grow(start: int, rem: int, items: list):
                for j in range(start, len(cands)):
                    sz = enum_size(cands[j])
                    if sz > rem:
                        continue
                    items.append(cands[j])
                    acc.append(Bag.of(tuple(items)))
                    build_bags(i + 1, rem - sz, acc)
                    acc.pop()
                    grow(j, rem - sz, items)
                    items.pop()

            grow(0, budget, [])

    # budget left after the spine skeleton; bags pay their own way inside
    build_bags(0, bound - base_cost, [])
    out = [t for t in out if enum_size(t) <= bound]
    memo[k] = out
    return out


@dataclass(frozen=True)
class TaylorSet:
    """Handle for 𝒯(source): fv, membership predicate, bounded enumerator."""

    fv: frozenset
    source: object  # Term | Approximant

    @staticmethod
    def of_term(m: Term) -> "TaylorSet":
        require_lambda_i(m)
        return TaylorSet(m.fv, m)

    @staticmethod
    def of_approximant(a: Approximant) -> "TaylorSet":
        return TaylorSet(a.fv, a)

    @staticmethod
    def of_tree(t: OhanaTree) -> "TaylorSet":
        return TaylorSet.of_approximant(iota_inv(t))

    def member(self, t: ResourceExpr) -> bool:
        if isinstance(self.source, Term):
            return taylor_member(t, self.source)
        return approx_taylor_member(t, self.source)

    def enumerate(self, size: int) -> set[ResourceExpr]:
        if isinstance(self.source, Term):
            return taylor_enumerate(self.source, size)
        return approx_taylor_enumerate(self.source, size)

    def compare(self, other: "TaylorSet", size: int) -> str:
        """⊑ comparison of bounded renderings; fv mismatch is incomparable."""
        if self.fv != other.fv:
            return "incomparable"
        a = {t.key() for t in self.enumerate(size)}
        b = {t.key() for t in other.enumerate(size)}
        if a == b:
            return "equal"
        if a <= b:
            return "less"
        if b <= a:
            return "greater"
        return "incomparable"


def taylor_of_tree(a) -> TaylorSet:
    """𝒯 of an approximant or of a finite, fully decided Ohana tree."""
    if isinstance(a, OhanaTree):
        return TaylorSet.of_tree(a)
    return TaylorSet.of_approximant(a)


def resource_of(a: Approximant) -> ResourceExpr:
    """The canonical one-element Taylor witness of an approximant."""
    if isinstance(a, Bot):
        raise TaylorError("⊥ has an empty Taylor expansion in term position")
    assert isinstance(a, Head)
    spine: ResourceExpr = RVar(a.head)
    for child in a.children:
        if isinstance(child, Bot):
            spine = RApp(spine, Bag.empty(child.memory))
        else:
            spine = RApp(spine, Bag.of((resource_of(child),)))
    for b in reversed(a.binders):
        spine = RAbs(b, spine)
    return spine


# ---------------------------------------------------------------------------
# Membership in 𝒯 of the (possibly infinite) Ohana tree

def rdepth(t: ResourceExpr) -> int:
    """Tree depth a candidate probes: bag items descend one level."""
    match t:
        case RVar():
            return 1
        case RAbs(_, body):
            return rdepth(body)
        case RApp(f, bag):
            d = rdepth(f)
            for item in bag.items:
                d = max(d, 1 + rdepth(item))
            return d
        case Bag():
            return 1
    raise TypeError(t)


def tree_member(t: ResourceExpr, tree: OhanaTree) -> str:
    """'yes' | 'no' | 'unknown' membership of t in 𝒯 of the tree."""
    return _tmember(t, tree, {}, set())


def _tmember(t: ResourceExpr, tree: OhanaTree, env: dict, shadowed: set) -> str:
    if isinstance(tree, TUnknown):
        return "unknown"
    if isinstance(tree, TBot):
        return "no"
    assert isinstance(tree, THead)
    rbinders, rhead, rbags = _spine(t)
    if rhead is None:
        return "no"
    if len(rbinders) != len(tree.binders) or len(rbags) != len(tree.edges):
        return "no"
    env2 = dict(env)
    shadow2 = set(shadowed)
    for rb, b in zip(rbinders, tree.binders):
        env2[rb] = b
        shadow2.add(b)
    if _trans(rhead, env2) != tree.head or (rhead not in env2 and tree.head in shadow2):
        return "no"
    verdict = "yes"
    for bag, (label, child) in zip(rbags, tree.edges):
        if bag.is_empty():
            if _trans_set(bag.memory, env2) != label or not _memory_ok(bag.memory, env2, shadow2, label):
                return "no"
            continue
        for item in bag.items:
            sub = _tmember(item, child, env2, shadow2)
            if sub == "no":
                return "no"
            if sub == "unknown":
                verdict = "unknown"
    return verdict


def spine_expand(m: Term, depth: int, fuel: int) -> tuple[Term, list[tuple[Term, Position]]]:
    """Reduce M towards its depth-d spine form: head-reduce, then recurse
    into the arguments of the hnf.  Returns the reduct together with the
    β-step path that reached it, for witness pull-back.

    Subterms whose head reduction loops or runs out of fuel are left in
    place; their direct approximant is ⊥, which is what matchers expect.
    """
    from .terms import head_redex_position, subterm_at

    steps: list[tuple[Term, Position]] = []
    cur = m

    def head_reduce_at(prefix: Position) -> bool:
        """Head-reduce the subterm at prefix in place; False when undecided."""
        nonlocal cur
        seen = {subterm_at(cur, prefix).key(): 0}
        for i in range(fuel):
            sub = subterm_at(cur, prefix)
            local = head_redex_position(sub)
            if local is None:
                return True
            steps.append((cur, prefix + local))
            cur = beta_step(cur, prefix + local)
            k = subterm_at(cur, prefix).key()
            if k in seen:
                # a loop: undo nothing, the subterm stays meaningless
                return False
            seen[k] = i + 1
        return False

    def expand(prefix: Position, d: int):
        if d <= 0:
            return
        if not head_reduce_at(prefix):
            return
        sub = subterm_at(cur, prefix)
        shape = hnf_shape(sub)
        assert shape is not None
        binders, _, args = shape
        k = len(args)
        for i in range(k):
            pos = prefix + (0,) * len(binders) + (1,) * (k - 1 - i) + (2,)
            expand(pos, d - 1)

    expand((), depth)
    return cur, steps


def tmt_member(t: ResourceExpr, m: Term, steps: int, depth: int | None = None) -> bool:
    """t ⋐ 𝒯 of the Ohana tree of M: search the approximants readable off
    reducts of M, with `steps` bounding head reduction per spine position.

    Implemented over the spine-expanded reduct (matching its direct
    approximant's prefixes); by monotonicity of 𝒯 this searches the same
    downward closure as enumerating approximants.  Sound; complete in the
    limit of steps.
    """
    require_lambda_i(m)
    if t.fv != m.fv:
        return False
    n, _ = spine_expand(m, depth if depth is not None else rdepth(t) + 1, steps)
    return _match_nf(t, n, {}, set())


def _match_nf(t: ResourceExpr, m: Term, env: dict, shadowed: set) -> bool:
    """t ⋐ 𝒯(A) for some A ⊑ ω(M) — the syntactic-hnf match."""
    shape = hnf_shape(m)
    if shape is None:
        return False
    binders, head, args = shape
    rbinders, rhead, rbags = _spine(t)
    if rhead is None or len(rbinders) != len(binders) or len(rbags) != len(args):
        return False
    env2 = dict(env)
    shadow2 = set(shadowed)
    for rb, b in zip(rbinders, binders):
        env2[rb] = b
        shadow2.add(b)
    if _trans(rhead, env2) != head or (rhead not in env2 and head in shadow2):
        return False
    for bag, arg in zip(rbags, args):
        if bag.is_empty():
            if _trans_set(bag.memory, env2) != arg.fv or not _memory_ok(bag.memory, env2, shadow2, arg.fv):
                return False
        else:
            if not all(_match_nf(item, arg, env2, shadow2) for item in bag.items):
                return False
    return True


# ---------------------------------------------------------------------------
# Witness construction: pulling a member of 𝒯(N) back along M ↠β N

def _unsubst(
    p: Term, x: str, q: Term, u: ResourceExpr, env: dict, grabbed: list, active: bool = True
) -> ResourceExpr:
    """Decompose u ⋐ 𝒯(P[Q/x]) as a 𝒯(P)-member plus grabbed 𝒯(Q)-members.

    The result is rebuilt with P's names; grabbed members are rebuilt with
    Q's names.  env maps u's binder names to term-side names.  `active`
    goes False under a binder that shadows x.
    """
    match p:
        case Var(y):
            if active and y == x:
                grabbed.append(_rebuild(q, u, env))
                return RVar(x)
            if not (isinstance(u, RVar) and _trans(u.name, env) == y):
                raise TaylorError(f"unsubst mismatch at variable {y}")
            return RVar(y)
        case Abs(b, body):
            if not isinstance(u, RAbs):
                raise TaylorError("unsubst mismatch at abstraction")
            env2 = dict(env)
            env2[u.binder] = b
            return RAbs(b, _unsubst(body, x, q, u.body, env2, grabbed, active and b != x))
        case App(f, a):
            if not isinstance(u, RApp):
                raise TaylorError("unsubst mismatch at application")
            fun = _unsubst(f, x, q, u.fun, env, grabbed, active)
            if u.bag.is_empty():
                expected = ((a.fv - {x}) | q.fv) if active and x in a.fv else a.fv
                if _trans_set(u.bag.memory, env) != expected:
                    raise TaylorError("unsubst memory mismatch")
                return RApp(fun, Bag.empty(a.fv))
            items = tuple(_unsubst(a, x, q, w, env, grabbed, active) for w in u.bag.items)
            return RApp(fun, Bag.of(items))
    raise TypeError(p)


def _rebuild(m: Term, u: ResourceExpr, env: dict) -> ResourceExpr:
    """Transport u ⋐ 𝒯(M) onto M's own names."""
    match m, u:
        case Var(y), RVar(n):
            if _trans(n, env) != y:
                raise TaylorError("rebuild mismatch at variable")
            return RVar(y)
        case Abs(b, body), RAbs(rb, rbody):
            env2 = dict(env)
            env2[rb] = b
            return RAbs(b, _rebuild(body, rbody, env2))
        case App(f, a), RApp(fu, bag):
            fun = _rebuild(f, fu, env)
            if bag.is_empty():
                if _trans_set(bag.memory, env) != a.fv:
                    raise TaylorError("rebuild memory mismatch")
                return RApp(fun, Bag.empty(a.fv))
            return RApp(fun, Bag.of(tuple(_rebuild(a, w, env) for w in bag.items)))
    raise TaylorError("rebuild shape mismatch")


def pull_back_step(m: Term, pos: Position, u: ResourceExpr) -> ResourceExpr:
    """Given M →β N at pos and u ⋐ 𝒯(N), produce s ⋐ 𝒯(M) with u in the
    support of a reduct of s (the one-step inverse of the simulation)."""

    def go(sub: Term, rest: Position, usub: ResourceExpr, env: dict) -> ResourceExpr:
        if not rest:
            assert isinstance(sub, App) and isinstance(sub.fun, Abs)
            redex = sub.fun
            grabbed: list = []
            body = _unsubst(redex.body, redex.binder, sub.arg, usub, env, grabbed)
            bag = Bag.of(tuple(grabbed)) if grabbed else Bag.empty(sub.arg.fv)
            return RApp(RAbs(redex.binder, body), bag)
        step, rest2 = rest[0], rest[1:]
        match sub, step:
            case Abs(b, body), 0:
                if not isinstance(usub, RAbs):
                    raise TaylorError("pull-back shape mismatch under binder")
                env2 = dict(env)
                env2[usub.binder] = b
                return RAbs(b, go(body, rest2, usub.body, env2))
            case App(f, a), 1:
                if not isinstance(usub, RApp):
                    raise TaylorError("pull-back shape mismatch at function")
                fun = go(f, rest2, usub.fun, env)
                if usub.bag.is_empty():
                    if _trans_set(usub.bag.memory, env) != a.fv:
                        raise TaylorError("pull-back memory mismatch")
                    return RApp(fun, Bag.empty(a.fv))
                return RApp(fun, Bag.of(tuple(_rebuild(a, w, env) for w in usub.bag.items)))
            case App(f, a), 2:
                if not isinstance(usub, RApp):
                    raise TaylorError("pull-back shape mismatch at argument")
                fun = _rebuild(f, usub.fun, env)
                if usub.bag.is_empty():
                    # fv is β-invariant, so the label is unchanged
                    if _trans_set(usub.bag.memory, env) != a.fv:
                        raise TaylorError("pull-back memory mismatch")
                    return RApp(fun, Bag.empty(a.fv))
                return RApp(fun, Bag.of(tuple(go(a, rest2, w, env) for w in usub.bag.items)))
        raise TaylorError(f"invalid pull-back position {pos}")

    return go(m, pos, u, {})


def pull_back(path: list[tuple[Term, Position]], t: ResourceExpr) -> ResourceExpr:
    s = t
    for m, pos in reversed(path):
        s = pull_back_step(m, pos, s)
    return s


# ---------------------------------------------------------------------------
# Membership in the normal form of the Taylor expansion

@dataclass(frozen=True)
class NftResult:
    status: str  # "yes" | "no" | "unknown"
    witness: ResourceExpr | None = None  # s ⋐ 𝒯(M) with t ∈ supp(nf(s))
    detail: str = ""


def nft_member(t: ResourceExpr, m: Term, budget: int, _expansion=None, _tree=None) -> NftResult:
    """Is the r-normal t in the support of the normal form of 𝒯(M)?

    Yes answers carry a witness s ⋐ 𝒯(M), found by pulling t back along a
    reduction to a spine-expanded reduct and verified by actually
    normalising it.  No answers require a decided tree region (or a fully
    explored reduction graph).  Unknown otherwise.
    """
    require_lambda_i(m)
    if not is_normal(t):
        raise TaylorError(f"candidate is not r-normal: {rshow(t)}")
    if t.fv != m.fv:
        return NftResult("no", detail="free-variable mismatch")

    tree = _tree if _tree is not None else ohana_tree(m, rdepth(t) + 1, fuel=budget)
    verdict = tree_member(t, tree)
    if verdict == "no":
        return NftResult("no", detail="tree region decided")

    n, path = _expansion if _expansion is not None else spine_expand(m, rdepth(t) + 1, budget)
    if taylor_member(t, n):
        witness = pull_back(path, _rebuild(n, t, {}))
        nf = normalize(Sum.single(witness))
        if any(e == t for e in nf.support()):
            return NftResult("yes", witness=witness)
        return NftResult(
            "unknown",
            witness=witness,
            detail="witness verification failed; possible commutation bug",
        )
    # slow path: breadth-first reduct search within the budget
    graph = reduction_graph(m, budget, max_nodes=budget)
    for key, node in graph.nodes.items():
        if taylor_member(t, node):
            witness = pull_back(graph.path_to(key), _rebuild(node, t, {}))
            nf = normalize(Sum.single(witness))
            if any(e == t for e in nf.support()):
                return NftResult("yes", witness=witness)
    if graph.closed:
        return NftResult("no", detail="reduction graph exhausted")
    if verdict == "unknown":
        return NftResult("unknown", detail="tree region undecided and graph open")
    return NftResult("unknown", detail="tree says yes but no witness within budget")


def nf_taylor_enumerate(m: Term, size: int, budget: int = 2_000) -> set[ResourceExpr]:
    """Bounded rendering of the support of nf(𝒯(M)): every decided-yes
    candidate of enum_size ≤ size."""
    out = set()
    tree = ohana_tree(m, size + 1, fuel=budget)
    expansion = spine_expand(m, size + 1, budget)
    for t in normal_candidates(m.fv, size):
        if nft_member(t, m, budget, _expansion=expansion, _tree=tree).status == "yes":
            out.add(t)
    return out


# ---------------------------------------------------------------------------
# Enumerating r-normal candidates

def normal_candidates(fv: frozenset, size: int) -> list[ResourceExpr]:
    """All r-normal resource terms with exactly the given free variables and
    enum_size ≤ size, in a deterministic order."""
    memo: dict = {}
    out = [t for t in _normal_any(frozenset(fv), size, 0, memo) if t.fv == fv]
    out.sort(key=lambda t: (enum_size(t), rshow(t)))
    return out


def _normal_any(scope: frozenset, bound: int, lvl: int, memo: dict) -> list[ResourceExpr]:
    """Normal terms with fv ⊆ scope, enum_size ≤ bound; binders are named
    canonically per nesting level so memoisation is sound."""
    if bound <= 0:
        return []
    k = (scope, bound, lvl)
    hit = memo.get(k)
    if hit is not None:
        return hit
    out: list[ResourceExpr] = []
    # spines  y b̄1 … b̄k
    for y in sorted(scope):
        out.extend(_grow_spine(RVar(y), bound - 1, scope, lvl, memo))
    # abstractions λw.t with w used
    w = f"w{lvl}"
    for body in _normal_any(scope | {w}, bound - 1, lvl + 1, memo):
        if w in body.fv:
            out.append(RAbs(w, body))
    memo[k] = out
    return out


def _grow_spine(spine: ResourceExpr, budget: int, scope: frozenset, lvl: int, memo: dict):
    """spine, spine b̄, spine b̄ b̄', …, within the size budget.

    Each added application costs 1 plus the bag; empty-bag memories range
    over subsets of the scope, nonempty bags over same-fv normal items.
    """
    yield spine
    if budget < 2:
        return
    for mem in _subsets(scope):
        yield from _grow_spine(RApp(spine, Bag.empty(mem)), budget - 2, scope, lvl, memo)
    cands = sorted(_normal_any(scope, budget - 1, lvl, memo), key=lambda t: (enum_size(t), t.key()))

    def bags(start: int, rem: int, items: list):
        for i in range(start, len(cands)):
            t = cands[i]
            if enum_size(t) > rem:
                continue
            if items and t.fv != items[0].fv:
                continue
            items.append(t)
            yield Bag.of(tuple(items))
            yield from bags(i, rem - enum_size(t), items)
            items.pop()

    for bag in bags(0, budget - 1, []):
        yield from _grow_spine(RApp(spine, bag), budget - 1 - enum_size(bag), scope, lvl, memo)


def _subsets(s: frozenset):
    items = sorted(s)
    for r in range(len(items) + 1):
        for combo in itertools.combinations(items, r):
            yield frozenset(combo)


# ---------------------------------------------------------------------------
# The commutation harness

def commutation_check(
    m: Term,
    size: int,
    steps: int,
    budget: int,
    jobs: int = 1,
    seed: int | None = None,
) -> dict:
    """For every r-normal candidate up to the size bound, check that the
    normal-form route and the tree route agree.  Reports mismatches and
    undecided candidates; both counts are zero on healthy runs."""
    require_lambda_i(m)
    candidates = normal_candidates(m.fv, size)
    if jobs > 1:
        results = _check_parallel(m, candidates, steps, budget, jobs)
    else:
        tree = ohana_tree(m, size + 2, fuel=budget)
        expansion = spine_expand(m, size + 2, steps)
        results = [_check_one(t, m, budget, expansion, tree) for t in candidates]
    report = {
        "term": show(m),
        "size": size,
        "checked": len(candidates),
        "yes": 0,
        "no": 0,
        "unknown": 0,
        "mismatches": [],
    }
    for t, nft_status, tmt_ok in results:
        if nft_status == "unknown":
            report["unknown"] += 1
        elif nft_status == "yes" and tmt_ok:
            report["yes"] += 1
        elif nft_status == "no" and not tmt_ok:
            report["no"] += 1
        else:
            report["mismatches"].append(
                {"term": rshow(t), "nft": nft_status, "tmt": tmt_ok}
            )
    return report


def _check_one(t, m, budget, expansion, tree):
    nft = nft_member(t, m, budget, _expansion=expansion, _tree=tree)
    tmt = _match_nf(t, expansion[0], {}, set()) if t.fv == m.fv else False
    return (t, nft.status, tmt)


def _check_parallel(m, candidates, steps, budget, jobs):
    import concurrent.futures

    from .resource import rexpr_from_json, rexpr_to_json

    text = show(m)
    payloads = [(rexpr_to_json(t), rshow(t)) for t in candidates]
    chunks = [payloads[i::jobs] for i in range(jobs)]
    results = []
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_parallel_worker, text, [p for p, _ in chunk], steps, budget)
            for chunk in chunks
            if chunk
        ]
        for fut in futures:
            results.extend(fut.result())
    decode = {name: rexpr_from_json(p) for p, name in payloads}
    out = [(decode[name], status, tmt) for name, status, tmt in results]
    out.sort(key=lambda r: (enum_size(r[0]), rshow(r[0])))
    return out


def _parallel_worker(term_text, payloads, steps, budget):
    from .resource import rexpr_from_json

    m = parse_term(term_text)
    terms = [rexpr_from_json(p) for p in payloads]
    if not terms:
        return []
    depth = max(rdepth(t) for t in terms) + 2
    tree = ohana_tree(m, depth, fuel=budget)
    expansion = spine_expand(m, depth, steps)
    out = []
    for t in terms:
        res = _check_one(t, m, budget, expansion, tree)
        out.append((rshow(res[0]), res[1], res[2]))
    return out
