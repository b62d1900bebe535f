"""Seeded random generators for λI-terms and λI-resource expressions."""

from __future__ import annotations

import random

from ohana.terms import Abs, App, Term, Var, is_lambda_i
from ohana.resource import Bag, RAbs, RApp, RVar, ResourceExpr, rfv

POOL = ["x", "y", "z", "u", "v"]


def gen_lambda_i(rng: random.Random, max_size: int = 12, pool=None) -> Term:
    """Random λI-term; binders always bind (wraps an application if needed)."""
    pool = list(pool or POOL[:3])
    n = 0

    def go(depth: int, names: list[str]) -> Term:
        nonlocal n
        n += 1
        choices = ["var"]
        if n < max_size:
            choices += ["abs", "app", "app"]
        kind = rng.choice(choices) if names else ("abs" if n < max_size else "var")
        if kind == "var" and names:
            return Var(rng.choice(names))
        if kind == "app" and names:
            return App(go(depth + 1, names), go(depth + 1, names))
        b = f"b{depth}_{rng.randrange(1000)}"
        body = go(depth + 1, names + [b])
        if b not in body.fv:
            body = App(body, Var(b))
        return Abs(b, body)

    t = go(0, [rng.choice(pool)] if rng.random() < 0.7 else [])
    assert is_lambda_i(t)
    return t


def gen_rterm(rng: random.Random, budget: int, pool: list[str]) -> ResourceExpr:
    """Random λI-resource term over (a subset of) pool."""
    t, _ = _gen_rterm(rng, budget, list(pool), 0)
    return t


def _gen_rterm(rng: random.Random, budget: int, names: list[str], depth: int):
    kinds = []
    if names:
        kinds.append("var")
    if budget > 1:
        kinds += ["abs", "app"]
    if not kinds:
        kinds = ["abs"]
    kind = rng.choice(kinds)
    if kind == "var":
        return RVar(rng.choice(names)), budget - 1
    if kind == "abs":
        b = f"r{depth}_{rng.randrange(1000)}"
        body, rest = _gen_rterm(rng, budget - 1, names + [b], depth + 1)
        if b not in rfv(body):
            # keep λI-ness by stashing the binder in an empty-bag memory
            body = RApp(body, Bag.empty(frozenset(rfv(body) | {b})))
        return RAbs(b, body), rest
    fun, rest = _gen_rterm(rng, budget - 1, names, depth + 1)
    bag, rest = gen_bag(rng, rest, names, depth + 1)
    return RApp(fun, bag), rest


def gen_bag(rng: random.Random, budget: int, names: list[str], depth: int = 0):
    k = rng.choice([0, 0, 1, 1, 2])
    if k == 0 or budget <= 1:
        mem = frozenset(rng.sample(names, rng.randrange(len(names) + 1))) if names else frozenset()
        return Bag.empty(mem), budget
    first, rest = _gen_rterm(rng, max(budget // k, 2), names, depth)
    items = [first]
    target = rfv(first)
    for _ in range(k - 1):
        item, rest = _gen_with_fv(rng, max(rest, 2), target, depth)
        if item is None:
            break
        items.append(item)
    return Bag.of(items), rest


def _gen_with_fv(rng: random.Random, budget: int, target: frozenset, depth: int):
    """A resource term with exactly the target free variables (or None)."""
    for _ in range(30):
        t, rest = _gen_rterm(rng, budget, sorted(target), depth)
        missing = target - rfv(t)
        extra = rfv(t) - target
        if extra:
            continue
        if missing:
            t = RApp(t, Bag.empty(frozenset(rfv(t) | missing)))
        return t, rest
    return None, budget
