"""Independent oracles used to freeze expected values.

These deliberately avoid the implementation paths they check: substitution
goes through a de Bruijn encoding, redex scanning is a plain subterm walk.
"""

from __future__ import annotations

from ohana.terms import Abs, App, Term, Var

# de Bruijn terms: int (index) | ("lam", body) | ("app", fun, arg)


def to_db(m: Term, env=()):
    match m:
        case Var(x):
            for i, y in enumerate(reversed(env)):
                if y == x:
                    return i
            return ("free", x)
        case Abs(x, b):
            return ("lam", to_db(b, env + (x,)))
        case App(f, a):
            return ("app", to_db(f, env), to_db(a, env))
    raise TypeError(m)


def db_shift(t, d, cutoff=0):
    match t:
        case int(i):
            return i + d if i >= cutoff else i
        case ("free", _):
            return t
        case ("lam", b):
            return ("lam", db_shift(b, d, cutoff + 1))
        case ("app", f, a):
            return ("app", db_shift(f, d, cutoff), db_shift(a, d, cutoff))
    raise TypeError(t)


def db_subst(t, j, s):
    match t:
        case int(i):
            return s if i == j else i
        case ("free", _):
            return t
        case ("lam", b):
            return ("lam", db_subst(b, j + 1, db_shift(s, 1)))
        case ("app", f, a):
            return ("app", db_subst(f, j, s), db_subst(a, j, s))
    raise TypeError(t)


def db_subst_free(t, x, s):
    """t[s/x] for a free name x, shifting s under binders."""
    match t:
        case int(i):
            return i
        case ("free", y):
            return s if y == x else t
        case ("lam", b):
            return ("lam", db_subst_free(b, x, db_shift(s, 1)))
        case ("app", f, a):
            return ("app", db_subst_free(f, x, s), db_subst_free(a, x, s))
    raise TypeError(t)


def db_beta_root(t):
    ("app", ("lam", _), _) == t  # shape
    _, (_, body), arg = t
    return db_shift(db_subst(body, 0, db_shift(arg, 1)), -1)


def subst_oracle(m: Term, x: str, n: Term):
    """de Bruijn image of M[N/x]; compare db encodings, not names."""
    return db_subst_free(to_db(m), x, to_db(n))


def redex_scan(m: Term):
    """Exhaustive subterm scan for (λx.P)Q shapes."""
    found = []

    def go(t, p):
        if isinstance(t, App) and isinstance(t.fun, Abs):
            found.append(p)
        match t:
            case Abs(_, b):
                go(b, p + (0,))
            case App(f, a):
                go(f, p + (1,))
                go(a, p + (2,))

    go(m, ())
    return found
