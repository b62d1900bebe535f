import random

import pytest

from ohana.terms import Var, alpha_eq, combinator, parse_term
from ohana.trees import (
    Bot,
    Head,
    TBot,
    THead,
    TUnknown,
    TreeError,
    approx_alpha_eq,
    approx_set,
    approx_show,
    approx_size,
    approximants_up_to,
    at,
    bohm_tree,
    compare,
    direct_approximant,
    downward_closure,
    iota,
    iota_inv,
    join,
    leq,
    ohana_tree,
    parse_tree,
    positions,
    prune_at,
    tree_alpha_eq,
    tree_from_approximants,
    tree_from_json,
    tree_to_dot,
    tree_to_json,
    tree_show,
    well_formed,
)


def T(s):
    return parse_term(s)


def A(*args):
    return approx_set(args)


BOT0 = Bot(frozenset())
BOT_X = Bot(frozenset("x"))
# λx.x ⊥{x}
D_PART = Head(("x",), "x", (BOT_X,))
# λx.x x
D_FULL = Head(("x",), "x", (Head((), "x", ()),))


def f_spine(n, mem=frozenset("f")):
    """λf.f(f(…f(⊥_mem)…)) with n ≥ 1 head levels."""
    assert n >= 1
    a = Bot(mem)
    for _ in range(n):
        a = Head((), "f", (a,))
    return Head(("f",), a.head, a.children)


class TestOhanaTree:
    def test_mt_d(self):
        t = ohana_tree(combinator("D"), 2)
        expected = THead(("x",), "x", ((frozenset("x"), THead((), "x", ())),))
        assert tree_alpha_eq(t, expected)

    def test_mt_omega_args(self):
        for args in ("x", "x y", "x y z"):
            t = ohana_tree(T(f"@Omega {args}"), 1)
            assert t == TBot(frozenset(args.split()))

    def test_mt_bible_vs_y_labels(self):
        tb = ohana_tree(combinator("Bible"), 2)
        ty = ohana_tree(combinator("Y"), 2)
        assert tree_alpha_eq(tb, parse_tree("λf.f ·{f,l} (f ·{f,l} ?)"))
        assert tree_alpha_eq(ty, parse_tree("λf.f ·{f} (f ·{f} ?)"))
        assert compare(tb, ty) == "different"

    def test_mt_i_is_itself(self):
        assert tree_alpha_eq(ohana_tree(combinator("I"), 3), parse_tree("λx.x"))

    def test_single_free_variable(self):
        assert tree_alpha_eq(ohana_tree(Var("x"), 2), parse_tree("x"))

    def test_loop_under_binder(self):
        assert ohana_tree(T("\\y.@Omega y"), 3) == TBot(frozenset())

    def test_depth_zero_unknown_on_hnf(self):
        assert ohana_tree(combinator("D"), 0) == TUnknown()

    def test_depth_zero_bot_on_loop(self):
        assert ohana_tree(combinator("Omega"), 0) == TBot(frozenset())

    def test_rejects_non_lambda_i(self):
        with pytest.raises(Exception):
            ohana_tree(combinator("K"), 2)

    def test_fuel_exhaustion_is_unknown(self):
        assert ohana_tree(combinator("Bible"), 2, fuel=1) == TUnknown()


class TestBohmTree:
    def test_bt_y(self):
        t = bohm_tree(combinator("Y"), 3)
        assert tree_alpha_eq(t, parse_tree("λf.f ·{} (f ·{} (f ·{} ?))"))

    def test_bt_omega_and_yk(self):
        assert bohm_tree(combinator("Omega"), 3) == TBot(frozenset())
        # YK has no hnf but its head trajectory never α-repeats (it grows a
        # binder per round), so the loop detector cannot decide it: Unknown,
        # never ⊥.
        yk = T("@Y @K")
        assert bohm_tree(yk, 3, fuel=500) == TUnknown()

    def test_ex_ox_equal_bohm_distinct_ohana(self):
        ex, ox = combinator("Ex"), combinator("Ox")
        for d in range(1, 5):
            assert tree_alpha_eq(bohm_tree(ex, d), bohm_tree(ox, d))
        assert compare(ohana_tree(ex, 2), ohana_tree(ox, 2)) == "different"


class TestDirectApproximant:
    def test_head_with_loop_argument(self):
        a = direct_approximant(T("\\x.x(@Omega x)"))
        assert approx_alpha_eq(a, Head(("x",), "x", (BOT_X,)))

    def test_omega(self):
        assert direct_approximant(combinator("Omega")) == BOT0

    def test_normal_form(self):
        assert approx_alpha_eq(direct_approximant(combinator("I")), Head(("x",), "x", ()))


class TestApproximants:
    def test_a_d(self):
        got, closed = approximants_up_to(combinator("D"), 0)
        assert closed
        assert got == A(BOT0, D_PART, D_FULL)

    def test_a_omega(self):
        got, _ = approximants_up_to(combinator("Omega"), 4)
        assert got == A(BOT0)

    def test_a_y(self):
        got, closed = approximants_up_to(combinator("Y"), 3)
        assert not closed
        assert got == A(BOT0, f_spine(1), f_spine(2), f_spine(3))

    def test_a_bible(self):
        # n ≤ 2 here to keep the unit suite fast; n ≤ 3 runs in acceptance
        got, _ = approximants_up_to(combinator("Bible"), 12)
        bot_l = Bot(frozenset("l"))
        fl = frozenset({"f", "l"})
        picks = [bot_l] + [f_spine(n, fl) for n in (1, 2)]
        for a in picks:
            assert a in got
        for a in got:
            assert a.fv == frozenset("l")

    def test_a_yrl_first_three(self):
        got, _ = approximants_up_to(T("@YRl"), 8)
        a0 = Bot(frozenset("l"))
        a1 = Head(("x0",), "x0", (Bot(frozenset({"x0", "l"})),))
        a2 = Head(
            ("x0",),
            "x0",
            (Head(("x1",), "x1", (Bot(frozenset({"x0", "x1", "l"})),)),),
        )
        for a in (a0, a1, a2):
            assert a in got

    def test_monotone_in_steps(self):
        y = combinator("Y")
        s2, _ = approximants_up_to(y, 2)
        s4, _ = approximants_up_to(y, 4)
        assert s2.keys() <= s4.keys()


class TestOrder:
    def test_bot_rule(self):
        assert leq(BOT0, f_spine(1))
        assert not leq(BOT_X, Head(("x",), "x", ()))  # fv mismatch {x} vs ∅

    def test_within_a_d(self):
        assert leq(D_PART, D_FULL)
        assert not leq(D_FULL, D_PART)

    def test_partial_order_on_generated(self):
        got, _ = approximants_up_to(combinator("Bible"), 6)
        items = list(got)
        for a in items:
            assert leq(a, a)
        for a in items:
            for b in items:
                if leq(a, b) and leq(b, a):
                    assert approx_alpha_eq(a, b)
                for c in items:
                    if leq(a, b) and leq(b, c):
                        assert leq(a, c)

    def test_join_bottom_absorbs(self):
        assert approx_alpha_eq(join(BOT0, f_spine(1)), f_spine(1))

    def test_join_alpha_equal_inputs(self):
        a = Head(("x",), "x", (BOT_X,))
        b = Head(("y",), "y", (Bot(frozenset("y")),))
        assert approx_alpha_eq(join(a, b), a)

    def test_join_is_leq_maximum_over_a_d(self):
        # oracle: the least upper bound over the enumerated set, via leq alone
        items, _ = approximants_up_to(combinator("D"), 0)
        items = list(items)
        for a in items:
            for b in items:
                j = join(a, b)
                ups = [c for c in items if leq(a, c) and leq(b, c)]
                least = [c for c in ups if all(leq(c, d) for d in ups)]
                if ups:
                    assert len(least) == 1
                    assert j is not None and approx_alpha_eq(j, least[0])
                else:
                    assert j is None

    def test_join_renames_bound_references(self):
        # a has ⊥ under λx, b has the full child under λy: splice must rebind
        a = Head(("x",), "x", (BOT_X,))
        b = Head(("y",), "y", (Head((), "y", ()),))
        j = join(a, b)
        assert approx_alpha_eq(j, D_FULL)
        assert j.fv == frozenset()

    def test_incompatible(self):
        assert join(f_spine(1), f_spine(1, frozenset({"f", "l"}))) is None


class TestPositions:
    def test_positions_bot(self):
        assert positions(BOT0) == {()}

    def test_at_examples(self):
        assert at(D_PART, (1,)) == BOT_X
        assert at(Head(("x",), "x", ()), ()) == (("x",), "x")

    def test_invalid_position(self):
        with pytest.raises(TreeError):
            at(BOT0, (1,))

    def test_prune_round(self):
        a = f_spine(2)
        assert approx_alpha_eq(prune_at(a, ()), BOT0)
        assert approx_alpha_eq(prune_at(a, (1,)), f_spine(1))


class TestIota:
    def test_bot_x(self):
        m, t = iota(BOT_X)
        assert alpha_eq(m, T("@Omega x"))
        assert t == TBot(frozenset("x"))

    def test_f_bot(self):
        a = f_spine(1)
        m, t = iota(a)
        assert alpha_eq(m, T("\\f.f(@Omega f)"))
        assert tree_alpha_eq(t, parse_tree("λf.f ·{f} ⊥{f}"))

    def test_identity(self):
        m, t = iota(Head(("x",), "x", ()))
        assert alpha_eq(m, T("\\x.x"))
        assert tree_alpha_eq(t, parse_tree("λx.x"))

    def test_iota_inv_examples(self):
        assert iota_inv(TBot(frozenset("x"))) == BOT_X
        assert approx_alpha_eq(iota_inv(parse_tree("λx.x ·{x} x")), D_FULL)
        assert approx_alpha_eq(iota_inv(parse_tree("λf.f ·{f} ⊥{f}")), f_spine(1))

    def test_iota_inv_rejects_unknown(self):
        with pytest.raises(TreeError):
            iota_inv(TUnknown())

    def test_round_trip_generated(self):
        rng = random.Random(5)
        from .gen import gen_lambda_i

        seen = 0
        for _ in range(120):
            m = gen_lambda_i(rng, max_size=9)
            a = direct_approximant(m)
            if not well_formed(a):
                continue
            _, t = iota(a)
            assert approx_alpha_eq(iota_inv(t), a)
            seen += 1
        assert seen > 60


class TestTreeFromApproximants:
    def test_single_bot(self):
        assert tree_from_approximants([BOT0], 3, complete=True) == TBot(frozenset())
        assert tree_from_approximants([BOT0], 3) == TUnknown()

    def test_a_d_rebuilds_mt_d(self):
        got, _ = approximants_up_to(combinator("D"), 0)
        t = tree_from_approximants(got, 2, complete=True)
        assert tree_alpha_eq(t, ohana_tree(combinator("D"), 2))

    def test_spines_truncate(self):
        s = [BOT0] + [f_spine(n) for n in (1, 2, 3)]
        t = tree_from_approximants(s, 2)
        assert tree_alpha_eq(t, parse_tree("λf.f ·{f} (f ·{f} ?)"))

    def test_not_directed_raises(self):
        bad = [f_spine(1), f_spine(1, frozenset({"f", "l"}))]
        with pytest.raises(TreeError):
            tree_from_approximants(bad, 2)

    def test_converges_to_ohana_tree(self):
        for name, steps, depth in (("Y", 4, 2), ("Bible", 8, 1), ("YRl", 8, 2)):
            m = combinator(name) if name != "YRl" else T("@YRl")
            s, _ = approximants_up_to(m, steps)
            t = tree_from_approximants(s, depth)
            assert tree_alpha_eq(t, ohana_tree(m, depth))


class TestSerialization:
    def test_tree_text_round_trip(self):
        for s in ("⊥{x,y}", "?", "λx.x ·{x} x", "λf.f ·{f,l} (f ·{f,l} ?)"):
            assert tree_alpha_eq(parse_tree(tree_show(parse_tree(s))), parse_tree(s))

    def test_tree_json_round_trip(self):
        t = ohana_tree(combinator("Bible"), 3)
        assert tree_from_json(tree_to_json(t)) == t

    def test_dot_output(self):
        dot = tree_to_dot(ohana_tree(combinator("D"), 2))
        assert "digraph" in dot and "⊥" not in dot and "{x}" in dot

    def test_approx_show(self):
        assert approx_show(D_PART) == "λx.x ⊥{x}"


class TestInvariants:
    def test_beta_invariance_bounded(self):
        rng = random.Random(11)
        from ohana.terms import beta_redexes, beta_step
        from .gen import gen_lambda_i

        checked = 0
        for _ in range(150):
            m = gen_lambda_i(rng, max_size=10)
            ps = beta_redexes(m)
            if not ps:
                continue
            n = beta_step(m, ps[0])
            am, _ = approximants_up_to(m, 3)
            an, _ = approximants_up_to(n, 2)
            assert an.keys() <= am.keys()
            checked += 1
        assert checked > 40

    def test_dirapp_monotone(self):
        rng = random.Random(13)
        from ohana.terms import beta_redexes, beta_step
        from .gen import gen_lambda_i

        for _ in range(150):
            m = gen_lambda_i(rng, max_size=10)
            for p in beta_redexes(m):
                n = beta_step(m, p)
                assert leq(direct_approximant(m), direct_approximant(n))

    def test_downward_closure_is_closed(self):
        got, _ = approximants_up_to(combinator("Bible"), 6)
        for a in got:
            for p in positions(a):
                assert prune_at(a, p) in got

    def test_well_formed_members(self):
        got, _ = approximants_up_to(parse_term("@Y @R l"), 6)
        for a in got:
            assert well_formed(a)
