import random

import pytest

from ohana.resource import (
    Bag,
    RAbs,
    RApp,
    RVar,
    ResourceError,
    Sum,
    bag_decompositions,
    contract,
    enum_size,
    is_normal,
    lin_degree,
    msubst,
    multiset_less,
    normalize,
    parse_resource,
    parse_sum,
    redex_positions,
    redexes,
    rexpr_from_json,
    rexpr_to_json,
    rshow,
    rsize,
    rsubst,
    rsubst_oracle,
    rsubst_sum_by_bagsum,
    sum_from_json,
    sum_show,
    sum_size,
    sum_steps,
    sum_to_json,
)

from .gen import gen_bag, gen_rterm


def R(s):
    return parse_resource(s)


rI = R("\\x.x")
D0 = R("\\x.x 1{x}")
D1 = R("\\x.x[x]")


def fv(*names):
    return frozenset(names)


class TestSyntax:
    def test_lambda_i_discipline(self):
        with pytest.raises(ResourceError):
            RAbs("y", RApp(RVar("x"), Bag.empty(fv())))
        # fine when y is remembered by the empty bag
        t = RAbs("y", RApp(RVar("x"), Bag.empty(fv("y"))))
        assert t.fv == fv("x")

    def test_bag_elements_share_fv(self):
        with pytest.raises(ResourceError):
            Bag.of([RVar("x"), RVar("y")])
        b = Bag.of([RVar("x"), RApp(RVar("x"), Bag.empty(fv()))])
        assert b.fv == fv("x")

    def test_bag_order_insensitive(self):
        a = Bag.of([RVar("x"), RApp(RVar("x"), Bag.empty(fv()))])
        b = Bag.of([RApp(RVar("x"), Bag.empty(fv())), RVar("x")])
        assert a == b and a.key() == b.key()

    def test_alpha_includes_memory(self):
        s = R("\\x y z.x 1{x} 1{x,y,z}")
        t = R("\\a b z.a 1{a} 1{a,b,z}")
        assert s.key() == t.key()
        u = R("\\a b z.a 1{a} 1{a,z}") if False else None
        # and differing memories are distinguished
        v = R("\\x y z.x 1{x,y} 1{x,y,z}")
        assert s.key() != v.key()

    def test_parse_show_roundtrip(self):
        for text in ("\\x.x 1{x}", "\\x.x[x, x]", "x[\\y.y, \\y.y[y]] 1{x}"):
            t = R(text)
            assert R(rshow(t)).key() == t.key()

    def test_sum_roundtrip(self):
        s = parse_sum("2.\\x.x + \\x.x[x]")
        assert parse_sum(sum_show(s)).key() == s.key()
        z = parse_sum("0{x,y}")
        assert z.is_zero() and z.fv == fv("x", "y")

    def test_json_roundtrip(self):
        t = R("\\x.x[x, \\y.y 1{x,y}]")
        assert rexpr_from_json(rexpr_to_json(t)).key() == t.key()
        s = parse_sum("3.\\x.x + \\x.x[x]")
        assert sum_from_json(sum_to_json(s)).key() == s.key()


class TestMemorySubst:
    def test_set_subst(self):
        got = msubst(Bag.empty(fv("x", "z")), "x", fv("a", "b"))
        assert got == Bag.empty(fv("a", "b", "z"))

    def test_linear_untouched(self):
        assert msubst(RVar("x"), "x", fv("y")) == RVar("x")

    def test_memory_missing_x(self):
        assert msubst(Bag.empty(fv("z")), "x", fv("y")) == Bag.empty(fv("z"))

    def test_binder_renamed_away_from_memory_target(self):
        t = R("\\y.y 1{x,y}")
        got = msubst(t, "x", fv("y"))
        assert got.fv == fv("y")
        assert got.binder != "y"


class TestLinDegree:
    def test_var(self):
        assert lin_degree(RVar("x"), "x") == 1

    def test_app(self):
        assert lin_degree(R("x[x]"), "x") == 2

    def test_memory_does_not_count(self):
        assert lin_degree(Bag.empty(fv("x")), "x") == 0
        assert lin_degree(R("x 1{x}"), "x") == 1


class TestRSubst:
    def test_singleton(self):
        assert rsubst(RVar("x"), "x", Bag.of([rI])) == Sum.single(rI)

    def test_other_var_nonempty(self):
        got = rsubst(RVar("y"), "x", Bag.of([RVar("z")]))
        assert got.is_zero() and got.fv == fv("y")

    def test_cross_terms_vanish(self):
        got = rsubst(R("x 1{x}"), "x", Bag.of([RVar("z")]))
        assert got == Sum.single(R("z 1{z}"))

    def test_empty_bag_memory_only(self):
        got = rsubst(R("y 1{x,y}"), "x", Bag.empty(fv("a")))
        assert got == Sum.single(R("y 1{a,y}"))

    def test_mismatch_gives_zero(self):
        got = rsubst(R("x[x]"), "x", Bag.of([RVar("z")]))
        assert got.is_zero()
        assert got.fv == fv("z")

    def test_repeated_elements_coefficient(self):
        got = rsubst(R("x[x]"), "x", Bag.of([rI, rI]))
        expected = Sum.single(RApp(rI, Bag.of([rI])), 2)
        assert got == expected

    def test_decompositions_multiplicity(self):
        u = Bag.of([RVar("x"), RVar("x")])
        splits = [(len(v), len(w), m) for v, w, m in bag_decompositions(u)]
        assert sorted(splits) == [(0, 2, 1), (1, 1, 2), (2, 0, 1)]


class TestOracle:
    def test_d1_body(self):
        got = rsubst_oracle(R("x[x]"), "x", Bag.of([rI, rI]))
        assert got == Sum.single(RApp(rI, Bag.of([rI])), 2)

    def test_cardinality_mismatch(self):
        got = rsubst_oracle(RVar("x"), "x", Bag.empty(fv("a")))
        assert got.is_zero() and got.fv == fv("a")

    def test_absent_variable_empty_bag(self):
        got = rsubst_oracle(RVar("y"), "x", Bag.empty(fv("a")))
        assert got == Sum.single(RVar("y"))

    def test_matches_rsubst_randomized(self):
        rng = random.Random(23)
        agree = 0
        for _ in range(400):
            e = gen_rterm(rng, rng.randrange(2, 8), ["x", "y"])
            u, _ = gen_bag(rng, rng.randrange(1, 7), ["z"])
            a = rsubst(e, "x", u)
            b = rsubst_oracle(e, "x", u)
            assert a == b, (rshow(e), rshow(u), sum_show(a), sum_show(b))
            agree += 1
        assert agree == 400


class TestReduction:
    def test_d0_z(self):
        t = RApp(D0, Bag.of([RVar("z")]))
        assert contract(t) == Sum.single(R("z 1{z}"))

    def test_d0_i_to_zero(self):
        t = RApp(D0, Bag.of([rI]))
        step1 = contract(t)
        assert step1 == Sum.single(R("(\\x.x) 1{}"))
        assert normalize(step1).is_zero()

    def test_no_redex(self):
        assert redexes(rI) == []
        assert is_normal(rI)

    def test_d1_ii_normalizes_to_2i(self):
        t = RApp(D1, Bag.of([rI, rI]))
        assert normalize(Sum.single(t)) == Sum.single(rI, 2)

    def test_both_orders_join(self):
        t = R("(\\x.@rD0 [x])[z]")
        ps = redex_positions(t)
        assert len(ps) == 2
        for p, contractum in redexes(t):
            assert normalize(contractum) == Sum.single(R("z 1{z}"))

    def test_normal_form_fixpoint(self):
        s = Sum.single(R("z 1{z}"))
        assert normalize(s) == s

    def test_fv_preserved_by_steps(self):
        rng = random.Random(31)
        for _ in range(200):
            e = gen_rterm(rng, rng.randrange(3, 10), ["x", "y"])
            for _, c in redexes(e):
                assert c.fv == e.fv

    def test_reduction_inside_bags(self):
        t = R("y[(\\x.x)[z]] 1{y,z}")
        nf = normalize(Sum.single(t))
        assert nf == Sum.single(R("y[z] 1{y,z}"))


class TestSumSize:
    def test_zero(self):
        assert sum_size(Sum.zero(fv("x"))) == []

    def test_identity(self):
        assert sum_size(Sum.single(rI)) == [2]

    def test_two_copies(self):
        assert sum_size(Sum.single(rI, 2)) == [2, 2]

    def test_empty_bag_weighs_nothing(self):
        assert rsize(R("x 1{x,y}")) == 2

    def test_strict_decrease_per_step(self):
        rng = random.Random(37)
        checked = 0
        for _ in range(200):
            e = gen_rterm(rng, rng.randrange(3, 10), ["x"])
            s = Sum.single(e)
            for s2 in sum_steps(s, cap=8):
                assert multiset_less(sum_size(s2), sum_size(s))
                checked += 1
        assert checked > 50


class TestConfluence:
    def test_diamond_on_generated(self):
        rng = random.Random(41)
        checked = 0
        for _ in range(150):
            e = gen_rterm(rng, rng.randrange(4, 11), ["x"])
            s = Sum.single(e)
            steps = sum_steps(s, cap=6)
            if len(steps) < 2:
                continue
            for i in range(len(steps)):
                for j in range(i + 1, len(steps)):
                    a, b = steps[i], steps[j]
                    ja = {a.key()} | {t.key() for t in sum_steps(a, cap=40)}
                    jb = {b.key()} | {t.key() for t in sum_steps(b, cap=40)}
                    assert ja & jb, (rshow(e), sum_show(a), sum_show(b))
                    checked += 1
        assert checked > 30

    def test_unique_normal_form_any_order(self):
        rng = random.Random(43)
        for _ in range(100):
            e = gen_rterm(rng, rng.randrange(4, 10), ["x"])
            s = Sum.single(e)
            nf = normalize(s)
            # follow a random single-step path to the end; same nf
            cur = s
            guard = 0
            while True:
                nxt = sum_steps(cur, cap=10)
                if not nxt:
                    break
                cur = rng.choice(nxt)
                guard += 1
                assert guard < 200
            assert cur == nf


class TestSubstitutionLemma:
    def test_identity_on_generated(self):
        # s<u/x><v/y> = Σ_{v = v'·v''} s<v'/y><(u<v''/y>)/x>
        # for x ∈ fv(s)∖fv(v), y ∈ (fv(s) ∪ fv(u)) ∖ {x}
        rng = random.Random(47)
        checked = 0
        for _ in range(300):
            s = gen_rterm(rng, rng.randrange(2, 8), ["x", "y"])
            if "x" not in s.fv:
                continue
            u, _ = gen_bag(rng, rng.randrange(1, 6), ["y", "z"])
            v, _ = gen_bag(rng, rng.randrange(1, 6), ["w"])
            if "x" in v.fv:
                continue
            if "y" not in (s.fv | u.fv) or "y" in v.fv and False:
                continue
            lhs = rsubst_sum(rsubst(s, "x", u), "y", v)
            total = None
            from ohana.resource import bag_decompositions as bd

            for v1, v2, mult in bd(v):
                inner = rsubst(u, "y", v2)  # a sum of bags
                piece = rsubst_sum_by_bagsum(rsubst(s, "y", v1), "x", inner).scale(mult)
                total = piece if total is None else total + piece
            assert total == lhs, (rshow(s), rshow(u), rshow(v))
            checked += 1
        assert checked > 100


from ohana.resource import rsubst_sum  # noqa: E402  (used in the lemma test)
