"""Local types, projections, transport, admissibility, type measures."""

import random
from fractions import Fraction

import pytest

from helpers import cycle, fixed_point, seeded, star
from mapprox.errors import (
    MeasureError,
    RankIncrease,
    RankMismatch,
    RankTooLow,
    RankZero,
)
from mapprox.localtypes import (
    TypeMeasure,
    TypeTable,
    adm_minus,
    adm_minus_table,
    adm_plus,
    local_type,
    measure_tv,
    project,
    transport,
    type_distribution,
    types_equal,
)
from mapprox.logic import evaluate
from mapprox.structure import FiniteMapping, disjoint_union
from oracles import local_game, random_clean_formula

TABLE = TypeTable()


def t_of(F, v, r):
    return local_type(F, v, r, TABLE)


class TestLocalType:
    def test_cycle_vertex_transitivity(self):
        F = cycle(3)
        for r in (0, 1, 2, 3):
            ts = [t_of(F, v, r) for v in range(3)]
            assert types_equal(ts[0], ts[1]) and types_equal(ts[1], ts[2])

    def test_star_leaf_vs_center(self):
        F = star(3)
        leaf, center = t_of(F, 1, 1), t_of(F, 0, 1)
        assert types_equal(leaf, t_of(F, 2, 1))
        assert not types_equal(leaf, center)

    def test_mark_splits_rank_zero(self):
        marked = fixed_point({"P": frozenset({0})})
        plain = FiniteMapping(f=(0,), marks={"P": frozenset()})
        assert not types_equal(t_of(marked, 0, 0), t_of(plain, 0, 0))

    def test_rank_mismatch(self):
        with pytest.raises(RankMismatch):
            types_equal(t_of(cycle(3), 0, 1), t_of(cycle(3), 0, 2))


class TestTypesEqual:
    def test_reflexive(self):
        t = t_of(seeded(9, 0), 4, 2)
        assert types_equal(t, t)

    def test_c5_vs_c7_low_rank(self):
        assert types_equal(t_of(cycle(5), 0, 1), t_of(cycle(7), 0, 1))

    def test_c5_vs_c7_high_rank(self):
        assert not types_equal(t_of(cycle(5), 0, 4), t_of(cycle(7), 0, 4))

    def test_equivalence_relation(self):
        rng = random.Random(3)
        points = []
        for seed in range(6):
            F = seeded(rng.randrange(3, 9), seed, Fraction(1, 2))
            points.append((F, rng.randrange(F.n)))
        for r in (0, 1, 2):
            ts = [t_of(F, v, r) for F, v in points]
            for a in ts:
                for b in ts:
                    assert types_equal(a, b) == types_equal(b, a)
                    for c in ts:
                        if types_equal(a, b) and types_equal(b, c):
                            assert types_equal(a, c)

    def test_matches_direct_game_search(self):
        rng = random.Random(14)
        for trial in range(25):
            n1, n2 = rng.randrange(2, 7), rng.randrange(2, 7)
            F1 = seeded(n1, trial, Fraction(1, 2))
            F2 = seeded(n2, 100 + trial, Fraction(1, 2))
            v1, v2 = rng.randrange(n1), rng.randrange(n2)
            for r in (0, 1, 2):
                fast = types_equal(t_of(F1, v1, r), t_of(F2, v2, r))
                slow = local_game(F1, (v1,), F2, (v2,), r)
                assert fast == slow, (trial, r)

    def test_formula_consistency(self):
        # equal types satisfy the same guarded-clean formulas of that rank
        rng = random.Random(9)
        structures = [seeded(rng.randrange(3, 10), s, Fraction(1, 2)) for s in range(5)]
        points = [(F, v) for F in structures for v in range(F.n)]
        for r in (1, 2):
            for _ in range(20):
                (F, u), (G, v) = rng.sample(points, 2)
                if not types_equal(t_of(F, u, r), t_of(G, v, r)):
                    continue
                FM = FiniteMapping(f=F.f, marks={"M1": F.marks["U"]})
                GM = FiniteMapping(f=G.f, marks={"M1": G.marks["U"]})
                phi = random_clean_formula(rng, ["M1"], ["x1"], r)
                assert evaluate(FM, phi, {"x1": u}) == evaluate(GM, phi, {"x1": v})


class TestProjectTransport:
    def test_project_identity(self):
        t = t_of(seeded(8, 1), 3, 2)
        assert project(t, 2) is t or types_equal(project(t, 2), t)

    def test_project_rejects_increase(self):
        with pytest.raises(RankIncrease):
            project(t_of(cycle(3), 0, 1), 2)

    def test_rank_zero_sees_fixed_points(self):
        fp = project(t_of(fixed_point(), 0, 2), 0)
        cyc = project(t_of(cycle(3), 0, 2), 0)
        assert not types_equal(fp, cyc)

    def test_monotone_refinement(self):
        rng = random.Random(6)
        for trial in range(20):
            F = seeded(rng.randrange(3, 9), trial, Fraction(1, 2))
            G = seeded(rng.randrange(3, 9), 50 + trial, Fraction(1, 2))
            u, v = rng.randrange(F.n), rng.randrange(G.n)
            hi = 3
            if types_equal(t_of(F, u, hi), t_of(G, v, hi)):
                for r in range(hi):
                    assert types_equal(
                        project(t_of(F, u, hi), r), project(t_of(G, v, hi), r)
                    )

    def test_transport_fixed_point(self):
        t = t_of(fixed_point(), 0, 2)
        assert types_equal(transport(t), project(t, 1))

    def test_transport_star_leaf(self):
        F = star(3)
        assert types_equal(transport(t_of(F, 1, 1)), t_of(F, 0, 0))

    def test_transport_rank_zero_rejected(self):
        with pytest.raises(RankZero):
            transport(t_of(cycle(3), 0, 0))

    def test_transport_identity_random(self):
        rng = random.Random(2)
        for trial in range(15):
            F = seeded(rng.randrange(4, 20), trial)
            for v in F.elements():
                for r in (0, 1):
                    lhs = t_of(F, F.f[v], r)
                    rhs = project(transport(t_of(F, v, r + 1)), r)
                    assert types_equal(lhs, rhs)


class TestTypeDistribution:
    def test_cycle_single_entry(self):
        for r in (0, 2):
            mu = type_distribution(cycle(3), r, TABLE)
            assert len(mu.entries) == 1
            assert mu.entries[0][1] == 1

    def test_star_masses(self):
        mu = type_distribution(star(3), 1, TABLE)
        assert sorted(mass for _, mass in mu) == [Fraction(1, 4), Fraction(3, 4)]

    def test_union_averages(self):
        A, B = seeded(6, 3), seeded(10, 4)
        mu = type_distribution(disjoint_union(A, B), 1, TABLE)
        mu_a = type_distribution(A, 1, TABLE)
        mu_b = type_distribution(B, 1, TABLE)
        for t, mass in mu:
            want = (
                Fraction(6, 16) * mu_a.mass(t) + Fraction(10, 16) * mu_b.mass(t)
            )
            assert mass == want

    def test_masses_validated(self):
        t = t_of(cycle(3), 0, 1)
        with pytest.raises(MeasureError):
            TypeMeasure(rank=1, entries=((t, Fraction(1, 2)),))

    def test_duplicate_types_rejected(self):
        t1, t2 = t_of(cycle(5), 0, 1), t_of(cycle(7), 0, 1)
        with pytest.raises(MeasureError):
            TypeMeasure.from_pairs(1, [(t1, Fraction(1, 2)), (t2, Fraction(1, 2))])

    def test_projection_pushforward(self):
        F = seeded(20, 7)
        assert measure_tv(
            type_distribution(F, 3, TABLE).project(1), type_distribution(F, 1, TABLE)
        ) == 0


class TestAdmissibility:
    def test_adm_plus_star(self):
        F = star(3)
        tau_leaf = t_of(F, 1, 3)
        assert adm_plus(tau_leaf, t_of(F, 0, 1)) == 1
        assert adm_plus(tau_leaf, t_of(F, 1, 1)) == 0

    def test_adm_plus_fixed_point(self):
        tau = t_of(fixed_point(), 0, 2)
        assert adm_plus(tau, project(tau, 1)) == 1

    def test_adm_plus_rank_too_low(self):
        with pytest.raises(RankTooLow):
            adm_plus(t_of(cycle(3), 0, 1), t_of(cycle(3), 0, 1))

    def test_adm_minus_star_cap(self):
        F = star(5)
        tau = t_of(F, 0, 5)
        assert adm_minus(tau, t_of(F, 1, 2)) == 3

    def test_adm_minus_star_center(self):
        F = star(5)
        tau = t_of(F, 0, 5)
        assert adm_minus(tau, t_of(F, 0, 2)) == 1

    def test_adm_minus_cycle(self):
        tau = t_of(cycle(3), 0, 3)
        assert adm_minus(tau, t_of(cycle(3), 2, 1)) == 1

    def test_adm_minus_rank_too_low(self):
        with pytest.raises(RankTooLow):
            adm_minus(t_of(cycle(3), 0, 2), t_of(cycle(3), 0, 1))

    def test_adm_minus_witness_invariance(self):
        rng = random.Random(8)
        pool = [(F, v) for s in range(4) for F in [seeded(rng.randrange(4, 12), s)] for v in range(F.n)]
        for _ in range(30):
            (F, u), (G, v) = rng.sample(pool, 2)
            if not types_equal(t_of(F, u, 3), t_of(G, v, 3)):
                continue
            for t in {t_of(F, w, 1).key: t_of(F, w, 1) for w in F.elements()}.values():
                assert adm_minus(t_of(F, u, 3), t) == adm_minus(t_of(G, v, 3), t)

    def test_adm_minus_table_matches_pointwise(self):
        F = seeded(15, 5)
        for v in F.elements():
            tau = t_of(F, v, 3)
            table = adm_minus_table(tau, 1)
            for w in F.elements():
                t = t_of(F, w, 1)
                assert min(2, table.get(t.key, 0)) == adm_minus(tau, t)
