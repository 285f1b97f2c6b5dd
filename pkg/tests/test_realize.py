"""Realization, label verification, rewiring, hubs, and the pipeline."""

import math
from fractions import Fraction

import pytest

from helpers import cycle, fixed_point, path, seeded, star
from mapprox.errors import (
    HubsTooClose,
    InsufficientHubs,
    MissingCutPredicates,
    NoHubAvailable,
    PreconditionFailed,
    RankTooLow,
    ScheduleInfeasible,
    SignatureMismatch,
    Stuck,
)
from mapprox.localtypes import (
    TypeMeasure,
    TypeTable,
    local_type,
    measure_tv,
    type_distribution,
)
from mapprox.realize import (
    PipelineConfig,
    certificate_digest,
    find_hubs,
    find_terminals,
    merge,
    pipeline,
    realize,
    rewire,
    verify_upsilon,
)
from mapprox.structure import FiniteMapping, cycle_cut_product, cycle_lengths

TABLE = TypeTable()


def marked_cycle(k=6):
    return cycle(k, {"U": frozenset({0})})


class TestRealize:
    def test_marked_cycle_exact(self):
        F = marked_cycle()
        mu = type_distribution(F, 3, TABLE)
        assert len(mu.entries) == 6
        out = realize(mu, 1)
        assert out.n == 6
        assert measure_tv(type_distribution(out, 1, TABLE), mu.project(1)) == 0

    def test_multiplier_scales(self):
        mu = type_distribution(marked_cycle(), 3, TABLE)
        out = realize(mu, 1, 2)
        assert out.n == 12
        assert measure_tv(type_distribution(out, 1, TABLE), mu.project(1)) == 0

    def test_cut_product_measure(self):
        H = cycle_cut_product(seeded(12, 9), 6, 3, TABLE)
        mu = type_distribution(H, 3, TABLE)
        for multiplier in (1, 2):
            out = realize(mu, 1, multiplier)
            assert out.n == multiplier * H.n
            assert (
                measure_tv(type_distribution(out, 1, TABLE), mu.project(1)) == 0
            )

    def test_short_cycle_point_mass_stuck(self):
        # one element cannot be its own image unless its type is fixed
        mu = type_distribution(cycle(3), 3, TABLE)
        with pytest.raises(Stuck) as caught:
            realize(mu, 1)
        assert "multiplier" in str(caught.value)

    def test_short_cycle_resolved_by_multiplier(self):
        mu = type_distribution(cycle(3), 3, TABLE)
        out = realize(mu, 1, 3)
        assert cycle_lengths(out) == [3]
        assert measure_tv(type_distribution(out, 1, TABLE), mu.project(1)) == 0

    def test_fixed_point_self_loop(self):
        mu = type_distribution(fixed_point(), 3, TABLE)
        out = realize(mu, 1)
        assert out.f == (0,)

    def test_multiplier_validated(self):
        mu = type_distribution(fixed_point(), 3, TABLE)
        with pytest.raises(ValueError):
            realize(mu, 1, 0)

    def test_rank_too_low(self):
        with pytest.raises(RankTooLow):
            realize(type_distribution(cycle(6), 2, TABLE), 1)

    def test_precondition_surfaced(self):
        mu = type_distribution(cycle(3), 3, TABLE)
        with pytest.raises(PreconditionFailed) as caught:
            realize(mu, 1, cut_length=4)
        assert caught.value.check == "no-short-cycles"


class TestVerifyUpsilon:
    def test_faithful_labelling(self):
        F = cycle(6)
        upsilon = {v: local_type(F, v, 3, TABLE) for v in F.elements()}
        assert verify_upsilon(F, upsilon, 1, 2)

    def test_cycle_band_includes_cut_length(self):
        F = cycle(6)
        upsilon = {v: local_type(F, v, 3, TABLE) for v in F.elements()}
        assert not verify_upsilon(F, upsilon, 1, 6)

    def test_image_type_must_be_forced(self):
        F = cycle(6)
        leaf = local_type(star(3), 1, 3, TABLE)
        assert not verify_upsilon(F, {v: leaf for v in F.elements()}, 1, 2)

    def test_marks_must_match_witness(self):
        F = cycle(6)
        labelled = local_type(marked_cycle(), 0, 3, TABLE)
        upsilon = {v: labelled for v in F.elements()}
        assert not verify_upsilon(F, upsilon, 1, 2)

    def test_preimage_counts_checked(self):
        F = FiniteMapping(f=(1, 2, 0, 0))
        tau = local_type(cycle(6), 0, 3, TABLE)
        assert not verify_upsilon(F, {v: tau for v in F.elements()}, 1, 2)

    def test_totality_required(self):
        F = cycle(6)
        upsilon = {v: local_type(F, v, 3, TABLE) for v in range(5)}
        with pytest.raises(ValueError):
            verify_upsilon(F, upsilon, 1, 2)

    def test_label_rank_checked(self):
        F = cycle(6)
        upsilon = {v: local_type(F, v, 2, TABLE) for v in F.elements()}
        with pytest.raises(RankTooLow):
            verify_upsilon(F, upsilon, 1, 2)


class TestRewire:
    def test_closes_recorded_cycles(self):
        H = cycle_cut_product(cycle(3), 6, 3, TABLE)
        out = rewire(H, 6, 3)
        assert out.n == 18
        assert set(cycle_lengths(out)) == {3}
        assert out.signature.predicates == ()
        assert (
            measure_tv(
                type_distribution(out, 2, TABLE),
                type_distribution(cycle(3), 2, TABLE),
            )
            == 0
        )

    def test_fixed_points_restored(self):
        H = cycle_cut_product(fixed_point(), 6, 3, TABLE)
        out = rewire(H, 6, 3)
        assert out.f == tuple(range(6))

    def test_clean_rank_bounds_closure(self):
        H = cycle_cut_product(cycle(3), 6, 1, TABLE)
        out = rewire(H, 6, 1)
        assert set(cycle_lengths(out)) == {6}

    def test_non_divisor_classes_stay_open(self):
        H = cycle_cut_product(cycle(4), 6, 3, TABLE)
        out = rewire(H, 6, 3)
        assert 4 not in set(cycle_lengths(out))

    def test_requires_cut_marks(self):
        with pytest.raises(MissingCutPredicates):
            rewire(cycle(6), 6, 3)


class TestTerminalsHubsMerge:
    def test_extracted_measures_have_no_terminals(self):
        mu = type_distribution(seeded(12, 3), 2, TABLE)
        assert find_terminals(mu, 1) == set()

    def test_leaf_point_mass_terminal(self):
        t_leaf = local_type(star(3), 1, 2, TABLE)
        mu = TypeMeasure.from_pairs(2, [(t_leaf, Fraction(1))])
        terminals = find_terminals(mu, 1)
        assert {t.key for t in terminals} == {t_leaf.key}
        hubs = find_hubs(mu, terminals, 1)
        hub = hubs[next(iter(terminals))]
        assert hub.key == local_type(star(3), 0, 3, TABLE).key

    def test_no_hub_available(self):
        t = local_type(path(4), 0, 2, TABLE)
        mu = TypeMeasure.from_pairs(2, [(t, Fraction(1))])
        with pytest.raises(NoHubAvailable):
            find_hubs(mu, find_terminals(mu, 1), 1)

    def test_merge_shape(self):
        E, F2 = cycle(6), path(3)
        out = merge(E, F2, {0: (0, 3)}, 2, 2, r=1)
        assert out.n == 6 + 2 * 2 * 3
        for i in range(2):
            for j in range(2):
                base = 6 + (i * 2 + j) * 3
                assert out.f[base] == (0, 3)[i]
                assert out.f[base + 1] == base + 2
                assert out.f[base + 2] == base + 2

    def test_merge_single_hub_accepts_int(self):
        out = merge(cycle(6), path(3), {0: 4}, 1, 3)
        assert out.n == 6 + 3 * 3
        assert out.f[6] == out.f[9] == out.f[12] == 4

    def test_insufficient_hubs(self):
        with pytest.raises(InsufficientHubs):
            merge(cycle(6), path(3), {0: (0,)}, 2, 1)
        with pytest.raises(InsufficientHubs):
            merge(cycle(6), path(3), {0: (0, 0)}, 2, 1)

    def test_hubs_too_close(self):
        with pytest.raises(HubsTooClose):
            merge(cycle(6), path(3), {0: (0, 1)}, 2, 1, r=1)

    def test_distance_unchecked_without_r(self):
        out = merge(cycle(6), path(3), {0: (0, 1)}, 2, 1)
        assert out.n == 12

    def test_merge_signature_checked(self):
        with pytest.raises(SignatureMismatch):
            merge(cycle(6), seeded(3, 0), {}, 1, 1)

    def test_counts_validated(self):
        with pytest.raises(ValueError):
            merge(cycle(6), path(3), {}, 0, 1)


class TestPipeline:
    def test_report_shape(self):
        F = seeded(24, 5)
        out, report = pipeline(F, 1, 1, Fraction(1, 8))
        assert report["version"] == 1
        assert [stage["name"] for stage in report["stages"]] == [
            "input",
            "residual",
            "product",
            "realized",
            "rewired",
            "merged",
            "output",
        ]
        assert report["stages"][0]["size"] == 24
        assert report["stages"][-1]["size"] == out.n
        final = Fraction(report["ldist"]["final"])
        assert report["ldist"]["ok"] == (final <= Fraction(1, 8))
        digest = report["certificate"]["digest"]
        assert len(digest) == 64 and int(digest, 16) >= 0
        schedule = report["parameters"]["schedule"]
        assert schedule["cut_length"] == math.lcm(1, 2, 3)

    def test_pairs_bound_reported(self):
        F = seeded(20, 6)
        _, report = pipeline(F, 2, 1, Fraction(1, 6))
        entry = report["ldist"]
        assert entry["p"] == 2
        final = Fraction(entry["final"])
        bound = Fraction(entry["p_bound"])
        assert bound >= 4 * final

    def test_factorial_schedule_infeasible(self):
        with pytest.raises(ScheduleInfeasible) as caught:
            pipeline(
                seeded(20, 7),
                1,
                2,
                Fraction(1, 10),
                config=PipelineConfig(factorial_schedule=True),
            )
        assert "cut = clean! =" in str(caught.value)
        assert caught.value.schedule["cut_length"] == math.factorial(33)

    def test_parameters_validated(self):
        with pytest.raises(ValueError):
            pipeline(seeded(10, 0), 0, 1, Fraction(1, 4))
        with pytest.raises(ValueError):
            pipeline(seeded(10, 0), 1, 1, 0)

    def test_digest_stability(self):
        from mapprox.fmtp import restricted_fmtp_certificate

        mu = type_distribution(cycle_cut_product(seeded(10, 1), 6, 3, TABLE), 3, TABLE)
        cert = restricted_fmtp_certificate(mu, 1)
        assert certificate_digest(cert) == certificate_digest(cert)
