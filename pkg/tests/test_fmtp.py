"""Transport identity, restricted certificates, measure approximation."""

import random
from fractions import Fraction

import pytest

from helpers import cycle, fixed_point, path, seeded, star
from mapprox.errors import ElementOutOfRange, Infeasible, RankTooLow
from mapprox.fmtp import (
    CompanionCertificate,
    Violation,
    approximate_measure,
    check_fmtp,
    check_realizability_preconditions,
    exhaustive_fmtp_check,
    restricted_fmtp_certificate,
    verify_certificate,
)
from mapprox.localtypes import (
    TypeMeasure,
    TypeTable,
    local_type,
    measure_tv,
    project,
    transport,
    type_distribution,
)
from mapprox.structure import cycle_cut_product

TABLE = TypeTable()


class TestTransportIdentity:
    def test_path_example(self):
        F = path(3)
        result = check_fmtp(F, {0}, {1})
        assert result.lhs == result.rhs == Fraction(1, 3)
        assert result.equal and bool(result)

    def test_random_subsets(self):
        rng = random.Random(5)
        for trial in range(50):
            F = seeded(rng.randrange(2, 30), trial)
            A = {v for v in F.elements() if rng.random() < 0.5}
            B = {v for v in F.elements() if rng.random() < 0.5}
            assert check_fmtp(F, A, B)

    def test_element_range_checked(self):
        with pytest.raises(ElementOutOfRange):
            check_fmtp(cycle(3), {0}, {5})

    def test_exhaustive(self):
        assert exhaustive_fmtp_check(cycle(3))
        assert exhaustive_fmtp_check(star(3))
        assert exhaustive_fmtp_check(seeded(6, 11))


class TestCertificates:
    def test_cycle_certificate(self):
        mu = type_distribution(cycle(6), 3, TABLE)
        cert = restricted_fmtp_certificate(mu, 1)
        assert isinstance(cert, CompanionCertificate)
        assert cert.R == 3 and cert.r == 1
        tau = mu.entries[0][0]
        assert cert.value(tau, project(tau, 1)) == 1
        assert verify_certificate(mu, cert)

    def test_rank_zero_certificate(self):
        mu = type_distribution(seeded(15, 2), 1, TABLE)
        cert = restricted_fmtp_certificate(mu, 0)
        assert isinstance(cert, CompanionCertificate)
        assert verify_certificate(mu, cert)

    def test_cut_product_certificate(self):
        H = cycle_cut_product(seeded(12, 5), 6, 3, TABLE)
        mu = type_distribution(H, 3, TABLE)
        cert = restricted_fmtp_certificate(mu, 1)
        assert isinstance(cert, CompanionCertificate)
        assert verify_certificate(mu, cert)

    def test_rank_too_low(self):
        mu = type_distribution(cycle(6), 2, TABLE)
        with pytest.raises(RankTooLow):
            restricted_fmtp_certificate(mu, 1)

    def test_star_leaf_point_mass_violates(self):
        t = local_type(star(3), 1, 3, TABLE)
        mu = TypeMeasure.from_pairs(3, [(t, Fraction(1))])
        outcome = restricted_fmtp_certificate(mu, 1)
        assert isinstance(outcome, Violation)
        assert outcome.check == "balance"
        assert str(outcome).startswith("balance:")
        assert outcome.lhs != outcome.rhs

    def test_perturbed_masses_violate(self):
        # at r=2 the star center promises >= 2 leaf preimages per unit of
        # mass, so moving mass from the leaf class onto the center breaks
        # the balance floor; the true masses stay feasible
        mu = type_distribution(star(3), 5, TABLE)
        assert isinstance(
            restricted_fmtp_certificate(mu, 2), CompanionCertificate
        )
        swapped = TypeMeasure.from_pairs(
            5, [(t, Fraction(1, 2)) for t, _ in mu.entries]
        )
        assert isinstance(restricted_fmtp_certificate(swapped, 2), Violation)

    def test_verify_rejects_cross_measure(self):
        marked = cycle(6, {"U": frozenset({0, 2, 4})})
        mu_marked = type_distribution(marked, 3, TABLE)
        cert = restricted_fmtp_certificate(mu_marked, 1)
        plain = type_distribution(
            cycle(6, {"U": frozenset()}), 3, TABLE
        )
        assert not verify_certificate(plain, cert)

    def test_verify_rejects_tampered_value(self):
        mu = type_distribution(cycle(6), 3, TABLE)
        cert = restricted_fmtp_certificate(mu, 1)
        tau, t, s = cert.entries[0]
        bad = CompanionCertificate(
            R=cert.R, r=cert.r, entries=((tau, t, s + 1),)
        )
        assert not verify_certificate(mu, bad)

    def test_verify_rejects_wrong_rank(self):
        mu = type_distribution(cycle(6), 3, TABLE)
        cert = restricted_fmtp_certificate(mu, 1)
        assert not verify_certificate(
            mu, CompanionCertificate(R=5, r=1, entries=cert.entries)
        )


class TestApproximateMeasure:
    def test_fast_path_returns_input(self):
        mu = type_distribution(cycle(6), 3, TABLE)
        assert approximate_measure(mu, Fraction(1, 100), 1) is mu

    def test_lp_path(self):
        marked = cycle(6, {"U": frozenset({0, 2, 4})})
        mu = type_distribution(marked, 3, TABLE)
        out = approximate_measure(mu, Fraction(1, 100), 1, force_lp=True)
        assert {t.key for t, _ in out} == {t.key for t, _ in mu}
        assert all(mass > 0 for _, mass in out)
        assert sum(mass for _, mass in out) == 1
        assert measure_tv(mu, out) < Fraction(1, 100)
        cert = restricted_fmtp_certificate(out, 1)
        assert isinstance(cert, CompanionCertificate)
        assert verify_certificate(out, cert)

    def test_eps_positive(self):
        mu = type_distribution(cycle(6), 3, TABLE)
        with pytest.raises(ValueError):
            approximate_measure(mu, 0, 1)

    def test_infeasible_support(self):
        t = local_type(star(3), 1, 3, TABLE)
        mu = TypeMeasure.from_pairs(3, [(t, Fraction(1))])
        with pytest.raises(Infeasible):
            approximate_measure(mu, Fraction(1, 10), 1)


class TestPreconditions:
    def test_cut_product_passes(self):
        # the product's shortest cycle has length 6, above the checked band
        H = cycle_cut_product(seeded(10, 7), 6, 3, TABLE)
        report = check_realizability_preconditions(
            type_distribution(H, 3, TABLE), 5, 1
        )
        assert report.passed
        assert report.certificate is not None
        assert [c.name for c in report.checks] == [
            "cleanness",
            "no-short-cycles",
            "certificate",
        ]
        assert report.failures() == ()

    def test_short_cycle_named(self):
        report = check_realizability_preconditions(
            type_distribution(cycle(3), 3, TABLE), 6, 1
        )
        assert not report.passed
        assert not report.check("no-short-cycles").passed
        assert "cycle of length 3" in report.check("no-short-cycles").detail
        assert report.check("cleanness").passed

    def test_cycle_band_is_closed_on_the_right(self):
        mu = type_distribution(cycle(3), 3, TABLE)
        at_bound = check_realizability_preconditions(mu, 3, 1)
        assert not at_bound.check("no-short-cycles").passed
        below = check_realizability_preconditions(mu, 2, 1)
        assert below.check("no-short-cycles").passed

    def test_uncleanness_named(self):
        t = local_type(path(4), 0, 3, TABLE)
        mu = TypeMeasure.from_pairs(3, [(t, Fraction(1))])
        report = check_realizability_preconditions(mu, 6, 1)
        assert not report.check("cleanness").passed

    def test_certificate_failure_named(self):
        t = local_type(star(3), 1, 3, TABLE)
        mu = TypeMeasure.from_pairs(3, [(t, Fraction(1))])
        report = check_realizability_preconditions(mu, 6, 1)
        assert not report.check("certificate").passed
        assert report.certificate is None

    def test_fixed_point_passes(self):
        mu = type_distribution(fixed_point(), 3, TABLE)
        report = check_realizability_preconditions(mu, 6, 1)
        assert report.passed
