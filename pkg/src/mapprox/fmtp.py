"""Mass transport on finite mappings and certificates for type measures.

The transport identity itself, nu(A intersect f^-1(B)) = sum over y in B of
|f^-1(y) intersect A| / n, holds for every finite mapping; check_fmtp
evaluates both sides independently.  For a measure on rank-R types the
restricted analog asks for a companion function s assigning each (tau, t)
pair the number of t-typed preimages tau promises: values below r are fully
determined by tau, larger ones are only known to be at least r.  A measure
satisfies the restricted principle when the balance equations

    sum_{tau < t1} adm_plus(tau, t2) mu(tau)
        = sum_{tau < t2} s(tau, t1) mu(tau)

hold for all rank-r types t1, t2 (tau < t means the rank-r projection of tau
is t).  Because each unknown s(tau, t1) with pi(tau) = t2 occurs in exactly
one equation, certification reduces to independent one-equation feasibility
checks; no search is involved.  The harder problem, perturbing the masses
while keeping the equations, is the linear program in approximate_measure.

Everything here is exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Union

from . import simplex
from .errors import ElementOutOfRange, Infeasible, RankTooLow
from .localtypes import (
    LocalType,
    TypeMeasure,
    adm_minus,
    adm_minus_table,
    adm_plus,
    measure_tv,
    project,
    transport,
)
from .structure import FiniteMapping, cyclic_part


# ---------------------------------------------------------------------------
# the transport identity


@dataclass(frozen=True)
class FmtpCheck:
    """Both sides of the transport identity, evaluated independently."""

    lhs: Fraction
    rhs: Fraction

    @property
    def equal(self) -> bool:
        return self.lhs == self.rhs

    def __bool__(self) -> bool:
        return self.equal


def check_fmtp(F: FiniteMapping, A: Iterable[int], B: Iterable[int]) -> FmtpCheck:
    """nu(A intersect f^-1(B)) vs the preimage-count sum over B."""
    A, B = set(A), set(B)
    for v in A | B:
        F.check_element(v)
    n = F.n
    lhs = Fraction(sum(1 for u in A if F.f[u] in B), n)
    rhs = Fraction(0)
    for y in B:
        rhs += Fraction(sum(1 for u in range(n) if F.f[u] == y and u in A), n)
    return FmtpCheck(lhs, rhs)


def exhaustive_fmtp_check(F: FiniteMapping) -> bool:
    """The identity over every subset pair, with bitmask counting.

    Both sides are still computed by different routes: the left through the
    union of preimage masks, the right by per-element preimage counts.
    """
    n = F.n
    premask = [0] * n
    for u, y in enumerate(F.f):
        premask[y] |= 1 << u
    full = 1 << n
    for B in range(full):
        sel = 0
        pres = []
        y_bits = B
        while y_bits:
            low = y_bits & -y_bits
            y = low.bit_length() - 1
            sel |= premask[y]
            pres.append(premask[y])
            y_bits ^= low
        for A in range(full):
            lhs = (A & sel).bit_count()
            rhs = sum((p & A).bit_count() for p in pres)
            if lhs != rhs:
                return False
    return True


# ---------------------------------------------------------------------------
# restricted certificates


@dataclass(frozen=True)
class Violation:
    """A named failed check with the concrete equation that broke."""

    check: str
    detail: str
    t1: Optional[LocalType] = None
    t2: Optional[LocalType] = None
    lhs: Optional[Fraction] = None
    rhs: Optional[Fraction] = None

    def __str__(self) -> str:
        return f"{self.check}: {self.detail}"


@dataclass(frozen=True)
class CompanionCertificate:
    """Companion values s(tau, t) certifying the restricted principle.

    Entries hold the nonzero values only; a pair that does not appear has
    s(tau, t) = 0.
    """

    R: int
    r: int
    entries: tuple[tuple[LocalType, LocalType, Fraction], ...]

    def value(self, tau: LocalType, t: LocalType) -> Fraction:
        for entry_tau, entry_t, s in self.entries:
            if entry_tau == tau and entry_t == t:
                return s
        return Fraction(0)


def _support_universe(mu: TypeMeasure, r: int):
    """Rank-r types under the support plus the transport images, keyed."""
    reps: dict[tuple[int, int], LocalType] = {}
    proj: list[tuple[LocalType, LocalType, Fraction]] = []
    images: dict[tuple[int, int], LocalType] = {}
    for tau, mass in mu.entries:
        low = project(tau, r)
        reps.setdefault(low.key, low)
        proj.append((tau, low, mass))
        img = project(transport(tau), r)
        images.setdefault(img.key, img)
    for key, t in images.items():
        reps.setdefault(key, t)
    universe = sorted(reps.values(), key=lambda t: t.canonical_id)
    return universe, proj


def restricted_fmtp_certificate(
    mu: TypeMeasure, r: int
) -> Union[CompanionCertificate, Violation]:
    """Solve for a companion function, or name the equation that fails.

    The balance equations decouple: the unknowns of equation (t1, t2) are
    the s(tau, t1) with tau projecting to t2 and an unforced preimage count,
    and they appear in no other equation.  Each equation is solvable iff the
    forced flow does not overshoot the left side and the free weight can
    absorb the remainder at values >= r.
    """
    if mu.rank < 2 * r + 1:
        raise RankTooLow(f"certificates need measure rank >= {2 * r + 1}")
    universe, proj = _support_universe(mu, r)
    order = {t.key: index for index, t in enumerate(universe)}
    rep = {t.key: t for t in universe}

    # Flow demanded by the plus side, and the support grouped by projection,
    # both keyed up front so the equation loop is dictionary lookups only.
    flow: dict[tuple, Fraction] = {}
    by_low: dict[tuple, list[tuple[LocalType, Fraction]]] = {}
    for tau, low, mass in proj:
        img_key = project(transport(tau), r).key
        pair = (low.key, img_key)
        flow[pair] = flow.get(pair, Fraction(0)) + mass
        by_low.setdefault(low.key, []).append((tau, mass))

    zero = Fraction(0)
    entries: list[tuple[LocalType, LocalType, Fraction]] = []

    if r == 0:
        # Every value is unconstrained, so any positive-mass class absorbs
        # whatever the flow demands; only flow into an empty class fails.
        for t1 in universe:
            for t2 in universe:
                lhs = flow.get((t1.key, t2.key), zero)
                members = by_low.get(t2.key, ())
                if not members:
                    if lhs != 0:
                        return Violation(
                            check="balance",
                            detail=(
                                f"flow into {t1!r} from {t2!r}-typed mass is "
                                f"forced to 0, needed {lhs}"
                            ),
                            t1=t1,
                            t2=t2,
                            lhs=lhs,
                            rhs=zero,
                        )
                    continue
                if lhs != 0:
                    head_tau, head_mass = members[0]
                    entries.append((head_tau, t1, lhs / head_mass))
        return CompanionCertificate(R=mu.rank, r=r, entries=tuple(entries))

    # Most (t1, t2) pairs have zero flow and zero forced count on every
    # member; only pairs touched by a preimage type or by flow need work.
    equations: dict[tuple, list] = {}
    for t2_key, members in by_low.items():
        for tau, mass in members:
            for t1_key, count in adm_minus_table(tau, r).items():
                if t1_key not in order:
                    continue
                a = min(r + 1, count)
                slot = equations.setdefault(
                    (t1_key, t2_key), [Fraction(0), [], []]
                )
                if a < r:
                    slot[0] += a * mass
                    slot[1].append((tau, rep[t1_key], Fraction(a)))
                else:
                    slot[2].append((tau, mass))
    for pair in flow:
        equations.setdefault(pair, [Fraction(0), [], []])

    for pair in sorted(equations, key=lambda p: (order[p[0]], order[p[1]])):
        forced, forced_entries, free = equations[pair]
        t1, t2 = rep[pair[0]], rep[pair[1]]
        lhs = flow.get(pair, zero)
        entries.extend(forced_entries)
        remainder = lhs - forced
        if not free:
            if remainder != 0:
                return Violation(
                    check="balance",
                    detail=(
                        f"flow into {t1!r} from {t2!r}-typed mass is "
                        f"forced to {forced}, needed {lhs}"
                    ),
                    t1=t1,
                    t2=t2,
                    lhs=lhs,
                    rhs=forced,
                )
            continue
        floor = r * sum(mass for _, mass in free)
        if remainder < floor:
            return Violation(
                check="balance",
                detail=(
                    f"flow into {t1!r} from {t2!r}-typed mass is at "
                    f"least {forced + floor}, but the left side is {lhs}"
                ),
                t1=t1,
                t2=t2,
                lhs=lhs,
                rhs=forced + floor,
            )
        head_tau, head_mass = free[0]
        entries.append((head_tau, t1, Fraction(r) + (remainder - floor) / head_mass))
        for tau, _ in free[1:]:
            entries.append((tau, t1, Fraction(r)))
    return CompanionCertificate(R=mu.rank, r=r, entries=tuple(entries))


def verify_certificate(mu: TypeMeasure, cert: CompanionCertificate) -> bool:
    """Re-evaluate both certificate conditions from scratch.

    Certificates are sparse: a (tau, t) pair without an entry claims
    s(tau, t) = 0.  Pairs outside the support-and-images universe are not
    part of the restricted principle and are ignored.
    """
    r = cert.r
    if cert.R != mu.rank:
        return False
    universe, proj = _support_universe(mu, r)
    universe_keys = {t.key for t in universe}
    zero = Fraction(0)
    s_by_tau: dict[tuple, dict[tuple, Fraction]] = {}
    for tau, t, s in cert.entries:
        s_by_tau.setdefault(tau.key, {})[t.key] = s

    for tau, _, _ in proj:
        minus = adm_minus_table(tau, r)
        claimed = s_by_tau.get(tau.key, {})
        touched = {k for k in minus if k in universe_keys}
        touched.update(k for k in claimed if k in universe_keys)
        for k in touched:
            a = min(r + 1, minus.get(k, 0))
            s = claimed.get(k, zero)
            if min(r, a) != min(r, s):
                return False
            if a < r and s != a:
                return False

    lhs: dict[tuple, Fraction] = {}
    rhs: dict[tuple, Fraction] = {}
    for tau, low, mass in proj:
        img_key = project(transport(tau), r).key
        pair = (low.key, img_key)
        lhs[pair] = lhs.get(pair, zero) + mass
        for t_key, s in s_by_tau.get(tau.key, {}).items():
            if s != 0 and t_key in universe_keys:
                pair = (t_key, low.key)
                rhs[pair] = rhs.get(pair, zero) + s * mass
    for pair in lhs.keys() | rhs.keys():
        if lhs.get(pair, zero) != rhs.get(pair, zero):
            return False
    return True


# ---------------------------------------------------------------------------
# rational approximation over the feasible polytope


def approximate_measure(
    mu: TypeMeasure,
    eps,
    r: int,
    force_lp: bool = False,
    max_retries: int = 20,
) -> TypeMeasure:
    """A rational measure with the same support, restricted-FMTP feasible,
    within total variation eps of mu.

    Measures extracted from finite mappings are already rational and
    feasible, so the fast path returns mu itself.  The linear program is
    kept for perturbed inputs and can be exercised with force_lp; it solves
    for masses x >= delta with the balance equations, sum 1, and L1
    proximity, using flow variables w = s*x to stay linear.
    """
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if mu.rank < 2 * r + 1:
        raise RankTooLow(f"approximation needs measure rank >= {2 * r + 1}")
    cert = restricted_fmtp_certificate(mu, r)
    if isinstance(cert, Violation):
        raise Infeasible(str(cert))
    if not force_lp:
        return mu

    universe, proj = _support_universe(mu, r)
    support = [tau for tau, _, _ in proj]
    masses = [mass for _, _, mass in proj]
    lows = [low for _, low, _ in proj]
    S = len(support)

    # Variable layout: masses x, then one excess variable per free (tau, t1)
    # pair, then p/q splittings of x - mu, then the proximity slack.
    free_pairs: list[tuple[int, int]] = []
    fixed_adm: dict[tuple[int, int], int] = {}
    for i, tau in enumerate(support):
        for j, t1 in enumerate(universe):
            a = adm_minus(tau, t1)
            if a < r:
                fixed_adm[(i, j)] = a
            else:
                free_pairs.append((i, j))
    excess_of = {pair: S + k for k, pair in enumerate(free_pairs)}
    p_base = S + len(free_pairs)
    q_base = p_base + S
    slack = q_base + S
    num_vars = slack + 1

    img_key = [project(transport(tau), r).key for tau in support]

    delta = min(masses) / 2
    for _ in range(max_retries):
        rows: list[tuple[list[Fraction], Fraction]] = []

        def blank() -> list[Fraction]:
            return [Fraction(0)] * num_vars

        # Balance per (t1, t2); x_i enters shifted by delta.
        for j1, t1 in enumerate(universe):
            for j2, t2 in enumerate(universe):
                coeffs = blank()
                shift = Fraction(0)
                for i in range(S):
                    if lows[i].key == t1.key:
                        a_plus = 1 if img_key[i] == t2.key else 0
                        coeffs[i] += a_plus
                        shift += a_plus * delta
                    if lows[i].key == t2.key:
                        a = fixed_adm.get((i, j1))
                        if a is not None:
                            coeffs[i] -= a
                            shift -= a * delta
                        else:
                            coeffs[i] -= r
                            shift -= r * delta
                            coeffs[excess_of[(i, j1)]] -= 1
                if any(coeffs) or shift:
                    rows.append((coeffs, -shift))

        coeffs = blank()
        for i in range(S):
            coeffs[i] = Fraction(1)
        rows.append((coeffs, Fraction(1) - S * delta))

        for i in range(S):
            coeffs = blank()
            coeffs[i] = Fraction(1)
            coeffs[p_base + i] = Fraction(-1)
            coeffs[q_base + i] = Fraction(1)
            rows.append((coeffs, masses[i] - delta))

        coeffs = blank()
        for i in range(S):
            coeffs[p_base + i] = Fraction(1)
            coeffs[q_base + i] = Fraction(1)
        coeffs[slack] = Fraction(1)
        rows.append((coeffs, eps))

        solution = simplex.solve_equalities(rows, num_vars)
        if solution is not None:
            new_masses = [delta + solution[i] for i in range(S)]
            result = TypeMeasure.from_pairs(
                mu.rank, zip(support, new_masses)
            )
            check = restricted_fmtp_certificate(result, r)
            if isinstance(check, Violation):
                raise Infeasible(f"solver returned an infeasible point: {check}")
            if measure_tv(mu, result) >= eps:
                raise Infeasible("solver exceeded the proximity target")
            return result
        delta /= 2
    raise Infeasible("no strictly positive solution at any tried lower bound")


# ---------------------------------------------------------------------------
# realizability preconditions


@dataclass(frozen=True)
class PreconditionCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class PreconditionReport:
    checks: tuple[PreconditionCheck, ...]
    certificate: Optional[CompanionCertificate] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> PreconditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> tuple[PreconditionCheck, ...]:
        return tuple(c for c in self.checks if not c.passed)


def check_realizability_preconditions(
    mu: TypeMeasure, cut_length: int, r: int
) -> PreconditionReport:
    """The three hypotheses of the realization construction, as a report.

    (1) cleanness: every positive-mass type sends its image type to positive
        projected mass; (2) no positive-mass type forces a cycle of length in
        (1, cut_length]; (3) a companion certificate exists.
    """
    if mu.rank < 2 * r + 1:
        raise RankTooLow(f"preconditions need measure rank >= {2 * r + 1}")
    checks: list[PreconditionCheck] = []

    image_rank = mu.rank - 1
    positive = {t.key for t, _ in mu.project(image_rank)}
    clean_fail = None
    for tau, _ in mu.entries:
        img = transport(tau)
        if img.key not in positive:
            clean_fail = f"image type of {tau!r} carries zero projected mass"
            break
    checks.append(
        PreconditionCheck("cleanness", clean_fail is None, clean_fail or "")
    )

    cycle_fail = None
    cyclic_cache: dict[int, tuple[frozenset[int], dict[int, int]]] = {}
    for tau, _ in mu.entries:
        F, v = tau.witness
        cached = cyclic_cache.get(id(F))
        if cached is None:
            Z, _ = cyclic_part(F)
            lengths: dict[int, int] = {}
            for z in Z:
                if z in lengths:
                    continue
                orbit = [z]
                x = F.f[z]
                while x != z:
                    orbit.append(x)
                    x = F.f[x]
                for member in orbit:
                    lengths[member] = len(orbit)
            cached = (Z, lengths)
            cyclic_cache[id(F)] = cached
        Z, lengths = cached
        if v in Z and 1 < lengths[v] <= cut_length:
            cycle_fail = (
                f"witness of {tau!r} lies on a cycle of length {lengths[v]}"
            )
            break
    checks.append(
        PreconditionCheck("no-short-cycles", cycle_fail is None, cycle_fail or "")
    )

    cert = restricted_fmtp_certificate(mu, r)
    if isinstance(cert, Violation):
        checks.append(PreconditionCheck("certificate", False, str(cert)))
        cert = None
    else:
        checks.append(PreconditionCheck("certificate", True))

    return PreconditionReport(checks=tuple(checks), certificate=cert)
