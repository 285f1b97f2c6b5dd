"""Realizing measures as finite mappings, and the surrounding constructions.

The central operation turns a rational measure on rank-R local types into a
concrete finite mapping whose rank-r type distribution matches the measure's
rank-r projection exactly.  Elements are created in blocks, one block per
support type, and images are assigned greedily: an element whose type forces
a t-typed image may point at any element of image type t that still has spare
capacity for a t1-typed preimage, where t1 is the assignee's own projected
type.  Capacity is the capped forced-preimage count of the target's type, so
the flow-balance equations certified beforehand guarantee the greedy never
runs out of targets.

The other operations here are the steps that surround realization in the
approximation pipeline: rewiring layer-marked products back into short
cycles, locating terminal and hub types, merging a host structure with many
copies of an approximation, and the end-to-end pipeline itself.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .errors import (
    EtaNotFunctional,
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
from .fmtp import (
    approximate_measure,
    check_realizability_preconditions,
    restricted_fmtp_certificate,
)
from .localtypes import (
    LocalType,
    TypeMeasure,
    TypeTable,
    adm_minus,
    adm_plus,
    local_type,
    measure_tv,
    project,
    transport,
    type_distribution,
)
from .structure import (
    FiniteMapping,
    Signature,
    _preimage_table,
    cycle_cut_product,
    cycle_lengths,
    distance,
    neighbors,
    preimage,
    residualize,
)

__all__ = [
    "realize",
    "verify_upsilon",
    "rewire",
    "find_terminals",
    "find_hubs",
    "merge",
    "PipelineConfig",
    "pipeline",
    "certificate_digest",
]


# ---------------------------------------------------------------------------
# realization


def _closes_forbidden_cycle(g: list, i: int, j: int, cut: int) -> bool:
    """Would the edge i -> j close a directed cycle of length in (1, cut)?

    Follows the partial assignment from j for at most cut - 2 steps; any
    return to i within that window would create a cycle short enough to be
    visible at the ranks the construction must preserve.
    """
    cur = j
    for steps in range(cut - 1):
        if cur == i:
            return steps > 0
        nxt = g[cur]
        if nxt is None:
            return False
        cur = nxt
    return False


def realize(
    mu: TypeMeasure,
    r: int,
    multiplier: int = 1,
    *,
    cut_length: Optional[int] = None,
) -> FiniteMapping:
    """A finite mapping whose rank-r type distribution equals mu's rank-r
    projection, with exact rational equality.

    The domain has N = multiplier * lcm(mass denominators) elements, the
    smallest size on which the measure is integral, scaled by the caller's
    multiplier.  Marks are copied from the witness of each element's type.

    Images are assigned in ascending element order.  A target j is eligible
    for element i when (a) j's projected type is the image type forced by
    i's type, (b) j's type either forces the full cap r + 1 of preimages
    typed like i, or strictly more than j has already received, and (c) the
    edge would not close a cycle of length in (1, cut_length) -- by default
    cut_length = r + 2, which forbids exactly the cycle lengths a rank-r
    type can detect.  Eligible targets still short of the preimage count
    their type promises are served first, capacity ascending then id
    ascending; once every target met its minimum, the surplus goes to
    targets whose type forces the cap, which tolerate any excess.  Types
    whose witness is a fixed point map their elements to themselves.

    The capped preimage-count equation is re-verified on the finished
    mapping rather than trusted; a failure raises PreconditionFailed.
    """
    if multiplier < 1:
        raise ValueError("multiplier must be at least 1")
    if mu.rank < 2 * r + 1:
        raise RankTooLow(f"realization needs measure rank >= {2 * r + 1}")
    cut = cut_length if cut_length is not None else r + 2
    if cut < 2:
        raise ValueError("cut_length must be at least 2")

    report = check_realizability_preconditions(mu, cut - 1, r)
    if not report.passed:
        failure = report.failures()[0]
        raise PreconditionFailed(failure.name, failure.detail)

    entries = [(tau, mass) for tau, mass in mu if mass > 0]
    signature = entries[0][0].structure.signature
    for tau, _ in entries:
        if tau.structure.signature.predicates != signature.predicates:
            raise SignatureMismatch(
                "witness structures of the measure disagree on predicates"
            )

    n_elements = multiplier * math.lcm(*(mass.denominator for _, mass in entries))

    # One contiguous block of elements per support type.
    block_type: list[LocalType] = []
    block_range: list[range] = []
    kind: list[int] = []
    for index, (tau, mass) in enumerate(entries):
        count = int(n_elements * mass)
        block_type.append(tau)
        block_range.append(range(len(kind), len(kind) + count))
        kind.extend([index] * count)
    assert len(kind) == n_elements

    t1_obj = [project(tau, r) for tau, _ in entries]
    t2_key = [project(transport(tau), r).key for tau, _ in entries]
    fixed_point = []
    for tau, _ in entries:
        witness_structure, w = tau.witness
        fixed_point.append(witness_structure.f[w] == w)

    pools: dict[tuple, list[int]] = {}
    for j in range(n_elements):
        pools.setdefault(t1_obj[kind[j]].key, []).append(j)

    capacity_cache: dict[tuple, int] = {}

    def capacity(target_kind: int, t1_index: int) -> int:
        key = (target_kind, t1_obj[t1_index].key)
        value = capacity_cache.get(key)
        if value is None:
            value = adm_minus(block_type[target_kind], t1_obj[t1_index])
            capacity_cache[key] = value
        return value

    # Eligible targets for a (t1, t2) pair, grouped by capacity ascending.
    # Each group carries a shared head index so fully saturated prefixes are
    # skipped once, not rescanned per element.
    bucket_cache: dict[tuple, list[list]] = {}

    def buckets_for(source_kind: int) -> list[list]:
        key = (t1_obj[source_kind].key, t2_key[source_kind])
        made = bucket_cache.get(key)
        if made is None:
            grouped: dict[int, list[int]] = {}
            for j in pools.get(t2_key[source_kind], ()):
                cap = capacity(kind[j], source_kind)
                if cap > 0:
                    grouped.setdefault(cap, []).append(j)
            made = [[cap, grouped[cap], 0] for cap in sorted(grouped)]
            bucket_cache[key] = made
        return made

    g: list[Optional[int]] = [None] * n_elements
    counts: dict[tuple, int] = {}

    for i in range(n_elements):
        source = kind[i]
        t1_key = t1_obj[source].key
        if fixed_point[source]:
            g[i] = i
            counts[(i, t1_key)] = counts.get((i, t1_key), 0) + 1
            continue
        chosen = None
        # First serve targets still short of the preimage count their type
        # promises: capacity for a type forcing fewer than the cap, r for a
        # type forcing the cap.  Capacity ascending, then id ascending.
        for entry in buckets_for(source):
            cap, members, head = entry
            need = cap if cap <= r else r
            while (
                head < len(members)
                and counts.get((members[head], t1_key), 0) >= need
            ):
                head += 1
            entry[2] = head
            for idx in range(head, len(members)):
                j = members[idx]
                if counts.get((j, t1_key), 0) >= need:
                    continue
                if j == i or _closes_forbidden_cycle(g, i, j, cut):
                    continue
                chosen = j
                break
            if chosen is not None:
                break
        if chosen is None:
            # Every target met its minimum; cap-typed targets absorb surplus.
            for entry in buckets_for(source):
                cap, members, _ = entry
                if cap <= r:
                    continue
                for j in members:
                    if j == i or _closes_forbidden_cycle(g, i, j, cut):
                        continue
                    chosen = j
                    break
                if chosen is not None:
                    break
        if chosen is None:
            raise Stuck(
                i,
                _stuck_diagnostics(
                    i, source, block_type, t1_obj, t2_key, pools, counts, cut
                ),
            )
        g[i] = chosen
        counts[(chosen, t1_key)] = counts.get((chosen, t1_key), 0) + 1

    marks: dict[str, set[int]] = {name: set() for name in signature.predicates}
    for index, (tau, _) in enumerate(entries):
        witness_structure, w = tau.witness
        for name in witness_structure.marks_of(w):
            marks[name].update(block_range[index])
    realized = FiniteMapping(
        f=tuple(g),
        marks={name: frozenset(v) for name, v in marks.items()},
        signature=signature,
    )

    upsilon = {i: block_type[kind[i]] for i in range(n_elements)}
    if not verify_upsilon(realized, upsilon, r, cut - 1):
        raise PreconditionFailed(
            "post-verification",
            "the finished assignment violates the capped preimage-count "
            "equation; the input measure was not actually feasible",
        )
    return realized


def _stuck_diagnostics(
    i: int,
    source: int,
    block_type: Sequence[LocalType],
    t1_obj: Sequence[LocalType],
    t2_key: Sequence[tuple],
    pools: dict,
    counts: dict,
    cut: int,
) -> str:
    pool = pools.get(t2_key[source], [])
    t1_key = t1_obj[source].key
    filled = sum(counts.get((j, t1_key), 0) for j in pool)
    return (
        f"element of type id {block_type[source].canonical_id} needs an image "
        f"of projected type id {t1_obj[source].canonical_id}; its target pool "
        f"has {len(pool)} elements holding {filled} assignments, and every "
        f"remaining candidate is saturated or would close a cycle shorter "
        f"than {cut}; a larger multiplier usually resolves the cycle guard"
    )


def verify_upsilon(
    F: FiniteMapping,
    upsilon: dict,
    r: int,
    cut_length: int,
) -> bool:
    """Check the four conditions under which a type labelling is faithful.

    upsilon maps every element of F to a rank-R local type with R >= 2r + 1.
    The conditions: (1) each element carries exactly the marks of its label's
    witness; (2) F has no cycle of length in (1, cut_length]; (3) each
    label forces the image's projected label; (4) for every element and
    every relevant rank-r type t, the capped count of t-typed preimages
    matches the capped count the label forces.  When all four hold, the
    rank-r type of every element equals the rank-r projection of its label.
    """
    for v in F.elements():
        if v not in upsilon:
            raise ValueError(f"upsilon must be total; element {v} is missing")
        if upsilon[v].rank < 2 * r + 1:
            raise RankTooLow(
                f"labels must have rank >= {2 * r + 1}, got {upsilon[v].rank}"
            )

    for length in cycle_lengths(F):
        if 1 < length <= cut_length:
            return False

    for v in F.elements():
        witness_structure, w = upsilon[v].witness
        if F.marks_of(v) != witness_structure.marks_of(w):
            return False

    plus_cache: dict[tuple, bool] = {}
    for v in F.elements():
        tau = upsilon[v]
        image_t = project(upsilon[F.f[v]], r)
        key = (tau.key, image_t.key)
        ok = plus_cache.get(key)
        if ok is None:
            ok = adm_plus(tau, image_t) == 1
            plus_cache[key] = ok
        if not ok:
            return False

    # Rank-r types the label forces preimages of, with a representative each.
    witness_pre_cache: dict[tuple, dict] = {}

    def forced_types(tau: LocalType) -> dict:
        cached = witness_pre_cache.get(tau.key)
        if cached is None:
            witness_structure, w = tau.witness
            cached = {}
            for u in preimage(witness_structure, w):
                t = local_type(witness_structure, u, r, table=tau.table)
                cached.setdefault(t.key, t)
            witness_pre_cache[tau.key] = cached
        return cached

    minus_cache: dict[tuple, int] = {}

    def forced_count(tau: LocalType, t: LocalType) -> int:
        key = (tau.key, t.key)
        value = minus_cache.get(key)
        if value is None:
            value = adm_minus(tau, t)
            minus_cache[key] = value
        return value

    pre = _preimage_table(F)
    low_cache: dict[tuple, LocalType] = {}
    for v in F.elements():
        tau = upsilon[v]
        actual: dict[tuple, int] = {}
        reps: dict[tuple, LocalType] = {}
        for u in pre[v]:
            low = low_cache.get(upsilon[u].key)
            if low is None:
                low = project(upsilon[u], r)
                low_cache[upsilon[u].key] = low
            actual[low.key] = actual.get(low.key, 0) + 1
            reps.setdefault(low.key, low)
        universe = dict(forced_types(tau))
        universe.update(reps)
        for t_key, t in universe.items():
            forced = forced_count(tau, t)
            seen = actual.get(t_key, 0)
            if min(r, forced) != min(r, seen):
                return False
    return True


# ---------------------------------------------------------------------------
# rewiring layer-marked products


_TYPE_MARK = re.compile(r"T\d+_(?:cyc(\d+)|acyc)\Z")


def rewire(F: FiniteMapping, cut_length: int, clean_rank: int) -> FiniteMapping:
    """Close the recorded short cycles of a layer-marked product.

    Expects the marks laid down by cycle_cut_product: every element carries
    exactly one layer mark U_i (i < cut_length) and one type mark whose name
    records whether the underlying element sat on a cycle, and of which
    length.  An element recorded on an l-cycle jumps to its (cut_length -
    l + 1)-st iterated image whenever its layer index is l - 1 modulo l;
    all other elements keep their image.  One jump fires per l consecutive
    layers, so each rewired orbit closes after exactly l steps, and the
    output restores the source's type distribution at every rank at which
    an l-cycle is distinguishable from a path.

    Only classes with l <= clean_rank + 1 and l dividing cut_length are
    closed: longer classes are invisible at rank clean_rank, and classes not
    dividing the layer count admit no layer-driven closure.  Both layer and
    type marks are dropped from the output.
    """
    if cut_length < 2:
        raise ValueError("cut_length must be at least 2")
    if clean_rank < 0:
        raise ValueError("clean_rank must be nonnegative")
    predicates = F.signature.predicates
    layer_names = [f"U{i}" for i in range(cut_length)]
    missing = [name for name in layer_names if name not in predicates]
    if missing:
        raise MissingCutPredicates(f"missing layer predicates: {missing}")

    class_of_name: dict[str, Optional[int]] = {}
    for name in predicates:
        matched = _TYPE_MARK.fullmatch(name)
        if matched:
            class_of_name[name] = int(matched.group(1)) if matched.group(1) else None
    if not class_of_name:
        raise MissingCutPredicates("no type predicates of the form T<k>_cyc<l> or T<k>_acyc")

    layer: list[Optional[int]] = [None] * F.n
    for index, name in enumerate(layer_names):
        for v in F.marks[name]:
            if layer[v] is not None:
                raise MissingCutPredicates(f"element {v} carries two layer marks")
            layer[v] = index
    cycle_class: list[Optional[int]] = [None] * F.n
    classified = [False] * F.n
    for name, length in class_of_name.items():
        for v in F.marks[name]:
            if classified[v]:
                raise MissingCutPredicates(f"element {v} carries two type marks")
            classified[v] = True
            cycle_class[v] = length
    for v in F.elements():
        if layer[v] is None:
            raise MissingCutPredicates(f"element {v} has no layer mark")
        if not classified[v]:
            raise MissingCutPredicates(f"element {v} has no type mark")

    f = list(F.f)
    for v in F.elements():
        length = cycle_class[v]
        if length is None:
            continue
        if length > clean_rank + 1 or cut_length % length != 0:
            continue
        if layer[v] % length == length - 1:
            f[v] = F.iterate(v, cut_length - length + 1)

    dropped = set(layer_names) | set(class_of_name)
    kept = tuple(name for name in predicates if name not in dropped)
    return FiniteMapping(
        f=tuple(f),
        marks={name: F.marks[name] for name in kept},
        signature=Signature(kept),
    )


# ---------------------------------------------------------------------------
# terminals, hubs, merging


def find_terminals(mu: TypeMeasure, r: int) -> set:
    """Positive-mass types whose forced image type has no mass at rank r.

    Measures extracted from a finite mapping have no terminals: every
    realized element's image is realized too.  Terminals appear only in
    hand-assembled measures, and signal that realization would need an
    external supply of image elements.
    """
    if mu.rank < r + 1:
        raise RankTooLow(f"terminal search needs measure rank >= {r + 1}")
    projected = mu.project(r)
    positive = {t.key for t, mass in projected if mass > 0}
    terminals = set()
    for tau, mass in mu:
        if mass == 0:
            continue
        image_t = project(transport(tau), r)
        if image_t.key not in positive:
            terminals.add(tau)
    return terminals


def find_hubs(mu: TypeMeasure, terminals: set, r: int) -> dict:
    """For each terminal, a type able to absorb its overflow preimages.

    Candidates are the rank-(2r+1) types of every element of every witness
    structure appearing in the measure; a hub for terminal tau must force
    more than r preimages of tau's rank-r projection.  The candidate with
    the lowest canonical id wins, making the choice deterministic.
    """
    if not terminals:
        return {}
    support_keys = {tau.key for tau, mass in mu if mass > 0}
    for tau in terminals:
        if tau.key not in support_keys:
            raise ValueError("terminals must be positive-mass types of the measure")
    table = mu.entries[0][0].table
    structures = []
    seen: set[int] = set()
    for tau, _ in mu.entries:
        if id(tau.structure) not in seen:
            seen.add(id(tau.structure))
            structures.append(tau.structure)
    candidates = [
        local_type(S, v, 2 * r + 1, table=table)
        for S in structures
        for v in S.elements()
    ]
    assignment = {}
    for tau in sorted(terminals, key=lambda t: t.canonical_id):
        target = project(tau, r)
        hub = None
        for candidate in candidates:
            if adm_minus(candidate, target) > r:
                if hub is None or candidate.canonical_id < hub.canonical_id:
                    hub = candidate
        if hub is None:
            raise NoHubAvailable(
                f"no candidate type forces more than {r} preimages of the "
                f"projection of type id {tau.canonical_id}"
            )
        assignment[tau] = hub
    return assignment


def merge(
    E: FiniteMapping,
    F2: FiniteMapping,
    hub_assignment: dict,
    n_close: int,
    n_away: int,
    *,
    r: Optional[int] = None,
) -> FiniteMapping:
    """E plus n_close * n_away copies of F2, terminals attached to hubs.

    hub_assignment maps a terminal element of F2 to a sequence of hub
    elements of E, one per close index (a single element is accepted when
    n_close is 1).  Copy (i, j) keeps F2's function internally except that
    each terminal points at its i-th hub.  When r is given, the hub
    elements must be pairwise at distance greater than 2r in E, so that
    attaching copies cannot alter any rank-r type inside E or a copy.
    """
    if not E.same_signature(F2):
        raise SignatureMismatch("merge needs a shared signature")
    if n_close < 1 or n_away < 1:
        raise ValueError("n_close and n_away must be at least 1")
    normalized: dict[int, tuple[int, ...]] = {}
    for terminal, hubs in hub_assignment.items():
        F2.check_element(terminal)
        sequence = (hubs,) if isinstance(hubs, int) else tuple(hubs)
        distinct: list[int] = []
        for h in sequence:
            E.check_element(h)
            if h not in distinct:
                distinct.append(h)
        if len(distinct) < n_close:
            raise InsufficientHubs(
                f"terminal {terminal}: {len(distinct)} distinct hub elements "
                f"for {n_close} close indices"
            )
        normalized[terminal] = tuple(distinct[:n_close])
    if r is not None:
        used = [h for hubs in normalized.values() for h in hubs]
        for a in range(len(used)):
            for b in range(a + 1, len(used)):
                d = distance(E, used[a], used[b])
                if d <= 2 * r:
                    raise HubsTooClose(
                        f"hub elements {used[a]} and {used[b]} are at "
                        f"distance {d} <= {2 * r}"
                    )

    f = list(E.f)
    marks = {name: set(E.marks[name]) for name in E.signature.predicates}
    for i in range(n_close):
        for j in range(n_away):
            base = E.n + (i * n_away + j) * F2.n
            for v in F2.elements():
                if v in normalized:
                    f.append(normalized[v][i])
                else:
                    f.append(base + F2.f[v])
            for name in F2.signature.predicates:
                marks[name].update(base + v for v in F2.marks[name])
    return FiniteMapping(
        f=tuple(f),
        marks={name: frozenset(v) for name, v in marks.items()},
        signature=E.signature,
    )


# ---------------------------------------------------------------------------
# the end-to-end pipeline


@dataclass(frozen=True)
class PipelineConfig:
    """Parameters of the approximation pipeline.

    rank_schedule is (r, rr, clean_rank, cut_length, elementary_rank); when
    omitted a desk-scale schedule is derived from r, or the factorial
    schedule rr = 4r^2, clean = 2rr + 1, cut = clean! when
    factorial_schedule is set.  The factorial schedule is exposed for
    completeness; its cut is expected to exceed every budget beyond tiny
    radii.  epsilons is (eps, eps_res, eps_f1, eps_mu).
    """

    rank_schedule: Optional[tuple[int, int, int, int, int]] = None
    epsilons: Optional[tuple] = None
    n_away_factor: int = 2
    max_product_size: int = 2_000_000
    max_realize_size: int = 4_000_000
    max_output_size: int = 8_000_000
    factorial_schedule: bool = False
    multiplier: int = 1


def _schedule(r: int, config: PipelineConfig) -> tuple[int, int, int, int, int]:
    if config.rank_schedule is not None:
        schedule = tuple(config.rank_schedule)
        if len(schedule) != 5:
            raise ValueError("rank_schedule must have five entries")
        if schedule[0] != r:
            raise ValueError("rank_schedule must start with the requested r")
    elif config.factorial_schedule:
        rr = 4 * r * r
        clean = 2 * rr + 1
        schedule = (r, rr, clean, math.factorial(clean), r)
    else:
        rr = r
        clean = 2 * rr + 1
        schedule = (r, rr, clean, math.lcm(*range(1, clean + 1)), r)
    _, rr, clean, cut, _ = schedule
    if rr < r:
        raise ValueError("schedule needs rr >= r")
    if clean < 2 * rr + 1:
        raise ValueError("schedule needs clean_rank >= 2*rr + 1")
    if cut < 2:
        raise ValueError("schedule needs cut_length >= 2")
    return schedule


def _recovery_pairs(original: Signature, residual: Signature) -> list[tuple[str, str]]:
    added = [name for name in residual.predicates if name not in original.predicates]
    indices = sorted({int(name[1:]) for name in added})
    return [(f"A{k}", f"B{k}") for k in indices]


def _apply_recovery(F: FiniteMapping, pairs: list[tuple[str, str]]) -> FiniteMapping:
    """Apply the residual recovery rewiring directly.

    Equivalent to interpreting F under the recovery interpretation, but in
    linear time: every element marked A_k points at the unique B_k element,
    everything else keeps its image, and the cut predicates are dropped.
    """
    target_of: dict[int, int] = {}
    redirect: dict[int, int] = {}
    for index, (a_name, b_name) in enumerate(pairs):
        sources = sorted(F.marks[a_name])
        if not sources:
            continue
        targets = sorted(F.marks[b_name])
        if len(targets) != 1:
            raise EtaNotFunctional(sources[0], tuple(targets))
        for v in sources:
            if v in redirect:
                raise EtaNotFunctional(
                    v, tuple(sorted({target_of[redirect[v]], targets[0]}))
                )
            redirect[v] = index
        target_of[index] = targets[0]
    f = tuple(
        target_of[redirect[v]] if v in redirect else F.f[v] for v in F.elements()
    )
    dropped = {name for pair in pairs for name in pair}
    kept = tuple(name for name in F.signature.predicates if name not in dropped)
    return FiniteMapping(
        f=f,
        marks={name: F.marks[name] for name in kept},
        signature=Signature(kept),
    )


def _proximity(F: FiniteMapping, radius: int) -> Fraction:
    """Probability that two independent uniform elements are within radius."""
    pre = _preimage_table(F)
    total = 0
    for v in F.elements():
        seen = {v}
        frontier = [v]
        for _ in range(radius):
            nxt = []
            for x in frontier:
                for y in neighbors(F, x, pre):
                    if y not in seen:
                        seen.add(y)
                        nxt.append(y)
            if not nxt:
                break
            frontier = nxt
        total += len(seen)
    return Fraction(total, F.n * F.n)


def _histogram(F: FiniteMapping, rank: int, table: TypeTable) -> dict[str, str]:
    dist = type_distribution(F, rank, table)
    return {str(t.canonical_id): str(mass) for t, mass in dist}


def certificate_digest(cert) -> str:
    """A stable fingerprint of a certificate: sha256 over its entries in order."""
    lines = [f"rank={cert.R} r={cert.r}"]
    for tau, t, s in cert.entries:
        lines.append(f"{tau.canonical_id}>{t.canonical_id}={s}")
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def pipeline(
    F: FiniteMapping,
    p: int,
    r: int,
    eps,
    config: Optional[PipelineConfig] = None,
) -> tuple[FiniteMapping, dict]:
    """Residualize, cut, extract, approximate, realize, rewire, merge,
    recover; return the approximation and a stage-by-stage report.

    The residualized input serves as the host structure for the merge: it
    is finite already, so no separate elementary approximation is needed,
    and the measure extracted from the cut product never has terminals.
    The report carries per-stage sizes and rank-r type histograms, the
    certificate digest, and the measured distance of the output to the
    input, which is checked against eps rather than assumed.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    config = config or PipelineConfig()
    schedule = _schedule(r, config)
    _, rr, clean, cut, elementary = schedule
    if config.epsilons is not None:
        eps_total, eps_res, eps_f1, eps_mu = (Fraction(e) for e in config.epsilons)
    else:
        eps_total, eps_res, eps_f1, eps_mu = eps, eps, eps, eps / 4
    schedule_info = {
        "r": r,
        "rr": rr,
        "clean_rank": clean,
        "cut_length": cut,
        "elementary_rank": elementary,
    }

    product_size = F.n * cut
    if product_size > config.max_product_size:
        origin = "cut = clean! = " if config.factorial_schedule else "cut = "
        raise ScheduleInfeasible(
            f"{origin}{cut} yields a product of {product_size} elements, "
            f"over the budget of {config.max_product_size}",
            schedule=schedule_info,
        )

    table = TypeTable()
    stages: list[dict] = []

    def record(name: str, structure: FiniteMapping) -> None:
        stages.append(
            {
                "name": name,
                "size": structure.n,
                "histogram": _histogram(structure, r, table),
            }
        )

    record("input", F)
    residual, _recovery = residualize(F, eps_res)
    pairs = _recovery_pairs(F.signature, residual.signature)
    record("residual", residual)

    product = cycle_cut_product(residual, cut, clean, table=table)
    record("product", product)

    nu = type_distribution(product, clean, table)
    mu_hat = approximate_measure(nu, eps_mu, rr)
    certificate = restricted_fmtp_certificate(mu_hat, rr)

    estimated = config.multiplier * math.lcm(
        *(mass.denominator for _, mass in mu_hat if mass > 0)
    )
    if estimated > config.max_realize_size:
        raise ScheduleInfeasible(
            f"realization would need {estimated} elements, over the budget "
            f"of {config.max_realize_size}",
            schedule=schedule_info,
        )
    realized = realize(mu_hat, rr, config.multiplier)
    record("realized", realized)

    rewired = rewire(realized, cut, clean)
    record("rewired", rewired)

    terminals = find_terminals(mu_hat, rr)
    if terminals:
        raise PreconditionFailed(
            "terminals",
            "a measure extracted from a finite mapping cannot have terminal "
            "types; the input measure was tampered with",
        )

    # Copies must not duplicate the recovery targets, so the residual host
    # keeps its B marks and the copies lose theirs.
    b_names = {b for _, b in pairs}
    stripped = FiniteMapping(
        f=rewired.f,
        marks={
            name: (frozenset() if name in b_names else rewired.marks[name])
            for name in rewired.signature.predicates
        },
        signature=rewired.signature,
    )

    n_away = config.n_away_factor * math.ceil(1 / eps_res)
    n_close = math.ceil(Fraction(residual.n, stripped.n) / eps_res)
    merged_size = residual.n + stripped.n * n_close * n_away
    if merged_size > config.max_output_size:
        raise ScheduleInfeasible(
            f"merging would need {merged_size} elements, over the budget "
            f"of {config.max_output_size}",
            schedule=schedule_info,
        )
    merged = merge(residual, stripped, {}, n_close, n_away)
    record("merged", merged)

    output = _apply_recovery(merged, pairs)
    record("output", output)

    from .equivalence import ldist

    final = ldist(output, F, 1, r, table=table)
    entry = {
        "final": str(final),
        "target": str(eps_total),
        "ok": final <= eps_total,
    }
    if p >= 2:
        prox_out = _proximity(output, 2 * r)
        prox_in = _proximity(F, 2 * r)
        bound = 2 * p * final + math.comb(p, 2) * (prox_out + prox_in)
        entry.update(
            {
                "p": p,
                "p_bound": str(bound),
                "proximity_output": str(prox_out),
                "proximity_input": str(prox_in),
            }
        )

    report = {
        "version": 1,
        "parameters": {
            "p": p,
            "r": r,
            "eps": str(eps),
            "multiplier": config.multiplier,
            "n_close": n_close,
            "n_away": n_away,
            "epsilons": {
                "eps": str(eps_total),
                "eps_res": str(eps_res),
                "eps_f1": str(eps_f1),
                "eps_mu": str(eps_mu),
            },
            "schedule": schedule_info,
        },
        "cut_pairs": [list(pair) for pair in pairs],
        "certificate": {
            "digest": certificate_digest(certificate),
            "rank": certificate.R,
            "r": certificate.r,
            "entries": len(certificate.entries),
        },
        "stages": stages,
        "ldist": entry,
    }
    return output, report
