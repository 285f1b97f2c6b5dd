"""Rank-r local types of pointed mappings.

A rank-r type is the equivalence class of a pointed structure under the
r-round local game: starting from the chosen element, each round adds one
element adjacent to an already-placed one, and two pointed structures have
the same type iff the second player can always mirror moves preserving all
atoms (marks, equalities, f-relations) among the placed elements.

Types are decided by interning game values bottom-up instead of searching
game trees pairwise.  The value of a placed tuple records the atoms its last
element adds plus the set of values of all one-element extensions at one
rank lower; two tuples get the same interned value exactly when the second
player can mirror between them for the remaining rounds.  Re-placing an
already-placed element is never a winning move for the first player (the new
atoms are forced), so extensions range over fresh neighbors only.

The TypeTable assigns session-stable canonical ids on first sight and caches
everything per structure; it is shared process-wide by default.
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

from .errors import (
    MeasureError,
    RankIncrease,
    RankMismatch,
    RankTooLow,
    RankZero,
)
from .structure import FiniteMapping, _preimage_table


def atom_row(f, marks, tup: tuple[int, ...]) -> Optional[tuple]:
    """The atoms the last element of `tup` adds over the earlier ones:
    its marks, self-loop flag, first coincidence index, image index, and
    preimage indices among the earlier elements.  None for the empty tuple."""
    if not tup:
        return None
    x = tup[-1]
    last = len(tup) - 1
    eq = next((j for j in range(last) if tup[j] == x), None)
    fx = f[x]
    img = next((j for j in range(last) if tup[j] == fx), None)
    pre = frozenset(j for j in range(last) if f[tup[j]] == x)
    return (marks[x], fx == x, eq, img, pre)


class TypeTable:
    """Insert-if-absent registry of game values and canonical type ids."""

    def __init__(self):
        self._lock = threading.RLock()
        self._intern: dict[tuple, int] = {}
        self._meta: list[tuple] = []
        self._lower: dict[int, int] = {}
        self._canonical: dict[int, int] = {}
        self._caches: "weakref.WeakKeyDictionary[FiniteMapping, dict]" = (
            weakref.WeakKeyDictionary()
        )
        self._adm_tables: dict[tuple[int, int], dict] = {}

    # -- interning ---------------------------------------------------------

    def _intern_value(self, key: tuple) -> int:
        found = self._intern.get(key)
        if found is not None:
            return found
        with self._lock:
            found = self._intern.get(key)
            if found is None:
                found = len(self._meta)
                self._meta.append(key)
                self._intern[key] = found
            return found

    def canonical_id(self, nv: int) -> int:
        found = self._canonical.get(nv)
        if found is not None:
            return found
        with self._lock:
            found = self._canonical.get(nv)
            if found is None:
                found = len(self._canonical)
                self._canonical[nv] = found
            return found

    def rank_of(self, nv: int) -> int:
        return self._meta[nv][0]

    # -- per-structure state ------------------------------------------------

    def _structure_cache(self, F: FiniteMapping) -> dict:
        cache = self._caches.get(F)
        if cache is None:
            marks = [F.marks_of(v) for v in F.elements()]
            pre = [frozenset(s) for s in _preimage_table(F)]
            nbr = [
                (pre[v] | {F.f[v]}) - {v} for v in F.elements()
            ]
            cache = {"marks": marks, "pre": pre, "nbr": nbr, "nv": {}}
            self._caches[F] = cache
        return cache

    # -- game values ---------------------------------------------------------

    def nv_value(self, F: FiniteMapping, tup: tuple[int, ...], k: int) -> int:
        cache = self._structure_cache(F)
        return self._nv(F.f, cache, tup, k)

    def _nv(self, f, cache: dict, tup: tuple[int, ...], k: int) -> int:
        memo = cache["nv"]
        key = (tup, k)
        found = memo.get(key)
        if found is not None:
            return found
        row = atom_row(f, cache["marks"], tup)
        if k == 0:
            value = self._intern_value((0, row, None))
        else:
            nbr = cache["nbr"]
            ext: set[int] = set()
            for a in tup:
                ext |= nbr[a]
            ext -= set(tup)
            kids = frozenset(
                self._nv(f, cache, tup + (y,), k - 1) for y in ext
            )
            value = self._intern_value((k, row, kids))
        memo[key] = value
        return value

    def lower_value(self, nv: int) -> int:
        """The value one rank down for the same tuple in the same structure."""
        found = self._lower.get(nv)
        if found is not None:
            return found
        rank, row, kids = self._meta[nv]
        if rank == 0:
            raise RankZero("rank-0 values have no lower value")
        if rank == 1:
            lowered = self._intern_value((0, row, None))
        else:
            lowered = self._intern_value(
                (rank - 1, row, frozenset(self.lower_value(c) for c in kids))
            )
        self._lower[nv] = lowered
        return lowered

    def lower_to(self, nv: int, target_rank: int) -> int:
        rank = self.rank_of(nv)
        if target_rank > rank:
            raise RankIncrease(f"cannot raise rank {rank} to {target_rank}")
        while rank > target_rank:
            nv = self.lower_value(nv)
            rank -= 1
        return nv


_GLOBAL_TABLE = TypeTable()


def global_table() -> TypeTable:
    return _GLOBAL_TABLE


# ---------------------------------------------------------------------------
# local types


class LocalType:
    """A rank plus a pointed witness structure, canonicalized in a table."""

    __slots__ = (
        "rank",
        "structure",
        "element",
        "nv",
        "canonical_id",
        "table",
        "key",
    )

    def __init__(
        self,
        rank: int,
        structure: FiniteMapping,
        element: int,
        nv: int,
        canonical_id: int,
        table: TypeTable,
    ):
        self.rank = rank
        self.structure = structure
        self.element = element
        self.nv = nv
        self.canonical_id = canonical_id
        self.table = table
        # Identity within one table; measures and products key on this.
        self.key = (rank, nv)

    @property
    def witness(self) -> tuple[FiniteMapping, int]:
        return (self.structure, self.element)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LocalType):
            return NotImplemented
        return (
            self.table is other.table
            and self.rank == other.rank
            and self.nv == other.nv
        )

    def __hash__(self) -> int:
        return hash((id(self.table), self.rank, self.nv))

    def __repr__(self) -> str:
        return f"LocalType(rank={self.rank}, id={self.canonical_id})"


def local_type(
    F: FiniteMapping, v: int, r: int, table: Optional[TypeTable] = None
) -> LocalType:
    """The rank-r local type of v in F, canonicalized against `table`."""
    if r < 0:
        raise ValueError("rank must be nonnegative")
    table = table or _GLOBAL_TABLE
    F.check_element(v)
    nv = table.nv_value(F, (v,), r)
    return LocalType(r, F, v, nv, table.canonical_id(nv), table)


def types_equal(t1: LocalType, t2: LocalType) -> bool:
    """Equality as types: the second player wins the rank-round local game
    between the witnesses.  Types from different tables are aligned by
    recomputing the second witness in the first table."""
    if t1.rank != t2.rank:
        raise RankMismatch(f"rank {t1.rank} vs {t2.rank}")
    if t1.table is t2.table:
        return t1.nv == t2.nv
    return t1.nv == t1.table.nv_value(t2.structure, (t2.element,), t2.rank)


def project(t: LocalType, r: int) -> LocalType:
    """The same witness viewed at a lower rank."""
    if r > t.rank:
        raise RankIncrease(f"cannot project rank {t.rank} up to {r}")
    if r < 0:
        raise ValueError("rank must be nonnegative")
    nv = t.table.lower_to(t.nv, r)
    return LocalType(r, t.structure, t.element, nv, t.table.canonical_id(nv), t.table)


def transport(t: LocalType) -> LocalType:
    """The rank-(r-1) type of the image of the witness element."""
    if t.rank == 0:
        raise RankZero("transport needs rank >= 1")
    return local_type(t.structure, t.structure.f[t.element], t.rank - 1, t.table)


def adm_plus(tau: LocalType, t: LocalType) -> int:
    """1 iff tau forces its element's image to have type t."""
    if tau.rank < t.rank + 1:
        raise RankTooLow(
            f"adm_plus needs source rank >= {t.rank + 1}, got {tau.rank}"
        )
    return 1 if types_equal(project(transport(tau), t.rank), t) else 0


def adm_minus(tau: LocalType, t: LocalType) -> int:
    """The number of t-typed preimages tau forces, capped at t.rank + 1.

    Well-defined on the type (not just the witness) because tau.rank is large
    enough to pin down every preimage's rank-t.rank type together with the
    count up to the cap.
    """
    if tau.rank < 2 * t.rank + 1:
        raise RankTooLow(
            f"adm_minus needs source rank >= {2 * t.rank + 1}, got {tau.rank}"
        )
    return min(t.rank + 1, adm_minus_table(tau, t.rank).get(t.key, 0))


def adm_minus_table(tau: LocalType, r: int) -> dict[tuple[int, int], int]:
    """Preimage counts of tau's witness, grouped by rank-r type key.

    The bulk form of adm_minus: min(r + 1, table.get(t.key, 0)) is
    adm_minus(tau, t) for every rank-r type t.  Cached in tau's type table,
    so sweeping one measure against many target types costs one pass over
    the witness preimages in total.
    """
    if tau.rank < 2 * r + 1:
        raise RankTooLow(
            f"adm_minus needs source rank >= {2 * r + 1}, got {tau.rank}"
        )
    cache = tau.table._adm_tables
    cache_key = (tau.nv, r)
    counts = cache.get(cache_key)
    if counts is None:
        F, w = tau.structure, tau.element
        counts = {}
        for u in tau.table._structure_cache(F)["pre"][w]:
            k = local_type(F, u, r, tau.table).key
            counts[k] = counts.get(k, 0) + 1
        cache[cache_key] = counts
    return counts


# ---------------------------------------------------------------------------
# type measures


@dataclass(frozen=True)
class TypeMeasure:
    """A probability measure on rank-R types, entries sorted by canonical id."""

    rank: int
    entries: tuple[tuple[LocalType, Fraction], ...]

    def __post_init__(self):
        total = Fraction(0)
        seen: set[tuple[int, int]] = set()
        table = None
        for t, mass in self.entries:
            if t.rank != self.rank:
                raise RankMismatch(
                    f"entry of rank {t.rank} in a rank-{self.rank} measure"
                )
            if table is None:
                table = t.table
            elif t.table is not table:
                raise MeasureError("all entries must share one type table")
            if t.key in seen:
                raise MeasureError(f"duplicate type {t!r} in measure")
            seen.add(t.key)
            if mass <= 0:
                raise MeasureError(f"mass of {t!r} must be positive, got {mass}")
            total += mass
        if total != 1:
            raise MeasureError(f"masses sum to {total}, expected 1")

    @staticmethod
    def from_pairs(rank: int, pairs) -> "TypeMeasure":
        ordered = tuple(
            sorted(
                ((t, Fraction(m)) for t, m in pairs),
                key=lambda e: e[0].canonical_id,
            )
        )
        return TypeMeasure(rank=rank, entries=ordered)

    def __iter__(self) -> Iterator[tuple[LocalType, Fraction]]:
        return iter(self.entries)

    def types(self) -> tuple[LocalType, ...]:
        return tuple(t for t, _ in self.entries)

    def mass(self, t: LocalType) -> Fraction:
        for entry_type, mass in self.entries:
            if types_equal(entry_type, t):
                return mass
        return Fraction(0)

    def project(self, r: int) -> "TypeMeasure":
        """Push forward along the rank-lowering projection."""
        if r > self.rank:
            raise RankIncrease(f"cannot project rank {self.rank} up to {r}")
        grouped: dict[tuple[int, int], list] = {}
        for t, mass in self.entries:
            low = project(t, r)
            slot = grouped.setdefault(low.key, [low, Fraction(0)])
            slot[1] += mass
        return TypeMeasure.from_pairs(r, (tuple(slot) for slot in grouped.values()))


def type_distribution(
    F: FiniteMapping, r: int, table: Optional[TypeTable] = None
) -> TypeMeasure:
    """Group elements of F by rank-r type; mass of a type = count / n."""
    table = table or _GLOBAL_TABLE
    groups: dict[int, list[int]] = {}
    for v in F.elements():
        nv = table.nv_value(F, (v,), r)
        groups.setdefault(nv, []).append(v)
    pairs = []
    for nv, members in groups.items():
        t = LocalType(r, F, members[0], nv, table.canonical_id(nv), table)
        pairs.append((t, Fraction(len(members), F.n)))
    return TypeMeasure.from_pairs(r, pairs)


def measure_tv(a: TypeMeasure, b: TypeMeasure) -> Fraction:
    """Total variation distance (half L1) between two same-rank measures."""
    if a.rank != b.rank:
        raise RankMismatch(f"rank {a.rank} vs {b.rank}")
    diff = Fraction(0)
    matched_b: set[int] = set()
    for t, mass in a.entries:
        other = Fraction(0)
        for j, (u, mass_b) in enumerate(b.entries):
            if j not in matched_b and types_equal(t, u):
                other = mass_b
                matched_b.add(j)
                break
        diff += abs(mass - other)
    for j, (_, mass_b) in enumerate(b.entries):
        if j not in matched_b:
            diff += mass_b
    return diff / 2
