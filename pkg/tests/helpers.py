"""Builders shared across the test suite."""

from fractions import Fraction

from mapprox.randgen import random_mapping
from mapprox.structure import FiniteMapping

__all__ = [
    "cycle",
    "star",
    "path",
    "fixed_point",
    "seeded",
    "structurally_equal",
]


def cycle(k: int, marks=None) -> FiniteMapping:
    """Directed k-cycle 0 -> 1 -> ... -> 0."""
    return FiniteMapping(f=tuple((i + 1) % k for i in range(k)), marks=marks or {})


def star(leaves: int, marks=None) -> FiniteMapping:
    """Center 0 fixed; elements 1..leaves map to 0."""
    return FiniteMapping(f=(0,) * (leaves + 1), marks=marks or {})


def path(k: int) -> FiniteMapping:
    """0 -> 1 -> ... -> k-1 with the last element fixed."""
    return FiniteMapping(f=tuple(min(i + 1, k - 1) for i in range(k)))


def fixed_point(marks=None) -> FiniteMapping:
    return FiniteMapping(f=(0,), marks=marks or {})


def seeded(n: int, seed: int, density=Fraction(1, 4)) -> FiniteMapping:
    """Deterministic random mapping with one U predicate."""
    return random_mapping(n, seed, {"U": density})


def structurally_equal(A: FiniteMapping, B: FiniteMapping) -> bool:
    """Identical f, marks, and signature (mapping equality is identity)."""
    return A.f == B.f and A.marks == B.marks and A.signature == B.signature
