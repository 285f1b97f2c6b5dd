"""Compressing a finite mapping to a bounded-size core with the same
rank-r theory.

A finite mapping is a union of cycles with trees hanging off them.  Two
reductions shrink it without changing anything a rank-r sentence can say:
among the preimages of any element, keep at most r representatives of each
equivalence class of a height-indexed refinement (a rank-r game cannot tell
r + 1 interchangeable siblings apart), and keep at most r isomorphic copies
of any connected component.  Cyclic elements are never pruned within a
surviving component, so the function stays total on the kept set.
"""

from __future__ import annotations

from collections import Counter
from typing import Optional

from .structure import FiniteMapping, _preimage_table, cyclic_part, restrict

__all__ = ["standard_r_approximation"]


def _sibling_classes(
    F: FiniteMapping,
    pre,
    layers: list[list[int]],
) -> dict[int, int]:
    """Equivalence class of every tree element, refined layer by layer.

    Deepest layer first: two elements are equivalent when they carry the
    same marks and their preimages realize each deeper class with exactly
    the same multiplicities.  Classes are interned as integers.
    """
    interned: dict[tuple, int] = {}
    cls: dict[int, int] = {}
    for layer in reversed(layers[1:]):
        for z in layer:
            children = tuple(sorted(Counter(cls[x] for x in pre[z]).items()))
            key = (F.mark_vector(z), children)
            code = interned.get(key)
            if code is None:
                code = len(interned)
                interned[key] = code
            cls[z] = code
    return cls


def _component_form(
    F: FiniteMapping,
    pre,
    heights: dict[int, int],
    kept: set[int],
    cycle: list[int],
) -> tuple:
    """Canonical value of one component restricted to the kept elements.

    Trees are canonicalized bottom-up with sorted child forms; the cycle
    contributes the lexicographically minimal rotation of its per-vertex
    forms, read along the function.  Equal forms mean isomorphic kept
    components.
    """
    members = [
        x
        for x in kept
        if heights[x] > 0 and _cycle_of(F, heights, x) == cycle[0]
    ]
    form: dict[int, tuple] = {}
    for x in sorted(members, key=lambda v: -heights[v]):
        child_forms = sorted(
            form[c] for c in pre[x] if c in kept and heights[c] == heights[x] + 1
        )
        form[x] = (F.mark_vector(x), tuple(child_forms))
    ring = []
    for z in cycle:
        child_forms = sorted(
            form[c] for c in pre[z] if c in kept and heights.get(c) == 1
        )
        ring.append((F.mark_vector(z), tuple(child_forms)))
    doubled = ring + ring
    size = len(ring)
    return min(tuple(doubled[i : i + size]) for i in range(size))


def _cycle_of(F: FiniteMapping, heights: dict[int, int], x: int) -> int:
    """The least element of the cycle below x."""
    while heights[x] > 0:
        x = F.f[x]
    least = x
    y = F.f[x]
    while y != x:
        if y < least:
            least = y
        y = F.f[y]
    return least


def standard_r_approximation(F: FiniteMapping, r: int) -> FiniteMapping:
    """A mapping with the same rank-r theory and size independent of |F|.

    Keeps the whole cyclic part of each surviving component, at most r
    equivalent preimages per element (lowest ids win), and at most r
    isomorphic components per isomorphism class (components with the
    lowest minimum id win).  Pruning deep multiplicities can merge sibling
    classes that exact counts kept apart, so the pass repeats until nothing
    is dropped; the output is never larger than the input and compressing
    it again returns it unchanged.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    while True:
        reduced = _prune_once(F, r)
        if reduced.n == F.n:
            return reduced
        F = reduced


def _prune_once(F: FiniteMapping, r: int) -> FiniteMapping:
    Z, heights = cyclic_part(F)
    pre = _preimage_table(F)
    if r == 0:
        # A zero-round game distinguishes nothing; the least cycle stands in.
        anchor = _cycle_of(F, heights, min(Z))
        cycle = [anchor]
        y = F.f[anchor]
        while y != anchor:
            cycle.append(y)
            y = F.f[y]
        return restrict(F, cycle)

    depth = max(heights.values())
    layers: list[list[int]] = [[] for _ in range(depth + 1)]
    for v in F.elements():
        layers[heights[v]].append(v)
    for layer in layers:
        layer.sort()

    cls = _sibling_classes(F, pre, layers)

    kept = set(Z)
    for i in range(1, depth + 1):
        for y in layers[i - 1]:
            if y not in kept:
                continue
            groups: dict[int, list[int]] = {}
            for x in pre[y]:
                if heights[x] == i:
                    groups.setdefault(cls[x], []).append(x)
            for members in groups.values():
                members.sort()
                kept.update(members[:r])

    cycles: dict[int, list[int]] = {}
    for z in sorted(Z):
        anchor = _cycle_of(F, heights, z)
        if anchor not in cycles:
            cycle = [anchor]
            y = F.f[anchor]
            while y != anchor:
                cycle.append(y)
                y = F.f[y]
            cycles[anchor] = cycle

    by_form: dict[tuple, list[int]] = {}
    for anchor, cycle in sorted(cycles.items()):
        shape = _component_form(F, pre, heights, kept, cycle)
        by_form.setdefault(shape, []).append(anchor)

    surviving: set[int] = set()
    for anchors in by_form.values():
        surviving.update(anchors[:r])

    final = [
        x
        for x in kept
        if _cycle_of(F, heights, x) in surviving
    ]
    return restrict(F, final)
