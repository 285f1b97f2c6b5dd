"""Reading and writing mappings, measures, certificates, and reports.

Three formats live here:

* the map file, a line-oriented text format with one record per element;
* the measure file, JSON carrying a type measure whose entries embed their
  witness balls, so realizing a measure needs no access to the structure
  the measure came from;
* report JSON, the generic dump used by the command-line tools, in which
  every rational is rendered exactly as "p/q".

Map files have a canonical form: fixed header, records ascending by id,
marks sorted, one trailing newline.  The reader accepts only that form, so
reading and writing are mutually inverse byte for byte.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .errors import FormatError
from .fmtp import CompanionCertificate
from .localtypes import LocalType, TypeMeasure, TypeTable, local_type
from .structure import FiniteMapping, Signature, ball, restrict

__all__ = [
    "MAP_VERSION",
    "MEASURE_VERSION",
    "CERTIFICATE_VERSION",
    "read_map",
    "write_map",
    "parse_map",
    "dump_map",
    "structure_to_json",
    "structure_from_json",
    "type_to_json",
    "type_from_json",
    "measure_to_json",
    "measure_from_json",
    "read_measure",
    "write_measure",
    "certificate_to_json",
    "certificate_from_json",
    "fraction_to_text",
    "fraction_from_text",
    "jsonable",
]

MAP_VERSION = 1
MEASURE_VERSION = 1
CERTIFICATE_VERSION = 1

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_NUMBER = re.compile(r"(?:0|[1-9][0-9]*)\Z")
_RECORD = re.compile(r"(0|[1-9][0-9]*) -> (0|[1-9][0-9]*) \[([^\[\]]*)\]\Z")


# ---------------------------------------------------------------------------
# rationals


def fraction_to_text(value) -> str:
    """Exact rendering as "p/q", denominator always present."""
    q = Fraction(value)
    return f"{q.numerator}/{q.denominator}"


def fraction_from_text(text, line: Optional[int] = None) -> Fraction:
    if not isinstance(text, str):
        raise FormatError(f"expected a rational written as 'p/q', got {text!r}", line)
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise FormatError(f"not a rational: {text!r}", line) from None


# ---------------------------------------------------------------------------
# map files


def dump_map(F: FiniteMapping) -> str:
    """Canonical text form: header, then one record per element, ascending."""
    for name in F.signature.predicates:
        if not _NAME.match(name):
            raise FormatError(f"predicate name {name!r} is not writable")
    rows = [
        f"mapfile {MAP_VERSION}",
        f"n {F.n}",
        " ".join(["predicates", *F.signature.predicates]),
    ]
    for v in F.elements():
        inside = " ".join(sorted(F.marks_of(v)))
        rows.append(f"{v} -> {F.f[v]} [{inside}]")
    return "\n".join(rows) + "\n"


def parse_map(text: str) -> FiniteMapping:
    if not text.endswith("\n"):
        raise FormatError("missing trailing newline")
    lines = text[:-1].split("\n")
    if len(lines) < 3:
        raise FormatError("expected a three-line header", len(lines))
    if lines[0] != f"mapfile {MAP_VERSION}":
        raise FormatError(f"unsupported header {lines[0]!r}", 1)
    if not lines[1].startswith("n ") or not _NUMBER.match(lines[1][2:]):
        raise FormatError(f"expected 'n <count>', got {lines[1]!r}", 2)
    n = int(lines[1][2:])
    head, *names = lines[2].split(" ")
    if head != "predicates" or ("" in names):
        raise FormatError(f"expected 'predicates <names>', got {lines[2]!r}", 3)
    declared: set[str] = set()
    for name in names:
        if not _NAME.match(name):
            raise FormatError(f"bad predicate name {name!r}", 3)
        if name in declared:
            raise FormatError(f"duplicate predicate {name!r}", 3)
        declared.add(name)
    if len(lines) != 3 + n:
        raise FormatError(f"expected {n} records, found {len(lines) - 3}", len(lines))

    f: list[int] = []
    marks: dict[str, set[int]] = {name: set() for name in names}
    for k in range(n):
        line_no = 4 + k
        matched = _RECORD.match(lines[3 + k])
        if not matched:
            raise FormatError(f"bad record {lines[3 + k]!r}", line_no)
        v, w = int(matched.group(1)), int(matched.group(2))
        if v != k:
            if v < k:
                raise FormatError(f"duplicate element id {v}", line_no)
            raise FormatError(f"element ids must ascend without gaps, got {v}", line_no)
        if w >= n:
            raise FormatError(f"image {w} out of range for n={n}", line_no)
        inside = matched.group(3)
        row = inside.split(" ") if inside else []
        if row != sorted(set(row)):
            raise FormatError("marks must be sorted and distinct", line_no)
        for name in row:
            if name not in declared:
                raise FormatError(f"undeclared mark {name!r}", line_no)
            marks[name].add(v)
        f.append(w)
    return FiniteMapping(
        f=tuple(f),
        marks={name: frozenset(elems) for name, elems in marks.items()},
        signature=Signature(tuple(names)),
    )


def read_map(path) -> FiniteMapping:
    return parse_map(Path(path).read_text())


def write_map(F: FiniteMapping, path) -> None:
    Path(path).write_text(dump_map(F))


# ---------------------------------------------------------------------------
# structures and types as JSON


def structure_to_json(F: FiniteMapping) -> dict:
    return {
        "n": F.n,
        "predicates": list(F.signature.predicates),
        "f": list(F.f),
        "marks": {name: sorted(F.marks[name]) for name in F.signature.predicates},
    }


def structure_from_json(data) -> FiniteMapping:
    if not isinstance(data, dict):
        raise FormatError(f"expected a structure object, got {type(data).__name__}")
    try:
        predicates = tuple(data["predicates"])
        f = tuple(data["f"])
        marks = {name: frozenset(data["marks"][name]) for name in predicates}
    except (KeyError, TypeError) as failure:
        raise FormatError(f"malformed structure: {failure!r}") from None
    if not all(isinstance(w, int) for w in f):
        raise FormatError("function values must be integers")
    return FiniteMapping(f=f, marks=marks, signature=Signature(predicates))


def type_to_json(t: LocalType) -> dict:
    # Radius rank+1 fixes every atom the rank-round game from the root can
    # inspect; radius rank alone would let the boundary redirection invent
    # fixed points visible in the final round.
    kept = sorted(ball(t.structure, t.element, t.rank + 1))
    witness = restrict(t.structure, kept)
    return {
        "rank": t.rank,
        "root": kept.index(t.element),
        "witness": structure_to_json(witness),
    }


def type_from_json(data, table: Optional[TypeTable] = None) -> LocalType:
    if not isinstance(data, dict):
        raise FormatError(f"expected a type object, got {type(data).__name__}")
    try:
        rank, root = data["rank"], data["root"]
        witness = data["witness"]
    except (KeyError, TypeError) as failure:
        raise FormatError(f"malformed type: {failure!r}") from None
    if not isinstance(rank, int) or rank < 0:
        raise FormatError(f"bad type rank {rank!r}")
    if not isinstance(root, int):
        raise FormatError(f"bad type root {root!r}")
    return local_type(structure_from_json(witness), root, rank, table=table)


# ---------------------------------------------------------------------------
# measures


def measure_to_json(mu: TypeMeasure) -> dict:
    return {
        "format": "measure",
        "version": MEASURE_VERSION,
        "rank": mu.rank,
        "entries": [
            {"mass": fraction_to_text(mass), "type": type_to_json(t)}
            for t, mass in mu.entries
        ],
    }


def measure_from_json(data, table: Optional[TypeTable] = None) -> TypeMeasure:
    if not isinstance(data, dict) or data.get("format") != "measure":
        raise FormatError("not a measure file")
    if data.get("version") != MEASURE_VERSION:
        raise FormatError(f"unsupported measure version {data.get('version')!r}")
    rank = data.get("rank")
    if not isinstance(rank, int) or rank < 0:
        raise FormatError(f"bad measure rank {rank!r}")
    entries = data.get("entries")
    if not isinstance(entries, list):
        raise FormatError("measure entries must be a list")
    pairs = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise FormatError("measure entries must be objects")
        mass = fraction_from_text(entry.get("mass"))
        pairs.append((type_from_json(entry.get("type"), table=table), mass))
    return TypeMeasure.from_pairs(rank, pairs)


def read_measure(path, table: Optional[TypeTable] = None) -> TypeMeasure:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as failure:
        raise FormatError(f"invalid JSON: {failure}") from None
    return measure_from_json(data, table=table)


def write_measure(mu: TypeMeasure, path) -> None:
    Path(path).write_text(json.dumps(measure_to_json(mu), indent=2) + "\n")


# ---------------------------------------------------------------------------
# certificates


def certificate_to_json(cert: CompanionCertificate) -> dict:
    types: list[dict] = []
    index: dict[tuple[int, int], int] = {}

    def ref(t: LocalType) -> int:
        found = index.get(t.key)
        if found is None:
            found = len(types)
            index[t.key] = found
            types.append(type_to_json(t))
        return found

    entries = [
        {"tau": ref(tau), "t": ref(t), "s": fraction_to_text(s)}
        for tau, t, s in cert.entries
    ]
    return {
        "format": "certificate",
        "version": CERTIFICATE_VERSION,
        "rank": cert.R,
        "r": cert.r,
        "types": types,
        "entries": entries,
    }


def certificate_from_json(data, table: Optional[TypeTable] = None) -> CompanionCertificate:
    if not isinstance(data, dict) or data.get("format") != "certificate":
        raise FormatError("not a certificate file")
    if data.get("version") != CERTIFICATE_VERSION:
        raise FormatError(f"unsupported certificate version {data.get('version')!r}")
    rank, r = data.get("rank"), data.get("r")
    if not isinstance(rank, int) or not isinstance(r, int):
        raise FormatError("certificate rank and r must be integers")
    raw_types = data.get("types")
    if not isinstance(raw_types, list):
        raise FormatError("certificate types must be a list")
    types = [type_from_json(item, table=table) for item in raw_types]
    raw_entries = data.get("entries")
    if not isinstance(raw_entries, list):
        raise FormatError("certificate entries must be a list")
    entries = []
    for entry in raw_entries:
        if not isinstance(entry, dict):
            raise FormatError("certificate entries must be objects")
        try:
            tau, t = types[entry["tau"]], types[entry["t"]]
        except (KeyError, TypeError, IndexError):
            raise FormatError(f"bad certificate entry {entry!r}") from None
        entries.append((tau, t, fraction_from_text(entry.get("s"))))
    return CompanionCertificate(R=rank, r=r, entries=tuple(entries))


# ---------------------------------------------------------------------------
# report dumps


def jsonable(value):
    """Recursive conversion for report dumps: exact rationals as "p/q",
    sets sorted, tuples as lists.  Anything unrecognized falls back to
    its repr."""
    if isinstance(value, Fraction):
        return fraction_to_text(value)
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, (set, frozenset)):
        return sorted(jsonable(item) for item in value)
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    return repr(value)
