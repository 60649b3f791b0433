"""Closed-form tables of harmonic-spinor dimensions per genus and spin structure.

Pure integer arithmetic; each entry records rows (descriptor, count, h0)
where count is the number of spin structures and h0 half the real dimension
of the harmonic-spinor space.  A structure is even iff h0 is even.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

MAX_GENUS = 16

SURFACE_CLASSES = (
    "torus",
    "hyperelliptic",
    "non_hyperelliptic_g3",
    "non_hyperelliptic_g4_typeI",
    "non_hyperelliptic_g4_typeII",
)


class CensusError(ValueError):
    pass


@dataclass
class CensusRow:
    descriptor: str
    count: int
    h0: int

    @property
    def parity(self) -> str:
        return "even" if self.h0 % 2 == 0 else "odd"


@dataclass
class CensusEntry:
    genus: int
    surface_class: str
    rows: list[CensusRow]
    notes: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(r.count for r in self.rows)

    @property
    def even_total(self) -> int:
        return sum(r.count for r in self.rows if r.h0 % 2 == 0)

    @property
    def odd_total(self) -> int:
        return sum(r.count for r in self.rows if r.h0 % 2 == 1)


def _check_genus(genus: int, minimum: int = 1):
    if int(genus) != genus or genus < minimum:
        raise CensusError(f"genus must be an integer >= {minimum}, got {genus}")
    if genus > MAX_GENUS:
        raise CensusError(f"genus {genus} exceeds the supported maximum {MAX_GENUS}")


def structure_counts(genus: int) -> tuple[int, int]:
    """(even, odd) spin-structure counts: 2^(g-1)(2^g +- 1); sum is 2^(2g)."""
    _check_genus(genus)
    even = 2 ** (genus - 1) * (2 ** genus + 1)
    odd = 2 ** (genus - 1) * (2 ** genus - 1)
    return even, odd


def hyperelliptic_census(genus: int) -> CensusEntry:
    """Spin structures of a hyperelliptic surface grouped by divisor weight.

    Odd genus g = 2k+1: a single structure of weight g-1 with h0 = (g+1)/2,
    C(2g+2, g-w) structures of weight w in {1, 3, ..., g-2} with h0 = (w+1)/2,
    and C(2g+1, g) of weight -1 with h0 = 0.

    Even genus g = 2k: the weight ladder runs w in {1, 3, ..., g-1} with the
    same binomial counts; at the top weight w = g-1 the binomial C(2g+2, 1)
    equals the separately quoted count 2g+2 and h0 = (w+1)/2 equals the
    quoted floor((g+1)/2) = k, so the two descriptions are one row (flagged
    in ``notes``).  The weight -1 row is C(2g+1, g) with h0 = 0.
    """
    _check_genus(genus, minimum=2)
    rows = []
    notes = []
    if genus % 2 == 1:
        rows.append(CensusRow(f"weight {genus - 1}", 1, (genus + 1) // 2))
        top_w = genus - 2
    else:
        top_w = genus - 1
        notes.append(
            f"weight {genus - 1}: the dedicated count 2g+2 = {2 * genus + 2} "
            f"coincides with the ladder count C(2g+2, 1); reported once")
    for w in range(1, top_w + 1, 2):
        rows.append(CensusRow(f"weight {w}", comb(2 * genus + 2, genus - w), (w + 1) // 2))
    rows.append(CensusRow("weight -1", comb(2 * genus + 1, genus), 0))
    rows.sort(key=lambda r: -r.h0)
    entry = CensusEntry(genus, "hyperelliptic", rows, notes)
    if entry.total != 4 ** genus:
        raise CensusError(f"internal error: counts sum to {entry.total}, "
                          f"expected {4 ** genus}")
    return entry


def known_case(genus: int, surface_class: str) -> CensusEntry:
    """Census for the directly tabulated cases."""
    if surface_class not in SURFACE_CLASSES:
        raise CensusError(f"unsupported surface class {surface_class!r}; "
                          f"choose from {SURFACE_CLASSES}")
    if surface_class == "torus":
        if genus != 1:
            raise CensusError("the torus case requires genus 1")
        rows = [CensusRow("trivial structure", 1, 1),
                CensusRow("non-trivial structures", 3, 0)]
        return CensusEntry(1, surface_class, rows)
    if surface_class == "hyperelliptic":
        return hyperelliptic_census(genus)
    if surface_class == "non_hyperelliptic_g3":
        if genus != 3:
            raise CensusError("non_hyperelliptic_g3 requires genus 3")
        rows = [CensusRow("odd structures", 28, 1),
                CensusRow("even structures", 36, 0)]
        return CensusEntry(3, surface_class, rows)
    if genus != 4:
        raise CensusError(f"{surface_class} requires genus 4")
    if surface_class == "non_hyperelliptic_g4_typeI":
        rows = [CensusRow("odd structures", 120, 1),
                CensusRow("even structure, two-dim kernel", 1, 2),
                CensusRow("even structures, no kernel", 135, 0)]
    else:
        rows = [CensusRow("odd structures", 120, 1),
                CensusRow("even structures", 136, 0)]
    return CensusEntry(4, surface_class, rows)


def format_entry(entry: CensusEntry, csv: bool = False) -> str:
    """Aligned-text or CSV rendering of a census entry."""
    lines = []
    if csv:
        lines.append("genus,surface_class,descriptor,count,h0,parity")
        for r in entry.rows:
            lines.append(f"{entry.genus},{entry.surface_class},"
                         f"{r.descriptor},{r.count},{r.h0},{r.parity}")
    else:
        lines.append(f"genus {entry.genus}  ({entry.surface_class})")
        width = max(len(r.descriptor) for r in entry.rows)
        for r in entry.rows:
            lines.append(f"  {r.descriptor:<{width}}  count {r.count:>6}  "
                         f"h0 {r.h0}  ({r.parity})")
        even, odd = structure_counts(entry.genus)
        lines.append(f"  total {entry.total} = 2^{2 * entry.genus}; "
                     f"even {entry.even_total}/{even}, odd {entry.odd_total}/{odd}")
        for note in entry.notes:
            lines.append(f"  note: {note}")
    return "\n".join(lines)
