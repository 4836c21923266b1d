from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from cellsentry.formula.ast import NameRef, Node, Range, Ref, walk
from cellsentry.model import (
    CellRef,
    DanglingNameError,
    RangeRef,
    UnknownNameError,
    Workbook,
    resolve_name,
)


@dataclass(frozen=True, slots=True)
class Dangling:
    """A reference that cannot be resolved in the workbook."""

    text: str
    reason: str  # "unknown-sheet", "unknown-name", "dangling-name"
    sheet: str | None = None
    name: str | None = None


Target = Union[CellRef, RangeRef, Dangling]


def collect_refs(ast: Node, origin: CellRef, workbook: Workbook) -> list[Target]:
    """Every reference in the formula, one entry per occurrence, in source order.

    Unqualified addresses take the origin's sheet. Sheet names are replaced by
    the workbook's own spelling and fixity is dropped. Names resolve through
    the workbook; anything unresolvable comes back as a Dangling marker.
    """
    out: list[Target] = []
    for node in walk(ast):
        if isinstance(node, Ref):
            ref = node.ref
            sheet = workbook.canonical_sheet(ref.sheet or origin.sheet)
            if sheet is None:
                out.append(Dangling(ref.a1(), "unknown-sheet", sheet=ref.sheet))
            else:
                out.append(ref.plain(sheet))
        elif isinstance(node, Range):
            rng = node.ref
            sheet = workbook.canonical_sheet(rng.sheet or origin.sheet)
            if sheet is None:
                out.append(Dangling(rng.a1(), "unknown-sheet", sheet=rng.sheet))
            else:
                out.append(rng.plain(sheet))
        elif isinstance(node, NameRef):
            try:
                out.append(resolve_name(workbook, node.name))
            except UnknownNameError:
                out.append(Dangling(node.name, "unknown-name", name=node.name))
            except DanglingNameError:
                nr = workbook.named(node.name)
                out.append(Dangling(node.name, "dangling-name", sheet=nr.target.sheet if nr and nr.target else None, name=node.name))
    return out
