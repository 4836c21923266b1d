"""Version comparison and dependency-aware re-review scope."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from cellsentry.graph import DepGraph, reachable_from
from cellsentry.model import (
    ERROR_CODES,
    Cell,
    CellKind,
    CellRef,
    NamedRange,
    RangeRef,
    Sheet,
    Workbook,
    cell_from_json,
    cell_to_json,
    format_literal,
)

ADDED, REMOVED = "added", "removed"
FORMULA_CHANGED, VALUE_CHANGED = "formula_changed", "value_changed"
NAME_CHANGED = "name_changed"
SHEET_ADDED, SHEET_REMOVED = "sheet_added", "sheet_removed"
KINDS = (ADDED, REMOVED, FORMULA_CHANGED, VALUE_CHANGED, NAME_CHANGED, SHEET_ADDED, SHEET_REMOVED)


@dataclass(frozen=True)
class DiffEntry:
    location: str
    kind: str
    before: str | None = None
    after: str | None = None
    ref: CellRef | None = field(default=None, compare=False)
    sheet: str | None = field(default=None, compare=False)
    # whole-sheet content for sheet entries, so a diff can be replayed
    payload: Mapping[str, Any] | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {"loc": self.location, "kind": self.kind, "before": self.before, "after": self.after}


def squash_formula(source: str) -> str:
    """Formula source with whitespace outside string literals removed."""
    out = []
    in_string = False
    for ch in source:
        if ch == '"':
            in_string = not in_string
        if in_string or not ch.isspace():
            out.append(ch)
    return "".join(out)


def render_cell(cell: Cell) -> str | None:
    if cell.kind is CellKind.BLANK:
        return None
    if cell.kind is CellKind.FORMULA:
        return cell.value
    return format_literal(cell)


def _same(a: Cell, b: Cell) -> bool:
    if a.kind is CellKind.FORMULA and b.kind is CellKind.FORMULA:
        return squash_formula(a.value) == squash_formula(b.value)
    return a.kind is b.kind and type(a.value) is type(b.value) and a.value == b.value


def _cell_entries(sheet_name: str, old: Sheet | None, new: Sheet | None) -> list[DiffEntry]:
    old_cells = old.cells if old is not None else {}
    new_cells = new.cells if new is not None else {}
    out = []
    for row, col in sorted(set(old_cells) | set(new_cells)):
        a = old_cells.get((row, col))
        b = new_cells.get((row, col))
        ref = CellRef(sheet_name, col, row)
        if a is None:
            out.append(DiffEntry(ref.a1(), ADDED, None, render_cell(b), ref, sheet_name))  # type: ignore[arg-type]
        elif b is None:
            out.append(DiffEntry(ref.a1(), REMOVED, render_cell(a), None, ref, sheet_name))
        elif not _same(a, b):
            kind = FORMULA_CHANGED if CellKind.FORMULA in (a.kind, b.kind) else VALUE_CHANGED
            out.append(DiffEntry(ref.a1(), kind, render_cell(a), render_cell(b), ref, sheet_name))
    return out


def _sheet_payload(sheet: Sheet) -> dict[str, Any]:
    return {CellRef(None, c, r).a1(): cell_to_json(sheet.cells[(r, c)]) for r, c in sorted(sheet.cells)}


def diff_workbooks(old: Workbook, new: Workbook, expand: bool = False) -> list[DiffEntry]:
    """Entries turning ``old`` into ``new``: names first, then sheet by sheet in row/column order.

    Sheets present on only one side collapse into one entry unless ``expand``
    is set, in which case their cells follow as added/removed entries. Cached
    values and metadata are not compared.
    """
    entries: list[DiffEntry] = []

    old_names = {n.name.casefold(): n for n in old.names}
    new_names = {n.name.casefold(): n for n in new.names}
    for key in sorted(set(old_names) | set(new_names)):
        a, b = old_names.get(key), new_names.get(key)
        before = a.text if a else None
        after = b.text if b else None
        if before != after:
            entries.append(DiffEntry((b or a).name, NAME_CHANGED, before, after))  # type: ignore[union-attr]

    old_sheets = {s.name.casefold(): s for s in old.sheets}
    new_keys = {s.name.casefold() for s in new.sheets}
    for sheet in new.sheets:
        prev = old_sheets.get(sheet.name.casefold())
        if prev is None:
            entries.append(DiffEntry(sheet.name, SHEET_ADDED, None, f"{len(sheet.cells)} cells", sheet=sheet.name, payload=_sheet_payload(sheet)))
            if expand:
                entries.extend(_cell_entries(sheet.name, None, sheet))
        else:
            entries.extend(_cell_entries(sheet.name, prev, sheet))
    for sheet in old.sheets:
        if sheet.name.casefold() not in new_keys:
            entries.append(DiffEntry(sheet.name, SHEET_REMOVED, f"{len(sheet.cells)} cells", None, sheet=sheet.name, payload=_sheet_payload(sheet)))
            if expand:
                entries.extend(_cell_entries(sheet.name, sheet, None))
    return entries


def apply_diff(old: Workbook, entries: Sequence[DiffEntry]) -> Workbook:
    """Replay collapsed diff entries onto ``old``; cached values are dropped from changed cells."""
    sheets = {s.name.casefold(): dict(s.cells) for s in old.sheets}
    order = [s.name for s in old.sheets]
    names = {n.name.casefold(): n for n in old.names}
    for e in entries:
        if e.kind == NAME_CHANGED:
            if e.after is None:
                names.pop(e.location.casefold(), None)
            else:
                try:
                    target = RangeRef.parse(e.after)
                    target = target if target.sheet is not None else None
                except ValueError:
                    target = None
                names[e.location.casefold()] = NamedRange(e.location, e.after, target)
        elif e.kind == SHEET_ADDED:
            order.append(e.location)
            sheets[e.location.casefold()] = {
                (CellRef.parse(k).row, CellRef.parse(k).col): cell_from_json(v, k) for k, v in (e.payload or {}).items()
            }
        elif e.kind == SHEET_REMOVED:
            order = [s for s in order if s.casefold() != e.location.casefold()]
            sheets.pop(e.location.casefold(), None)
        elif e.ref is not None and e.sheet is not None and e.sheet.casefold() in sheets and e.sheet in order:
            cells = sheets[e.sheet.casefold()]
            key = (e.ref.row, e.ref.col)
            if e.after is None:
                cells.pop(key, None)
            else:
                cells[key] = _parse_rendering(e.after)
    return Workbook(tuple(Sheet(n, sheets[n.casefold()]) for n in order), tuple(names.values()), old.meta)


def _parse_rendering(text: str) -> Cell:
    if text.startswith("="):
        return Cell.formula(text)
    if text in ERROR_CODES:
        return Cell.error(text)
    if text in ("TRUE", "FALSE"):
        return Cell.boolean(text == "TRUE")
    if text.startswith('"'):
        return Cell.label(json.loads(text))
    return Cell.number(float(text))


@dataclass(frozen=True)
class ReReviewScope:
    changed: frozenset[CellRef]
    impacted: frozenset[CellRef]
    total_cells: int
    names: tuple[str, ...] = ()
    sheets: tuple[str, ...] = ()

    def to_dict(self, order: Any = None) -> dict[str, Any]:
        key = order or (lambda r: (r.sheet, r.row, r.col))
        return {
            "changed": [r.a1() for r in sorted(self.changed, key=key)],
            "impacted": [r.a1() for r in sorted(self.impacted, key=key)],
            "total_cells": self.total_cells,
            "names": list(self.names),
            "sheets": list(self.sheets),
        }


def rereview_scope(diff: Iterable[DiffEntry], new_graph: DepGraph, new: Workbook | None = None) -> ReReviewScope:
    """Cells a change can corrupt: transitive dependents in the new version's graph.

    Users of changed names are impacted (with their dependents). Cells of an
    added sheet count as changed; when a sheet is removed, cells whose
    references now dangle onto it are impacted.
    """
    changed: set[CellRef] = set()
    extra: set[CellRef] = set()
    names: list[str] = []
    sheets: list[str] = []
    for e in diff:
        if e.kind == NAME_CHANGED:
            names.append(e.location)
            extra.update(new_graph.name_users.get(e.location.upper(), ()))
        elif e.kind == SHEET_ADDED:
            sheets.append(e.location)
            changed.update(n for n in new_graph.index if n.sheet is not None and n.sheet.casefold() == e.location.casefold())
        elif e.kind == SHEET_REMOVED:
            sheets.append(e.location)
            gone = e.location.casefold()
            for ref, items in new_graph.dangling.items():
                if any(d.sheet is not None and d.sheet.casefold() == gone for d in items):
                    extra.add(ref)
        elif e.ref is not None:
            changed.add(e.ref)
    impacted = reachable_from(new_graph, changed | extra, "dependents") | extra
    total = sum(len(s.cells) for s in new.sheets) if new is not None else len(new_graph.nodes)
    return ReReviewScope(frozenset(changed), frozenset(impacted), total, tuple(names), tuple(sheets))
