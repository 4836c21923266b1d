"""Whole-workbook recalculation and cached-value verification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from cellsentry.engine.evaluator import Evaluator, finish
from cellsentry.engine.values import BLANK, CIRC, REF, VALUE, Value, cell_value, is_number, literal_to_value
from cellsentry.findings import Finding, make_finding
from cellsentry.graph import DepGraph, build_graph, cycle_mask, strongly_connected
from cellsentry.model import CellKind, CellRef, ErrorValue, RangeRef, Workbook, resolve_name

DEFAULT_TOLERANCE = 1e-9


class OverrideError(ValueError):
    """An override targets a formula cell or a sheet that does not exist."""


@dataclass(frozen=True)
class RecalcResult:
    values: Mapping[CellRef, Value]
    order: tuple[CellRef, ...]
    cells_in_error: tuple[CellRef, ...]
    cycle_cells: tuple[CellRef, ...]

    def get(self, ref: CellRef) -> Value:
        return self.values.get(ref.plain(), BLANK)


def _canonical_overrides(workbook: Workbook, overrides: Mapping[CellRef, Any]) -> dict[CellRef, Value]:
    out: dict[CellRef, Value] = {}
    for ref, value in overrides.items():
        sheet = workbook.canonical_sheet(ref.sheet)
        if sheet is None:
            raise OverrideError(f"override target {ref.a1()} is on an unknown sheet")
        key = ref.plain(sheet)
        if workbook.cell(key).kind is CellKind.FORMULA:
            raise OverrideError(f"override target {key.a1()} is a formula cell; only literal cells may be overridden")
        out[key] = literal_to_value(value)
    return out


def recalculate(
    workbook: Workbook,
    overrides: Mapping[CellRef, Any] | None = None,
    graph: DepGraph | None = None,
) -> RecalcResult:
    """Evaluate every formula cell in dependency order.

    Cells on a cycle get #CIRC! without being evaluated; unparseable formulas
    get #VALUE!. ``overrides`` replace literal (or blank) cell values.
    """
    fixed = _canonical_overrides(workbook, overrides or {})
    if graph is None:
        graph = build_graph(workbook)

    values: dict[CellRef, Value] = {}
    for ref, cell in workbook.iter_cells():
        if cell.kind is not CellKind.FORMULA:
            values[ref] = cell_value(cell)
    values.update(fixed)

    spelling = {s.name.casefold(): s.name for s in workbook.sheets}

    def lookup(ref: CellRef) -> Value:
        v = values.get(ref)
        if v is not None:
            return v
        sheet = spelling.get(ref.sheet.casefold()) if ref.sheet is not None else None
        if sheet is None:
            return REF
        if sheet != ref.sheet:
            return values.get(CellRef(sheet, ref.col, ref.row), BLANK)
        return BLANK

    name_cache: dict[str, RangeRef] = {}

    def names(name: str) -> RangeRef:
        key = name.casefold()
        if key not in name_cache:
            name_cache[key] = resolve_name(workbook, name)
        return name_cache[key]

    n = len(graph.nodes)
    comp = strongly_connected(graph) if n else np.zeros(0, dtype=np.int64)
    on_cycle = cycle_mask(graph, comp) if n else np.zeros(0, dtype=bool)

    # descending component id is a topological order of the condensation
    ranked = np.argsort(-comp, kind="stable")
    order: list[CellRef] = []
    cycles: list[CellRef] = []
    for i in ranked.tolist():
        ref = graph.nodes[i]
        if ref not in graph.asts and ref not in graph.defective:
            continue
        order.append(ref)
        if on_cycle[i]:
            values[ref] = CIRC
            cycles.append(ref)
        elif ref in graph.defective:
            values[ref] = VALUE
        else:
            values[ref] = finish(Evaluator(ref, lookup, names).eval(graph.asts[ref]))

    errors = [ref for ref in order if isinstance(values[ref], ErrorValue)]
    errors.sort(key=graph.sort_key)
    cycles.sort(key=graph.sort_key)
    return RecalcResult(values, tuple(order), tuple(errors), tuple(cycles))


def _differs(cached: Any, computed: Value, tolerance: float) -> bool:
    if is_number(cached) and is_number(computed):
        return abs(cached - computed) > tolerance
    if type(cached) is not type(computed):
        return True
    return cached != computed


def _show(v: Any) -> str:
    if isinstance(v, ErrorValue):
        return v.code
    if isinstance(v, str):
        return repr(v)
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    return format(v, ".15g")


def verify_cached_values(workbook: Workbook, result: RecalcResult, tolerance: float = DEFAULT_TOLERANCE) -> list[Finding]:
    """R040 for every formula whose stored result disagrees with the recalculated one."""
    findings: list[Finding] = []
    order = {s.name: i for i, s in enumerate(workbook.sheets)}
    for ref, cell in workbook.iter_cells():
        if cell.kind is not CellKind.FORMULA or cell.cached is None:
            continue
        computed = result.get(ref)
        if _differs(cell.cached, computed, tolerance):
            findings.append(
                make_finding(
                    "R040",
                    [ref.a1()],
                    f"cached value {_show(cell.cached)} but recalculates to {_show(computed)}",
                    (order[ref.sheet], ref.row, ref.col),
                )
            )
    return findings
