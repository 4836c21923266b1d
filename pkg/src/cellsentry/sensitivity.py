"""Scenario suites: declarative override sets run through the recalculation engine."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from cellsentry.engine.recalc import OverrideError, RecalcResult, recalculate
from cellsentry.engine.values import BLANK, Value, is_number, literal_to_value, value_from_json, value_to_json
from cellsentry.graph import DepGraph, build_graph
from cellsentry.model import (
    Cell,
    CellKind,
    CellRef,
    ErrorValue,
    RangeRef,
    Workbook,
    WorkbookError,
    resolve_name,
    save_workbook,
)

BASE = "base"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    overrides: tuple[tuple[str, Any], ...] = ()
    watch: tuple[str, ...] = ()
    expect: Mapping[str, tuple[float | None, float | None]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Scenario":
        if not isinstance(doc.get("name"), str) or not doc["name"]:
            raise ScenarioError("every scenario needs a non-empty name")
        expect = {k: (v.get("min"), v.get("max")) for k, v in doc.get("expect", {}).items()}
        return cls(doc["name"], tuple(doc.get("set", {}).items()), tuple(doc.get("watch", ())), expect)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"name": self.name, "set": dict(self.overrides)}
        if self.watch:
            doc["watch"] = list(self.watch)
        if self.expect:
            doc["expect"] = {k: {key: v for key, v in (("min", lo), ("max", hi)) if v is not None} for k, (lo, hi) in self.expect.items()}
        return doc


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    outputs: Mapping[str, Value]
    error_cells: tuple[str, ...]
    expectations: Mapping[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.expectations.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "outputs": {k: value_to_json(v) for k, v in self.outputs.items()},
            "error_cells": list(self.error_cells),
            "expectations": dict(self.expectations),
            "passed": self.passed,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ScenarioResult":
        return cls(
            doc["name"],
            {k: value_from_json(v) for k, v in doc["outputs"].items()},
            tuple(doc.get("error_cells", ())),
            dict(doc.get("expectations", {})),
        )


def suite_from_dict(doc: Mapping[str, Any]) -> list[Scenario]:
    if not isinstance(doc, Mapping) or not isinstance(doc.get("scenarios"), list):
        raise ScenarioError('scenario file needs a "scenarios" list')
    suite = [Scenario.from_dict(s) for s in doc["scenarios"]]
    seen: set[str] = set()
    for s in suite:
        key = s.name.casefold()
        if key in seen or key == BASE:
            raise ScenarioError(f"duplicate or reserved scenario name {s.name!r}")
        seen.add(key)
    return suite


def load_suite(path: str | os.PathLike[str]) -> list[Scenario]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not JSON: {exc}") from None
    return suite_from_dict(doc)


def resolve_target(workbook: Workbook, target: str) -> list[CellRef]:
    """Cells addressed by an override or watch target (a qualified address, range or defined name)."""
    if workbook.named(target) is not None:
        try:
            return list(resolve_name(workbook, target).cells())
        except LookupError as exc:
            raise ScenarioError(str(exc)) from None
    try:
        rng = RangeRef.parse(target)
    except (ValueError, WorkbookError):
        raise ScenarioError(f"cannot resolve target {target!r}") from None
    sheet = workbook.canonical_sheet(rng.sheet)
    if sheet is None:
        raise ScenarioError(f"target {target!r} is not a sheet-qualified address in this workbook")
    return list(rng.plain(sheet).cells())


def scenario_overrides(workbook: Workbook, scenario: Scenario) -> dict[CellRef, Value]:
    out: dict[CellRef, Value] = {}
    for target, raw in scenario.overrides:
        value = literal_to_value(value_from_json(raw) if isinstance(raw, dict) else raw)
        for ref in resolve_target(workbook, target):
            if workbook.cell(ref).kind is CellKind.FORMULA:
                raise ScenarioError(f"scenario {scenario.name!r}: {ref.a1()} is a formula cell and cannot be overridden")
            out[ref] = value
    return out


def _watch_cells(workbook: Workbook, watch: Sequence[str]) -> list[tuple[str, CellRef]]:
    if watch:
        out = []
        for target in watch:
            cells = resolve_target(workbook, target)
            if len(cells) == 1:
                out.append((target, cells[0]))
            else:
                out.extend((c.a1(), c) for c in cells)
        return out
    return [(ref.a1(), ref) for ref, cell in workbook.iter_cells() if cell.kind is CellKind.FORMULA]


def _check(value: Value, bounds: tuple[float | None, float | None]) -> bool:
    if not is_number(value):
        return False
    lo, hi = bounds
    return (lo is None or value >= lo) and (hi is None or value <= hi)  # type: ignore[operator]


def _result(workbook: Workbook, scenario: Scenario, calc: RecalcResult, watch: Sequence[str]) -> ScenarioResult:
    outputs = {label: calc.get(ref) for label, ref in _watch_cells(workbook, watch)}
    expectations = {}
    for target, bounds in scenario.expect.items():
        cells = resolve_target(workbook, target)
        expectations[target] = all(_check(calc.get(c), bounds) for c in cells)
    return ScenarioResult(scenario.name, outputs, tuple(r.a1() for r in calc.cells_in_error), expectations)


def run_scenario(workbook: Workbook, scenario: Scenario, graph: DepGraph | None = None) -> ScenarioResult:
    overrides = scenario_overrides(workbook, scenario)
    try:
        calc = recalculate(workbook, overrides, graph)
    except OverrideError as exc:
        raise ScenarioError(str(exc)) from None
    return _result(workbook, scenario, calc, scenario.watch)


def _scenario_workbook(workbook: Workbook, overrides: Mapping[CellRef, Value], calc: RecalcResult) -> Workbook:
    """The model with overrides written in and every formula's cached value refreshed."""
    updates: dict[CellRef, Cell | None] = {}
    for ref, value in overrides.items():
        if value is BLANK:
            updates[ref] = None
        elif isinstance(value, ErrorValue):
            updates[ref] = Cell.error(value.code)
        elif isinstance(value, bool):
            updates[ref] = Cell.boolean(value)
        elif isinstance(value, str):
            updates[ref] = Cell.label(value)
        else:
            updates[ref] = Cell.number(value)
    for ref, cell in workbook.iter_cells():
        if cell.kind is CellKind.FORMULA:
            v = calc.get(ref)
            updates[ref] = Cell.formula(cell.value, None if v is BLANK else v)
    return workbook.replace_cells(updates)


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "scenario"


def run_sensitivity_suite(
    workbook: Workbook,
    suite: Sequence[Scenario],
    out_dir: str | os.PathLike[str] | None = None,
) -> list[ScenarioResult]:
    """Base case first, then each scenario in suite order.

    With ``out_dir``, a copy of the model with each scenario's overrides applied
    is saved as ``scenario_<name>.json`` plus all results in
    ``sensitivity_results.json``.
    """
    if not suite:
        raise ScenarioError("scenario suite is empty")
    names = [s.name.casefold() for s in suite]
    if len(set(names)) != len(names) or BASE in names:
        raise ScenarioError("scenario names must be unique and must not be 'base'")
    # validate every scenario before running any
    prepared = [(s, scenario_overrides(workbook, s)) for s in suite]
    watch_all: list[str] = []
    for s in suite:
        watch_all.extend(w for w in s.watch if w not in watch_all)

    graph = build_graph(workbook)
    base_calc = recalculate(workbook, {}, graph)
    results = [_result(workbook, Scenario(BASE), base_calc, watch_all)]
    saved: list[tuple[str, Workbook]] = []
    for scenario, overrides in prepared:
        try:
            calc = recalculate(workbook, overrides, graph)
        except OverrideError as exc:
            raise ScenarioError(str(exc)) from None
        results.append(_result(workbook, scenario, calc, scenario.watch))
        if out_dir is not None:
            saved.append((scenario.name, _scenario_workbook(workbook, overrides, calc)))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, wb in saved:
            save_workbook(wb, out / f"scenario_{_slug(name)}.json")
        write_results(results, out / "sensitivity_results.json")
    return results


def write_results(results: Iterable[ScenarioResult], path: str | os.PathLike[str]) -> None:
    doc = {"results": [r.to_dict() for r in results]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_results(path: str | os.PathLike[str]) -> list[ScenarioResult]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ScenarioResult.from_dict(r) for r in doc["results"]]
