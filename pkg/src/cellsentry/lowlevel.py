"""Low-level review: the cell-by-cell rule catalogue."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Iterable, Mapping

import numpy as np

from cellsentry import kernels
from cellsentry.engine.functions import FUNCTIONS, STRUCTURAL_ARGS, compare
from cellsentry.engine.values import cell_value
from cellsentry.findings import RULE_TITLES, Finding, make_finding, number_findings
from cellsentry.formula import (
    BoolLit,
    Call,
    ErrorLit,
    NameRef,
    Node,
    NumberLit,
    Range,
    Ref,
    TextLit,
    Unary,
    format_number,
    formula_shape,
    ref_fixities,
    walk,
)
from cellsentry.graph import DepGraph, find_circularity
from cellsentry.model import (
    CellKind,
    CellRef,
    DanglingNameError,
    RangeRef,
    UnknownNameError,
    Workbook,
    resolve_name,
)

DEFAULT_NAME_PATTERN = r"^[A-Z][A-Za-z0-9_]*$"
SortKey = tuple[int, int, int]


@dataclass(frozen=True)
class RuleConfig:
    enabled: frozenset[str] = field(default_factory=lambda: frozenset(RULE_TITLES))
    constant_allowlist: frozenset[float] = frozenset({0.0, 1.0, -1.0})
    majority_threshold: float = 0.7
    min_run: int = 3
    name_pattern: str = DEFAULT_NAME_PATTERN
    severity_overrides: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (0.5 < self.majority_threshold <= 1.0):
            raise ValueError("majority threshold must lie in (0.5, 1.0]")
        if self.min_run < 2:
            raise ValueError("minimum run length must be at least 2")
        unknown = set(self.enabled) - set(RULE_TITLES)
        if unknown:
            raise ValueError(f"unknown rule codes: {', '.join(sorted(unknown))}")
        for rule, sev in self.severity_overrides.items():
            if rule not in RULE_TITLES or sev not in ("info", "warning", "error"):
                raise ValueError(f"bad severity override {rule}={sev}")
        re.compile(self.name_pattern)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RuleConfig":
        kwargs: dict[str, Any] = {}
        if "enabled" in doc:
            kwargs["enabled"] = frozenset(doc["enabled"])
        if "disabled" in doc:
            kwargs["enabled"] = kwargs.get("enabled", frozenset(RULE_TITLES)) - set(doc["disabled"])
        if "constant_allowlist" in doc:
            kwargs["constant_allowlist"] = frozenset(float(x) for x in doc["constant_allowlist"])
        for key in ("majority_threshold", "min_run", "name_pattern"):
            if key in doc:
                kwargs[key] = doc[key]
        if "severity_overrides" in doc:
            kwargs["severity_overrides"] = dict(doc["severity_overrides"])
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "enabled": sorted(self.enabled),
            "constant_allowlist": sorted(self.constant_allowlist),
            "majority_threshold": self.majority_threshold,
            "min_run": self.min_run,
            "name_pattern": self.name_pattern,
            "severity_overrides": dict(sorted(self.severity_overrides.items())),
        }


def _sheet_order(workbook: Workbook) -> dict[str, int]:
    return {s.name: i for i, s in enumerate(workbook.sheets)}


def _cell_key(order: Mapping[str, int], ref: CellRef) -> SortKey:
    return (order[ref.sheet], ref.row, ref.col)  # type: ignore[index]


# -- named ranges ------------------------------------------------------------


def _all_blank(workbook: Workbook, target: RangeRef) -> bool:
    sheet = workbook.sheet(target.sheet)  # type: ignore[arg-type]
    if target.area <= len(sheet.cells):
        return all(sheet.get(c.row, c.col).kind is CellKind.BLANK for c in target.cells())
    return not any(target.contains(CellRef(sheet.name, col, row)) for row, col in sheet.cells)


def check_named_ranges(workbook: Workbook, config: RuleConfig | None = None) -> list[Finding]:
    """R010 overlaps, R011 all-blank targets, R012 dangling targets, R013 naming convention."""
    config = config or RuleConfig()
    pattern = re.compile(config.name_pattern)
    findings: list[Finding] = []
    resolved: list[tuple[int, str, RangeRef]] = []
    for i, nr in enumerate(workbook.names):
        key = (-1, i, 0)  # workbook-level: ahead of all cells, in definition order
        if not pattern.match(nr.name):
            findings.append(make_finding("R013", [nr.name], f"name {nr.name!r} does not match {config.name_pattern}", key))
        try:
            target = resolve_name(workbook, nr.name)
        except (UnknownNameError, DanglingNameError):
            findings.append(make_finding("R012", [nr.name], f"name {nr.name!r} refers to {nr.text!r}, which does not resolve", key))
            continue
        resolved.append((i, nr.name, target))
        if _all_blank(workbook, target):
            findings.append(make_finding("R011", [nr.name, target.a1()], f"name {nr.name!r} covers only blank cells ({target.a1()})", key))
    for (i, a, ra), (_, b, rb) in combinations(resolved, 2):
        if ra.sheet != rb.sheet:
            continue
        common = ra.intersect(rb)
        if common is not None:
            findings.append(
                make_finding("R010", [common.a1(), a, b], f"names {a!r} and {b!r} overlap on {common.a1()}", (-1, i, 0))
            )
    return findings


# -- per-formula rules -------------------------------------------------------


def constant_value(node: Node) -> float | None:
    """Value of a purely numeric literal expression (signs and percent applied)."""
    if isinstance(node, NumberLit):
        return node.value
    if isinstance(node, Unary):
        inner = constant_value(node.operand)
        if inner is None:
            return None
        if node.op == "-":
            return -inner
        if node.op == "%":
            return inner / 100.0
        return inner
    return None


def embedded_constants(ast: Node, allowlist: Iterable[float]) -> list[float]:
    """Numeric literals outside the allowlist and outside structural argument positions."""
    allowed = set(allowlist)
    found: list[float] = []

    def visit(node: Node, structural: bool) -> None:
        value = constant_value(node)
        if value is not None:
            if not structural and value not in allowed:
                found.append(value)
            return
        if isinstance(node, Call):
            exempt = STRUCTURAL_ARGS.get(node.name, frozenset())
            for i, arg in enumerate(node.args):
                visit(arg, structural or i in exempt)
        elif isinstance(node, Unary):
            visit(node.operand, structural)
        elif hasattr(node, "left"):
            visit(node.left, structural)  # type: ignore[attr-defined]
            visit(node.right, structural)  # type: ignore[attr-defined]

    visit(ast, False)
    return found


def _is_reference(node: Node) -> bool:
    return isinstance(node, (Ref, Range, NameRef))


def _multi_cell(node: Node) -> bool:
    return isinstance(node, Range) and node.ref.area > 1


def _lookup_keys(workbook: Workbook, rng: RangeRef, origin: CellRef, column: bool) -> list[Any] | None:
    """Literal lookup keys of a range (first column, or the vector itself); None if any key is computed."""
    sheet = workbook.canonical_sheet(rng.sheet or origin.sheet)
    if sheet is None:
        return None
    if column:
        cells = [CellRef(sheet, rng.start.col, r) for r in range(rng.start.row, rng.end.row + 1)]
    else:
        cells = [c.plain(sheet) for c in rng.cells()]
    keys = []
    for ref in cells:
        cell = workbook.cell(ref)
        if cell.kind is CellKind.FORMULA:
            return None
        if cell.kind in (CellKind.NUMBER, CellKind.LABEL, CellKind.BOOL):
            keys.append(cell_value(cell))
    return keys


def _unsorted(keys: list[Any]) -> bool:
    for kind in (float, str, bool):
        same = [k for k in keys if type(k) is kind]
        if any(compare(a, b) > 0 for a, b in zip(same, same[1:])):
            return True
    return False


def _approximate(call: Call) -> bool:
    if call.name == "VLOOKUP":
        if len(call.args) < 4:
            return True
        flag = call.args[3]
        if isinstance(flag, BoolLit):
            return flag.value
        value = constant_value(flag)
        return value is not None and value != 0.0
    if call.name == "MATCH":
        if len(call.args) < 3:
            return True
        value = constant_value(call.args[2])
        return value == 1.0
    return False


def argument_problems(call: Call, workbook: Workbook, origin: CellRef) -> list[str]:
    """Arity, static argument-kind and approximate-lookup ordering problems of one call."""
    sig = FUNCTIONS.get(call.name)
    if sig is None:
        return []
    n = len(call.args)
    if n < sig.min_args or n > sig.max_args:
        want = str(sig.min_args) if sig.min_args == sig.max_args else f"{sig.min_args}-{sig.max_args}"
        return [f"{call.name} takes {want} argument(s), got {n}"]
    problems = []
    for i, arg in enumerate(call.args):
        kind = sig.kind_at(i)
        if kind == "ref" and not _is_reference(arg):
            problems.append(f"{call.name} argument {i + 1} must be a cell range")
        elif kind == "num" and (isinstance(arg, (TextLit, ErrorLit)) or _multi_cell(arg)):
            problems.append(f"{call.name} argument {i + 1} must be a single number")
        elif kind == "scalar" and _multi_cell(arg):
            problems.append(f"{call.name} argument {i + 1} must be a single value")
    if not problems and call.name in ("VLOOKUP", "MATCH") and _approximate(call) and isinstance(call.args[1], Range):
        keys = _lookup_keys(workbook, call.args[1].ref, origin, column=call.name == "VLOOKUP")
        if keys is not None and _unsorted(keys):
            problems.append(f"approximate {call.name} over keys that are not in ascending order")
    return problems


def _region_runs(cells: Mapping[tuple[int, int], Any], min_run: int) -> Iterable[list[tuple[int, int]]]:
    """Maximal horizontal and vertical runs of adjacent positions sharing a value."""
    for horizontal in (True, False):
        keyed = sorted(cells, key=(lambda rc: (rc[0], rc[1])) if horizontal else (lambda rc: (rc[1], rc[0])))
        run: list[tuple[int, int]] = []
        for pos in keyed:
            if run:
                prev = run[-1]
                adjacent = (
                    (pos[0] == prev[0] and pos[1] == prev[1] + 1)
                    if horizontal
                    else (pos[1] == prev[1] and pos[0] == prev[0] + 1)
                )
                if adjacent and cells[pos] == cells[prev]:
                    run.append(pos)
                    continue
                if len(run) >= min_run:
                    yield run
            run = [pos]
        if len(run) >= min_run:
            yield run


def _fixity_outliers(workbook: Workbook, graph: DepGraph, config: RuleConfig) -> dict[CellRef, str]:
    """Cells whose address fixity disagrees with all agreeing siblings in a copied region."""
    flagged: dict[CellRef, str] = {}
    for sheet in workbook.sheets:
        shapes: dict[tuple[int, int], str] = {}
        fixities: dict[tuple[int, int], list[tuple[bool, bool]]] = {}
        for (row, col), cell in sheet.cells.items():
            ast = graph.asts.get(CellRef(sheet.name, col, row))
            if ast is None:
                continue
            fx = ref_fixities(ast)
            if fx:
                shapes[(row, col)] = formula_shape(ast)
                fixities[(row, col)] = fx
        for run in _region_runs(shapes, config.min_run):
            for j in range(len(fixities[run[0]])):
                column = [fixities[pos][j] for pos in run]
                for k, pos in enumerate(run):
                    others = column[:k] + column[k + 1:]
                    if column[k] != others[0] and all(o == others[0] for o in others):
                        ref = CellRef(sheet.name, pos[1], pos[0])
                        flagged.setdefault(ref, f"reference {j + 1} is {_fixity_text(column[k])} where the copied region uses {_fixity_text(others[0])}")
    return flagged


def _fixity_text(fx: tuple[bool, bool]) -> str:
    return {(False, False): "relative", (True, True): "absolute", (True, False): "column-absolute", (False, True): "row-absolute"}[fx]


def scan_formula_rules(workbook: Workbook, graph: DepGraph, config: RuleConfig | None = None) -> list[Finding]:
    """Per-cell formula rules R001, R020-R026."""
    config = config or RuleConfig()
    order = _sheet_order(workbook)
    findings: list[Finding] = []
    for ref, cell in workbook.iter_cells():
        key = _cell_key(order, ref)
        loc = [ref.a1()]
        if cell.kind is CellKind.ERROR:
            findings.append(make_finding("R020", loc, f"error literal {cell.value} stored in cell", key))
            continue
        if cell.kind is not CellKind.FORMULA:
            continue
        if ref in graph.defective:
            findings.append(make_finding("R001", loc, f"formula does not parse: {graph.defective[ref]}", key))
            continue
        ast = graph.asts[ref]
        errs = sorted({n.code for n in walk(ast) if isinstance(n, ErrorLit)})
        if errs:
            findings.append(make_finding("R020", loc, f"error literal {', '.join(errs)} in formula", key))
        if ref in graph.dangling:
            texts = ", ".join(d.text for d in graph.dangling[ref])
            findings.append(make_finding("R021", loc, f"dangling reference {texts}", key))
        consts = embedded_constants(ast, config.constant_allowlist)
        if consts:
            shown = ", ".join(format_number(c) for c in consts)
            findings.append(make_finding("R022", loc, f"embedded constant {shown}", key))
        calls = [n for n in walk(ast) if isinstance(n, Call)]
        unknown = sorted({c.name for c in calls if c.name not in FUNCTIONS})
        if unknown:
            findings.append(make_finding("R023", loc, f"unknown function {', '.join(unknown)}", key))
        problems = [p for c in calls for p in argument_problems(c, workbook, ref)]
        if problems:
            findings.append(make_finding("R024", loc, "; ".join(problems), key))

    for cycle in find_circularity(graph):
        members = sorted(cycle, key=graph.sort_key)
        findings.append(
            make_finding(
                "R025",
                [m.a1() for m in members],
                f"circular reference among {len(members)} cell(s)",
                graph.sort_key(members[0]),
            )
        )

    for ref, why in _fixity_outliers(workbook, graph, config).items():
        findings.append(make_finding("R026", [ref.a1()], why, _cell_key(order, ref)))
    return findings


# -- copy-region outliers ----------------------------------------------------


def _class_ids(workbook: Workbook, graph: DepGraph) -> dict[CellRef, int]:
    """Integer class per formula cell: equal ids iff equal normalized formula."""
    classes: dict[str, int] = {}
    ids: dict[CellRef, int] = {}
    normalized = graph.normalized
    for ref, cell in workbook.iter_cells():
        if cell.kind is not CellKind.FORMULA:
            continue
        text = normalized.get(ref)
        label = text if text is not None else "!" + cell.value
        ids[ref] = classes.setdefault(label, len(classes))
    return ids


def _lines(workbook: Workbook, ids: Mapping[CellRef, int], horizontal: bool) -> tuple[np.ndarray, list[CellRef | None]]:
    codes: list[int] = []
    refs: list[CellRef | None] = []
    for sheet in workbook.sheets:
        positions = [(r, c) for (r, c), cell in sheet.cells.items() if cell.kind is CellKind.FORMULA]
        positions.sort(key=(lambda rc: (rc[0], rc[1])) if horizontal else (lambda rc: (rc[1], rc[0])))
        prev: tuple[int, int] | None = None
        for pos in positions:
            if prev is not None:
                adjacent = (
                    (pos[0] == prev[0] and pos[1] == prev[1] + 1)
                    if horizontal
                    else (pos[1] == prev[1] and pos[0] == prev[0] + 1)
                )
                if not adjacent:
                    codes.append(-1)
                    refs.append(None)
            ref = CellRef(sheet.name, pos[1], pos[0])
            codes.append(ids[ref])
            refs.append(ref)
            prev = pos
        codes.append(-1)
        refs.append(None)
    return np.asarray(codes, dtype=np.int64), refs


def detect_region_outliers(workbook: Workbook, config: RuleConfig | None = None, graph: DepGraph | None = None) -> list[Finding]:
    """R030 for minority formulas inside majority-dominated copied runs (rows and columns)."""
    from cellsentry.graph import build_graph

    config = config or RuleConfig()
    graph = graph or build_graph(workbook)
    ids = _class_ids(workbook, graph)
    order = _sheet_order(workbook)
    flagged: dict[CellRef, str] = {}
    for horizontal in (True, False):
        codes, refs = _lines(workbook, ids, horizontal)
        hits = kernels.line_outliers(codes, config.min_run, config.majority_threshold)
        for pos in hits.tolist():
            ref = refs[pos]
            assert ref is not None
            flagged.setdefault(ref, "row" if horizontal else "column")
    findings = []
    for ref in sorted(flagged, key=lambda r: _cell_key(order, r)):
        findings.append(
            make_finding(
                "R030",
                [ref.a1()],
                f"formula differs from the copied {flagged[ref]} region around it",
                _cell_key(order, ref),
            )
        )
    return findings


def run_checks(workbook: Workbook, graph: DepGraph, config: RuleConfig | None = None) -> list[Finding]:
    """All low-level rules, filtered by the enabled set, unnumbered."""
    config = config or RuleConfig()
    found = check_named_ranges(workbook, config) + scan_formula_rules(workbook, graph, config)
    found += detect_region_outliers(workbook, config, graph)
    return [f for f in found if f.rule in config.enabled]


def number_lowlevel(findings: Iterable[Finding], config: RuleConfig, start: int = 1) -> list[Finding]:
    return number_findings(findings, config.severity_overrides, start)
