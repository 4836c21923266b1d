"""Audit evidence: cell-type maps, the sign-off coverage ledger and finding management."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Literal, Mapping

from cellsentry.findings import FindingStore, transition
from cellsentry.formula import FormulaSyntaxError, normalize_r1c1, parse_formula
from cellsentry.model import CellKind, CellRef, ModelFingerprint, RangeRef, Workbook, WorkbookError, col_to_letters

MapMode = Literal["type", "clone"]

TYPE_CODES = {
    CellKind.LABEL: "L",
    CellKind.NUMBER: "N",
    CellKind.BOOL: "B",
    CellKind.ERROR: "E",
    CellKind.FORMULA: "F",
    CellKind.BLANK: ".",
}


class UnknownSheetError(WorkbookError, KeyError):
    pass


# -- cell maps ---------------------------------------------------------------


@dataclass(frozen=True)
class CellMap:
    sheet: str
    mode: str
    top: int  # first row of the bounding box (0 when empty)
    left: int
    rows: tuple[str, ...]

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def code(self, ref: CellRef) -> str:
        r, c = ref.row - self.top, ref.col - self.left
        if 0 <= r < self.height and 0 <= c < self.width:
            return self.rows[r][c]
        return "."

    def text(self) -> str:
        """Fixed-width rendering with column letters stacked above and row numbers at the left."""
        if not self.rows:
            return "(empty sheet)\n"
        letters = [col_to_letters(self.left + i) for i in range(self.width)]
        depth = max(len(s) for s in letters)
        gutter = len(str(self.top + self.height - 1))
        lines = []
        for level in range(depth):
            chars = [s.rjust(depth)[level] for s in letters]
            lines.append(" " * (gutter + 1) + "".join(chars).rstrip())
        for i, row in enumerate(self.rows):
            lines.append(f"{self.top + i:>{gutter}} {row}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict[str, Any]:
        return {"sheet": self.sheet, "mode": self.mode, "top": self.top, "left": self.left, "rows": list(self.rows)}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "CellMap":
        return cls(doc["sheet"], doc["mode"], int(doc["top"]), int(doc["left"]), tuple(doc["rows"]))


def render_cell_map(workbook: Workbook, sheet: str, mode: MapMode = "type") -> CellMap:
    """One character per cell over the used bounding box.

    ``type`` mode: L label, N number, B boolean, E error, F formula, ``.`` blank.
    ``clone`` mode marks formulas as ``<`` (copy of the cell to the left), ``^``
    (copy of the cell above), ``c`` (copy of a non-adjacent earlier cell) or
    ``F`` (first occurrence), comparing R1C1-normalized text.
    """
    if mode not in ("type", "clone"):
        raise ValueError(f"unknown map mode {mode!r}")
    if not workbook.has_sheet(sheet):
        raise UnknownSheetError(f"unknown sheet {sheet!r}")
    sh = workbook.sheet(sheet)
    box = sh.bounds()
    if box is None:
        return CellMap(sh.name, mode, 0, 0, ())
    top, left, bottom, right = box

    norm: dict[tuple[int, int], str] = {}
    if mode == "clone":
        for (row, col), cell in sh.cells.items():
            if cell.kind is CellKind.FORMULA:
                origin = CellRef(sh.name, col, row)
                try:
                    norm[(row, col)] = normalize_r1c1(parse_formula(cell.value), origin)
                except FormulaSyntaxError:
                    norm[(row, col)] = "!" + cell.value
    seen: set[str] = set()
    rows = []
    for row in range(top, bottom + 1):
        chars = []
        for col in range(left, right + 1):
            cell = sh.get(row, col)
            code = TYPE_CODES[cell.kind]
            if mode == "clone" and cell.kind is CellKind.FORMULA:
                text = norm[(row, col)]
                if norm.get((row, col - 1)) == text:
                    code = "<"
                elif norm.get((row - 1, col)) == text:
                    code = "^"
                elif text in seen:
                    code = "c"
                seen.add(text)
            chars.append(code)
        rows.append("".join(chars))
    return CellMap(sh.name, mode, top, left, tuple(rows))


def render_workbook_maps(workbook: Workbook, mode: MapMode = "type") -> str:
    """All sheets' maps, numbered and indexed in workbook order for print sign-off."""
    n = len(workbook.sheets)
    parts = ["Index"]
    parts.extend(f"  {i}/{n}  {s.name}" for i, s in enumerate(workbook.sheets, 1))
    parts.append("")
    for i, s in enumerate(workbook.sheets, 1):
        parts.append(f"Sheet {i}/{n}: {s.name}  [{mode} map]")
        parts.append(render_cell_map(workbook, s.name, mode).text())
        parts.append("Reviewed by: ____________   Date: ____________")
        parts.append("")
    return "\n".join(parts)


# -- coverage ledger ---------------------------------------------------------


class LedgerError(ValueError):
    pass


class FingerprintMismatchError(LedgerError):
    pass


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class SignOff:
    sheet: str
    cell: str
    reviewer: str
    timestamp: str
    phase: str

    def to_dict(self) -> dict[str, str]:
        return {"sheet": self.sheet, "cell": self.cell, "reviewer": self.reviewer, "timestamp": self.timestamp, "phase": self.phase}


@dataclass(frozen=True)
class CoverageLedger:
    fingerprint: ModelFingerprint
    entries: tuple[SignOff, ...] = ()

    def header_line(self) -> str:
        return json.dumps({"fingerprint": self.fingerprint.to_dict()}, sort_keys=True) + "\n"

    def lines(self) -> list[str]:
        return [self.header_line()] + [json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.entries]

    def save(self, path: str | os.PathLike[str]) -> None:
        """Write the ledger, appending only; refuses if the file is not a prefix of this ledger."""
        p = Path(path)
        lines = self.lines()
        if p.exists():
            existing = p.read_text(encoding="utf-8").splitlines(keepends=True)
            if existing != lines[: len(existing)]:
                raise LedgerError(f"{p} is not a prefix of this ledger; refusing to rewrite history")
            new = lines[len(existing):]
        else:
            new = lines
        with open(p, "a", encoding="utf-8") as fh:
            fh.writelines(new)

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> "CoverageLedger":
        text = Path(path).read_text(encoding="utf-8").splitlines()
        if not text:
            raise LedgerError(f"{path}: empty ledger")
        try:
            header = json.loads(text[0])
            fp = ModelFingerprint.from_dict(header["fingerprint"])
            entries = tuple(SignOff(**json.loads(line)) for line in text[1:] if line.strip())
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise LedgerError(f"{path}: malformed ledger: {exc}") from None
        return cls(fp, entries)


def _signoff_cells(workbook: Workbook, cells: RangeRef | CellRef | str) -> list[CellRef]:
    if isinstance(cells, str):
        cells = RangeRef.parse(cells)
    if isinstance(cells, CellRef):
        cells = RangeRef(cells.plain(), cells.plain())
    sheet = workbook.canonical_sheet(cells.sheet)
    if sheet is None:
        raise LedgerError(f"sign-off range {cells.a1()} is not in the model")
    return list(cells.plain(sheet).cells())


def record_signoff(
    ledger: CoverageLedger,
    workbook: Workbook,
    fingerprint: ModelFingerprint,
    cells: RangeRef | CellRef | str,
    reviewer: str,
    phase: str,
    timestamp: str | None = None,
    clock: Callable[[], str] = utc_now,
) -> CoverageLedger:
    """A new ledger with one entry per member cell appended."""
    if not fingerprint.same_content(ledger.fingerprint):
        raise FingerprintMismatchError(
            f"ledger is bound to {ledger.fingerprint.file_name} ({ledger.fingerprint.content_hash[:12]}), "
            f"not to this model ({fingerprint.content_hash[:12]})"
        )
    if not reviewer:
        raise LedgerError("reviewer id required")
    members = _signoff_cells(workbook, cells)
    stamp = timestamp or clock()
    new = tuple(SignOff(ref.sheet, ref.a1(with_sheet=False), reviewer, stamp, phase) for ref in members)  # type: ignore[arg-type]
    return CoverageLedger(ledger.fingerprint, ledger.entries + new)


@dataclass(frozen=True)
class SheetCoverage:
    sheet: str
    signed: int
    total: int
    unsigned: tuple[str, ...] = field(default=())

    @property
    def percent(self) -> float:
        return 100.0 if self.total == 0 else 100.0 * self.signed / self.total

    @property
    def empty(self) -> bool:
        return self.total == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "sheet": self.sheet,
            "signed": self.signed,
            "total": self.total,
            "percent": round(self.percent, 4),
            "zero_denominator": self.empty,
            "unsigned": list(self.unsigned),
        }


def coverage_status(
    ledger: CoverageLedger, workbook: Workbook, fingerprint: ModelFingerprint | None = None
) -> list[SheetCoverage]:
    """Signed share of non-blank cells, per sheet in workbook order."""
    if fingerprint is not None and not fingerprint.same_content(ledger.fingerprint):
        raise FingerprintMismatchError("ledger does not belong to this model version")
    signed: set[tuple[str, str]] = {(e.sheet.casefold(), e.cell) for e in ledger.entries}
    out = []
    for sheet in workbook.sheets:
        key = sheet.name.casefold()
        done = 0
        missing = []
        for row, col in sorted(sheet.cells):
            addr = CellRef(None, col, row).a1()
            if (key, addr) in signed:
                done += 1
            else:
                missing.append(addr)
        out.append(SheetCoverage(sheet.name, done, len(sheet.cells), tuple(missing)))
    return out


def sign_all(
    ledger: CoverageLedger,
    workbook: Workbook,
    fingerprint: ModelFingerprint,
    reviewer: str,
    phase: str,
    timestamp: str | None = None,
) -> CoverageLedger:
    """Sign every non-blank cell of every sheet (the automated pass ticking what it examined)."""
    if not fingerprint.same_content(ledger.fingerprint):
        raise FingerprintMismatchError("ledger does not belong to this model version")
    stamp = timestamp or utc_now()
    new = tuple(
        SignOff(ref.sheet, ref.a1(with_sheet=False), reviewer, stamp, phase)  # type: ignore[arg-type]
        for ref, _ in workbook.iter_cells()
    )
    return CoverageLedger(ledger.fingerprint, ledger.entries + new)


# -- finding management ------------------------------------------------------


def manage_finding(store: FindingStore, finding_id: int, to: str, note: str, iteration: int) -> FindingStore:
    """Move one finding through its lifecycle, keeping the history."""
    return store.with_finding(transition(store.get(finding_id), to, note, iteration))


def findings_summary(findings: Iterable[Any]) -> dict[str, dict[str, int]]:
    by_rule: dict[str, int] = {}
    by_severity: dict[str, int] = {}
    by_status: dict[str, int] = {}
    for f in findings:
        by_rule[f.rule] = by_rule.get(f.rule, 0) + 1
        by_severity[f.severity] = by_severity.get(f.severity, 0) + 1
        by_status[f.status] = by_status.get(f.status, 0) + 1
    return {
        "by_rule": dict(sorted(by_rule.items())),
        "by_severity": dict(sorted(by_severity.items())),
        "by_status": dict(sorted(by_status.items())),
    }
