"""Workbook snapshot types, the JSON interchange loader and model identification."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterator, Mapping

import jsonschema

MAX_COL = 16384
MAX_ROW = 1048576

ERROR_CODES = ("#DIV/0!", "#REF!", "#VALUE!", "#NAME?", "#N/A", "#NUM!", "#NULL!", "#CIRC!")

_A1_RE = re.compile(r"^(\$?)([A-Za-z]{1,3})(\$?)([0-9]{1,7})$")
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_BARE_SHEET_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


class WorkbookError(ValueError):
    """Base class for problems with a workbook file or its contents."""


class SchemaError(WorkbookError):
    def __init__(self, message: str, path: str = "") -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DuplicateSheetError(WorkbookError):
    pass


class DuplicateNameError(WorkbookError):
    pass


class OutOfBoundsError(WorkbookError):
    pass


class UnknownNameError(WorkbookError, LookupError):
    pass


class DanglingNameError(WorkbookError, LookupError):
    pass


# -- addresses ---------------------------------------------------------------


def col_to_letters(col: int) -> str:
    letters = []
    while col > 0:
        col, rem = divmod(col - 1, 26)
        letters.append(chr(65 + rem))
    return "".join(reversed(letters))


def letters_to_col(letters: str) -> int:
    col = 0
    for ch in letters.upper():
        col = col * 26 + (ord(ch) - 64)
    return col


def quote_sheet(sheet: str) -> str:
    """Return ``sheet`` as it must appear before ``!`` in a reference."""
    if _BARE_SHEET_RE.match(sheet) and not _A1_RE.match(sheet):
        return sheet
    return "'" + sheet.replace("'", "''") + "'"


def split_sheet(text: str) -> tuple[str | None, str]:
    """Split ``'Sheet'!A1`` into the unquoted sheet name and the address part."""
    if text.startswith("'"):
        i = 1
        buf = []
        while i < len(text):
            ch = text[i]
            if ch == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    buf.append("'")
                    i += 2
                    continue
                break
            buf.append(ch)
            i += 1
        else:
            raise ValueError(f"unterminated sheet quote in {text!r}")
        rest = text[i + 1:]
        if not rest.startswith("!"):
            raise ValueError(f"expected '!' after sheet name in {text!r}")
        return "".join(buf), rest[1:]
    if "!" in text:
        sheet, _, rest = text.rpartition("!")
        return sheet, rest
    return None, text


@dataclass(frozen=True, slots=True)
class CellRef:
    """A single cell coordinate.

    ``sheet`` is ``None`` only for references inside a formula that were written
    without a sheet qualifier; they are relative to the owning cell's sheet.
    """

    sheet: str | None
    col: int
    row: int
    col_abs: bool = False
    row_abs: bool = False

    def __post_init__(self) -> None:
        if not (1 <= self.col <= MAX_COL and 1 <= self.row <= MAX_ROW):
            raise OutOfBoundsError(f"cell ({self.col}, {self.row}) outside the {MAX_COL}x{MAX_ROW} grid")
        if self.sheet == "":
            raise ValueError("sheet name must be non-empty")

    @classmethod
    def parse(cls, text: str, sheet: str | None = None) -> "CellRef":
        """Parse ``A1``, ``$B$2`` or ``'Debt Sched'!C3``; ``sheet`` is used when unqualified."""
        qualifier, addr = split_sheet(text.strip())
        m = _A1_RE.match(addr)
        if not m:
            raise ValueError(f"not an A1 cell address: {text!r}")
        col = letters_to_col(m.group(2))
        row = int(m.group(4))
        if not (1 <= col <= MAX_COL and 1 <= row <= MAX_ROW):
            raise OutOfBoundsError(f"address {addr!r} is outside the grid")
        return cls(qualifier if qualifier is not None else sheet, col, row, bool(m.group(1)), bool(m.group(3)))

    def a1(self, with_sheet: bool = True) -> str:
        text = f"{'$' if self.col_abs else ''}{col_to_letters(self.col)}{'$' if self.row_abs else ''}{self.row}"
        if with_sheet and self.sheet is not None:
            return f"{quote_sheet(self.sheet)}!{text}"
        return text

    def plain(self, sheet: str | None = None) -> "CellRef":
        """Same coordinate with fixity dropped, qualified with ``sheet`` if given."""
        return CellRef(sheet if sheet is not None else self.sheet, self.col, self.row)

    def offset(self, drow: int, dcol: int) -> "CellRef":
        return CellRef(self.sheet, self.col + dcol, self.row + drow, self.col_abs, self.row_abs)

    def __str__(self) -> str:
        return self.a1()


@dataclass(frozen=True, slots=True)
class RangeRef:
    start: CellRef
    end: CellRef

    def __post_init__(self) -> None:
        if self.start.sheet != self.end.sheet:
            raise ValueError("range endpoints must be on the same sheet")
        if self.start.col > self.end.col or self.start.row > self.end.row:
            raise ValueError("range is not normalized; use RangeRef.of")

    @classmethod
    def of(cls, a: CellRef, b: CellRef) -> "RangeRef":
        """Build a normalized range from two corners in any order."""
        if a.sheet != b.sheet:
            raise ValueError("range endpoints must be on the same sheet")
        (c1, c1abs), (c2, c2abs) = sorted([(a.col, a.col_abs), (b.col, b.col_abs)], key=lambda t: t[0])
        (r1, r1abs), (r2, r2abs) = sorted([(a.row, a.row_abs), (b.row, b.row_abs)], key=lambda t: t[0])
        return cls(CellRef(a.sheet, c1, r1, c1abs, r1abs), CellRef(a.sheet, c2, r2, c2abs, r2abs))

    @classmethod
    def parse(cls, text: str, sheet: str | None = None) -> "RangeRef":
        qualifier, addr = split_sheet(text.strip())
        target = qualifier if qualifier is not None else sheet
        first, sep, second = addr.partition(":")
        a = CellRef.parse(first, target)
        b = CellRef.parse(second, target) if sep else a
        return cls.of(a, b)

    @property
    def sheet(self) -> str | None:
        return self.start.sheet

    @property
    def width(self) -> int:
        return self.end.col - self.start.col + 1

    @property
    def height(self) -> int:
        return self.end.row - self.start.row + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    def cells(self) -> Iterator[CellRef]:
        """Member cells in row-major order, fixity dropped."""
        for row in range(self.start.row, self.end.row + 1):
            for col in range(self.start.col, self.end.col + 1):
                yield CellRef(self.sheet, col, row)

    def contains(self, ref: CellRef) -> bool:
        return (
            self.start.col <= ref.col <= self.end.col
            and self.start.row <= ref.row <= self.end.row
        )

    def intersect(self, other: "RangeRef") -> "RangeRef | None":
        c1, c2 = max(self.start.col, other.start.col), min(self.end.col, other.end.col)
        r1, r2 = max(self.start.row, other.start.row), min(self.end.row, other.end.row)
        if c1 > c2 or r1 > r2:
            return None
        return RangeRef(CellRef(self.sheet, c1, r1), CellRef(self.sheet, c2, r2))

    def plain(self, sheet: str | None = None) -> "RangeRef":
        return RangeRef(self.start.plain(sheet), self.end.plain(sheet))

    def a1(self, with_sheet: bool = True) -> str:
        body = self.start.a1(False)
        if self.end != self.start or self.start.col_abs != self.end.col_abs:
            body += ":" + self.end.a1(False)
        if with_sheet and self.sheet is not None:
            return f"{quote_sheet(self.sheet)}!{body}"
        return body

    def __str__(self) -> str:
        return self.a1()


# -- cells and workbook ------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ErrorValue:
    """A spreadsheet error value such as ``#REF!``."""

    code: str

    def __post_init__(self) -> None:
        if self.code not in ERROR_CODES:
            raise ValueError(f"unknown error code {self.code!r}")

    def __str__(self) -> str:
        return self.code


class CellKind(enum.Enum):
    BLANK = "blank"
    LABEL = "label"
    NUMBER = "number"
    BOOL = "bool"
    ERROR = "error"
    FORMULA = "formula"


@dataclass(frozen=True, slots=True)
class Cell:
    kind: CellKind
    value: Any = None
    cached: Any = None

    def __post_init__(self) -> None:
        if self.kind is CellKind.FORMULA and not (isinstance(self.value, str) and self.value.startswith("=")):
            raise ValueError("formula source must begin with '='")
        if self.kind is CellKind.ERROR and self.value not in ERROR_CODES:
            raise ValueError(f"unknown error code {self.value!r}")
        if self.kind is CellKind.NUMBER and not math.isfinite(self.value):
            raise ValueError("numbers must be finite")

    @classmethod
    def number(cls, value: float) -> "Cell":
        return cls(CellKind.NUMBER, float(value))

    @classmethod
    def label(cls, text: str) -> "Cell":
        return cls(CellKind.LABEL, text)

    @classmethod
    def boolean(cls, value: bool) -> "Cell":
        return cls(CellKind.BOOL, bool(value))

    @classmethod
    def error(cls, code: str) -> "Cell":
        return cls(CellKind.ERROR, code)

    @classmethod
    def formula(cls, source: str, cached: Any = None) -> "Cell":
        return cls(CellKind.FORMULA, source, cached)

    @property
    def is_formula(self) -> bool:
        return self.kind is CellKind.FORMULA


BLANK_CELL = Cell(CellKind.BLANK)


@dataclass(frozen=True, slots=True)
class NamedRange:
    name: str
    text: str
    target: RangeRef | None


@dataclass(frozen=True)
class Sheet:
    name: str
    cells: Mapping[tuple[int, int], Cell]

    def get(self, row: int, col: int) -> Cell:
        return self.cells.get((row, col), BLANK_CELL)

    def bounds(self) -> tuple[int, int, int, int] | None:
        """(min_row, min_col, max_row, max_col) of the used cells, or None if empty."""
        if not self.cells:
            return None
        rows = [r for r, _ in self.cells]
        cols = [c for _, c in self.cells]
        return min(rows), min(cols), max(rows), max(cols)


@dataclass(frozen=True)
class Workbook:
    sheets: tuple[Sheet, ...]
    names: tuple[NamedRange, ...] = ()
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_sheet_index", {s.name.casefold(): i for i, s in enumerate(self.sheets)})
        object.__setattr__(self, "_name_index", {n.name.casefold(): n for n in self.names})

    def sheet_index(self, name: str | None) -> int | None:
        if name is None:
            return None
        return self._sheet_index.get(name.casefold())  # type: ignore[attr-defined]

    def sheet(self, name: str) -> Sheet:
        idx = self.sheet_index(name)
        if idx is None:
            raise KeyError(name)
        return self.sheets[idx]

    def has_sheet(self, name: str | None) -> bool:
        return self.sheet_index(name) is not None

    def canonical_sheet(self, name: str | None) -> str | None:
        """The sheet's declared spelling, or None when no such sheet exists."""
        idx = self.sheet_index(name)
        return None if idx is None else self.sheets[idx].name

    def cell(self, ref: CellRef) -> Cell:
        idx = self.sheet_index(ref.sheet)
        if idx is None:
            return BLANK_CELL
        return self.sheets[idx].get(ref.row, ref.col)

    def named(self, name: str) -> NamedRange | None:
        return self._name_index.get(name.casefold())  # type: ignore[attr-defined]

    def iter_cells(self) -> Iterator[tuple[CellRef, Cell]]:
        """All stored cells in sheet order, then row, then column."""
        for sheet in self.sheets:
            for (row, col) in sorted(sheet.cells):
                yield CellRef(sheet.name, col, row), sheet.cells[(row, col)]

    def replace_cells(self, updates: Mapping[CellRef, Cell | None]) -> "Workbook":
        """Return a copy with the given cells replaced (``None`` or a blank cell removes)."""
        per_sheet: dict[int, dict[tuple[int, int], Cell | None]] = {}
        for ref, cell in updates.items():
            idx = self.sheet_index(ref.sheet)
            if idx is None:
                raise KeyError(f"unknown sheet {ref.sheet!r}")
            per_sheet.setdefault(idx, {})[(ref.row, ref.col)] = cell
        sheets = list(self.sheets)
        for idx, changes in per_sheet.items():
            cells = dict(sheets[idx].cells)
            for key, cell in changes.items():
                if cell is None or cell.kind is CellKind.BLANK:
                    cells.pop(key, None)
                else:
                    cells[key] = cell
            sheets[idx] = Sheet(sheets[idx].name, cells)
        return Workbook(tuple(sheets), self.names, self.meta)


# -- interchange format ------------------------------------------------------

_CELL_SCHEMA = {
    "type": "object",
    "properties": {
        "f": {"type": "string", "pattern": "^="},
        "v": {"type": ["number", "string", "boolean"]},
        "e": {"type": "string", "enum": list(ERROR_CODES)},
    },
    "additionalProperties": False,
    "anyOf": [{"required": ["f"]}, {"required": ["v"]}, {"required": ["e"]}],
    "not": {"required": ["v", "e"]},
}

WORKBOOK_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "meta": {"type": "object", "additionalProperties": {"type": "string"}},
        "names": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"name": {"type": "string"}, "ref": {"type": "string"}},
                "required": ["name", "ref"],
                "additionalProperties": False,
            },
        },
        "sheets": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "cells": {"type": "object", "additionalProperties": _CELL_SCHEMA},
                },
                "required": ["name", "cells"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["sheets"],
    "additionalProperties": False,
}

_validator = jsonschema.Draft202012Validator(WORKBOOK_SCHEMA)


def is_valid_name(name: str) -> bool:
    """Defined-name grammar: identifier characters, and not readable as a cell address."""
    if not _NAME_RE.match(name):
        return False
    if _A1_RE.match(name):
        return False
    return name.upper() not in ("TRUE", "FALSE")


def _cell_from_json(doc: Mapping[str, Any], path: str) -> Cell:
    if "f" in doc:
        cached: Any = None
        if "v" in doc:
            cached = _literal(doc["v"], path)
        elif "e" in doc:
            cached = ErrorValue(doc["e"])
        return Cell(CellKind.FORMULA, doc["f"], cached)
    if "e" in doc:
        return Cell.error(doc["e"])
    return _literal_cell(doc["v"], path)


def cell_from_json(doc: Mapping[str, Any], path: str = "") -> Cell:
    """Decode one interchange cell object (already schema-valid)."""
    return _cell_from_json(doc, path)


def format_literal(cell: Cell) -> str:
    """Exact, re-parseable text for a non-formula cell: numbers shortest-repr, labels JSON-quoted."""
    if cell.kind is CellKind.NUMBER:
        v = cell.value
        return str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
    if cell.kind is CellKind.LABEL:
        return json.dumps(cell.value, ensure_ascii=False)
    if cell.kind is CellKind.BOOL:
        return "TRUE" if cell.value else "FALSE"
    if cell.kind is CellKind.ERROR:
        return cell.value
    if cell.kind is CellKind.FORMULA:
        return cell.value
    return ""


def _literal(value: Any, path: str) -> Any:
    if isinstance(value, bool) or isinstance(value, str):
        return value
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError("number must be finite", path)
    return value


def _literal_cell(value: Any, path: str) -> Cell:
    value = _literal(value, path)
    if isinstance(value, bool):
        return Cell.boolean(value)
    if isinstance(value, str):
        return Cell.label(value)
    return Cell.number(value)


def workbook_from_dict(doc: Any) -> Workbook:
    """Validate a decoded interchange document and build the Workbook."""
    error = jsonschema.exceptions.best_match(_validator.iter_errors(doc))
    if error is not None:
        path = "/".join(str(p) for p in error.absolute_path)
        raise SchemaError(error.message, "/" + path)

    sheets: list[Sheet] = []
    seen: dict[str, str] = {}
    for i, sdoc in enumerate(doc["sheets"]):
        name = sdoc["name"]
        if name.casefold() in seen:
            raise DuplicateSheetError(f"duplicate sheet name {name!r} (also {seen[name.casefold()]!r})")
        seen[name.casefold()] = name
        cells: dict[tuple[int, int], Cell] = {}
        for addr, cdoc in sdoc["cells"].items():
            path = f"/sheets/{i}/cells/{addr}"
            try:
                ref = CellRef.parse(addr)
            except OutOfBoundsError as exc:
                raise OutOfBoundsError(f"{path}: {exc}") from None
            except ValueError:
                raise SchemaError(f"invalid cell address {addr!r}", path) from None
            if ref.sheet is not None or ref.col_abs or ref.row_abs:
                raise SchemaError(f"cell keys must be plain A1 addresses, got {addr!r}", path)
            key = (ref.row, ref.col)
            if key in cells:
                raise SchemaError(f"address {addr!r} given twice", path)
            cells[key] = _cell_from_json(cdoc, path)
        sheets.append(Sheet(name, cells))

    names: list[NamedRange] = []
    seen_names: set[str] = set()
    for i, ndoc in enumerate(doc.get("names", [])):
        name, text = ndoc["name"], ndoc["ref"]
        if not is_valid_name(name):
            raise SchemaError(f"invalid defined name {name!r}", f"/names/{i}/name")
        if name.casefold() in seen_names:
            raise DuplicateNameError(f"duplicate defined name {name!r}")
        seen_names.add(name.casefold())
        try:
            target: RangeRef | None = RangeRef.parse(text)
            if target.sheet is None:
                target = None
        except OutOfBoundsError as exc:
            raise OutOfBoundsError(f"/names/{i}/ref: {exc}") from None
        except ValueError:
            target = None
        names.append(NamedRange(name, text, target))

    return Workbook(tuple(sheets), tuple(names), dict(doc.get("meta", {})))


def load_workbook(path: str | os.PathLike[str]) -> Workbook:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"not a UTF-8 JSON document: {exc}") from None
    return workbook_from_dict(doc)


def _cached_to_json(cached: Any) -> dict[str, Any]:
    if cached is None:
        return {}
    if isinstance(cached, ErrorValue):
        return {"e": cached.code}
    return {"v": cached}


def cell_to_json(cell: Cell) -> dict[str, Any]:
    if cell.kind is CellKind.FORMULA:
        return {"f": cell.value, **_cached_to_json(cell.cached)}
    if cell.kind is CellKind.ERROR:
        return {"e": cell.value}
    return {"v": cell.value}


def workbook_to_dict(wb: Workbook) -> dict[str, Any]:
    doc: dict[str, Any] = {}
    if wb.meta:
        doc["meta"] = dict(wb.meta)
    if wb.names:
        doc["names"] = [{"name": n.name, "ref": n.text} for n in wb.names]
    doc["sheets"] = [
        {
            "name": s.name,
            "cells": {
                CellRef(None, col, row).a1(): cell_to_json(s.cells[(row, col)])
                for row, col in sorted(s.cells)
            },
        }
        for s in wb.sheets
    ]
    return doc


def save_workbook(wb: Workbook, path: str | os.PathLike[str]) -> None:
    Path(path).write_text(json.dumps(workbook_to_dict(wb), indent=1) + "\n", encoding="utf-8")


def resolve_name(workbook: Workbook, name: str) -> RangeRef:
    """Target range of a defined name, looked up case-insensitively."""
    nr = workbook.named(name)
    if nr is None:
        raise UnknownNameError(f"unknown name {name!r}")
    if nr.target is None:
        raise DanglingNameError(f"name {nr.name!r} has unresolvable target {nr.text!r}")
    sheet = workbook.canonical_sheet(nr.target.sheet)
    if sheet is None:
        raise DanglingNameError(f"name {nr.name!r} targets missing sheet {nr.target.sheet!r}")
    return nr.target.plain(sheet)


# -- identification ----------------------------------------------------------


@dataclass(frozen=True)
class ModelFingerprint:
    file_name: str
    byte_size: int
    modified_timestamp: str
    content_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "file_name": self.file_name,
            "byte_size": self.byte_size,
            "modified_timestamp": self.modified_timestamp,
            "content_hash": self.content_hash,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ModelFingerprint":
        return cls(doc["file_name"], int(doc["byte_size"]), doc["modified_timestamp"], doc["content_hash"])

    def same_content(self, other: "ModelFingerprint") -> bool:
        return self.content_hash == other.content_hash and self.byte_size == other.byte_size


def fingerprint_model(path: str | os.PathLike[str]) -> ModelFingerprint:
    p = Path(path)
    digest = hashlib.sha256()
    size = 0
    with open(p, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
            size += len(chunk)
    mtime = datetime.fromtimestamp(p.stat().st_mtime, tz=timezone.utc)
    return ModelFingerprint(
        file_name=p.name,
        byte_size=size,
        modified_timestamp=mtime.strftime("%Y-%m-%dT%H:%M:%SZ"),
        content_hash=digest.hexdigest(),
    )
