"""Runtime values: float, str, bool, ErrorValue, BLANK, plus 2-D range grids."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Union

from cellsentry.model import Cell, CellKind, ErrorValue


class _Blank:
    __slots__ = ()

    def __repr__(self) -> str:
        return "BLANK"

    def __reduce__(self) -> str:
        return "BLANK"


BLANK = _Blank()

DIV0 = ErrorValue("#DIV/0!")
REF = ErrorValue("#REF!")
VALUE = ErrorValue("#VALUE!")
NAME = ErrorValue("#NAME?")
NA = ErrorValue("#N/A")
NUM = ErrorValue("#NUM!")
CIRC = ErrorValue("#CIRC!")

Value = Union[float, str, bool, ErrorValue, _Blank]


@dataclass(frozen=True)
class Grid:
    """The values of a range, row-major, as produced when evaluating a range reference."""

    rows: tuple[tuple[Value, ...], ...]

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def flat(self) -> list[Value]:
        return [v for row in self.rows for v in row]


def number(x: float) -> float | ErrorValue:
    """Wrap an arithmetic result; NaN and infinities become #NUM!."""
    if isinstance(x, complex) or not math.isfinite(x):
        return NUM
    return float(x)


def is_number(v: Any) -> bool:
    return isinstance(v, float) and not isinstance(v, bool)


def cell_value(cell: Cell) -> Value:
    if cell.kind is CellKind.BLANK:
        return BLANK
    if cell.kind is CellKind.ERROR:
        return ErrorValue(cell.value)
    if cell.kind is CellKind.FORMULA:
        raise ValueError("formula cells have no literal value")
    return cell.value


def literal_to_value(value: Any) -> Value:
    """Coerce an override or JSON literal into a runtime value."""
    if value is None:
        return BLANK
    if isinstance(value, (ErrorValue, _Blank, bool, str)):
        return value
    if isinstance(value, (int, float)):
        return number(float(value))
    raise TypeError(f"unsupported literal {value!r}")


def value_to_json(v: Value) -> Any:
    if isinstance(v, ErrorValue):
        return {"e": v.code}
    if v is BLANK:
        return None
    return v


def value_from_json(doc: Any) -> Value:
    if isinstance(doc, dict):
        return ErrorValue(doc["e"])
    if doc is None:
        return BLANK
    return literal_to_value(doc)


def display(v: Value) -> str:
    if isinstance(v, ErrorValue):
        return v.code
    if v is BLANK:
        return ""
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, float):
        return format(v, ".15g")
    return str(v)
