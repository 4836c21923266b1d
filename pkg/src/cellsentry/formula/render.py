"""Rendering syntax trees back to source, R1C1 normalization and reference rewriting."""

from __future__ import annotations

from typing import Callable, Literal

from cellsentry.formula.ast import (
    PRECEDENCE,
    Binary,
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
    precedence,
    walk,
)
from cellsentry.model import CellRef, RangeRef, quote_sheet

Style = Literal["A1", "R1C1"]


class NormalizedFormula(str):
    """Canonical R1C1 text; equal for fill-copies of the same formula."""

    __slots__ = ()


def format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _r1c1(ref: CellRef, origin: CellRef) -> str:
    if ref.row_abs:
        row = f"R{ref.row}"
    else:
        d = ref.row - origin.row
        row = f"R[{d}]" if d else "R"
    if ref.col_abs:
        col = f"C{ref.col}"
    else:
        d = ref.col - origin.col
        col = f"C[{d}]" if d else "C"
    return row + col


def _sheet_prefix(sheet: str | None) -> str:
    return "" if sheet is None else quote_sheet(sheet) + "!"


class _Renderer:
    def __init__(self, style: str, origin: CellRef | None, shape: bool = False) -> None:
        self.style = style
        self.origin = origin
        self.shape = shape

    def ref(self, ref: CellRef) -> str:
        if self.shape:
            return "#"
        if self.style == "R1C1":
            assert self.origin is not None
            return _r1c1(ref, self.origin)
        return ref.a1(with_sheet=False)

    def render(self, node: Node) -> str:
        if isinstance(node, NumberLit):
            return format_number(node.value)
        if isinstance(node, TextLit):
            return '"' + node.value.replace('"', '""') + '"'
        if isinstance(node, BoolLit):
            return "TRUE" if node.value else "FALSE"
        if isinstance(node, ErrorLit):
            return node.code
        if isinstance(node, Ref):
            return _sheet_prefix(node.ref.sheet) + self.ref(node.ref)
        if isinstance(node, Range):
            r = node.ref
            return _sheet_prefix(r.sheet) + self.ref(r.start) + ":" + self.ref(r.end)
        if isinstance(node, NameRef):
            # names are case-insensitive; canonical forms fold the spelling
            return node.name.upper() if self.shape or self.style == "R1C1" else node.name
        if isinstance(node, Call):
            return node.name + "(" + ",".join(self.render(a) for a in node.args) + ")"
        if isinstance(node, Unary):
            inner = self.render(node.operand)
            if node.op == "%":
                if precedence(node.operand) < PRECEDENCE["%"]:
                    inner = f"({inner})"
                return inner + "%"
            if precedence(node.operand) < PRECEDENCE["neg"]:
                inner = f"({inner})"
            return node.op + inner
        if isinstance(node, Binary):
            p = precedence(node)
            left = self.render(node.left)
            right = self.render(node.right)
            if precedence(node.left) < p:
                left = f"({left})"
            if precedence(node.right) <= p:
                right = f"({right})"
            return left + node.op + right
        raise TypeError(f"not a formula node: {node!r}")


def render(ast: Node, style: Style = "A1", origin: CellRef | None = None) -> str:
    """Render ``ast`` as formula source with the fewest parentheses that keep its structure."""
    if style == "R1C1" and origin is None:
        raise ValueError("R1C1 rendering needs an origin cell")
    if style not in ("A1", "R1C1"):
        raise ValueError(f"unknown style {style!r}")
    return "=" + _Renderer(style, origin).render(ast)


def normalize_r1c1(ast: Node, origin: CellRef) -> NormalizedFormula:
    return NormalizedFormula(render(ast, "R1C1", origin))


def formula_shape(ast: Node) -> str:
    """Source text with every cell address replaced by ``#``.

    Two formulas with the same shape differ only in where (and how firmly)
    their references point.
    """
    return "=" + _Renderer("A1", None, shape=True).render(ast)


def ref_fixities(ast: Node) -> list[tuple[bool, bool]]:
    """(col_abs, row_abs) for every address in the formula, in source order."""
    out: list[tuple[bool, bool]] = []
    for node in walk(ast):
        if isinstance(node, Ref):
            out.append((node.ref.col_abs, node.ref.row_abs))
        elif isinstance(node, Range):
            out.append((node.ref.start.col_abs, node.ref.start.row_abs))
            out.append((node.ref.end.col_abs, node.ref.end.row_abs))
    return out


def map_refs(ast: Node, fn: Callable[[CellRef], CellRef]) -> Node:
    """Rebuild ``ast`` with every cell address passed through ``fn``."""
    if isinstance(ast, Ref):
        return Ref(fn(ast.ref))
    if isinstance(ast, Range):
        return Range(RangeRef.of(fn(ast.ref.start), fn(ast.ref.end)))
    if isinstance(ast, Unary):
        return Unary(ast.op, map_refs(ast.operand, fn))
    if isinstance(ast, Binary):
        return Binary(ast.op, map_refs(ast.left, fn), map_refs(ast.right, fn))
    if isinstance(ast, Call):
        return Call(ast.name, tuple(map_refs(a, fn) for a in ast.args))
    return ast


def shift_refs(ast: Node, drow: int, dcol: int) -> Node:
    """What the formula becomes when copied ``drow`` rows down and ``dcol`` columns right.

    Absolute components stay put. Raises OutOfBoundsError if a relative
    reference would leave the grid.
    """

    def move(ref: CellRef) -> CellRef:
        return CellRef(
            ref.sheet,
            ref.col if ref.col_abs else ref.col + dcol,
            ref.row if ref.row_abs else ref.row + drow,
            ref.col_abs,
            ref.row_abs,
        )

    return map_refs(ast, move)
