"""Tree-walking formula evaluator."""

from __future__ import annotations

import math
from typing import Callable, Mapping, Union

from cellsentry.engine.functions import FUNCTIONS, Arg, compare, scalar, to_bool, to_number, to_text
from cellsentry.engine.values import BLANK, DIV0, NAME, NUM, REF, VALUE, Grid, Value, number
from cellsentry.formula.ast import (
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
)
from cellsentry.model import CellRef, ErrorValue, RangeRef

Lookup = Callable[[CellRef], Value]
NameResolver = Callable[[str], RangeRef]
Environment = Union[Lookup, Mapping[CellRef, Value]]

_CMP = {
    "=": lambda c: c == 0,
    "<>": lambda c: c != 0,
    "<": lambda c: c < 0,
    "<=": lambda c: c <= 0,
    ">": lambda c: c > 0,
    ">=": lambda c: c >= 0,
}


def _power(a: float, b: float) -> Value:
    if a == 0.0 and b == 0.0:
        return NUM
    if a == 0.0 and b < 0.0:
        return DIV0
    if a < 0.0 and b != math.floor(b):
        return NUM
    try:
        return number(math.pow(a, b))
    except (OverflowError, ValueError):
        return NUM


def _arith(op: str, a: float, b: float) -> Value:
    if op == "+":
        return number(a + b)
    if op == "-":
        return number(a - b)
    if op == "*":
        return number(a * b)
    if op == "/":
        return DIV0 if b == 0.0 else number(a / b)
    return _power(a, b)


class Evaluator:
    def __init__(self, origin: CellRef, lookup: Lookup, names: NameResolver | None = None) -> None:
        self.origin = origin
        self.lookup = lookup
        self.names = names

    def qualify(self, ref: CellRef) -> CellRef:
        # value stores are keyed by fixity-free addresses
        return CellRef(ref.sheet if ref.sheet is not None else self.origin.sheet, ref.col, ref.row)

    def grid(self, rng: RangeRef) -> Grid:
        sheet = rng.sheet if rng.sheet is not None else self.origin.sheet
        lookup = self.lookup
        return Grid(
            tuple(
                tuple(lookup(CellRef(sheet, col, row)) for col in range(rng.start.col, rng.end.col + 1))
                for row in range(rng.start.row, rng.end.row + 1)
            )
        )

    def name_grid(self, name: str) -> Grid | ErrorValue:
        if self.names is None:
            return NAME
        try:
            target = self.names(name)
        except LookupError:
            return NAME
        return self.grid(target)

    def arg(self, node: Node) -> Arg:
        """Evaluate a function argument; references stay as grids."""
        if isinstance(node, Ref):
            return Grid(((self.lookup(self.qualify(node.ref)),),))
        if isinstance(node, Range):
            return self.grid(node.ref)
        if isinstance(node, NameRef):
            return self.name_grid(node.name)
        return self.eval(node)

    def eval(self, node: Node) -> Arg:
        if isinstance(node, NumberLit):
            return node.value
        if isinstance(node, TextLit):
            return node.value
        if isinstance(node, BoolLit):
            return node.value
        if isinstance(node, ErrorLit):
            return ErrorValue(node.code)
        if isinstance(node, Ref):
            return self.lookup(self.qualify(node.ref))
        if isinstance(node, Range):
            return self.grid(node.ref)
        if isinstance(node, NameRef):
            return self.name_grid(node.name)
        if isinstance(node, Unary):
            operand = scalar(self.eval(node.operand))
            if node.op == "+":
                return operand
            x = to_number(operand)
            if isinstance(x, ErrorValue):
                return x
            return -x if node.op == "-" else number(x / 100.0)
        if isinstance(node, Binary):
            return self.binary(node)
        if isinstance(node, Call):
            return self.call(node)
        raise TypeError(f"not a formula node: {node!r}")

    def binary(self, node: Binary) -> Value:
        left = scalar(self.eval(node.left))
        right = scalar(self.eval(node.right))
        op = node.op
        if op == "&":
            a, b = to_text(left), to_text(right)
            if isinstance(a, ErrorValue):
                return a
            if isinstance(b, ErrorValue):
                return b
            return a + b
        if op in _CMP:
            if isinstance(left, ErrorValue):
                return left
            if isinstance(right, ErrorValue):
                return right
            return _CMP[op](compare(left, right))
        x, y = to_number(left), to_number(right)
        if isinstance(x, ErrorValue):
            return x
        if isinstance(y, ErrorValue):
            return y
        return _arith(op, x, y)

    def call(self, node: Call) -> Value:
        sig = FUNCTIONS.get(node.name)
        if sig is None:
            return NAME
        if not (sig.min_args <= len(node.args) <= sig.max_args):
            return VALUE
        if node.name == "IF":
            cond = to_bool(self.eval(node.args[0]))
            if isinstance(cond, ErrorValue):
                return cond
            if cond:
                return scalar(self.arg(node.args[1]))
            if len(node.args) > 2:
                return scalar(self.arg(node.args[2]))
            return False
        assert sig.impl is not None
        return sig.impl([self.arg(a) for a in node.args])


def _as_lookup(environment: Environment) -> Lookup:
    if callable(environment):
        return environment
    mapping = environment

    def lookup(ref: CellRef) -> Value:
        return mapping.get(ref, BLANK)

    return lookup


def finish(result: Arg) -> Value:
    """A formula's final cell value: ranges collapse or fail, blank reads as zero."""
    value = scalar(result)
    if value is BLANK:
        return 0.0
    return value


def eval_formula(ast: Node, origin: CellRef, environment: Environment, names: NameResolver | None = None) -> Value:
    """Evaluate ``ast`` as the formula of ``origin``.

    ``environment`` maps sheet-qualified, fixity-free cell references to their
    current values (a callable or a mapping; missing cells read as blank).
    Problems come back as error values; this never raises for bad input.
    """
    return finish(Evaluator(origin, _as_lookup(environment), names).eval(ast))


__all__ = ["Evaluator", "eval_formula", "finish", "REF"]
