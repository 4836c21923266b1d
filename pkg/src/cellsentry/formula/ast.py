"""Formula syntax tree nodes.

Nodes are frozen dataclasses, so structural equality and hashing come for free.
Number literals produced by the parser are never negative: ``-5`` is
``Unary("-", NumberLit(5.0))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from cellsentry.model import CellRef, RangeRef


@dataclass(frozen=True, slots=True)
class NumberLit:
    value: float


@dataclass(frozen=True, slots=True)
class TextLit:
    value: str


@dataclass(frozen=True, slots=True)
class BoolLit:
    value: bool


@dataclass(frozen=True, slots=True)
class ErrorLit:
    code: str


@dataclass(frozen=True, slots=True)
class Ref:
    ref: CellRef


@dataclass(frozen=True, slots=True)
class Range:
    ref: RangeRef


@dataclass(frozen=True, slots=True)
class NameRef:
    name: str


@dataclass(frozen=True, slots=True)
class Unary:
    op: str  # "-", "+" (prefix) or "%" (postfix)
    operand: "Node"


@dataclass(frozen=True, slots=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True, slots=True)
class Call:
    name: str
    args: tuple["Node", ...]


Node = Union[NumberLit, TextLit, BoolLit, ErrorLit, Ref, Range, NameRef, Unary, Binary, Call]

COMPARISON_OPS = ("=", "<>", "<", "<=", ">", ">=")

# Binding strength; larger binds tighter.
PRECEDENCE = {
    "cmp": 1,
    "&": 2,
    "+": 3,
    "-": 3,
    "*": 4,
    "/": 4,
    "^": 5,
    "neg": 6,
    "%": 7,
    "atom": 8,
}


def precedence(node: Node) -> int:
    if isinstance(node, Binary):
        return PRECEDENCE["cmp"] if node.op in COMPARISON_OPS else PRECEDENCE[node.op]
    if isinstance(node, Unary):
        return PRECEDENCE["%"] if node.op == "%" else PRECEDENCE["neg"]
    return PRECEDENCE["atom"]


def walk(node: Node) -> Iterator[Node]:
    """Pre-order traversal."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        if isinstance(n, Binary):
            stack.append(n.right)
            stack.append(n.left)
        elif isinstance(n, Unary):
            stack.append(n.operand)
        elif isinstance(n, Call):
            stack.extend(reversed(n.args))
