"""Tokenizer and recursive-descent parser for formula source text.

Grammar (see docs/grammar.md for the EBNF)::

    formula    = "=" comparison
    comparison = concat { ("=" | "<>" | "<" | "<=" | ">" | ">=") concat }
    concat     = additive { "&" additive }
    additive   = term { ("+" | "-") term }
    term       = power { ("*" | "/") power }
    power      = prefix { "^" prefix }
    prefix     = ("-" | "+") prefix | postfix
    postfix    = primary { "%" }
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from cellsentry.formula.ast import (
    COMPARISON_OPS,
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
from cellsentry.model import MAX_COL, MAX_ROW, CellRef, RangeRef, letters_to_col

FORMULA_ERROR_CODES = ("#DIV/0!", "#REF!", "#VALUE!", "#NAME?", "#N/A", "#NUM!", "#NULL!")
MAX_ARGS = 255


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # num, str, err, ident, ref, op, lparen, rparen, comma, colon, end
    text: str
    pos: int
    sheet: str | None = None


_NUMBER_RE = re.compile(r"(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_CELL_RE = re.compile(r"(\$?)([A-Za-z]{1,3})(\$?)([0-9]{1,7})(?![A-Za-z0-9_.(])")
_OPS = ("<=", ">=", "<>", "+", "-", "*", "/", "^", "&", "=", "<", ">", "%")


def _cell_ref(m: re.Match[str], sheet: str | None) -> CellRef | None:
    col = letters_to_col(m.group(2))
    row = int(m.group(4))
    if not (1 <= col <= MAX_COL and 1 <= row <= MAX_ROW):
        return None
    return CellRef(sheet, col, row, bool(m.group(1)), bool(m.group(3)))


def tokenize(text: str, start: int = 0) -> list[Token]:
    tokens: list[Token] = []
    i, n = start, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == '"':
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise FormulaSyntaxError("unterminated string literal", i)
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        buf.append('"')
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            tokens.append(Token("str", "".join(buf), i))
            i = j + 1
            continue
        if ch == "#":
            for code in FORMULA_ERROR_CODES:
                if text.startswith(code, i) or text[i:i + len(code)].upper() == code:
                    tokens.append(Token("err", code, i))
                    i += len(code)
                    break
            else:
                raise FormulaSyntaxError("unknown error literal", i)
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            m = _NUMBER_RE.match(text, i)
            assert m is not None
            tokens.append(Token("num", m.group(0), i))
            i = m.end()
            continue
        sheet = None
        tok_start = i
        if ch == "'":
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise FormulaSyntaxError("unterminated sheet name", i)
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            if j + 1 >= n or text[j + 1] != "!":
                raise FormulaSyntaxError("expected '!' after quoted sheet name", j + 1)
            sheet = "".join(buf)
            if not sheet:
                raise FormulaSyntaxError("empty sheet name", i)
            i = j + 2
        elif ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(text, i)
            assert m is not None
            if m.end() < n and text[m.end()] == "!":
                sheet = m.group(0)
                i = m.end() + 1
        if sheet is not None or ch == "$" or ch.isalpha() or ch == "_":
            m = _CELL_RE.match(text, i)
            if m is not None:
                ref = _cell_ref(m, sheet)
                if ref is not None:
                    tokens.append(Token("ref", m.group(0), tok_start, sheet))
                    i = m.end()
                    continue
            if sheet is not None:
                raise FormulaSyntaxError("expected a cell reference after sheet qualifier", i)
            m = _IDENT_RE.match(text, i)
            if m is None:
                raise FormulaSyntaxError(f"unexpected character {ch!r}", i)
            tokens.append(Token("ident", m.group(0), i))
            i = m.end()
            continue
        if ch == "(":
            tokens.append(Token("lparen", ch, i))
        elif ch == ")":
            tokens.append(Token("rparen", ch, i))
        elif ch == ",":
            tokens.append(Token("comma", ch, i))
        elif ch == ":":
            tokens.append(Token("colon", ch, i))
        else:
            for op in _OPS:
                if text.startswith(op, i):
                    tokens.append(Token("op", op, i))
                    i += len(op)
                    break
            else:
                raise FormulaSyntaxError(f"unexpected character {ch!r}", i)
            continue
        i += 1
    tokens.append(Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, start: int) -> None:
        self.tokens = tokenize(text, start)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> FormulaSyntaxError:
        tok = tok or self.peek()
        return FormulaSyntaxError(message, tok.pos)

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text in ops

    def parse(self) -> Node:
        node = self.comparison()
        if self.peek().kind != "end":
            raise self.error(f"unexpected {self.peek().text!r}")
        return node

    def comparison(self) -> Node:
        node = self.concat()
        while self.at_op(*COMPARISON_OPS):
            op = self.advance().text
            node = Binary(op, node, self.concat())
        return node

    def concat(self) -> Node:
        node = self.additive()
        while self.at_op("&"):
            self.advance()
            node = Binary("&", node, self.additive())
        return node

    def additive(self) -> Node:
        node = self.term()
        while self.at_op("+", "-"):
            op = self.advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.power()
        while self.at_op("*", "/"):
            op = self.advance().text
            node = Binary(op, node, self.power())
        return node

    def power(self) -> Node:
        node = self.prefix()
        while self.at_op("^"):
            self.advance()
            node = Binary("^", node, self.prefix())
        return node

    def prefix(self) -> Node:
        if self.at_op("-", "+"):
            op = self.advance().text
            return Unary(op, self.prefix())
        return self.postfix()

    def postfix(self) -> Node:
        node = self.primary()
        while self.at_op("%"):
            self.advance()
            node = Unary("%", node)
        return node

    def primary(self) -> Node:
        tok = self.advance()
        if tok.kind == "num":
            return NumberLit(float(tok.text))
        if tok.kind == "str":
            return TextLit(tok.text)
        if tok.kind == "err":
            return ErrorLit(tok.text)
        if tok.kind == "lparen":
            node = self.comparison()
            if self.advance().kind != "rparen":
                raise self.error("expected ')'", self.tokens[self.i - 1])
            return node
        if tok.kind == "ref":
            m = _CELL_RE.match(tok.text)
            assert m is not None
            start = _cell_ref(m, tok.sheet)
            assert start is not None
            if self.peek().kind == "colon":
                self.advance()
                end_tok = self.advance()
                if end_tok.kind != "ref" or end_tok.sheet is not None:
                    raise self.error("expected a cell address after ':'", end_tok)
                m2 = _CELL_RE.match(end_tok.text)
                assert m2 is not None
                end = _cell_ref(m2, tok.sheet)
                assert end is not None
                return Range(RangeRef.of(start, end))
            return Ref(start)
        if tok.kind == "ident":
            if self.peek().kind == "lparen":
                self.advance()
                return Call(tok.text.upper(), self.arguments())
            upper = tok.text.upper()
            if upper in ("TRUE", "FALSE"):
                return BoolLit(upper == "TRUE")
            return NameRef(tok.text)
        if tok.kind == "end":
            raise self.error("unexpected end of formula", tok)
        raise self.error(f"unexpected {tok.text!r}", tok)

    def arguments(self) -> tuple[Node, ...]:
        args: list[Node] = []
        if self.peek().kind == "rparen":
            self.advance()
            return ()
        while True:
            args.append(self.comparison())
            tok = self.advance()
            if tok.kind == "rparen":
                break
            if tok.kind != "comma":
                raise self.error("expected ',' or ')'", tok)
        if len(args) > MAX_ARGS:
            raise self.error(f"more than {MAX_ARGS} arguments")
        return tuple(args)


def parse_formula(text: str) -> Node:
    """Parse formula source (which must start with ``=``) into a syntax tree.

    Raises FormulaSyntaxError carrying the character offset of the problem.
    """
    if not text.startswith("="):
        raise FormulaSyntaxError("formula must begin with '='", 0)
    return _Parser(text, 1).parse()
