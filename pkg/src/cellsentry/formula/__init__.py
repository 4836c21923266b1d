"""Formula parsing, rendering, R1C1 normalization and reference extraction."""

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
    walk,
)
from cellsentry.formula.parser import FormulaSyntaxError, parse_formula, tokenize
from cellsentry.formula.refs import Dangling, Target, collect_refs
from cellsentry.formula.render import (
    NormalizedFormula,
    format_number,
    formula_shape,
    map_refs,
    normalize_r1c1,
    ref_fixities,
    render,
    shift_refs,
)

__all__ = [
    "Binary",
    "BoolLit",
    "Call",
    "Dangling",
    "ErrorLit",
    "FormulaSyntaxError",
    "NameRef",
    "Node",
    "NormalizedFormula",
    "NumberLit",
    "Range",
    "Ref",
    "Target",
    "TextLit",
    "Unary",
    "collect_refs",
    "format_number",
    "formula_shape",
    "map_refs",
    "normalize_r1c1",
    "parse_formula",
    "ref_fixities",
    "render",
    "shift_refs",
    "tokenize",
    "walk",
]
