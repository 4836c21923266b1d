"""Recalculation engine: values, function library, evaluator and workbook recalculation."""

from cellsentry.engine.evaluator import eval_formula
from cellsentry.engine.functions import FUNCTIONS, STRUCTURAL_ARGS, Signature, irr, round_decimal
from cellsentry.engine.recalc import (
    DEFAULT_TOLERANCE,
    OverrideError,
    RecalcResult,
    recalculate,
    verify_cached_values,
)
from cellsentry.engine.values import BLANK, CIRC, Grid, Value, display, value_from_json, value_to_json

__all__ = [
    "BLANK",
    "CIRC",
    "DEFAULT_TOLERANCE",
    "FUNCTIONS",
    "Grid",
    "OverrideError",
    "RecalcResult",
    "STRUCTURAL_ARGS",
    "Signature",
    "Value",
    "display",
    "eval_formula",
    "irr",
    "recalculate",
    "round_decimal",
    "value_from_json",
    "value_to_json",
    "verify_cached_values",
]
