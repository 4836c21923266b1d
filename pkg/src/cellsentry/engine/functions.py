"""Worksheet function library and its signature table.

Implementations receive already-evaluated arguments: a Value for scalar
expressions or a Grid for references. IF is the one lazy function and is
handled by the evaluator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_DOWN, ROUND_HALF_UP, ROUND_UP, Context, Decimal, InvalidOperation
from typing import Callable, Sequence, Union

from cellsentry.engine.values import (
    BLANK,
    DIV0,
    NA,
    NUM,
    REF,
    VALUE,
    Grid,
    Value,
    is_number,
    number,
)
from cellsentry.model import ErrorValue

Arg = Union[Value, Grid]

IRR_MAX_STEPS = 100
IRR_TOLERANCE = 1e-9
IRR_BRACKET = (-0.9999, 10.0)


# -- coercions ---------------------------------------------------------------


def scalar(arg: Arg) -> Value:
    if isinstance(arg, Grid):
        if arg.height == 1 and arg.width == 1:
            return arg.rows[0][0]
        return VALUE
    return arg


def to_number(v: Arg) -> float | ErrorValue:
    v = scalar(v)
    if isinstance(v, ErrorValue):
        return v
    if isinstance(v, bool):
        return 1.0 if v else 0.0
    if v is BLANK:
        return 0.0
    if isinstance(v, float):
        return v
    return VALUE  # numeric text is deliberately not coerced


def to_bool(v: Arg) -> bool | ErrorValue:
    v = scalar(v)
    if isinstance(v, ErrorValue):
        return v
    if isinstance(v, bool):
        return v
    if v is BLANK:
        return False
    if isinstance(v, float):
        return v != 0.0
    return VALUE


def to_text(v: Arg) -> str | ErrorValue:
    v = scalar(v)
    if isinstance(v, ErrorValue):
        return v
    if v is BLANK:
        return ""
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, float):
        return format(v, ".15g")
    return v


_TYPE_ORDER = {float: 0, str: 1, bool: 2}


def _kind(v: Value) -> int:
    return _TYPE_ORDER[type(v)]  # type: ignore[index]


def compare(a: Value, b: Value) -> int:
    """Three-way comparison with worksheet ordering: numbers < text < logicals."""
    if a is BLANK and b is BLANK:
        return 0
    if a is BLANK:
        a = {float: 0.0, str: "", bool: False}[type(b)]  # type: ignore[index]
    if b is BLANK:
        b = {float: 0.0, str: "", bool: False}[type(a)]  # type: ignore[index]
    ka, kb = _kind(a), _kind(b)
    if ka != kb:
        return -1 if ka < kb else 1
    if isinstance(a, str):
        a, b = a.casefold(), b.casefold()  # type: ignore[union-attr]
    if a < b:  # type: ignore[operator]
        return -1
    return 1 if a > b else 0  # type: ignore[operator]


# -- helpers -----------------------------------------------------------------


def _collect_numbers(args: Sequence[Arg]) -> list[float] | ErrorValue:
    """Numbers for aggregate functions.

    Inside references only true numbers count and errors propagate. Direct
    arguments: logicals count as 1/0, text is an error.
    """
    out: list[float] = []
    for arg in args:
        if isinstance(arg, Grid):
            for v in arg.flat():
                if isinstance(v, ErrorValue):
                    return v
                if is_number(v):
                    out.append(v)  # type: ignore[arg-type]
        else:
            if isinstance(arg, ErrorValue):
                return arg
            if arg is BLANK:
                continue
            if isinstance(arg, str):
                return VALUE
            out.append(1.0 if arg is True else 0.0 if arg is False else arg)  # type: ignore[arg-type]
    return out


def _fsum(values: list[float]) -> float:
    total = 0.0
    for v in values:
        total += v
    return total


def _int_arg(arg: Arg) -> int | ErrorValue:
    n = to_number(arg)
    if isinstance(n, ErrorValue):
        return n
    return int(math.trunc(n))


# -- aggregates --------------------------------------------------------------


def fn_sum(args: Sequence[Arg]) -> Value:
    nums = _collect_numbers(args)
    return nums if isinstance(nums, ErrorValue) else number(_fsum(nums))


def fn_min(args: Sequence[Arg]) -> Value:
    nums = _collect_numbers(args)
    return nums if isinstance(nums, ErrorValue) else (min(nums) if nums else 0.0)


def fn_max(args: Sequence[Arg]) -> Value:
    nums = _collect_numbers(args)
    return nums if isinstance(nums, ErrorValue) else (max(nums) if nums else 0.0)


def fn_average(args: Sequence[Arg]) -> Value:
    nums = _collect_numbers(args)
    if isinstance(nums, ErrorValue):
        return nums
    if not nums:
        return DIV0
    return number(_fsum(nums) / len(nums))


def fn_count(args: Sequence[Arg]) -> Value:
    n = 0
    for arg in args:
        if isinstance(arg, Grid):
            n += sum(1 for v in arg.flat() if is_number(v))
        elif isinstance(arg, (float, bool)):
            n += 1
    return float(n)


def fn_counta(args: Sequence[Arg]) -> Value:
    n = 0
    for arg in args:
        if isinstance(arg, Grid):
            n += sum(1 for v in arg.flat() if v is not BLANK)
        elif arg is not BLANK:
            n += 1
    return float(n)


# -- logic -------------------------------------------------------------------


def _logicals(args: Sequence[Arg]) -> list[bool] | ErrorValue:
    out: list[bool] = []
    for arg in args:
        if isinstance(arg, Grid):
            for v in arg.flat():
                if isinstance(v, ErrorValue):
                    return v
                if isinstance(v, bool):
                    out.append(v)
                elif isinstance(v, float):
                    out.append(v != 0.0)
        else:
            b = to_bool(arg)
            if isinstance(b, ErrorValue):
                return b
            out.append(b)
    return out if out else VALUE


def fn_and(args: Sequence[Arg]) -> Value:
    vals = _logicals(args)
    return vals if isinstance(vals, ErrorValue) else all(vals)


def fn_or(args: Sequence[Arg]) -> Value:
    vals = _logicals(args)
    return vals if isinstance(vals, ErrorValue) else any(vals)


def fn_not(args: Sequence[Arg]) -> Value:
    b = to_bool(args[0])
    return b if isinstance(b, ErrorValue) else not b


# -- math --------------------------------------------------------------------


def fn_abs(args: Sequence[Arg]) -> Value:
    x = to_number(args[0])
    return x if isinstance(x, ErrorValue) else abs(x)


_ROUND_CONTEXT = Context(prec=1000, Emax=100000, Emin=-100000)


def round_decimal(x: float, digits: int, mode: str = ROUND_HALF_UP) -> float:
    """Round the shortest decimal representation of ``x`` to ``digits`` places.

    ``ROUND_HALF_UP`` in :mod:`decimal` rounds ties away from zero, which is
    the worksheet convention (not banker's rounding).
    """
    digits = max(-400, min(400, digits))
    d = Decimal(repr(x))
    try:
        q = d.scaleb(digits, _ROUND_CONTEXT).quantize(Decimal(1), rounding=mode, context=_ROUND_CONTEXT)
        return float(q.scaleb(-digits, _ROUND_CONTEXT))
    except InvalidOperation:
        return x


def _round_with(mode: str) -> Callable[[Sequence[Arg]], Value]:
    def impl(args: Sequence[Arg]) -> Value:
        x = to_number(args[0])
        if isinstance(x, ErrorValue):
            return x
        n = _int_arg(args[1])
        if isinstance(n, ErrorValue):
            return n
        return number(round_decimal(x, n, mode))

    return impl


# -- lookup ------------------------------------------------------------------


def fn_index(args: Sequence[Arg]) -> Value:
    grid = args[0]
    if not isinstance(grid, Grid):
        return VALUE
    r = _int_arg(args[1])
    if isinstance(r, ErrorValue):
        return r
    if len(args) > 2:
        c = _int_arg(args[2])
        if isinstance(c, ErrorValue):
            return c
    elif grid.height == 1:
        r, c = 1, r
    elif grid.width == 1:
        c = 1
    else:
        return VALUE
    if r < 1 or c < 1:
        return VALUE
    if r > grid.height or c > grid.width:
        return REF
    return grid.rows[r - 1][c - 1]


def _approx_position(keys: Sequence[Value], target: Value) -> int | None:
    """Index of the last key <= target of the same type, scanning an ascending list."""
    best = None
    for i, key in enumerate(keys):
        if key is BLANK or isinstance(key, ErrorValue) or type(key) is not type(target):
            continue
        if compare(key, target) <= 0:
            best = i
        else:
            break
    return best


def _exact_position(keys: Sequence[Value], target: Value) -> int | None:
    for i, key in enumerate(keys):
        if key is BLANK or isinstance(key, ErrorValue) or type(key) is not type(target):
            continue
        if compare(key, target) == 0:
            return i
    return None


def fn_match(args: Sequence[Arg]) -> Value:
    target = scalar(args[0])
    if isinstance(target, ErrorValue):
        return target
    if target is BLANK:
        return NA
    grid = args[1]
    if not isinstance(grid, Grid):
        return NA
    if grid.height != 1 and grid.width != 1:
        return NA
    kind = 1
    if len(args) > 2:
        k = _int_arg(args[2])
        if isinstance(k, ErrorValue):
            return k
        kind = k
    if kind not in (0, 1):
        return VALUE
    keys = grid.flat()
    pos = _exact_position(keys, target) if kind == 0 else _approx_position(keys, target)
    return NA if pos is None else float(pos + 1)


def fn_vlookup(args: Sequence[Arg]) -> Value:
    target = scalar(args[0])
    if isinstance(target, ErrorValue):
        return target
    if target is BLANK:
        return NA
    table = args[1]
    if not isinstance(table, Grid):
        return VALUE
    col = _int_arg(args[2])
    if isinstance(col, ErrorValue):
        return col
    if col < 1:
        return VALUE
    if col > table.width:
        return REF
    approx: bool | ErrorValue = True
    if len(args) > 3:
        approx = to_bool(args[3])
        if isinstance(approx, ErrorValue):
            return approx
    keys = [row[0] for row in table.rows]
    pos = _approx_position(keys, target) if approx else _exact_position(keys, target)
    return NA if pos is None else table.rows[pos][col - 1]


# -- finance -----------------------------------------------------------------


def fn_npv(args: Sequence[Arg]) -> Value:
    rate = to_number(args[0])
    if isinstance(rate, ErrorValue):
        return rate
    flows = _collect_numbers(args[1:])
    if isinstance(flows, ErrorValue):
        return flows
    if rate == -1.0:
        return DIV0
    total = 0.0
    factor = 1.0
    for cf in flows:
        factor *= 1.0 + rate
        total += cf / factor
    return number(total)


def _npv_at(rate: float, flows: Sequence[float]) -> float:
    total = 0.0
    for i, cf in enumerate(flows):
        try:
            total += cf / (1.0 + rate) ** i
        except ZeroDivisionError:
            total += math.copysign(math.inf, cf) if cf else 0.0
        except OverflowError:
            pass  # term vanishes
    return total


def _npv_slope(rate: float, flows: Sequence[float]) -> float:
    total = 0.0
    for i, cf in enumerate(flows):
        if i:
            total -= i * cf / (1.0 + rate) ** (i + 1)
    return total


def irr(flows: Sequence[float], guess: float = 0.1) -> float | ErrorValue:
    """Internal rate of return of cash flows at t = 0, 1, 2, ...

    Newton's method from ``guess`` (at most 100 steps, stopping once
    |NPV| < 1e-9); if that fails, bisection on [-0.9999, 10] provided NPV
    changes sign there; otherwise #NUM!.
    """
    if not any(cf > 0 for cf in flows) or not any(cf < 0 for cf in flows):
        return NUM
    try:
        r = guess
        for _ in range(IRR_MAX_STEPS):
            f = _npv_at(r, flows)
            if abs(f) < IRR_TOLERANCE:
                return r
            slope = _npv_slope(r, flows)
            if slope == 0.0 or not math.isfinite(slope):
                break
            nxt = r - f / slope
            if not math.isfinite(nxt) or nxt <= -1.0:
                break
            r = nxt
        else:
            if abs(_npv_at(r, flows)) < IRR_TOLERANCE:
                return r
    except (OverflowError, ZeroDivisionError):
        pass

    lo, hi = IRR_BRACKET
    f_lo, f_hi = _npv_at(lo, flows), _npv_at(hi, flows)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        return NUM
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        f_mid = _npv_at(mid, flows)
        if abs(f_mid) < IRR_TOLERANCE or mid in (lo, hi):
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fn_irr(args: Sequence[Arg]) -> Value:
    flows = _collect_numbers(args[:1])
    if isinstance(flows, ErrorValue):
        return flows
    guess = 0.1
    if len(args) > 1:
        g = to_number(args[1])
        if isinstance(g, ErrorValue):
            return g
        guess = g
    result = irr(flows, guess)
    return result if isinstance(result, ErrorValue) else number(result)


# -- signature table ---------------------------------------------------------


@dataclass(frozen=True)
class Signature:
    min_args: int
    max_args: int
    impl: Callable[[Sequence[Arg]], Value] | None
    # per-position argument kinds; the last entry repeats for variadic functions.
    # "ref": must be a reference; "num": a scalar number; "any": anything.
    params: tuple[str, ...] = ("any",)

    def kind_at(self, i: int) -> str:
        return self.params[min(i, len(self.params) - 1)]


FUNCTIONS: dict[str, Signature] = {
    "SUM": Signature(1, 255, fn_sum),
    "MIN": Signature(1, 255, fn_min),
    "MAX": Signature(1, 255, fn_max),
    "AVERAGE": Signature(1, 255, fn_average),
    "COUNT": Signature(1, 255, fn_count),
    "COUNTA": Signature(1, 255, fn_counta),
    "IF": Signature(2, 3, None, ("scalar", "any", "any")),
    "AND": Signature(1, 255, fn_and),
    "OR": Signature(1, 255, fn_or),
    "NOT": Signature(1, 1, fn_not, ("scalar",)),
    "ABS": Signature(1, 1, fn_abs, ("num",)),
    "ROUND": Signature(2, 2, _round_with(ROUND_HALF_UP), ("num", "num")),
    "ROUNDUP": Signature(2, 2, _round_with(ROUND_UP), ("num", "num")),
    "ROUNDDOWN": Signature(2, 2, _round_with(ROUND_DOWN), ("num", "num")),
    "INDEX": Signature(2, 3, fn_index, ("ref", "num", "num")),
    "MATCH": Signature(2, 3, fn_match, ("scalar", "ref", "num")),
    "VLOOKUP": Signature(3, 4, fn_vlookup, ("scalar", "ref", "num", "scalar")),
    "NPV": Signature(2, 255, fn_npv, ("num", "any")),
    "IRR": Signature(1, 2, fn_irr, ("ref", "num")),
}

# Argument positions holding structural numbers (digits, column indexes, match
# modes); literal numbers there are not embedded business constants.
STRUCTURAL_ARGS: dict[str, frozenset[int]] = {
    "ROUND": frozenset({1}),
    "ROUNDUP": frozenset({1}),
    "ROUNDDOWN": frozenset({1}),
    "VLOOKUP": frozenset({2, 3}),
    "INDEX": frozenset({1, 2}),
    "MATCH": frozenset({2}),
}
