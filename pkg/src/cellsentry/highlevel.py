"""High-level review: role bindings over a period axis and financial integrity assertions."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from cellsentry.engine.recalc import RecalcResult
from cellsentry.engine.values import BLANK, is_number
from cellsentry.findings import Finding, make_finding
from cellsentry.model import CellRef, RangeRef, Workbook, WorkbookError, resolve_name

ROLES = (
    "total_assets",
    "total_liabilities",
    "equity",
    "retained_earnings",
    "net_income",
    "dividends",
    "debt_balance",
    "debt_final_period",
    "fixed_asset_nbv",
    "revenue",
    "costs",
    "production",
    "tax_charge",
)
DEFAULT_TOLERANCE = 0.005

PASS, FAIL, NOT_RUN = "pass", "fail", "not_run"


class FinancialSchemaError(ValueError):
    pass


class UnknownRoleError(FinancialSchemaError):
    pass


class LengthMismatchError(FinancialSchemaError):
    pass


class UnresolvedRangeError(FinancialSchemaError):
    pass


@dataclass(frozen=True)
class FinancialSchema:
    period_axis: RangeRef
    roles: Mapping[str, RangeRef]
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def periods(self) -> int:
        return self.period_axis.area

    def cells(self, role: str) -> list[CellRef]:
        return list(self.roles[role].cells())


def _resolve(workbook: Workbook, text: str, what: str) -> RangeRef:
    if workbook.named(text) is not None:
        try:
            return resolve_name(workbook, text)
        except LookupError as exc:
            raise UnresolvedRangeError(f"{what}: {exc}") from None
    try:
        rng = RangeRef.parse(text)
    except (ValueError, WorkbookError):
        raise UnresolvedRangeError(f"{what}: cannot parse range {text!r}") from None
    sheet = workbook.canonical_sheet(rng.sheet)
    if sheet is None:
        raise UnresolvedRangeError(f"{what}: {text!r} does not name a sheet of this workbook")
    return rng.plain(sheet)


def schema_from_dict(doc: Mapping[str, Any], workbook: Workbook) -> FinancialSchema:
    if not isinstance(doc, Mapping) or "period_axis" not in doc:
        raise FinancialSchemaError('schema needs a "period_axis"')
    axis = _resolve(workbook, doc["period_axis"], "period_axis")
    if axis.width != 1 and axis.height != 1:
        raise FinancialSchemaError("period axis must be a single row or column")
    roles: dict[str, RangeRef] = {}
    for role, text in doc.get("roles", {}).items():
        if role not in ROLES:
            raise UnknownRoleError(f"unknown role {role!r}")
        rng = _resolve(workbook, text, role)
        if rng.width != 1 and rng.height != 1:
            raise FinancialSchemaError(f"{role}: range must be a single row or column")
        if rng.area != axis.area:
            raise LengthMismatchError(f"{role}: {rng.area} cells against {axis.area} periods")
        roles[role] = rng
    tol = float(doc.get("tolerance", DEFAULT_TOLERANCE))
    if tol < 0:
        raise FinancialSchemaError("tolerance must be non-negative")
    return FinancialSchema(axis, roles, tol)


def load_schema(path: str | os.PathLike[str], workbook: Workbook) -> FinancialSchema:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FinancialSchemaError(f"{path}: not JSON: {exc}") from None
    return schema_from_dict(doc, workbook)


@dataclass(frozen=True)
class AssertionResult:
    code: str
    status: str
    failing_periods: tuple[int, ...] = ()
    worst_deviation: float = 0.0
    roles: tuple[str, ...] = ()
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "status": self.status,
            "failing_periods": list(self.failing_periods),
            "worst_deviation": self.worst_deviation,
            "roles": list(self.roles),
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AssertionResult":
        return cls(
            doc["code"],
            doc["status"],
            tuple(doc.get("failing_periods", ())),
            float(doc.get("worst_deviation", 0.0)),
            tuple(doc.get("roles", ())),
            doc.get("note", ""),
        )


# A per-period check returns (deviation, failed), or None when the period is not tested.
PeriodCheck = Callable[[int, Mapping[str, list[float | None]], float], "tuple[float, bool] | None"]


def _h001(t: int, v: Mapping[str, list], tol: float):
    dev = abs(v["total_assets"][t] - v["total_liabilities"][t] - v["equity"][t])
    return dev, dev > tol


def _h002(t: int, v: Mapping[str, list], tol: float):
    if t == 0:
        return None
    expected = v["retained_earnings"][t - 1] + v["net_income"][t] - v["dividends"][t]
    dev = abs(v["retained_earnings"][t] - expected)
    return dev, dev > tol


def _h004(t: int, v: Mapping[str, list], tol: float):
    dev = max(0.0, -v["fixed_asset_nbv"][t])
    return dev, dev > tol


def _h005(t: int, v: Mapping[str, list], tol: float):
    if abs(v["production"][t]) > tol:
        return None
    dev = max(abs(v["revenue"][t]), abs(v["costs"][t]))
    return dev, dev > tol


def _h006(t: int, v: Mapping[str, list], tol: float):
    tax = v["tax_charge"][t]
    pre_tax = v["net_income"][t] + tax
    if pre_tax > tol and tax < -tol:
        return abs(tax), True
    if pre_tax < -tol and tax > tol:
        return abs(tax), True
    return 0.0, False


ASSERTIONS: dict[str, tuple[tuple[str, ...], str]] = {
    "H001": (("total_assets", "total_liabilities", "equity"), "assets = liabilities + equity"),
    "H002": (("retained_earnings", "net_income", "dividends"), "RE(t) = RE(t-1) + NI(t) - Div(t)"),
    "H003": (("debt_balance",), "debt fully repaid at the final period"),
    "H004": (("fixed_asset_nbv",), "fixed asset NBV >= 0"),
    "H005": (("revenue", "costs", "production"), "no revenue or costs without production"),
    "H006": (("tax_charge", "net_income"), "tax charge sign follows pre-tax income"),
}
_CHECKS: dict[str, PeriodCheck] = {"H001": _h001, "H002": _h002, "H004": _h004, "H005": _h005, "H006": _h006}


def _number(v: Any) -> float | None:
    if v is BLANK:
        return 0.0
    return v if is_number(v) else None


def _final_periods(schema: FinancialSchema, values: Mapping[str, list]) -> list[int]:
    flags = values.get("debt_final_period")
    if flags is None:
        return [schema.periods - 1]
    marked = [t for t, f in enumerate(flags) if f is None or f != 0.0]
    return marked or [schema.periods - 1]


def run_financial_assertions(workbook: Workbook, result: RecalcResult, schema: FinancialSchema) -> list[AssertionResult]:
    """Evaluate H001-H006 on recalculated values; failing periods are 1-based."""
    values = {role: [_number(result.get(c)) for c in rng.cells()] for role, rng in schema.roles.items()}
    tol = schema.tolerance
    out: list[AssertionResult] = []
    for code, (needed, text) in ASSERTIONS.items():
        missing = [r for r in needed if r not in schema.roles]
        if missing:
            out.append(AssertionResult(code, NOT_RUN, roles=needed, note=f"unbound role(s): {', '.join(missing)}"))
            continue
        if code == "H003":
            periods = _final_periods(schema, values)
            check: PeriodCheck = lambda t, v, tol: (abs(v["debt_balance"][t]), abs(v["debt_balance"][t]) > tol)  # noqa: E731
        else:
            periods = list(range(schema.periods))
            check = _CHECKS[code]
        failing: list[int] = []
        worst = 0.0
        for t in periods:
            if any(values[r][t] is None for r in needed):
                failing.append(t + 1)  # a non-numeric operand cannot satisfy the identity
                continue
            outcome = check(t, values, tol)
            if outcome is None:
                continue
            dev, failed = outcome
            worst = max(worst, dev)
            if failed:
                failing.append(t + 1)
        status = FAIL if failing else PASS
        out.append(AssertionResult(code, status, tuple(failing), worst, needed, text))
    return out


def assertion_findings(results: Sequence[AssertionResult], schema: FinancialSchema, workbook: Workbook) -> list[Finding]:
    """One finding per failed assertion, located at the involved role cells of the failing periods."""
    order = {s.name: i for i, s in enumerate(workbook.sheets)}
    findings = []
    for res in results:
        if res.status != FAIL:
            continue
        locs: list[CellRef] = []
        for role in res.roles:
            cells = schema.cells(role)
            locs.extend(cells[t - 1] for t in res.failing_periods)
        first = min(locs, key=lambda r: (order[r.sheet], r.row, r.col))  # type: ignore[index]
        periods = ", ".join(str(t) for t in res.failing_periods)
        findings.append(
            make_finding(
                res.code,
                [r.a1() for r in locs],
                f"{res.note} fails in period(s) {periods}; worst deviation {res.worst_deviation:.6g}",
                (order[first.sheet], first.row, first.col),  # type: ignore[index]
            )
        )
    return findings
