"""Reference models shipped with the tool and the generators that build them.

``python -m cellsentry.corpus DIR`` regenerates the corpus files.
"""

from __future__ import annotations

import argparse
import copy
import json
from pathlib import Path
from typing import Any

from cellsentry.engine.recalc import recalculate
from cellsentry.engine.values import BLANK, value_to_json
from cellsentry.formula import parse_formula, render, shift_refs
from cellsentry.model import CellRef, Workbook, workbook_from_dict

PERIOD_COLS = "CDEFG"


def _doc(sheets: list[tuple[str, dict[str, Any]]], names: list[tuple[str, str]] = (), meta: dict[str, str] | None = None) -> dict[str, Any]:
    def cell(v: Any) -> dict[str, Any]:
        if isinstance(v, dict):
            return v
        if isinstance(v, str) and v.startswith("="):
            return {"f": v}
        return {"v": v}

    doc: dict[str, Any] = {}
    if meta:
        doc["meta"] = meta
    if names:
        doc["names"] = [{"name": n, "ref": r} for n, r in names]
    doc["sheets"] = [{"name": name, "cells": {k: cell(v) for k, v in cells.items()}} for name, cells in sheets]
    return doc


def with_cached_values(doc: dict[str, Any]) -> dict[str, Any]:
    """Copy of ``doc`` with every formula's recalculated value stored as its cached value."""
    wb = workbook_from_dict(doc)
    result = recalculate(wb)
    out = copy.deepcopy(doc)
    for sheet in out["sheets"]:
        for addr, cdoc in sheet["cells"].items():
            if "f" not in cdoc:
                continue
            v = result.get(CellRef.parse(addr, sheet["name"]))
            cdoc.pop("v", None)
            cdoc.pop("e", None)
            if v is BLANK:
                continue
            j = value_to_json(v)
            if isinstance(j, dict):
                cdoc["e"] = j["e"]
            else:
                cdoc["v"] = j
    return out


# -- toy model ---------------------------------------------------------------

TOY_SHEET = "Toy"
TOY_INPUTS = {"B1": 200, "B2": 45, "B3": 1, "B4": 0.05, "B5": 0.08, "B6": 1.5, "B7": 250}
TOY_FORMULAS = {
    "B8": "=B7*B6/(1+B6)",
    "B9": "=B7-B8",
    "B10": "=-B9",
    "B11": "=IF(1>=B3,B1-B2,0)-B8*B4-B8/3",
    "B12": "=IF(2>=B3,B1-B2,0)-B8*B4-B8/3",
    "B13": "=IF(3>=B3,B1-B2,0)-B8*B4-B8/3",
    "B14": "=NPV(B5,B11:B13)+B10",
    "B15": "=IRR(B10:B13)",
    "B16": "=B8*B4*3",
    "B17": "=MIN(B11:B13)",
    "B18": "=AVERAGE(B11:B13)",
    "B19": "=ROUND(B14,2)",
    "B20": '=IF(B15>B5,"GO","NO GO")',
}
TOY_WATCH = ["Toy!B14", "Toy!B15", "Toy!B16", "Toy!B20"]


def toy_model_doc() -> dict[str, Any]:
    """A 20-cell, three-period project appraisal: debt/equity split, cash flows, NPV and IRR."""
    return _doc([(TOY_SHEET, {**TOY_INPUTS, **TOY_FORMULAS})], meta={"title": "toy project appraisal"})


def toy_scenarios_doc() -> dict[str, Any]:
    scenarios = [
        ("revenue_high", {"Toy!B1": 240}),
        ("revenue_low_costs_high", {"Toy!B1": 160, "Toy!B2": 55}),
        ("start_date_delayed", {"Toy!B3": 2}),
        ("interest_rate_up", {"Toy!B4": 0.10}),
        ("discount_rate_up", {"Toy!B5": 0.12}),
        ("debt_equity_lower", {"Toy!B6": 1.0}),
    ]
    return {"scenarios": [{"name": n, "set": s, "watch": TOY_WATCH} for n, s in scenarios]}


# -- project-finance model ---------------------------------------------------

INPUTS = [
    ("Price", 50),
    ("Unit cost", 20),
    ("Fixed cost", 100),
    ("Capex", 1000),
    ("Asset life", 5),
    ("Debt share (memo)", 0.6),
    ("Interest rate", 0.08),
    ("Tax rate", 0.25),
    ("Payout ratio", 0.5),
    ("Debt tenor", 5),
    ("Start period", 2),
    ("Production", 100),
]

# row -> (label, opening value in column B or None, formula for period column, written with C/B)
FIN_ROWS: dict[int, tuple[str, Any, str | None]] = {
    1: ("Period", 0, "=B1+1"),
    2: ("Production", None, "=IF(C1>=Inputs!$B$11,Inputs!$B$12,0)"),
    3: ("Revenue", None, "=C2*Price"),
    4: ("Costs", None, "=IF(C2>0,C2*Inputs!$B$2+Inputs!$B$3,0)"),
    5: ("Depreciation", None, "=MIN(B6,Inputs!$B$4/Inputs!$B$5)"),
    6: ("Fixed assets NBV", 1000, "=B6-C5"),
    7: ("Debt repayment", None, "=MIN(B8,$B$8/Inputs!$B$10)"),
    8: ("Debt balance", 600, "=B8-C7"),
    9: ("Interest", None, "=B8*Inputs!$B$7"),
    10: ("Pre-tax income", None, "=C3-C4-C5-C9"),
    11: ("Tax", None, "=MAX(0,C10*TaxRate)"),
    12: ("Net income", None, "=C10-C11"),
    13: ("Dividends", None, "=MAX(0,C12*Inputs!$B$9)"),
    14: ("Retained earnings", 0, "=B14+C12-C13"),
    15: ("Share capital", 400, "=B15"),
    16: ("Cash", 0, "=B16+C3-C4-C9-C11-C7-C13"),
    17: ("Total assets", "=B6+B16", "=C6+C16"),
    18: ("Total liabilities", "=B8", "=C8"),
    19: ("Equity", "=B15+B14", "=C15+C14"),
}

ROLE_ROWS = {
    "total_assets": 17,
    "total_liabilities": 18,
    "equity": 19,
    "retained_earnings": 14,
    "net_income": 12,
    "dividends": 13,
    "debt_balance": 8,
    "fixed_asset_nbv": 6,
    "revenue": 3,
    "costs": 4,
    "production": 2,
    "tax_charge": 11,
}


def _shift(formula: str, col: str) -> str:
    """Copy a formula written for column C (previous period B) into ``col``."""
    d = ord(col) - ord("C")
    return render(shift_refs(parse_formula(formula), 0, d)) if d else formula


def pf_cells() -> tuple[dict[str, Any], dict[str, Any]]:
    inputs: dict[str, Any] = {}
    for i, (label, value) in enumerate(INPUTS, 1):
        inputs[f"A{i}"] = label
        inputs[f"B{i}"] = value
    fin: dict[str, Any] = {}
    for row, (label, opening, formula) in FIN_ROWS.items():
        fin[f"A{row}"] = label
        if opening is not None:
            fin[f"B{row}"] = opening
        if formula is not None:
            for col in PERIOD_COLS:
                fin[f"{col}{row}"] = _shift(formula, col)
    return inputs, fin


PF_NAMES = [("Price", "Inputs!$B$1"), ("TaxRate", "Inputs!$B$8")]


def clean_model_doc() -> dict[str, Any]:
    """A five-period project-finance model that passes every check."""
    inputs, fin = pf_cells()
    doc = _doc([("Inputs", inputs), ("Fin", fin)], PF_NAMES, {"title": "project finance model", "version": "clean"})
    return with_cached_values(doc)


# (rule, location, how) for every seeded defect
SEEDED_DEFECTS: list[dict[str, str]] = [
    {"rule": "R010", "location": "Scratch!B22", "seed": "names Alpha and Beta overlap"},
    {"rule": "R011", "location": "Empty", "seed": "name over blank cells"},
    {"rule": "R012", "location": "Ghost", "seed": "name targets a sheet that does not exist"},
    {"rule": "R013", "location": "bad_name", "seed": "lower-case name"},
    {"rule": "R020", "location": "Scratch!A1", "seed": "stored #REF! literal"},
    {"rule": "R021", "location": "Scratch!A3", "seed": "reference to missing sheet"},
    {"rule": "R022", "location": "Scratch!A5", "seed": "hard-coded 1.175"},
    {"rule": "R023", "location": "Scratch!A7", "seed": "misspelt function"},
    {"rule": "R024", "location": "Scratch!A9", "seed": "ROUND with one argument"},
    {"rule": "R025", "location": "Scratch!A11", "seed": "two-cell loop"},
    {"rule": "R026", "location": "Scratch!E14", "seed": "column-relative anchor in an absolute row"},
    {"rule": "R030", "location": "Scratch!F17", "seed": "sign flipped in a copied row"},
    {"rule": "R040", "location": "Scratch!A19", "seed": "stale cached value"},
    {"rule": "H001", "location": "Fin!E17", "seed": "0.01 added to period 3 assets"},
    {"rule": "H002", "location": "Fin!E14", "seed": "period 3 dividend bypasses retained earnings and cash"},
    {"rule": "H003", "location": "Fin!G8", "seed": "tenor 6 leaves debt outstanding"},
    {"rule": "H004", "location": "Fin!G6", "seed": "double depreciation in the last period"},
    {"rule": "H005", "location": "Fin!C4", "seed": "fixed cost charged before production"},
]


def seeded_model_doc() -> dict[str, Any]:
    """The clean model with exactly one instance of each detectable defect."""
    inputs, fin = pf_cells()
    inputs["A13"] = "Adjustment"
    inputs["B13"] = 0.01
    inputs["B10"] = 6  # H003
    fin["E17"] = "=E6+E16+Inputs!$B$13"  # H001
    fin["E14"] = "=D14+E12"  # H002 (with the matching cash line below)
    fin["E16"] = "=D16+E3-E4-E9-E11-E7"
    fin["G5"] = "=Inputs!$B$4/Inputs!$B$5+F5"  # H004
    fin["C4"] = "=C2*Inputs!$B$2+Inputs!$B$3"  # H005

    scratch: dict[str, Any] = {
        "A1": {"e": "#REF!"},
        "A3": "=Old!B2+1",
        "A4": 10,
        "A5": "=A4*1.175",
        "A7": "=SUMM(A4)",
        "A9": "=ROUND(A4)",
        "A11": "=A12",
        "A12": "=A11",
        "B14": 3,
        "A19": "=A4+A4",
    }
    for r in range(20, 25):
        scratch[f"B{r}"] = r
    scratch["F20"] = 1
    for col in "CDEFG":
        scratch[f"{col}13"] = ord(col)
        scratch[f"{col}15"] = ord(col) + 1
        scratch[f"{col}16"] = ord(col) + 2
        scratch[f"{col}14"] = f"=$B$14*{col}13"
        scratch[f"{col}17"] = f"={col}16+{col}15"
    scratch["E14"] = "=B$14*E13"  # R026
    scratch["F17"] = "=F16-F15"  # R030

    names = PF_NAMES + [
        ("Alpha", "Scratch!$B$20:$B$22"),
        ("Beta", "Scratch!$B$22:$B$24"),
        ("Empty", "Scratch!$D$20:$D$25"),
        ("Ghost", "Old!$A$1"),
        ("bad_name", "Scratch!$F$20"),
    ]
    doc = _doc([("Inputs", inputs), ("Fin", fin), ("Scratch", scratch)], names, {"title": "project finance model", "version": "seeded"})
    doc = with_cached_values(doc)
    stale = next(s for s in doc["sheets"] if s["name"] == "Scratch")["cells"]["A19"]
    stale["v"] = 25  # R040: recalculates to 20
    return doc


def schema_doc() -> dict[str, Any]:
    roles = {role: f"Fin!C{row}:G{row}" for role, row in ROLE_ROWS.items()}
    return {"period_axis": "Fin!C1:G1", "tolerance": 0.005, "roles": roles}


def pf_scenarios_doc() -> dict[str, Any]:
    watch = ["Fin!G16", "Fin!G14", "Fin!G8"]
    scenarios = [
        ("price_high", {"Price": 60}),
        ("price_low", {"Price": 40}),
        ("start_delayed", {"Inputs!B11": 3}),
        ("interest_up", {"Inputs!B7": 0.12}),
        ("tax_up", {"TaxRate": 0.3}),
        ("debt_share_down", {"Fin!B8": 500, "Fin!B15": 500}),
    ]
    return {"scenarios": [{"name": n, "set": s, "watch": watch} for n, s in scenarios]}


def engagement_doc() -> dict[str, Any]:
    return {
        "engagement": "Project finance model review",
        "schema": "schema.json",
        "scenarios": "pf_scenarios.json",
        "threshold": "warning",
        "report_mode": "agreed_procedures",
        "liability_statement": "Our aggregate liability in connection with this review is limited to the fee paid.",
        "tolerance": 1e-9,
        "review_throughput": 40,
        "reviewer": "auditor-1",
    }


# -- synthetic scale model ---------------------------------------------------


def synthetic_model_doc(unique: int = 10_000, data_cols: int = 3) -> dict[str, Any]:
    """``unique`` distinct formulas over ``unique * data_cols`` literal cells."""
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"[:data_cols]
    data = {f"{c}{i}": float(i * (j + 1)) for i in range(1, unique + 1) for j, c in enumerate(letters)}
    calc = {f"A{i}": f"=Data!$A${i}+Data!B{i}" for i in range(1, unique + 1)}
    return _doc([("Data", data), ("Calc", calc)], meta={"title": "synthetic scale model"})


def workbook(doc: dict[str, Any]) -> Workbook:
    return workbook_from_dict(doc)


FILES = {
    "toy_model.json": toy_model_doc,
    "toy_scenarios.json": toy_scenarios_doc,
    "clean_model.json": clean_model_doc,
    "seeded_model.json": seeded_model_doc,
    "schema.json": schema_doc,
    "pf_scenarios.json": pf_scenarios_doc,
    "engagement.json": engagement_doc,
    "seeded_defects.json": lambda: {"defects": SEEDED_DEFECTS},
}


def write_corpus(directory: str | Path) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in FILES.items():
        path = out / name
        path.write_text(json.dumps(build(), indent=1) + "\n", encoding="utf-8")
        written.append(path)
    return written


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="regenerate the reference corpus")
    parser.add_argument("directory", nargs="?", default="corpus")
    args = parser.parse_args(argv)
    for path in write_corpus(args.directory):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

