import json
import random

import pytest

from cellsentry.engine import recalculate, verify_cached_values
from cellsentry.graph import build_graph
from cellsentry.lowlevel import (
    RuleConfig,
    check_named_ranges,
    detect_region_outliers,
    embedded_constants,
    run_checks,
    scan_formula_rules,
)
from cellsentry.formula import parse_formula
from cellsentry.model import load_workbook
from conftest import book
from oracles import majority_outliers


def formula_findings(sheets, names=None, config=None):
    wb = book(sheets, names)
    return scan_formula_rules(wb, build_graph(wb), config)


def rules_at(findings):
    return [(f.rule, f.locations) for f in findings]


# -- named ranges -----------------------------------------------------------------


def test_overlapping_names():
    wb = book({"S": {"A1": 1, "A4": 1}}, names={"Rev": "S!$A$1:$A$5", "Costs": "S!$A$4:$A$8"})
    found = check_named_ranges(wb)
    assert rules_at(found) == [("R010", ("S!A4:A5", "Rev", "Costs"))]


def test_names_on_different_sheets_do_not_overlap():
    wb = book({"S": {"A1": 1}, "T": {"A1": 1}}, names={"One": "S!$A$1", "Two": "T!$A$1"})
    assert check_named_ranges(wb) == []


def test_blank_target():
    wb = book({"S": {"A1": 1}}, names={"Buffer": "S!$C$1:$C$10"})
    assert rules_at(check_named_ranges(wb)) == [("R011", ("Buffer", "S!C1:C10"))]


def test_huge_blank_target_checked_without_enumeration():
    wb = book({"S": {"A1": 1}}, names={"Wide": "S!$B$1:$XFD$1048576"})
    assert [f.rule for f in check_named_ranges(wb)] == ["R011"]


def test_dangling_and_badly_named():
    wb = book({"S": {"A1": 1}}, names={"Ghost": "Deleted!$A$1", "bad_name": "S!$A$1"})
    assert rules_at(check_named_ranges(wb)) == [("R012", ("Ghost",)), ("R013", ("bad_name",))]


def test_custom_name_pattern():
    wb = book({"S": {"A1": 1}}, names={"bad_name": "S!$A$1"})
    assert check_named_ranges(wb, RuleConfig(name_pattern=r"^[a-z_]+$")) == []


# -- per-formula rules ------------------------------------------------------------


def test_embedded_constant():
    found = formula_findings({"S": {"A1": 2, "B1": "=A1*1.175"}})
    assert rules_at(found) == [("R022", ("S!B1",))]
    assert "1.175" in found[0].message


@pytest.mark.parametrize(
    "text, expected",
    [
        ("=A1*1.175", [1.175]),
        ("=A1*-1+0", []),
        ("=ROUND(A1,2)", []),
        ("=VLOOKUP(A1,B1:C9,2,0)", []),
        ("=INDEX(B1:C9,3,2)", []),
        ("=A1*5%", [0.05]),
        ("=SUM(A1,7)", [7.0]),
    ],
)
def test_embedded_constants_respect_structural_arguments(text, expected):
    assert embedded_constants(parse_formula(text), {0.0, 1.0, -1.0}) == expected


def test_arity():
    found = formula_findings({"S": {"A1": 2, "B1": "=ROUND(A1)"}})
    assert rules_at(found) == [("R024", ("S!B1",))]
    assert "ROUND takes 2" in found[0].message


def test_unknown_function():
    assert rules_at(formula_findings({"S": {"A1": 1, "A2": 2, "B1": "=SUMM(A1:A2)"}})) == [("R023", ("S!B1",))]


def test_argument_kinds_and_unsorted_lookup():
    found = formula_findings({"S": {"A1": 3, "A2": 1, "B1": "=VLOOKUP(2,A1:A2,1)", "C1": "=ROUND(A1:A2,0)", "D1": "=INDEX(5,1)"}})
    found = [f for f in found if f.rule == "R024"]
    assert [f.locations[0] for f in found] == ["S!B1", "S!C1", "S!D1"]
    assert "ascending" in found[0].message
    assert "single number" in found[1].message
    assert "cell range" in found[2].message


def test_sorted_approximate_lookup_is_fine():
    assert formula_findings({"S": {"A1": 1, "A2": 3, "C1": 2, "B1": "=VLOOKUP(C1,A1:A2,1)"}}) == []


def test_error_literals_stored_and_in_formula():
    found = formula_findings({"S": {"A1": {"e": "#REF!"}, "A2": "=IF(A1,#N/A,0)"}})
    assert rules_at(found) == [("R020", ("S!A1",)), ("R020", ("S!A2",))]


def test_dangling_reference():
    found = formula_findings({"S": {"A1": "=Gone!B2+1"}})
    assert rules_at(found) == [("R021", ("S!A1",))]


def test_circularity_one_finding_per_cycle():
    found = formula_findings({"S": {"A1": "=B1", "B1": "=A1", "C1": "=C1", "D1": "=A1"}})
    assert rules_at(found) == [("R025", ("S!A1", "S!B1")), ("R025", ("S!C1",))]


def test_defective_formula():
    assert rules_at(formula_findings({"S": {"A1": "=1+"}})) == [("R001", ("S!A1",))]


def test_fixity_outlier():
    cells = {f"B{r}": f"=A{r}*$C$1" for r in range(1, 6)}
    cells["B3"] = "=A3*C$1"
    found = formula_findings({"S": cells})
    assert rules_at(found) == [("R026", ("S!B3",))]
    assert "row-absolute" in found[0].message


def test_uniform_fixity_is_fine():
    cells = {f"B{r}": f"=A{r}*$C$1" for r in range(1, 6)}
    assert formula_findings({"S": cells}) == []


# -- copy-region outliers ---------------------------------------------------------


def test_region_outlier():
    cells = {f"B{r}": f"=A{r}*2" for r in range(1, 10)}
    cells["B10"] = "=A10+2"
    found = detect_region_outliers(book({"S": cells}))
    assert rules_at(found) == [("R030", ("S!B10",))]


def test_three_distinct_cells_are_fine():
    assert detect_region_outliers(book({"S": {"B1": "=A1", "B2": "=A2*2", "B3": "=A3+2"}})) == []


def test_horizontal_region():
    cells = {f"{c}5": f"={c}4*2" for c in "BCDEFG"}
    cells["E5"] = "=E4/2"
    assert rules_at(detect_region_outliers(book({"S": cells}))) == [("R030", ("S!E5",))]


FORMS = ["=A{r}*2", "=A{r}+2", "=$A$1"]


def test_region_outliers_match_rescan_oracle():
    rng = random.Random(13)
    for trial in range(150):
        n = rng.randint(1, 30)
        codes = [rng.choice([-1, 0, 0, 0, 0, 1, 2]) for _ in range(n)]
        cells = {f"B{r + 1}": FORMS[k].format(r=r + 1) for r, k in enumerate(codes) if k >= 0}
        if not cells:
            continue
        threshold = rng.choice([0.6, 0.7, 0.9])
        config = RuleConfig(majority_threshold=threshold)
        got = {f.locations[0] for f in detect_region_outliers(book({"S": cells}), config)}
        want = {f"S!B{i + 1}" for i in majority_outliers(codes, config.min_run, threshold)}
        assert got == want, (trial, codes)


# -- catalogue-wide -----------------------------------------------------------------


def test_rule_config_validation():
    with pytest.raises(ValueError):
        RuleConfig(majority_threshold=0.5)
    with pytest.raises(ValueError):
        RuleConfig(min_run=1)
    with pytest.raises(ValueError):
        RuleConfig(enabled=frozenset({"R999"}))
    cfg = RuleConfig.from_dict({"disabled": ["R022"], "severity_overrides": {"R030": "error"}})
    assert "R022" not in cfg.enabled
    assert RuleConfig.from_dict(cfg.to_dict()) == cfg


def test_disabled_rules_filtered():
    wb = book({"S": {"A1": 2, "B1": "=A1*1.175"}})
    assert run_checks(wb, build_graph(wb), RuleConfig.from_dict({"disabled": ["R022"]})) == []


def test_run_checks_deterministic(corpus_dir):
    wb = load_workbook(corpus_dir / "seeded_model.json")
    a = run_checks(wb, build_graph(wb))
    b = run_checks(wb, build_graph(wb))
    assert a == b


def test_every_finding_location_exists(corpus_dir):
    wb = load_workbook(corpus_dir / "seeded_model.json")
    defined = {n.name for n in wb.names}
    for f in run_checks(wb, build_graph(wb)):
        for loc in f.locations:
            if loc in defined:
                continue
            sheet = loc.split("!")[0].strip("'")
            assert wb.canonical_sheet(sheet) is not None, (f.rule, loc)


def low_level_findings(path):
    wb = load_workbook(path)
    found = run_checks(wb, build_graph(wb))
    return found + verify_cached_values(wb, recalculate(wb))


def test_clean_model_has_no_low_level_findings(corpus_dir):
    assert low_level_findings(corpus_dir / "clean_model.json") == []


def test_seeded_low_level_recall(corpus_dir):
    manifest = json.loads((corpus_dir / "seeded_defects.json").read_text())["defects"]
    found = low_level_findings(corpus_dir / "seeded_model.json")
    for seed in manifest:
        if seed["rule"].startswith("H"):
            continue
        hits = [f for f in found if f.rule == seed["rule"] and seed["location"] in f.locations]
        assert hits, seed
