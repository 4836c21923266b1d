import json

import pytest

from cellsentry.config import ConfigError, EngagementConfig, config_from_dict, load_config, report_mode
from cellsentry.findings import FindingStore, make_finding, number_findings
from cellsentry.graph import build_graph, compute_metrics
from cellsentry.highlevel import AssertionResult
from cellsentry.model import fingerprint_model, save_workbook
from cellsentry.papertrail import CoverageLedger, coverage_status, manage_finding, sign_all
from cellsentry.report import MODE_WORDING, build_report, emit_report, load_report
from cellsentry.sensitivity import ScenarioResult
from conftest import book

LIABILITY = "Liability is capped at the fee."


@pytest.fixture
def inputs(tmp_path):
    wb = book({"S": {"A1": 2, "B1": "=A1*1.175"}})
    path = tmp_path / "model.json"
    save_workbook(wb, path)
    fp = fingerprint_model(path)
    config = EngagementConfig(liability_statement=LIABILITY, engagement="Test")
    findings = number_findings([make_finding("R022", ["S!B1"], "embedded constant 1.175", (0, 1, 2))])
    coverage = coverage_status(sign_all(CoverageLedger(fp), wb, fp, "bot", "low-level", "2026-01-01T00:00:00Z"), wb)
    return {
        "fingerprint": fp,
        "config": config,
        "metrics": compute_metrics(wb, build_graph(wb)),
        "findings": findings,
        "assertions": [AssertionResult("H001", "pass", (), 0.0, ("total_assets",), "assets = liabilities + equity")],
        "sensitivity": [ScenarioResult("base", {"S!B1": 2.35}, ())],
        "coverage": coverage,
    }


def test_identification_block_and_liability(inputs):
    text = build_report(**inputs).text()
    fp = inputs["fingerprint"]
    for item in (fp.file_name, str(fp.byte_size), fp.modified_timestamp, fp.content_hash, LIABILITY):
        assert item in text
    assert "#1 R022" in text


def test_no_open_findings(inputs):
    inputs["findings"] = []
    report = build_report(**inputs)
    assert report.unresolved == ()
    text = report.text()
    assert MODE_WORDING["agreed_procedures"] in text
    assert "Unresolved issues\n  None." in text


def test_waived_finding_listed_with_note(inputs):
    store = manage_finding(FindingStore(inputs["findings"]), 1, "waived", "accepted by the lender", 2)
    inputs["findings"] = list(store)
    report = build_report(**inputs)
    assert report.unresolved[0]["status"] == "waived"
    assert "note: accepted by the lender" in report.text()


def test_corrected_finding_not_unresolved(inputs):
    store = manage_finding(FindingStore(inputs["findings"]), 1, "corrected", "fixed", 2)
    inputs["findings"] = list(store)
    assert build_report(**inputs).unresolved == ()


def test_mode_wording(inputs):
    opinion = build_report(**inputs, mode="material_error_opinion").text()
    assert MODE_WORDING["material_error_opinion"] in opinion
    assert MODE_WORDING["agreed_procedures"] not in opinion


def test_deterministic_except_timestamp(inputs):
    a = build_report(**inputs, generated_at="2026-01-01T00:00:00Z").text()
    b = build_report(**inputs, generated_at="2026-02-02T00:00:00Z").text()
    diff = [(x, y) for x, y in zip(a.splitlines(), b.splitlines()) if x != y]
    assert len(diff) == 1 and "Report generated" in diff[0][0]


def test_machine_round_trip(inputs, tmp_path):
    report = build_report(**inputs, limitations=("high-level review not run",))
    text_path, json_path = emit_report(report, tmp_path / "out")
    again = load_report(json_path)
    assert again == report
    assert text_path.read_text() == again.text()
    doc = json.loads(json_path.read_text())
    assert doc["findings_summary"]["by_rule"] == {"R022": 1}
    assert doc["coverage"][0]["percent"] == 100.0
    assert "Scope limitations" in again.text()


def test_review_hours_assumption_stated(inputs):
    assert any("40 unique formulas per hour" in a for a in build_report(**inputs).assumptions)


# -- config -------------------------------------------------------------------------


def test_config_paths_relative_to_file(tmp_path):
    path = tmp_path / "eng.json"
    path.write_text(json.dumps({"schema": "schema.json", "report_mode": "opinion", "threshold": "error"}))
    cfg = load_config(path)
    assert cfg.schema_path == tmp_path / "schema.json"
    assert cfg.report_mode == "material_error_opinion" and cfg.threshold == "error"


@pytest.mark.parametrize(
    "doc",
    [
        {"colour": "red"},
        {"threshold": "fatal"},
        {"report_mode": "guess"},
        {"rules": {"majority_threshold": 0.2}},
        {"review_throughput": 0},
        [],
    ],
)
def test_config_errors(doc):
    with pytest.raises((ConfigError, ValueError)):
        config_from_dict(doc)


def test_missing_referenced_file(tmp_path):
    cfg = config_from_dict({"scenarios": "nope.json"}, tmp_path)
    with pytest.raises(ConfigError):
        cfg.check_paths()


def test_config_round_trip(tmp_path):
    cfg = config_from_dict({"rules": {"disabled": ["R022"]}, "engagement": "X", "tolerance": 1e-6}, tmp_path)
    again = config_from_dict(cfg.to_dict())
    assert again == cfg


def test_report_mode_aliases():
    assert report_mode("agreed") == "agreed_procedures"
    with pytest.raises(ConfigError):
        report_mode("maybe")
