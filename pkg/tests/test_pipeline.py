import hashlib

import pytest

from cellsentry.config import EngagementConfig, load_config
from cellsentry.findings import FindingStore, make_finding, number_findings
from cellsentry.papertrail import FingerprintMismatchError, manage_finding
from cellsentry.pipeline import LOCK_NAME, LockedError, blocking_findings, merge_findings, output_lock, run_audit
from conftest import write_book

STAMP = "2026-01-01T00:00:00Z"


def snapshot(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.rglob("*")) if p.is_file()}


@pytest.fixture
def dirty(tmp_path):
    return write_book(tmp_path / "dirty.json", {"S": {"A1": 2, "B1": "=A1*1.175", "C1": "=C1"}})


def test_rerun_keeps_lifecycle_state(dirty, tmp_path):
    out = tmp_path / "out"
    first = run_audit(dirty, EngagementConfig(), out, generated_at=STAMP)
    r022 = next(f for f in first.findings if f.rule == "R022")
    manage_finding(FindingStore(first.findings), r022.id, "waived", "agreed", 1).save(out / "findings.jsonl")
    second = run_audit(dirty, EngagementConfig(), out, generated_at=STAMP)
    again = next(f for f in second.findings if f.rule == "R022")
    assert again.id == r022.id and again.status == "waived" and again.history[0]["note"] == "agreed"
    assert len(second.findings) == len(first.findings)


def test_output_dir_bound_to_one_model(dirty, tmp_path):
    out = tmp_path / "out"
    run_audit(dirty, EngagementConfig(), out, generated_at=STAMP)
    before = snapshot(out)
    other = write_book(tmp_path / "other.json", {"S": {"A1": 1}})
    with pytest.raises(FingerprintMismatchError):
        run_audit(other, EngagementConfig(), out, generated_at=STAMP)
    assert snapshot(out) == before


def test_high_level_phase_gated(corpus_dir, tmp_path):
    config = load_config(corpus_dir / "engagement.json")
    held = run_audit(corpus_dir / "seeded_model.json", config, tmp_path / "a", run_sensitivities=False, generated_at=STAMP)
    assert held.assertions is None and held.exit_code == 1
    assert any("high-level review not run" in n for n in held.notes)
    assert "high-level review not run" in (tmp_path / "a" / "report.txt").read_text()
    forced = run_audit(corpus_dir / "seeded_model.json", config, tmp_path / "b", force=True, run_sensitivities=False, generated_at=STAMP)
    assert forced.assertions is not None
    assert {f.rule for f in forced.findings} >= {"H001", "H002", "H003", "H004", "H005"}


def test_clean_corpus_audit_with_sensitivities(corpus_dir, tmp_path):
    config = load_config(corpus_dir / "engagement.json")
    outcome = run_audit(corpus_dir / "clean_model.json", config, tmp_path / "out", generated_at=STAMP)
    assert outcome.exit_code == 0 and outcome.findings == []
    names = ["base", "price_high", "price_low", "start_delayed", "interest_up", "tax_up", "debt_share_down"]
    assert [r.name for r in outcome.sensitivity] == names
    assert (tmp_path / "out" / "scenarios" / "sensitivity_results.json").exists()


def test_lock(tmp_path):
    with output_lock(tmp_path):
        assert (tmp_path / LOCK_NAME).exists()
        with pytest.raises(LockedError):
            with output_lock(tmp_path):
                pass
    assert not (tmp_path / LOCK_NAME).exists()


def test_merge_numbers_new_findings_after_existing():
    old = FindingStore(number_findings([make_finding("R022", ["S!B1"], "c", (0, 1, 2))]))
    current = [make_finding("R022", ["S!B1"], "c", (0, 1, 2)), make_finding("R025", ["S!C1"], "loop", (0, 1, 3))]
    merged = merge_findings(old, current, 2)
    assert [(f.id, f.rule, f.iteration) for f in merged] == [(1, "R022", 1), (2, "R025", 2)]
    assert [f.rule for f in blocking_findings(merged)] == ["R025"]
