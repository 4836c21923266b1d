import json
import subprocess
import sys

import pytest

from cellsentry.cli import run_cli
from cellsentry.findings import FindingStore
from cellsentry.pipeline import LOCK_NAME
from conftest import write_book


def run(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def models(tmp_path):
    clean = write_book(tmp_path / "clean.json", {"S": {"A1": 2, "A2": 3, "B1": "=A1*A2"}})
    dirty = write_book(tmp_path / "dirty.json", {"S": {"A1": 2, "B1": "=A1*1.175", "C1": "=C1"}})
    return clean, dirty


def test_check_exit_codes(capsys, models):
    clean, dirty = models
    assert run(capsys, "check", clean)[0] == 0
    code, out, _ = run(capsys, "check", dirty)
    assert code == 1
    rows = [json.loads(line) for line in out.splitlines()]
    assert {r["rule"] for r in rows} == {"R022", "R025"}
    assert run(capsys, "check", dirty, "--threshold", "error")[0] == 1
    cfg = clean.parent / "cfg.json"
    cfg.write_text(json.dumps({"rules": {"disabled": ["R025"]}, "threshold": "error"}))
    assert run(capsys, "check", dirty, "-c", cfg)[0] == 0


def test_user_errors_exit_2(capsys, tmp_path, models):
    assert run(capsys, "check", tmp_path / "missing.json")[0] == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"sheets": [{"name": "S", "cells": {"A1": {}}}]}')
    code, _, err = run(capsys, "check", bad)
    assert code == 2 and "A1" in err
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "recalc", models[0], "--set", "A1=3")[0] == 2
    assert run(capsys, "check")[0] == 2


def test_recalc_with_override(capsys, models):
    code, out, _ = run(capsys, "recalc", models[0], "--set", "S!A1=10")
    assert code == 0
    assert json.loads(out)["values"]["S!B1"] == 30


def test_graph_and_map(capsys, models, tmp_path):
    code, out, _ = run(capsys, "graph", models[1], "--edges", tmp_path / "e.txt")
    doc = json.loads(out)
    assert code == 0 and doc["cycles"] == [["S!C1"]]
    assert (tmp_path / "e.txt").read_text().splitlines() == ["S!A1 -> S!B1", "S!C1 -> S!C1"]
    code, out, _ = run(capsys, "map", models[0], "--text")
    assert code == 0 and out.splitlines() == ["  AB", "1 NF", "2 N."]


def test_diff_exit_codes(capsys, models):
    clean, dirty = models
    assert run(capsys, "diff", clean, clean)[0] == 0
    code, out, _ = run(capsys, "diff", clean, dirty, "--scope")
    lines = [json.loads(x) for x in out.splitlines()]
    assert code == 1 and "scope" in lines[-1]


def test_audit_clean_and_dirty(capsys, models, tmp_path):
    clean, dirty = models
    code, out, _ = run(capsys, "audit", clean, "-o", tmp_path / "a")
    assert code == 0 and json.loads(out)["exit"] == 0
    code, _, _ = run(capsys, "audit", dirty, "-o", tmp_path / "b")
    assert code == 1
    for name in ("fingerprint.json", "metrics.json", "values.json", "coverage.json", "report.json"):
        json.loads((tmp_path / "b" / name).read_text())
    store = FindingStore.load(tmp_path / "b" / "findings.jsonl")
    assert {f.rule for f in store} == {"R022", "R025"}
    assert (tmp_path / "b" / "edges.txt").read_text()
    assert not (tmp_path / "b" / LOCK_NAME).exists()


def stable_files(directory):
    out = {}
    for p in sorted(directory.rglob("*")):
        if p.is_dir() or p.name in ("coverage.jsonl", "report.json"):
            continue
        text = p.read_text()
        if p.name == "report.txt":
            text = "\n".join(x for x in text.splitlines() if "Report generated" not in x)
        out[str(p.relative_to(directory))] = text
    return out


def test_audit_output_deterministic(capsys, corpus_dir, tmp_path):
    cfg = corpus_dir / "engagement.json"
    model = corpus_dir / "clean_model.json"
    assert run(capsys, "audit", model, "-c", cfg, "-o", tmp_path / "one")[0] == 0
    assert run(capsys, "audit", model, "-c", cfg, "-o", tmp_path / "two")[0] == 0
    assert stable_files(tmp_path / "one") == stable_files(tmp_path / "two")


def test_lock_refuses_concurrent_run(capsys, models, tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    (out / LOCK_NAME).write_text("123")
    code, _, err = run(capsys, "audit", models[0], "-o", out)
    assert code == 2 and "lock" in err.lower()


def test_finding_lifecycle_and_report(capsys, models, tmp_path):
    out = tmp_path / "audit"
    run(capsys, "audit", models[1], "-o", out)
    store = out / "findings.jsonl"
    r022 = next(f for f in FindingStore.load(store) if f.rule == "R022")
    assert run(capsys, "finding", store, r022.id, "--to", "verified")[0] == 2
    assert run(capsys, "finding", store, r022.id, "--to", "waived", "--note", "agreed constant")[0] == 0
    code, text, _ = run(capsys, "report", out, "--findings", store, "--text", "--mode", "opinion")
    assert code == 0 and "note: agreed constant" in text and "free of material error" in text


def test_coverage_rejects_other_model(capsys, models, tmp_path):
    clean, dirty = models
    ledger = tmp_path / "ledger.jsonl"
    code, out, _ = run(capsys, "coverage", ledger, clean, "--sign", "S!A1:B1", "--reviewer", "ann")
    assert code == 0
    assert json.loads(out)["coverage"][0]["signed"] == 2
    assert run(capsys, "coverage", ledger, dirty, "--sign", "S!A1", "--reviewer", "ann")[0] == 2


def test_module_entry_point(models):
    proc = subprocess.run([sys.executable, "-m", "cellsentry", "check", str(models[0])], capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "cellsentry", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("cellsentry")
