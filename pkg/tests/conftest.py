from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cellsentry.corpus import write_corpus  # noqa: E402
from cellsentry.model import Workbook, workbook_from_dict  # noqa: E402


def cell_doc(v: Any) -> dict[str, Any]:
    if isinstance(v, dict):
        return v
    if isinstance(v, str) and v.startswith("="):
        return {"f": v}
    return {"v": v}


def book_doc(sheets: dict[str, dict[str, Any]], names: dict[str, str] | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "sheets": [{"name": s, "cells": {a: cell_doc(v) for a, v in cells.items()}} for s, cells in sheets.items()]
    }
    if names:
        doc["names"] = [{"name": n, "ref": r} for n, r in names.items()]
    return doc


def book(sheets: dict[str, dict[str, Any]], names: dict[str, str] | None = None) -> Workbook:
    """Workbook from ``{"Sheet": {"A1": 1, "B1": "=A1"}}``; strings starting with = are formulas."""
    return workbook_from_dict(book_doc(sheets, names))


def write_book(path: Path, sheets: dict[str, dict[str, Any]], names: dict[str, str] | None = None) -> Path:
    path.write_text(json.dumps(book_doc(sheets, names)), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    out = tmp_path_factory.mktemp("corpus")
    write_corpus(out)
    return out


@pytest.fixture(autouse=True)
def _no_color(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("CELLSENTRY_NO_COLOR", "1")


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request: pytest.FixtureRequest):
    """Record one acceptance criterion's verdict; the summary prints at the end of the run."""
    results = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number: int, ok: bool, detail: str) -> None:
        results[number] = (ok, detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:  # noqa: ARG001
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
