"""The full audit: familiarisation, low-level review, recalculation, high-level review,
sensitivities and the report, with every artifact written to one output directory."""

from __future__ import annotations

import json
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from cellsentry.config import EngagementConfig
from cellsentry.engine.recalc import RecalcResult, recalculate, verify_cached_values
from cellsentry.engine.values import value_to_json
from cellsentry.findings import Finding, FindingStore, at_or_above, number_findings
from cellsentry.graph import Metrics, build_graph, compute_metrics
from cellsentry.highlevel import AssertionResult, assertion_findings, load_schema, run_financial_assertions
from cellsentry.lowlevel import run_checks
from cellsentry.model import ModelFingerprint, Workbook, fingerprint_model, load_workbook
from cellsentry.papertrail import (
    CoverageLedger,
    FingerprintMismatchError,
    SheetCoverage,
    coverage_status,
    render_cell_map,
    render_workbook_maps,
    sign_all,
)
from cellsentry.report import AuditReport, build_report, emit_report
from cellsentry.sensitivity import ScenarioResult, load_suite, run_sensitivity_suite

log = logging.getLogger("cellsentry")

LOCK_NAME = ".cellsentry.lock"


class LockedError(RuntimeError):
    pass


@contextmanager
def output_lock(out_dir: Path) -> Iterator[None]:
    """Single-instance guard per output directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockedError(f"{out_dir} is in use by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def blocking_findings(findings: list[Finding]) -> list[Finding]:
    """Open error-level low-level findings; these hold back the high-level phase."""
    return [f for f in at_or_above(findings, "error") if not f.rule.startswith("H")]


def merge_findings(previous: FindingStore, current: list[Finding], iteration: int) -> list[Finding]:
    """Keep lifecycle state of findings seen before; number new ones after the existing ids."""
    known = {(f.rule, f.locations): f for f in previous}
    kept: list[Finding] = []
    fresh: list[Finding] = []
    for f in current:
        old = known.pop((f.rule, f.locations), None)
        (kept if old is not None else fresh).append(old if old is not None else f)
    numbered = number_findings(fresh, start=previous.next_id(), iteration=iteration)
    # findings from earlier rounds that no longer reproduce stay on record as they were
    return sorted(kept + list(known.values()) + numbered, key=lambda f: f.id)


@dataclass
class AuditOutcome:
    fingerprint: ModelFingerprint
    workbook: Workbook
    metrics: Metrics
    findings: list[Finding]
    recalc: RecalcResult
    assertions: list[AssertionResult] | None
    sensitivity: list[ScenarioResult] | None
    coverage: list[SheetCoverage]
    report: AuditReport
    exit_code: int
    notes: list[str] = field(default_factory=list)


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def run_audit(
    model_path: str | os.PathLike[str],
    config: EngagementConfig,
    out_dir: str | os.PathLike[str],
    force: bool = False,
    run_sensitivities: bool = True,
    generated_at: str | None = None,
) -> AuditOutcome:
    out = Path(out_dir)
    with output_lock(out):
        return _run(Path(model_path), config, out, force, run_sensitivities, generated_at)


def _run(
    model_path: Path,
    config: EngagementConfig,
    out: Path,
    force: bool,
    run_sensitivities: bool,
    generated_at: str | None,
) -> AuditOutcome:
    notes: list[str] = []
    config.check_paths()

    # familiarisation
    fingerprint = fingerprint_model(model_path)
    workbook = load_workbook(model_path)
    # an output directory belongs to one model version; check before touching anything
    ledger_path = out / "coverage.jsonl"
    if ledger_path.exists():
        ledger = CoverageLedger.load(ledger_path)
        if not fingerprint.same_content(ledger.fingerprint):
            raise FingerprintMismatchError(
                f"{ledger_path} belongs to another version of the model; use a fresh output directory"
            )
    else:
        ledger = CoverageLedger(fingerprint)
    _write_json(out / "fingerprint.json", fingerprint.to_dict())
    graph = build_graph(workbook)
    metrics = compute_metrics(workbook, graph, config.review_throughput)
    _write_json(out / "metrics.json", metrics.to_dict())
    (out / "edges.txt").write_text("".join(line + "\n" for line in graph.edge_lines()), encoding="utf-8")
    (out / "maps.txt").write_text(render_workbook_maps(workbook, "type"), encoding="utf-8")
    (out / "maps_clone.txt").write_text(render_workbook_maps(workbook, "clone"), encoding="utf-8")
    _write_json(out / "maps.json", {"maps": [render_cell_map(workbook, s.name, m).to_dict() for s in workbook.sheets for m in ("type", "clone")]})
    log.info("graph: %d nodes, %d edges, %d unique formulas", len(graph.nodes), graph.edge_count, metrics.unique_formula_count)

    # low-level review and recalculation
    found = run_checks(workbook, graph, config.rules)
    recalc = recalculate(workbook, {}, graph)
    if "R040" in config.rules.enabled:
        found += verify_cached_values(workbook, recalc, config.tolerance)
    _write_json(
        out / "values.json",
        {"values": {ref.a1(): value_to_json(v) for ref, v in sorted(recalc.values.items(), key=lambda kv: graph.sort_key(kv[0]))}},
    )

    # high-level review, only on a low-level-clean model unless forced
    assertions: list[AssertionResult] | None = None
    blocking = blocking_findings(number_findings(found, config.rules.severity_overrides))
    if config.schema_path is not None:
        if blocking and not force:
            notes.append(f"high-level review not run: {len(blocking)} open error-level low-level finding(s); use --force to override")
        else:
            schema = load_schema(config.schema_path, workbook)
            assertions = run_financial_assertions(workbook, recalc, schema)
            found += [f for f in assertion_findings(assertions, schema, workbook) if f.rule in config.rules.enabled]
            _write_json(out / "assertions.json", {"assertions": [a.to_dict() for a in assertions]})

    # feedback rounds: keep status history from an earlier run in this directory
    store_path = out / "findings.jsonl"
    previous = FindingStore.load(store_path) if store_path.exists() else FindingStore()
    iteration = max((f.iteration for f in previous), default=0) + 1
    numbered = number_findings(found, config.rules.severity_overrides)
    findings = merge_findings(previous, numbered, iteration) if len(previous) else numbered
    FindingStore(findings).save(store_path)

    sensitivity: list[ScenarioResult] | None = None
    if run_sensitivities and config.scenarios_path is not None:
        suite = load_suite(config.scenarios_path)
        sensitivity = run_sensitivity_suite(workbook, suite, out / "scenarios")

    # paper trail
    ledger = sign_all(ledger, workbook, fingerprint, config.reviewer, "low-level", generated_at)
    ledger.save(ledger_path)
    coverage = coverage_status(ledger, workbook, fingerprint)
    _write_json(out / "coverage.json", {"coverage": [c.to_dict() for c in coverage]})

    report = build_report(
        fingerprint,
        config,
        metrics=metrics,
        findings=findings,
        assertions=assertions,
        sensitivity=sensitivity,
        coverage=coverage,
        generated_at=generated_at,
        limitations=notes,
    )
    emit_report(report, out)

    refused = bool(blocking) and assertions is None and config.schema_path is not None
    exit_code = 1 if at_or_above(findings, config.threshold) or refused else 0
    return AuditOutcome(fingerprint, workbook, metrics, findings, recalc, assertions, sensitivity, coverage, report, exit_code, notes)
