"""Command-line interface.

Every subcommand writes machine-readable output (JSON or JSON lines) to stdout;
human summaries and diagnostics go to stderr.  Exit codes: 0 clean, 1 findings
at or above the threshold, 2 usage/IO/schema problems, 3 internal failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from cellsentry import __version__
from cellsentry.config import ConfigError, EngagementConfig, load_config, report_mode
from cellsentry.diff import diff_workbooks, rereview_scope
from cellsentry.engine.recalc import OverrideError, recalculate, verify_cached_values
from cellsentry.engine.values import value_from_json, value_to_json
from cellsentry.findings import SEVERITIES, STATUSES, FindingError, FindingStore, at_or_above, number_findings
from cellsentry.graph import build_graph, compute_metrics, find_circularity
from cellsentry.highlevel import FinancialSchemaError, assertion_findings, load_schema, run_financial_assertions
from cellsentry.lowlevel import run_checks
from cellsentry.model import CellRef, WorkbookError, fingerprint_model, load_workbook
from cellsentry.papertrail import (
    CellMap,
    CoverageLedger,
    LedgerError,
    coverage_status,
    findings_summary,
    manage_finding,
    record_signoff,
    render_cell_map,
)
from cellsentry.pipeline import LockedError, blocking_findings, run_audit
from cellsentry.report import build_report, emit_report, load_report
from cellsentry.sensitivity import ScenarioError, load_suite, run_sensitivity_suite

log = logging.getLogger("cellsentry")

DEFAULT_OUT = "cellsentry_out"

# problems in the user's inputs or environment: exit 2
USER_ERRORS = (
    OSError,
    json.JSONDecodeError,
    WorkbookError,
    ConfigError,
    FinancialSchemaError,
    ScenarioError,
    LedgerError,
    FindingError,
    OverrideError,
    LockedError,
)


class UsageError(Exception):
    pass


def _color(text: str, code: str) -> str:
    if os.environ.get("CELLSENTRY_NO_COLOR") or not sys.stderr.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


SEVERITY_COLORS = {"error": "31", "warning": "33", "info": "36"}


def _emit(doc: Any) -> None:
    sys.stdout.write(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _say(text: str) -> None:
    sys.stderr.write(text + "\n")


def _config(args: argparse.Namespace) -> EngagementConfig:
    config = load_config(args.config) if getattr(args, "config", None) else EngagementConfig()
    changes: dict[str, Any] = {}
    if getattr(args, "threshold", None):
        changes["threshold"] = args.threshold
    if getattr(args, "tol", None) is not None:
        changes["tolerance"] = args.tol
    if getattr(args, "mode", None):
        changes["report_mode"] = report_mode(args.mode)
    return replace(config, **changes) if changes else config


def _summarize(findings: Sequence[Any]) -> None:
    summary = findings_summary(findings)
    parts = [_color(f"{sev} {n}", SEVERITY_COLORS.get(sev, "0")) for sev, n in summary["by_severity"].items()]
    _say(f"{len(findings)} finding(s)" + (": " + ", ".join(parts) if parts else ""))


# -- subcommands ---------------------------------------------------------------


def cmd_audit(args: argparse.Namespace) -> int:
    config = _config(args)
    out = Path(args.out or config.output_dir or DEFAULT_OUT)
    outcome = run_audit(args.model, config, out, force=args.force, run_sensitivities=not args.no_sens)
    for note in outcome.notes:
        _say(_color(note, "33"))
    _summarize(outcome.findings)
    _emit(
        {
            "out": str(out),
            "fingerprint": outcome.fingerprint.to_dict(),
            "findings": findings_summary(outcome.findings),
            "high_level_run": outcome.assertions is not None,
            "exit": outcome.exit_code,
        }
    )
    return outcome.exit_code


def cmd_map(args: argparse.Namespace) -> int:
    source = Path(args.model)
    doc = json.loads(source.read_text(encoding="utf-8"))
    if "maps" in doc:
        # a saved maps.json from an earlier audit
        maps = [CellMap.from_dict(m) for m in doc["maps"]]
        maps = [m for m in maps if m.mode == args.mode and (args.sheet is None or m.sheet == args.sheet)]
    else:
        workbook = load_workbook(source)
        sheets = [args.sheet] if args.sheet else [s.name for s in workbook.sheets]
        maps = [render_cell_map(workbook, name, args.mode) for name in sheets]
    if args.text:
        sys.stdout.write("\n".join(m.text() for m in maps))
    else:
        _emit({"maps": [m.to_dict() for m in maps]})
    return 0


def cmd_graph(args: argparse.Namespace) -> int:
    config = _config(args)
    workbook = load_workbook(args.model)
    graph = build_graph(workbook)
    metrics = compute_metrics(workbook, graph, config.review_throughput)
    cycles = [sorted(ref.a1() for ref in group) for group in find_circularity(graph)]
    if args.edges:
        Path(args.edges).write_text("".join(line + "\n" for line in graph.edge_lines()), encoding="utf-8")
    _emit({"metrics": metrics.to_dict(), "cycles": cycles})
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    config = _config(args)
    if args.findings:
        findings = list(FindingStore.load(args.findings))
    else:
        workbook = load_workbook(args.model)
        graph = build_graph(workbook)
        found = run_checks(workbook, graph, config.rules)
        if "R040" in config.rules.enabled:
            found += verify_cached_values(workbook, recalculate(workbook, {}, graph), config.tolerance)
        findings = number_findings(found, config.rules.severity_overrides)
    for f in findings:
        sys.stdout.write(json.dumps(f.to_json(), sort_keys=True) + "\n")
    _summarize(findings)
    return 1 if at_or_above(findings, config.threshold) else 0


def _parse_set(items: Sequence[str]) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for item in items:
        target, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects CELL=VALUE, got {item!r}")
        try:
            overrides[target] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[target] = raw
    return overrides


def cmd_recalc(args: argparse.Namespace) -> int:
    config = _config(args)
    workbook = load_workbook(args.model)
    graph = build_graph(workbook)
    overrides = {}
    for target, raw in _parse_set(args.set).items():
        ref = CellRef.parse(target)
        if ref.sheet is None:
            raise UsageError(f"--set target {target!r} needs a sheet")
        overrides[ref] = value_from_json(raw)
    result = recalculate(workbook, overrides, graph)
    mismatches = [] if overrides else number_findings(verify_cached_values(workbook, result, config.tolerance))
    ordered = sorted(result.values.items(), key=lambda kv: graph.sort_key(kv[0]))
    doc = {
        "values": {ref.a1(): value_to_json(v) for ref, v in ordered},
        "cycle_cells": sorted(r.a1() for r in result.cycle_cells),
        "cells_in_error": sorted(r.a1() for r in result.cells_in_error),
        "cached_mismatches": [f.to_json() for f in mismatches],
        "tolerance": config.tolerance,
    }
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    else:
        _emit(doc)
    if mismatches:
        _say(f"{len(mismatches)} stored value(s) disagree with recalculation")
    return 1 if at_or_above(mismatches, config.threshold) else 0


def cmd_sens(args: argparse.Namespace) -> int:
    workbook = load_workbook(args.model)
    results = run_sensitivity_suite(workbook, load_suite(args.suite), args.out)
    _emit({"results": [r.to_dict() for r in results]})
    failed = [r.name for r in results if not r.passed]
    if failed:
        _say("expectations not met: " + ", ".join(failed))
    return 1 if failed else 0


def cmd_hicheck(args: argparse.Namespace) -> int:
    config = _config(args)
    workbook = load_workbook(args.model)
    graph = build_graph(workbook)
    result = recalculate(workbook, {}, graph)
    if not args.force:
        if args.findings:
            prior = list(FindingStore.load(args.findings))
        else:
            found = run_checks(workbook, graph, config.rules) + verify_cached_values(workbook, result, config.tolerance)
            prior = number_findings(found, config.rules.severity_overrides)
        blocking = blocking_findings(prior)
        if blocking:
            _say(
                _color(f"refusing high-level review: {len(blocking)} open error-level low-level finding(s) "
                       f"(ids {', '.join(str(f.id) for f in blocking)}); use --force to override", "31")
            )
            return 1
    schema = load_schema(args.schema or config.schema_path, workbook)
    assertions = run_financial_assertions(workbook, result, schema)
    findings = number_findings(assertion_findings(assertions, schema, workbook), config.rules.severity_overrides)
    _emit({"assertions": [a.to_dict() for a in assertions], "findings": [f.to_json() for f in findings]})
    for a in assertions:
        if a.status == "fail":
            _say(_color(f"{a.code} fails in period(s) {', '.join(map(str, a.failing_periods))}", "31"))
    return 1 if at_or_above(findings, config.threshold) else 0


def cmd_diff(args: argparse.Namespace) -> int:
    old, new = load_workbook(args.old), load_workbook(args.new)
    entries = diff_workbooks(old, new, expand=args.expand)
    for e in entries:
        sys.stdout.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
    if args.scope:
        graph = build_graph(new)
        scope = rereview_scope(entries, graph, new)
        sys.stdout.write(json.dumps({"scope": scope.to_dict(graph.sort_key)}, sort_keys=True) + "\n")
    kinds: dict[str, int] = {}
    for e in entries:
        kinds[e.kind] = kinds.get(e.kind, 0) + 1
    _say(", ".join(f"{k} {n}" for k, n in sorted(kinds.items())) or "no differences")
    return 1 if entries else 0


def cmd_coverage(args: argparse.Namespace) -> int:
    ledger_path = Path(args.ledger)
    workbook = load_workbook(args.model)
    fingerprint = fingerprint_model(args.model)
    if args.sign:
        if not args.reviewer:
            raise UsageError("--sign needs --reviewer")
        ledger = CoverageLedger.load(ledger_path) if ledger_path.exists() else CoverageLedger(fingerprint)
        for cells in args.sign:
            ledger = record_signoff(ledger, workbook, fingerprint, cells, args.reviewer, args.phase)
        ledger.save(ledger_path)
    ledger = CoverageLedger.load(ledger_path)
    status = coverage_status(ledger, workbook, fingerprint)
    _emit({"fingerprint": ledger.fingerprint.to_dict(), "coverage": [c.to_dict() for c in status]})
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    source = Path(args.source)
    path = source / "report.json" if source.is_dir() else source
    report = load_report(path)
    if args.mode:
        report = replace(report, mode=report_mode(args.mode))
    if args.findings:
        # re-render after findings were managed between iterations
        findings = list(FindingStore.load(args.findings))
        fresh = build_report(report.fingerprint, EngagementConfig(), findings=findings)
        report = replace(report, findings_summary=fresh.findings_summary, unresolved=fresh.unresolved)
    if args.out:
        emit_report(report, args.out)
    if args.text:
        sys.stdout.write(report.text())
    else:
        _emit(report.to_dict())
    return 0


def cmd_finding(args: argparse.Namespace) -> int:
    store = FindingStore.load(args.findings)
    iteration = args.iteration or max((f.iteration for f in store), default=1)
    store = manage_finding(store, args.id, args.to, args.note, iteration)
    store.save(args.findings)
    _emit(store.get(args.id).to_json())
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cellsentry", description="Spreadsheet model audit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, threshold: bool = True) -> None:
        p.add_argument("-c", "--config", help="engagement config (JSON)")
        if threshold:
            p.add_argument("--threshold", choices=SEVERITIES, help="lowest severity that fails the run")

    p = sub.add_parser("audit", help="run the whole pipeline")
    p.add_argument("model")
    common(p)
    p.add_argument("-o", "--out", help=f"output directory (default: config or ./{DEFAULT_OUT})")
    p.add_argument("--tol", type=float, help="recalculation tolerance")
    p.add_argument("--force", action="store_true", help="run high-level review despite open errors")
    p.add_argument("--mode", choices=("agreed", "opinion"), help="report mode")
    p.add_argument("--no-sens", action="store_true", help="skip sensitivity runs")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("map", help="cell-type or clone maps")
    p.add_argument("model", help="model JSON or a saved maps.json")
    p.add_argument("--sheet")
    p.add_argument("--kind", dest="mode", choices=("type", "clone"), default="type")
    p.add_argument("--text", action="store_true", help="render the maps as text")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("graph", help="dependency metrics and edges")
    p.add_argument("model")
    common(p, threshold=False)
    p.add_argument("--edges", help="write the edge list to this file")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("check", help="low-level checks and stored-value verification")
    p.add_argument("model", nargs="?")
    common(p)
    p.add_argument("--tol", type=float)
    p.add_argument("--findings", help="re-read a saved findings store instead of checking")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("recalc", help="recalculate and print every value")
    p.add_argument("model")
    common(p)
    p.add_argument("--tol", type=float, help="tolerance for stored values (default 1e-9)")
    p.add_argument("--set", action="append", default=[], metavar="CELL=VALUE", help="override an input")
    p.add_argument("-o", "--out", help="write the value map here")
    p.set_defaults(func=cmd_recalc)

    p = sub.add_parser("sens", help="run a scenario suite")
    p.add_argument("model")
    p.add_argument("suite")
    p.add_argument("-o", "--out", help="save scenario workbooks and results here")
    p.set_defaults(func=cmd_sens)

    p = sub.add_parser("hicheck", help="high-level financial assertions")
    p.add_argument("model")
    p.add_argument("schema", nargs="?")
    common(p)
    p.add_argument("--tol", type=float)
    p.add_argument("--force", action="store_true")
    p.add_argument("--findings", help="saved findings store used for the phase gate")
    p.set_defaults(func=cmd_hicheck)

    p = sub.add_parser("diff", help="compare two versions of a model")
    p.add_argument("old")
    p.add_argument("new")
    p.add_argument("--scope", action="store_true", help="add the re-review scope")
    p.add_argument("--expand", action="store_true", help="list cells of added/removed sheets")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("coverage", help="sign off cells and show coverage")
    p.add_argument("ledger")
    p.add_argument("model")
    p.add_argument("--sign", action="append", metavar="RANGE", help="e.g. Sheet1!A1:C10")
    p.add_argument("--reviewer")
    p.add_argument("--phase", default="manual")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("report", help="re-render a saved report")
    p.add_argument("source", help="audit output directory or report.json")
    p.add_argument("--mode", choices=("agreed", "opinion"))
    p.add_argument("--findings", help="refresh the issue list from this findings store")
    p.add_argument("-o", "--out", help="write report.txt and report.json here")
    p.add_argument("--text", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("finding", help="move a finding through its lifecycle")
    p.add_argument("findings", help="findings.jsonl")
    p.add_argument("id", type=int)
    p.add_argument("--to", required=True, choices=STATUSES[1:])
    p.add_argument("--note", default="")
    p.add_argument("--iteration", type=int)
    p.set_defaults(func=cmd_finding)
    return parser


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "check" and not (args.model or args.findings):
        _say("check: give a model or --findings")
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"cellsentry {args.command}: {exc}")
        return 2
    except USER_ERRORS as exc:
        _say(f"cellsentry {args.command}: {exc}")
        return 2
    except Exception:
        _say(f"cellsentry {args.command}: internal error")
        traceback.print_exc(file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
