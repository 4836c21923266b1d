"""The final audit report: a JSON document and its plain-text rendering."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from cellsentry.config import EngagementConfig
from cellsentry.engine.values import display, value_from_json
from cellsentry.findings import Finding
from cellsentry.graph import Metrics
from cellsentry.highlevel import AssertionResult
from cellsentry.model import ModelFingerprint
from cellsentry.papertrail import SheetCoverage, findings_summary, utc_now
from cellsentry.sensitivity import ScenarioResult

MODE_WORDING = {
    "agreed_procedures": (
        "The procedures listed below were performed on the model identified above, as agreed "
        "for this engagement. This report states what was done and what was found; it does not "
        "express an opinion on whether the model is free of material error."
    ),
    "material_error_opinion": (
        "Based on the procedures listed below, and except for the unresolved issues set out in "
        "this report, the model identified above is in our opinion free of material error."
    ),
}

HUMAN_REVIEW_NOTE = (
    "Whether each range covers the cells its author intended cannot be decided mechanically; "
    "empty-range and copy-region checks approximate it and the remainder is left to human review."
)


@dataclass(frozen=True)
class AuditReport:
    fingerprint: ModelFingerprint
    mode: str
    generated_at: str
    procedures: tuple[str, ...]
    metrics: Mapping[str, Any] | None
    findings_summary: Mapping[str, Mapping[str, int]]
    unresolved: tuple[Mapping[str, Any], ...]
    assertions: tuple[Mapping[str, Any], ...]
    sensitivity: tuple[Mapping[str, Any], ...]
    coverage: tuple[Mapping[str, Any], ...]
    liability_statement: str
    assumptions: tuple[str, ...] = ()
    parameters: Mapping[str, Any] = field(default_factory=dict)
    engagement: str = ""
    limitations: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "engagement": self.engagement,
            "mode": self.mode,
            "generated_at": self.generated_at,
            "fingerprint": self.fingerprint.to_dict(),
            "procedures": list(self.procedures),
            "metrics": dict(self.metrics) if self.metrics is not None else None,
            "findings_summary": {k: dict(v) for k, v in self.findings_summary.items()},
            "unresolved": [dict(u) for u in self.unresolved],
            "assertions": [dict(a) for a in self.assertions],
            "sensitivity": [dict(s) for s in self.sensitivity],
            "coverage": [dict(c) for c in self.coverage],
            "liability_statement": self.liability_statement,
            "assumptions": list(self.assumptions),
            "parameters": dict(self.parameters),
            "limitations": list(self.limitations),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AuditReport":
        return cls(
            fingerprint=ModelFingerprint.from_dict(doc["fingerprint"]),
            mode=doc["mode"],
            generated_at=doc["generated_at"],
            procedures=tuple(doc["procedures"]),
            metrics=doc.get("metrics"),
            findings_summary=doc["findings_summary"],
            unresolved=tuple(doc["unresolved"]),
            assertions=tuple(doc["assertions"]),
            sensitivity=tuple(doc["sensitivity"]),
            coverage=tuple(doc["coverage"]),
            liability_statement=doc["liability_statement"],
            assumptions=tuple(doc.get("assumptions", ())),
            parameters=doc.get("parameters", {}),
            engagement=doc.get("engagement", ""),
            limitations=tuple(doc.get("limitations", ())),
        )

    def text(self) -> str:
        return render_text(self)


def _unresolved_entry(f: Finding) -> dict[str, Any]:
    notes = [h.get("note", "") for h in f.history if h.get("note")]
    return {
        "id": f.id,
        "rule": f.rule,
        "severity": f.severity,
        "status": f.status,
        "loc": list(f.locations),
        "msg": f.message,
        "notes": notes,
    }


def build_report(
    fingerprint: ModelFingerprint,
    config: EngagementConfig,
    metrics: Metrics | None = None,
    findings: Sequence[Finding] = (),
    assertions: Sequence[AssertionResult] | None = None,
    sensitivity: Sequence[ScenarioResult] | None = None,
    coverage: Sequence[SheetCoverage] | None = None,
    mode: str | None = None,
    generated_at: str | None = None,
    limitations: Sequence[str] = (),
) -> AuditReport:
    procedures = ["Model identification (file name, date, time, size and SHA-256 content hash)"]
    if metrics is not None:
        procedures.append("Dependency, uniqueness and review-effort analysis")
    procedures.append("Low-level review of ranges, names and formulas")
    procedures.append("Recalculation and verification of stored results")
    if assertions is not None:
        procedures.append("High-level financial integrity assertions")
    if sensitivity is not None:
        procedures.append("Sensitivity runs over the agreed scenario suite")
    if coverage is not None:
        procedures.append("Cell-by-cell sign-off coverage record")

    assumptions = [HUMAN_REVIEW_NOTE]
    if metrics is not None:
        assumptions.insert(
            0,
            f"Estimated review hours assume a linear rate of {metrics.review_throughput:g} unique formulas "
            "per hour; this rate is an engagement assumption, not a measurement.",
        )
    rules = config.rules
    parameters = {
        "severity_threshold": config.threshold,
        "recalc_tolerance": config.tolerance,
        "constant_allowlist": sorted(rules.constant_allowlist),
        "region_majority_threshold": rules.majority_threshold,
        "region_min_run": rules.min_run,
    }
    return AuditReport(
        fingerprint=fingerprint,
        mode=mode or config.report_mode,
        generated_at=generated_at or utc_now(),
        procedures=tuple(procedures),
        metrics=metrics.to_dict() if metrics is not None else None,
        findings_summary=findings_summary(findings),
        unresolved=tuple(_unresolved_entry(f) for f in findings if f.unresolved),
        assertions=tuple(a.to_dict() for a in assertions or ()),
        sensitivity=tuple(s.to_dict() for s in sensitivity or ()),
        coverage=tuple(c.to_dict() for c in coverage or ()),
        liability_statement=config.liability_statement,
        assumptions=tuple(assumptions),
        parameters=parameters,
        engagement=config.engagement,
        limitations=tuple(limitations),
    )


def _counts(block: Mapping[str, int]) -> str:
    return ", ".join(f"{k} {v}" for k, v in block.items()) or "none"


def render_text(report: AuditReport) -> str:
    fp = report.fingerprint
    title = "MODEL AUDIT REPORT" + (f": {report.engagement}" if report.engagement else "")
    out = [title, "=" * len(title), ""]
    out += [
        "Model identification",
        f"  File name:  {fp.file_name}",
        f"  Date/time:  {fp.modified_timestamp}",
        f"  Size:       {fp.byte_size} bytes",
        f"  SHA-256:    {fp.content_hash}",
        f"  Report generated: {report.generated_at}",
        "",
        MODE_WORDING[report.mode],
        "",
        "Procedures performed",
    ]
    out += [f"  {i}. {p}" for i, p in enumerate(report.procedures, 1)]
    out.append("")

    if report.metrics is not None:
        m = report.metrics
        out += [
            "Model metrics",
            f"  Cells: {m['total_cells']}  Formula cells: {m['formula_cells']}",
            f"  Unique formulas: {m['unique_formula_count']}  Repeated cells: {m['repeated_cells']}"
            f"  (original:repeated {m['original_to_repeated_ratio']})",
            f"  Dependency edges: {m['edge_count']}  Cross-sheet edges: {m['cross_sheet_edge_count']}",
            f"  Estimated review hours: {m['estimated_review_hours']:.2f} (assumed rate, see assumptions)",
            "",
        ]

    fs = report.findings_summary
    out += [
        "Findings",
        f"  By severity: {_counts(fs.get('by_severity', {}))}",
        f"  By status:   {_counts(fs.get('by_status', {}))}",
        f"  By rule:     {_counts(fs.get('by_rule', {}))}",
        "",
        "Unresolved issues",
    ]
    if report.unresolved:
        for u in report.unresolved:
            out.append(f"  #{u['id']} {u['rule']} [{u['severity']}, {u['status']}] {', '.join(u['loc'])}: {u['msg']}")
            for note in u["notes"]:
                out.append(f"      note: {note}")
    else:
        out.append("  None.")
    out.append("")

    if report.assertions:
        out.append("High-level assertions")
        for a in report.assertions:
            periods = ", ".join(str(p) for p in a["failing_periods"]) or "-"
            out.append(f"  {a['code']} {a['status']:<8} worst deviation {a['worst_deviation']:.6g}  failing periods: {periods}  ({a['note']})")
        out.append("")

    if report.sensitivity:
        out.append("Sensitivity results")
        for s in report.sensitivity:
            shown = "; ".join(f"{k} = {display(value_from_json(v))}" for k, v in s["outputs"].items())
            status = "expectations met" if s["passed"] else "EXPECTATIONS NOT MET"
            errors = f"  errors at {', '.join(s['error_cells'])}" if s["error_cells"] else ""
            out.append(f"  {s['name']}: {shown}  [{status}]{errors}")
        out.append("")

    if report.coverage:
        out.append("Sign-off coverage")
        for c in report.coverage:
            flag = "  (no non-blank cells)" if c["zero_denominator"] else ""
            out.append(f"  {c['sheet']}: {c['signed']}/{c['total']} = {c['percent']:.2f}%{flag}")
        out.append("")

    if report.limitations:
        out.append("Scope limitations")
        out += [f"  - {note}" for note in report.limitations]
        out.append("")

    out.append("Parameters")
    out += [f"  {k}: {v}" for k, v in report.parameters.items()]
    out += ["", "Assumptions"]
    out += [f"  - {a}" for a in report.assumptions]
    out += ["", "Limitation of liability", f"  {report.liability_statement}", ""]
    return "\n".join(out)


def emit_report(report: AuditReport, out_dir: str | os.PathLike[str]) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text_path, json_path = out / "report.txt", out / "report.json"
    text_path.write_text(report.text(), encoding="utf-8")
    json_path.write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    return text_path, json_path


def load_report(path: str | os.PathLike[str]) -> AuditReport:
    return AuditReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
