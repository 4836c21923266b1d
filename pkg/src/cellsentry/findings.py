"""Audit findings and the file-backed findings store (the error-management log)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

SEVERITIES = ("info", "warning", "error")
SEVERITY_RANK = {s: i for i, s in enumerate(SEVERITIES)}

OPEN, CORRECTED, VERIFIED, WAIVED = "open", "corrected", "verified", "waived"
STATUSES = (OPEN, CORRECTED, VERIFIED, WAIVED)
TRANSITIONS = {(OPEN, CORRECTED), (CORRECTED, VERIFIED), (OPEN, WAIVED)}

RULE_TITLES = {
    "R001": "formula does not parse",
    "R010": "overlapping named ranges",
    "R011": "named range covers only blank cells",
    "R012": "named range target does not resolve",
    "R013": "name breaks the naming convention",
    "R020": "error literal present",
    "R021": "dangling reference",
    "R022": "embedded constant",
    "R023": "unknown function",
    "R024": "function argument problem",
    "R025": "circular reference",
    "R026": "inconsistent absolute/relative addressing in a copied region",
    "R030": "formula differs from its copied region",
    "R040": "cached value differs from recalculated value",
    "H001": "balance sheet does not balance",
    "H002": "retained earnings do not roll forward from profit and loss",
    "H003": "debt not fully amortised at final period",
    "H004": "fixed asset net book value below zero",
    "H005": "revenue or costs without production",
    "H006": "tax charge sign inconsistent with pre-tax income",
}

DEFAULT_SEVERITY: dict[str, str] = {code: "warning" for code in RULE_TITLES}
DEFAULT_SEVERITY.update({"R025": "error", "H001": "error", "H002": "error", "H003": "error", "H004": "error", "H005": "error"})


class FindingError(ValueError):
    pass


class IllegalTransitionError(FindingError):
    pass


@dataclass(frozen=True)
class Finding:
    id: int
    rule: str
    severity: str
    locations: tuple[str, ...]
    message: str
    status: str = OPEN
    iteration: int = 1
    history: tuple[Mapping[str, Any], ...] = ()
    sort_key: tuple = field(default=(), compare=False, repr=False)

    @property
    def unresolved(self) -> bool:
        return self.status in (OPEN, WAIVED)

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "id": self.id,
            "rule": self.rule,
            "severity": self.severity,
            "loc": list(self.locations),
            "msg": self.message,
            "status": self.status,
            "iteration": self.iteration,
        }
        if self.history:
            doc["history"] = [dict(h) for h in self.history]
        return doc

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "Finding":
        return cls(
            id=int(doc["id"]),
            rule=doc["rule"],
            severity=doc["severity"],
            locations=tuple(doc.get("loc", ())),
            message=doc.get("msg", ""),
            status=doc.get("status", OPEN),
            iteration=int(doc.get("iteration", 1)),
            history=tuple(doc.get("history", ())),
        )


def make_finding(rule: str, locations: Sequence[str], message: str, sort_key: tuple = (), severity: str | None = None) -> Finding:
    """A finding without an id yet; ids are assigned by ``number_findings``."""
    return Finding(0, rule, severity or DEFAULT_SEVERITY.get(rule, "warning"), tuple(locations), message, sort_key=sort_key)


def order_findings(findings: Iterable[Finding]) -> list[Finding]:
    return sorted(findings, key=lambda f: (f.sort_key, f.rule, f.locations))


def number_findings(
    findings: Iterable[Finding],
    overrides: Mapping[str, str] | None = None,
    start: int = 1,
    iteration: int = 1,
) -> list[Finding]:
    """Order findings deterministically and assign ids ``start, start+1, ...``."""
    overrides = overrides or {}
    out = []
    for i, f in enumerate(order_findings(findings)):
        out.append(replace(f, id=start + i, severity=overrides.get(f.rule, f.severity), iteration=iteration))
    return out


def at_or_above(findings: Iterable[Finding], threshold: str) -> list[Finding]:
    rank = SEVERITY_RANK[threshold]
    return [f for f in findings if f.status == OPEN and SEVERITY_RANK[f.severity] >= rank]


class FindingStore:
    """Findings keyed by id, persisted as JSON lines with full status history."""

    def __init__(self, findings: Iterable[Finding] = ()) -> None:
        self._findings: dict[int, Finding] = {}
        for f in findings:
            if f.id in self._findings:
                raise FindingError(f"duplicate finding id {f.id}")
            self._findings[f.id] = f

    def __len__(self) -> int:
        return len(self._findings)

    def __iter__(self):
        return iter(sorted(self._findings.values(), key=lambda f: f.id))

    def __contains__(self, fid: int) -> bool:
        return fid in self._findings

    def get(self, fid: int) -> Finding:
        try:
            return self._findings[fid]
        except KeyError:
            raise FindingError(f"unknown finding id {fid}") from None

    def next_id(self) -> int:
        return max(self._findings, default=0) + 1

    def with_finding(self, finding: Finding) -> "FindingStore":
        store = FindingStore()
        store._findings = dict(self._findings)
        store._findings[finding.id] = finding
        return store

    def to_jsonl(self) -> str:
        return "".join(json.dumps(f.to_json(), sort_keys=True) + "\n" for f in self)

    @classmethod
    def from_jsonl(cls, text: str) -> "FindingStore":
        return cls(Finding.from_json(json.loads(line)) for line in text.splitlines() if line.strip())

    def save(self, path: str | os.PathLike[str]) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> "FindingStore":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def transition(finding: Finding, to: str, note: str, iteration: int) -> Finding:
    if to not in STATUSES:
        raise FindingError(f"unknown status {to!r}")
    if (finding.status, to) not in TRANSITIONS:
        raise IllegalTransitionError(f"finding {finding.id}: {finding.status} -> {to} is not allowed")
    entry = {"from": finding.status, "to": to, "note": note, "iteration": iteration}
    return replace(finding, status=to, iteration=iteration, history=finding.history + (entry,))
