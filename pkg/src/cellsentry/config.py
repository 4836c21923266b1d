"""Engagement configuration: the machine-readable agreement an audit runs under."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from cellsentry.findings import SEVERITIES
from cellsentry.graph import DEFAULT_THROUGHPUT
from cellsentry.lowlevel import RuleConfig

REPORT_MODES = ("agreed_procedures", "material_error_opinion")
MODE_ALIASES = {"agreed": "agreed_procedures", "opinion": "material_error_opinion"}
DEFAULT_LIABILITY = "Liability is limited as set out in the engagement terms."


class ConfigError(ValueError):
    pass


def report_mode(text: str) -> str:
    mode = MODE_ALIASES.get(text, text)
    if mode not in REPORT_MODES:
        raise ConfigError(f"unknown report mode {text!r}")
    return mode


@dataclass(frozen=True)
class EngagementConfig:
    rules: RuleConfig = field(default_factory=RuleConfig)
    schema_path: Path | None = None
    scenarios_path: Path | None = None
    threshold: str = "warning"
    liability_statement: str = DEFAULT_LIABILITY
    report_mode: str = "agreed_procedures"
    output_dir: Path | None = None
    tolerance: float = 1e-9
    review_throughput: float = DEFAULT_THROUGHPUT
    reviewer: str = "cellsentry"
    engagement: str = ""

    def __post_init__(self) -> None:
        if self.threshold not in SEVERITIES:
            raise ConfigError(f"threshold must be one of {', '.join(SEVERITIES)}")
        if self.report_mode not in REPORT_MODES:
            raise ConfigError(f"report mode must be one of {', '.join(REPORT_MODES)}")
        if self.review_throughput <= 0 or self.tolerance < 0:
            raise ConfigError("throughput must be positive and tolerance non-negative")

    def check_paths(self) -> None:
        for label, path in (("schema", self.schema_path), ("scenarios", self.scenarios_path)):
            if path is not None and not path.is_file():
                raise ConfigError(f"{label} file {path} does not exist")

    def to_dict(self) -> dict[str, Any]:
        return {
            "rules": self.rules.to_dict(),
            "schema": str(self.schema_path) if self.schema_path else None,
            "scenarios": str(self.scenarios_path) if self.scenarios_path else None,
            "threshold": self.threshold,
            "liability_statement": self.liability_statement,
            "report_mode": self.report_mode,
            "output_dir": str(self.output_dir) if self.output_dir else None,
            "tolerance": self.tolerance,
            "review_throughput": self.review_throughput,
            "reviewer": self.reviewer,
            "engagement": self.engagement,
        }


def config_from_dict(doc: Mapping[str, Any], base: Path | None = None) -> EngagementConfig:
    """Build a config; relative paths are taken relative to ``base``."""
    if not isinstance(doc, Mapping):
        raise ConfigError("engagement config must be a JSON object")
    known = {
        "rules", "schema", "scenarios", "threshold", "liability_statement", "report_mode",
        "output_dir", "tolerance", "review_throughput", "reviewer", "engagement",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def path(key: str) -> Path | None:
        value = doc.get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() or base is None else base / p

    try:
        rules = RuleConfig.from_dict(doc.get("rules", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"rules: {exc}") from None
    return EngagementConfig(
        rules=rules,
        schema_path=path("schema"),
        scenarios_path=path("scenarios"),
        threshold=doc.get("threshold", "warning"),
        liability_statement=doc.get("liability_statement", DEFAULT_LIABILITY),
        report_mode=report_mode(doc.get("report_mode", "agreed_procedures")),
        output_dir=path("output_dir"),
        tolerance=float(doc.get("tolerance", 1e-9)),
        review_throughput=float(doc.get("review_throughput", DEFAULT_THROUGHPUT)),
        reviewer=doc.get("reviewer", "cellsentry"),
        engagement=doc.get("engagement", ""),
    )


def load_config(path: str | os.PathLike[str]) -> EngagementConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not JSON: {exc}") from None
    return config_from_dict(doc, p.parent)
