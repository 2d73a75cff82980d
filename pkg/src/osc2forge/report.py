"""Machine-readable verification reports."""
from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class CheckRecord:
    id: str
    paper_ref: str
    max_residual: float | None
    tolerance: float
    status: str                # "pass" | "fail" | "skip"
    worst_point: dict[str, float] | None = None
    note: str = ""

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "paper_ref": self.paper_ref,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "status": self.status,
            "worst_point": self.worst_point,
        }


@dataclass
class Report:
    scenario: str
    version: str
    checks: list[CheckRecord] = field(default_factory=list)
    overall: str = "pass"
    abort_error: str | None = None     # diagnostic only, not serialized

    def add(self, record: CheckRecord) -> CheckRecord:
        self.checks.append(record)
        if record.status == "fail":
            self.overall = "fail"
        return record

    def finish(self, aborted_stage: str | None = None):
        if aborted_stage is not None:
            self.overall = f"aborted at {aborted_stage}"
        elif any(c.status == "fail" for c in self.checks):
            self.overall = "fail"
        else:
            self.overall = "pass"

    @property
    def exit_code(self) -> int:
        if self.overall == "pass":
            return 0
        if self.overall == "fail":
            return 1
        return 2

    def to_json(self) -> str:
        obj = {
            "scenario": self.scenario,
            "version": self.version,
            "checks": [c.to_json_obj() for c in self.checks],
            "overall": self.overall,
        }
        return json.dumps(obj, sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario}", f"version:  {self.version}", ""]
        header = f"{'check':<38} {'ref':<10} {'max residual':>13} {'tolerance':>10} {'status':>6}"
        lines.append(header)
        lines.append("-" * len(header))
        for c in self.checks:
            resid = "-" if c.max_residual is None else f"{c.max_residual:.3e}"
            lines.append(f"{c.id:<38} {c.paper_ref:<10} {resid:>13} "
                         f"{c.tolerance:>10.1e} {c.status:>6}")
            if c.note:
                lines.append(f"{'':<38} {c.note}")
        lines.append("")
        lines.append(f"overall: {self.overall}")
        return "\n".join(lines) + "\n"


def emit_report(report: Report, fmt: str = "text") -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "text":
        return report.to_text()
    raise ValueError(f"unknown report format {fmt!r}")
