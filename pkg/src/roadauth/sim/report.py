"""Scenario reports and the operation-count cost table."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

from ..counters import KINDS, OpCounters

# Published comparison figures for the protocol and two earlier schemes.
# Reproduced here as static reference data only; none of these numbers is
# measured by this package.
REFERENCE_SCHEMES = ("this scheme", "Wang et al.", "Chen et al.")
REFERENCE_ROWS = (
    ("Authorization phase",
     ("4T_enc+3T_hash+2T_sym+2 random number",
      "4T_enc+4T_sym+13T_mp+6 random number",
      "2T_sym+1T_hash+2 random numbers")),
    ("Access service phase",
     ("5T_enc+6T_hash+3T_sym+3 random number",
      "4T_enc+4T_sym+4 random numbers",
      "4T_sym+4T_hash+2T_sym+6 random numbers")),
    ("Computational cost", ("≈ 500 T_sym", "≈ 1028 T_sym", "≈ 602 T_sym")),
    ("Computational time (s)", ("4.35", "6.42", "5.7")),
)
REFERENCE_LABEL = "published reference figures (static data, not reproduced)"


def collect_counters(counters: OpCounters, sessions_per_phase: dict[str, int] | None = None) -> dict:
    """Per-phase counter table plus the static reference rows.

    ``sessions_per_phase`` (completed sessions by phase) adds a per-session
    average next to each total.
    """
    phases = {}
    for phase, data in counters.as_dict().items():
        entry = dict(data)
        n = (sessions_per_phase or {}).get(phase)
        if n:
            entry["sessions"] = n
            entry["per_session"] = {k: data["total"][k] / n for k in KINDS}
        phases[phase] = entry
    return {
        "phases": phases,
        "reference": {
            "label": REFERENCE_LABEL,
            "schemes": list(REFERENCE_SCHEMES),
            "rows": {name: list(values) for name, values in REFERENCE_ROWS},
        },
    }


def render_cost_report(cost: dict) -> str:
    lines = ["Operation counts by phase", ""]
    header = f"{'phase':<14} {'entity':<10} " + " ".join(f"{k:>12}" for k in KINDS)
    lines.append(header)
    lines.append("-" * len(header))
    for phase, data in sorted(cost["phases"].items()):
        for entity, counts in sorted(data["by_entity"].items()):
            lines.append(f"{phase:<14} {entity:<10} " + " ".join(f"{counts[k]:>12}" for k in KINDS))
        lines.append(f"{phase:<14} {'TOTAL':<10} " + " ".join(f"{data['total'][k]:>12}" for k in KINDS))
        if "per_session" in data:
            per = data["per_session"]
            lines.append(f"{phase:<14} {'/session':<10} " + " ".join(f"{per[k]:>12.2f}" for k in KINDS))
    ref = cost["reference"]
    lines += ["", f"Reference: {ref['label']}", ""]
    width = max(len(r) for r in ref["rows"]) + 2
    lines.append(" " * width + " | ".join(ref["schemes"]))
    for name, values in ref["rows"].items():
        lines.append(f"{name:<{width}}" + " | ".join(values))
    lines.append("")
    lines.append("Computational cost: " + " / ".join(ref["rows"]["Computational cost"]))
    return "\n".join(lines)


@dataclass
class ScenarioReport:
    summary: dict
    rows: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.summary["ok"])

    def to_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["sid", "kind", "vehicle", "rsu", "honest", "attacked", "status", "error", "error_at", "started"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()

    def render(self, fmt: str = "json") -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown report format {fmt!r}")
