"""Deterministic network simulation, adversaries and cost accounting."""

from .config import AdversarySpec, ScenarioConfig
from .report import REFERENCE_ROWS, ScenarioReport, collect_counters, render_cost_report
from .scenario import build, run_scenario

__all__ = [
    "AdversarySpec",
    "REFERENCE_ROWS",
    "ScenarioConfig",
    "ScenarioReport",
    "build",
    "collect_counters",
    "render_cost_report",
    "run_scenario",
]
