"""Bundled deterministic walkthroughs: scenarios, recording, verification."""

from pathlib import Path

from .recording import (
    check_reply, drive_scenario, record_bundled_fixtures,
    verify_bundled_fixtures,
)
from .scenarios import (
    SCENARIOS, SCENARIOS_BY_NAME, Scenario, scenario_plan, scripted_handler,
)


def sample_suite_path() -> Path:
    """Bundled demo benchmark suite (six single-turn questions)."""
    return Path(__file__).parent / "sample_suite.jsonl"


def sample_labels_path() -> Path:
    """Human verdicts matching the bundled demo suite."""
    return Path(__file__).parent / "sample_labels.jsonl"


__all__ = [
    "SCENARIOS",
    "SCENARIOS_BY_NAME",
    "Scenario",
    "check_reply",
    "drive_scenario",
    "record_bundled_fixtures",
    "sample_labels_path",
    "sample_suite_path",
    "scenario_plan",
    "scripted_handler",
    "verify_bundled_fixtures",
]
