"""Record and verify the bundled replay fixture file.

Recording drives every scripted scenario through a real orchestrator with
the scripted provider in record mode, capturing each model exchange keyed
by prompt digest. Verification replays the same conversations with no
provider at all and checks that every statement comes back byte-identical
to the scenario constants. Both paths share the same walk-and-check code so
the fixture file can never drift from the scenarios unnoticed.
"""

from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Optional

from ..config import EngineConfig
from ..llm import LlmGateway, ScriptedProvider, bundled_fixtures_path
from ..orchestrator import Orchestrator
from ..runtime import PipelineServices, assemble_services, ephemeral_kb_dir
from .scenarios import SCENARIOS, Scenario, scripted_handler


def _services(mode: str, fixtures_path: Path,
              kb_dir: Optional[str]) -> PipelineServices:
    config = EngineConfig()
    config.kb_dir = kb_dir or ephemeral_kb_dir()
    config.llm.mode = mode
    config.llm.fixtures_path = str(fixtures_path)
    provider = ScriptedProvider(scripted_handler) if mode == "record" else None
    llm = LlmGateway(config.llm, provider=provider,
                     fixtures_path=fixtures_path)
    return assemble_services(config, llm=llm)


def drive_scenario(orchestrator: Orchestrator, scenario: Scenario) -> dict:
    """Play one scripted conversation; returns the final reply."""
    session = orchestrator.create_session()
    reply: dict = {}
    for turn in scenario.turns:
        reply = orchestrator.handle_message(session, turn)
    return reply


def check_reply(scenario: Scenario, reply: dict,
                expect_learned: bool = False) -> list[str]:
    """Mismatches between a conversation's outcome and its scenario."""
    problems: list[str] = []
    if reply.get("kind") != "answer":
        return [f"{scenario.name}: expected an answer, got "
                f"{reply.get('kind')!r} ({reply.get('question') or reply.get('message', '')})"]
    bundle = reply["bundle"]
    expected_unreviewed = (scenario.reviewed_sql if expect_learned
                           else scenario.unreviewed_sql)
    if bundle["canonical_intent"] != scenario.canonical_intent:
        problems.append(f"{scenario.name}: canonical intent drifted")
    if bundle["unreviewed_sql"] != expected_unreviewed:
        problems.append(f"{scenario.name}: unreviewed statement is not "
                        "byte-identical")
    if bundle["reviewed_sql"] != scenario.reviewed_sql:
        problems.append(f"{scenario.name}: reviewed statement is not "
                        "byte-identical")
    if not bundle["approved"]:
        problems.append(f"{scenario.name}: review did not approve")
    stages = tuple(c["stage"] for c in bundle["corrections"])
    expected_stages = () if expect_learned else scenario.correction_stages
    if stages != expected_stages:
        problems.append(f"{scenario.name}: correction stages {stages!r} != "
                        f"{expected_stages!r}")
    return problems


def _run_conversations(services: PipelineServices) -> list[str]:
    """Every scenario twice on one memory store; returns problems.

    The second pass answers the same question with the first pass's
    record already in memory, so replay also covers recall-augmented
    prompts. A scenario that learns from failure must then shortcut
    straight to the corrected statement; the rest must reproduce their
    first-pass outcome exactly."""
    problems: list[str] = []
    scratch = tempfile.mkdtemp(prefix="terrasql-memory-")
    for scenario in SCENARIOS:
        orchestrator = Orchestrator(
            services, memory_path=Path(scratch) / f"{scenario.name}.jsonl")
        first = drive_scenario(orchestrator, scenario)
        problems.extend(check_reply(scenario, first))
        second = drive_scenario(orchestrator, scenario)
        problems.extend(check_reply(
            scenario, second, expect_learned=scenario.learns_from_failure))
    return problems


def record_bundled_fixtures(
    path: Optional[str | Path] = None,
    kb_dir: Optional[str] = None,
) -> tuple[bool, list[str]]:
    """(Re)record the fixture file by playing the scripted conversations.

    Returns (ok, report lines). The file is rewritten from scratch so stale
    exchanges cannot linger."""
    target = Path(path) if path else bundled_fixtures_path()
    target.parent.mkdir(parents=True, exist_ok=True)
    if target.exists():
        target.unlink()
    services = _services("record", target, kb_dir)
    problems = _run_conversations(services)
    count = sum(1 for line in target.read_text(encoding="utf-8").splitlines()
                if line.strip()) if target.exists() else 0
    report = [f"recorded {count} exchanges to {target}"]
    report.extend(problems)
    return not problems, report


def verify_bundled_fixtures(
    path: Optional[str | Path] = None,
    kb_dir: Optional[str] = None,
) -> tuple[bool, list[str]]:
    """Replay every scripted conversation against the fixture file.

    Returns (ok, report lines); ok means every statement matched its
    scenario byte for byte with no provider in the loop."""
    target = Path(path) if path else bundled_fixtures_path()
    if not target.exists():
        return False, [f"fixture file not found: {target}"]
    services = _services("replay", target, kb_dir)
    problems = _run_conversations(services)
    report = [f"replayed {len(SCENARIOS)} conversations from {target}"]
    if problems:
        report.extend(problems)
    else:
        report.append("all statements byte-identical; review approved all")
    return not problems, report
