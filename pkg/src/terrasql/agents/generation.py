"""SQL generation agent: logical plan in, one read-only statement out.

The agent only synthesizes; nothing is executed here. The manifest attached
to the artifact is recomputed from the statement text, never taken from the
model, so downstream consumers can trust it.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from ..errors import LlmError, SqlParseError
from ..llm import render_prompt
from ..sqlkit import StatementClass, classify_statement, extract_manifest
from .messages import (
    GENERATION_AGENT, ORCHESTRATOR, REVIEW_AGENT, AgentMessage, LogicalPlan,
    MessageStatus, NextAction, SchemaMapping, SqlArtifact,
)
from .rendering import extract_sql_response, render_plan_text, render_trimmed_schema

if TYPE_CHECKING:
    from ..runtime import PipelineServices


def generate_sql(
    question: str,
    plan: LogicalPlan,
    mapping: SchemaMapping,
    services: "PipelineServices",
    session_id: str = "-",
    memory_context: str = "",
    feedback: str = "",
) -> AgentMessage:
    """Synthesize a read-only statement; one corrective reprompt, then escalate."""
    plan_text = render_plan_text(plan)
    schema_text = render_trimmed_schema(mapping)
    memory = memory_context or "none"
    current_feedback = feedback or "none"
    failure = ""

    for _ in range(2):
        prompt = render_prompt(
            "sql_generation", question=question, plan=plan_text,
            schema=schema_text, memory=memory, feedback=current_feedback)
        try:
            text = services.llm.complete(GENERATION_AGENT, prompt)
        except LlmError as exc:
            return _escalate(session_id, f"model unavailable: {exc}")

        sql, assumptions = extract_sql_response(text)
        if not sql:
            failure = "the reply contained no SQL statement"
            current_feedback = failure
            continue
        kind = classify_statement(sql)
        if kind is not StatementClass.READ_ONLY:
            failure = (f"the statement classifies as {kind.value}; "
                       "only a single read-only SELECT is allowed")
            current_feedback = failure
            continue
        try:
            manifest = extract_manifest(sql)
        except SqlParseError as exc:
            failure = f"the statement does not parse: {exc}"
            current_feedback = failure
            continue

        notes = [f"{name} via {function}"
                 for name, function in plan.spatial_abstractions]
        notes.extend(a for a in assumptions if a not in notes)
        artifact = SqlArtifact(
            sql=sql, manifest=manifest, assumptions=notes,
            plan_ref=plan.digest())
        return AgentMessage(
            sender=GENERATION_AGENT, recipient=REVIEW_AGENT,
            next_action=NextAction.PROCEED, status=MessageStatus.OK,
            payload=artifact, session_id=session_id)

    return _escalate(session_id, failure or "no usable statement produced")


def _escalate(session_id: str, reason: str) -> AgentMessage:
    return AgentMessage(
        sender=GENERATION_AGENT, recipient=ORCHESTRATOR,
        next_action=NextAction.ESCALATE, status=MessageStatus.FAILED,
        payload={"error": reason}, session_id=session_id, note=reason)
