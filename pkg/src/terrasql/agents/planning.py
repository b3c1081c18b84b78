"""Query logic agent: turns question plus trimmed schema into a logical plan.

The model answers in the sectioned plan layout, which we parse back. When it
asks for function documentation the request is answered from the reference
corpus and the exchange continues, bounded so a confused model cannot loop
forever. Plans referencing columns outside the trimmed schema get one
corrective reprompt, then escalate with the offending names.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

from ..errors import EscalationError, LlmError, PlanFormatError
from ..llm import render_prompt
from .messages import (
    GENERATION_AGENT, LOGIC_AGENT, ORCHESTRATOR, AgentMessage, LogicalPlan,
    MessageStatus, NextAction, SchemaMapping,
)
from .rendering import render_function_docs, render_trimmed_schema
from .retrieval import lookup_spatial_functions

if TYPE_CHECKING:
    from ..runtime import PipelineServices

_AREAL_ONLY = {"st_area", "st_perimeter"}
_NEED_PREFIX = "NEED FUNCTIONS:"


def _unknown_columns(plan: LogicalPlan, mapping: SchemaMapping) -> list[str]:
    offenders = []
    for table, column in plan.referenced_columns():
        if not mapping.has_column(table, column):
            offenders.append(f"{table}.{column}")
    return offenders


def _areal_violations(plan: LogicalPlan, mapping: SchemaMapping) -> list[str]:
    """Areal measures need at least one polygon geometry in scope."""
    chosen = {f.lower().strip() for _, f in plan.spatial_abstractions}
    if not (chosen & _AREAL_ONLY):
        return []
    for columns in mapping.trimmed_schema.values():
        for col in columns:
            upper = col.declared_type.upper()
            if "POLYGON" in upper:
                return []
    return sorted(f for f in chosen & _AREAL_ONLY)


def plan_logic(
    question: str,
    mapping: SchemaMapping,
    services: "PipelineServices",
    session_id: str = "-",
    memory_context: str = "",
) -> AgentMessage:
    """Produce a validated LogicalPlan, or escalate with the reasons."""
    thresholds = services.thresholds
    schema_text = render_trimmed_schema(mapping)
    memory = memory_context or "none"
    feedback = "none"
    docs = list(mapping.function_docs)
    last_failure = ""

    for _ in range(max(1, thresholds.logic_roundtrips)):
        prompt = render_prompt(
            "logic_plan", question=question, schema=schema_text,
            function_docs=render_function_docs(docs), memory=memory,
            feedback=feedback)
        try:
            text = services.llm.complete(LOGIC_AGENT, prompt)
        except LlmError as exc:
            return _escalate(session_id, f"model unavailable: {exc}")

        stripped = text.strip()
        if stripped.upper().startswith(_NEED_PREFIX):
            names = stripped[len(_NEED_PREFIX):].strip()
            for name in [n.strip() for n in names.split(",") if n.strip()]:
                for doc in lookup_spatial_functions(name, services):
                    if doc not in docs:
                        docs.append(doc)
            feedback = "none"
            continue

        try:
            plan = parse_or_raise(stripped)
        except PlanFormatError as exc:
            last_failure = f"plan not in the required layout: {exc}"
            feedback = last_failure
            continue

        offenders = _unknown_columns(plan, mapping)
        areal = _areal_violations(plan, mapping)
        if offenders or areal:
            problems = []
            if offenders:
                problems.append(
                    "these columns are not in the candidate schema: "
                    + ", ".join(sorted(offenders)))
            if areal:
                problems.append(
                    "the plan chose "
                    + ", ".join(areal)
                    + " but no polygon geometry column is in scope")
            last_failure = "; ".join(problems)
            feedback = last_failure
            continue

        mapping.function_docs = docs
        return AgentMessage(
            sender=LOGIC_AGENT, recipient=GENERATION_AGENT,
            next_action=NextAction.PROCEED, status=MessageStatus.OK,
            payload=plan, session_id=session_id)

    return _escalate(
        session_id, last_failure or "no usable plan within the round-trip budget")


def parse_or_raise(text: str) -> LogicalPlan:
    from .rendering import parse_plan_text
    try:
        return parse_plan_text(text)
    except PlanFormatError:
        raise
    except (ValueError, KeyError) as exc:  # pragma: no cover - defensive
        raise PlanFormatError(str(exc))


def _escalate(session_id: str, reason: str) -> AgentMessage:
    return AgentMessage(
        sender=LOGIC_AGENT, recipient=ORCHESTRATOR,
        next_action=NextAction.ESCALATE, status=MessageStatus.FAILED,
        payload={"error": reason}, session_id=session_id, note=reason)
