"""Entity extraction: first pipeline stage.

The model labels the question; a rule-based post-pass normalizes numeric
phrases, spatial phrases and quoted identifiers the model may have missed.
The rules live in one table so the reconstruction is easy to audit and
extend.
"""

from __future__ import annotations

import re

from ..errors import EscalationError, LlmError
from ..llm import LlmGateway, render_prompt
from .messages import (
    ENTITY_AGENT, ENTITY_KINDS, METADATA_AGENT, ORCHESTRATOR, AgentMessage,
    EntityExtraction, MessageStatus, NextAction,
)

_EXTRACTION_SCHEMA = {
    "named_entities": "array",
    "thematic_keywords": "array",
    "spatial_constraints?": "array",
    "temporal_constraints?": "array",
    "numeric_intents?": "array",
    "operation_phrases?": "array",
    "next_operation_hint?": "string",
    "confidence": "number",
}

# (pattern, target field). Each match of the pattern in the question text is
# appended to the named list when the model missed it.
NORMALIZATION_RULES: list[tuple[re.Pattern, str]] = [
    (re.compile(r"\btop\s+\d+\b", re.IGNORECASE), "numeric_intents"),
    (re.compile(r"\b\d+(?:\.\d+)?\s*(?:km|kilometers?|kilometres?|meters?|"
                r"metres?|miles?|mi|m)\b", re.IGNORECASE), "numeric_intents"),
    (re.compile(r"\bwithin\s+\d+(?:\.\d+)?\s*\w*\b", re.IGNORECASE),
     "spatial_constraints"),
    (re.compile(r"\b(?:intersects?|intersecting|inside|contains?|containing|"
                r"nearest|closest|near|crosses|touches|overlaps?|buffer|"
                r"centroids?|distance|area|perimeter|length)\b", re.IGNORECASE),
     "operation_phrases"),
    (re.compile(r"\b(?:19|20)\d{2}\b"), "temporal_constraints"),
    (re.compile(r"'([A-Za-z0-9_./-]+)'"), "numeric_intents"),
]


def _apply_rules(question: str, extraction: EntityExtraction) -> EntityExtraction:
    buckets = {
        "numeric_intents": list(extraction.numeric_intents),
        "spatial_constraints": list(extraction.spatial_constraints),
        "temporal_constraints": list(extraction.temporal_constraints),
        "operation_phrases": list(extraction.operation_phrases),
    }
    for pattern, target in NORMALIZATION_RULES:
        for match in pattern.finditer(question):
            text = match.group(1) if match.groups() else match.group(0)
            bucket = buckets[target]
            if text and text.lower() not in {b.lower() for b in bucket}:
                bucket.append(text)
    return EntityExtraction(
        named_entities=extraction.named_entities,
        thematic_keywords=extraction.thematic_keywords,
        spatial_constraints=buckets["spatial_constraints"],
        temporal_constraints=buckets["temporal_constraints"],
        numeric_intents=buckets["numeric_intents"],
        operation_phrases=buckets["operation_phrases"],
        next_operation_hint=extraction.next_operation_hint,
        confidence=extraction.confidence,
    )


def _coerce(parsed: dict) -> EntityExtraction:
    entities: list[tuple[str, str]] = []
    for item in parsed.get("named_entities", []):
        if isinstance(item, dict):
            text = str(item.get("text", "")).strip()
            kind = str(item.get("kind", "other")).strip().lower()
        else:
            text, kind = str(item).strip(), "other"
        if not text:
            continue
        if kind not in ENTITY_KINDS:
            kind = "other"
        entities.append((text, kind))

    def str_list(key: str) -> list[str]:
        return [str(v).strip() for v in parsed.get(key) or [] if str(v).strip()]

    confidence = float(parsed.get("confidence", 0.0))
    confidence = min(1.0, max(0.0, confidence))
    return EntityExtraction(
        named_entities=entities,
        thematic_keywords=str_list("thematic_keywords"),
        spatial_constraints=str_list("spatial_constraints"),
        temporal_constraints=str_list("temporal_constraints"),
        numeric_intents=str_list("numeric_intents"),
        operation_phrases=str_list("operation_phrases"),
        next_operation_hint=str(parsed.get("next_operation_hint", "")).strip(),
        confidence=confidence,
    )


def extract_entities(
    question: str,
    llm_gateway: LlmGateway,
    confidence_floor: float = 0.5,
    session_id: str = "-",
) -> AgentMessage:
    """Label the question; escalate on low confidence or empty extraction."""
    prompt = render_prompt("entity_extraction", question=question)
    try:
        parsed = llm_gateway.complete_structured(
            ENTITY_AGENT, prompt, _EXTRACTION_SCHEMA)
    except (EscalationError, LlmError) as exc:
        return AgentMessage(
            sender=ENTITY_AGENT, recipient=ORCHESTRATOR,
            next_action=NextAction.ESCALATE, status=MessageStatus.FAILED,
            payload={"error": str(exc)}, session_id=session_id,
            note="extraction output unusable")

    extraction = _apply_rules(question, _coerce(parsed))
    if extraction.is_empty() or extraction.confidence < confidence_floor:
        return AgentMessage(
            sender=ENTITY_AGENT, recipient=ORCHESTRATOR,
            next_action=NextAction.ESCALATE,
            status=MessageStatus.LOW_CONFIDENCE,
            payload=extraction, session_id=session_id,
            note=("no entities recognized" if extraction.is_empty() else
                  f"confidence {extraction.confidence:g} below "
                  f"{confidence_floor:g}"))
    return AgentMessage(
        sender=ENTITY_AGENT, recipient=METADATA_AGENT,
        next_action=NextAction.PROCEED, status=MessageStatus.OK,
        payload=extraction, session_id=session_id)
