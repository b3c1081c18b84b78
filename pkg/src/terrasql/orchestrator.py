"""Session control: intent gating, pipeline routing, escalation, memory.

A session gathers intent across turns. Each user message passes a security
screen and an intent gate; only a proceed decision starts the pipeline. Agent
escalations surface as clarifying questions rather than failures, and every
completed run lands in long-term memory for later recall.
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Optional

from .agents import (
    AgentMessage, MessageStatus, extract_entities, generate_sql, plan_logic,
    resolve_schema, review,
)
from .agents.review import ReviewOutcome
from .errors import EscalationError, LlmError
from .gateway import ResultTable
from .llm import LlmGateway, render_prompt
from .memory import (
    MemoryRecord, MemoryStore, recall_similar, record_feedback,
    render_memory_context,
)
from .runtime import PipelineServices
from .sqlkit import StatementClass, classify_statement, extract_manifest
from .errors import SqlParseError

GENERIC_CLARIFICATION = (
    "Could you restate your request as one specific question about the data?")

_GATE_SCHEMA = {
    "action": "string",
    "canonical_intent?": "string",
    "clarification_question?": "string",
    "reject_reason?": "string",
}


class SessionState(str, Enum):
    GATHERING_INTENT = "gathering_intent"
    RUNNING_PIPELINE = "running_pipeline"
    PRESENTING = "presenting"
    CLOSED = "closed"


_ALLOWED_TRANSITIONS = {
    SessionState.GATHERING_INTENT: {SessionState.RUNNING_PIPELINE,
                                    SessionState.CLOSED},
    SessionState.RUNNING_PIPELINE: {SessionState.PRESENTING,
                                    SessionState.GATHERING_INTENT},
    SessionState.PRESENTING: {SessionState.GATHERING_INTENT,
                              SessionState.CLOSED},
    SessionState.CLOSED: set(),
}


@dataclass
class Turn:
    speaker: str  # "user" | "system"
    text: str
    timestamp: str
    closes_request: bool = False  # answer or rejection concluded the request

    def to_dict(self) -> dict:
        return {"speaker": self.speaker, "text": self.text,
                "timestamp": self.timestamp,
                "closes_request": self.closes_request}


@dataclass
class GateDecision:
    kind: str  # "proceed" | "clarify" | "reject"
    clarification_question: Optional[str] = None
    canonical_intent: Optional[str] = None
    reject_reason: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("proceed", "clarify", "reject"):
            raise ValueError(f"unknown gate decision kind: {self.kind!r}")
        if self.kind == "clarify" and not self.clarification_question:
            raise ValueError("clarify decisions need a question")
        if self.kind == "proceed" and not self.canonical_intent:
            raise ValueError("proceed decisions need a canonical intent")

    def to_dict(self) -> dict:
        return {"kind": self.kind,
                "clarification_question": self.clarification_question,
                "canonical_intent": self.canonical_intent,
                "reject_reason": self.reject_reason}


@dataclass
class Session:
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    turns: list[Turn] = field(default_factory=list)
    state: SessionState = SessionState.GATHERING_INTENT
    resolved_intent: Optional[str] = None
    pipeline_trace: list[dict] = field(default_factory=list)
    last_bundle: Optional[dict] = None

    def transition(self, new: SessionState) -> None:
        if new is self.state:
            return
        if new not in _ALLOWED_TRANSITIONS[self.state]:
            raise ValueError(
                f"illegal session transition {self.state.value} -> {new.value}")
        self.state = new

    def add_turn(self, speaker: str, text: str,
                 closes_request: bool = False) -> None:
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        turn = Turn(speaker=speaker, text=text, timestamp=stamp,
                    closes_request=closes_request)
        self.turns.append(turn)
        self.trace_event("turn", turn.to_dict())

    def active_turns(self) -> list[Turn]:
        """Turns of the request in progress: everything after the last
        answer or rejection. Clarification exchanges stay in the segment."""
        start = 0
        for position, turn in enumerate(self.turns):
            if turn.closes_request:
                start = position + 1
        return self.turns[start:]

    def trace_event(self, kind: str, body: dict) -> None:
        # the event kind is authoritative; a like-named body field loses
        self.pipeline_trace.append({**body, "kind": kind})


# natural-language phrasings of data-change requests; raw SQL is classified
# separately so this list only needs conversational verbs
_NL_MUTATION = re.compile(
    r"\b(drop|delete|remove|truncate|erase|wipe|destroy|purge)\b[\s\w]{0,40}"
    r"\b(table|tables|database|rows?|records?|data)\b", re.IGNORECASE)
_SQL_OPENERS = re.compile(
    r"^\s*(select|with|insert|update|delete|drop|create|alter|truncate|grant|"
    r"revoke|vacuum|copy|merge|call|do)\b", re.IGNORECASE)
_SQL_EMBEDDED = re.compile(
    r"\b(insert\s+into|update\s+\w+\s+set|delete\s+from|drop\s+(?:table|view|"
    r"index|schema|database)|create\s+(?:table|view|index|schema|database)|"
    r"alter\s+table|truncate\s+table?)\b", re.IGNORECASE)


class SecurityFilter:
    """Screens raw user text before any model sees it; fail closed."""

    def screen(self, text: str) -> Optional[str]:
        """Reject reason, or None when the message may pass."""
        if _SQL_OPENERS.match(text):
            kind = classify_statement(text)
            if kind is not StatementClass.READ_ONLY:
                return (f"the message contains SQL that classifies as "
                        f"{kind.value}; only questions are accepted")
            return None
        if _SQL_EMBEDDED.search(text):
            return ("the message embeds a data-changing SQL statement; "
                    "only questions are accepted")
        if _NL_MUTATION.search(text):
            return ("the request asks to change or remove data, which this "
                    "interface does not do")
        return None


def _render_turns(session: Session) -> str:
    lines = []
    for turn in session.active_turns():
        speaker = "User" if turn.speaker == "user" else "System"
        lines.append(f"{speaker}: {turn.text}")
    return "\n".join(lines)


def gate_request(
    session: Session,
    llm_gateway: LlmGateway,
    security: Optional[SecurityFilter] = None,
) -> GateDecision:
    """Decide proceed / clarify / reject from the active request segment.

    Earlier completed requests stay out of the prompt, so follow-up
    questions gate exactly like fresh ones and prompts stay bounded."""
    security = security or SecurityFilter()
    latest = session.turns[-1].text if session.turns else ""
    reason = security.screen(latest)
    if reason is not None:
        return GateDecision(kind="reject", reject_reason=reason)

    prompt = render_prompt("gate_intent", turns=_render_turns(session))
    try:
        parsed = llm_gateway.complete_structured("gate", prompt, _GATE_SCHEMA)
    except (EscalationError, LlmError):
        return GateDecision(kind="clarify",
                            clarification_question=GENERIC_CLARIFICATION)

    action = str(parsed.get("action", "")).strip().lower()
    intent = str(parsed.get("canonical_intent", "")).strip()
    question = str(parsed.get("clarification_question", "")).strip()
    reject_reason = str(parsed.get("reject_reason", "")).strip()
    if action == "proceed" and intent:
        return GateDecision(kind="proceed", canonical_intent=intent)
    if action == "reject":
        return GateDecision(kind="reject",
                            reject_reason=reject_reason or "request rejected")
    return GateDecision(
        kind="clarify",
        clarification_question=question or GENERIC_CLARIFICATION)


def _functions_used(sql: str) -> list[str]:
    try:
        manifest = extract_manifest(sql)
    except SqlParseError:
        return []
    return sorted({call.name for call in manifest.spatial_functions})


def _preview_dict(preview: Optional[ResultTable]) -> Optional[dict]:
    if preview is None:
        return None
    return {
        "columns": [{"name": n, "type": t} for n, t in preview.columns],
        "rows": [list(row) for row in preview.rows],
        "truncated": preview.truncated,
    }


class Orchestrator:
    """Drives sessions over one assembled service bundle."""

    def __init__(
        self,
        services: PipelineServices,
        memory_path: Optional[str | Path] = None,
        security: Optional[SecurityFilter] = None,
    ):
        self.services = services
        path = memory_path or Path(services.config.kb_dir) / "memory.jsonl"
        self.memory = MemoryStore(path)
        self.security = security or SecurityFilter()
        self._sessions: dict[str, Session] = {}

    def create_session(self) -> Session:
        session = Session()
        self._sessions[session.session_id] = session
        return session

    def get_session(self, session_id: str) -> Optional[Session]:
        return self._sessions.get(session_id)

    def close_session(self, session: Session) -> None:
        session.transition(SessionState.CLOSED)

    def handle_message(self, session: Session, text: str) -> dict:
        """One conversational turn: returns a typed reply dict.

        Reply kinds: clarification, rejection, answer, failure."""
        if session.state is SessionState.CLOSED:
            return {"kind": "failure", "message": "session is closed",
                    "trace_id": session.session_id}
        if session.state is SessionState.PRESENTING:
            session.transition(SessionState.GATHERING_INTENT)
        session.add_turn("user", text)

        decision = gate_request(session, self.services.llm, self.security)
        body = decision.to_dict()
        body["decision"] = body.pop("kind")
        session.trace_event("gate_decision", body)

        if decision.kind == "reject":
            reply = f"I cannot help with that: {decision.reject_reason}"
            session.add_turn("system", reply, closes_request=True)
            return {"kind": "rejection", "reason": decision.reject_reason,
                    "trace_id": session.session_id}
        if decision.kind == "clarify":
            session.add_turn("system", decision.clarification_question)
            return {"kind": "clarification",
                    "question": decision.clarification_question,
                    "trace_id": session.session_id}

        session.resolved_intent = decision.canonical_intent
        session.transition(SessionState.RUNNING_PIPELINE)
        try:
            return self._run_pipeline(session)
        except Exception as exc:  # pragma: no cover - last-resort guard
            session.transition(SessionState.GATHERING_INTENT)
            reply = "Something went wrong while answering; please try again."
            session.add_turn("system", reply)
            return {"kind": "failure", "message": f"{reply} ({exc})",
                    "trace_id": session.session_id}

    def _clarify_from_escalation(self, session: Session, note: str) -> dict:
        question = (f"I could not finish answering that ({note}). "
                    "Could you rephrase or add detail?")
        session.transition(SessionState.GATHERING_INTENT)
        session.add_turn("system", question)
        return {"kind": "clarification", "question": question,
                "trace_id": session.session_id}

    def _call_with_retry(self, step) -> AgentMessage:
        """Per-agent retry budget of one before the escalation stands."""
        message = step()
        retries = max(0, self.services.thresholds.agent_retries)
        for _ in range(retries):
            if message.status is not MessageStatus.FAILED:
                break
            message = step()
        return message

    def _run_pipeline(self, session: Session) -> dict:
        intent = session.resolved_intent
        sid = session.session_id
        services = self.services

        recalled = recall_similar(
            intent, self.memory, services.provider,
            k=services.thresholds.recall_k,
            floor=services.thresholds.recall_floor)
        memory_context = render_memory_context(recalled)
        if recalled:
            session.trace_event("memory_recall", {
                "count": len(recalled),
                "records": [r.record_id for r in recalled]})

        message = self._call_with_retry(
            lambda: extract_entities(
                intent, services.llm,
                confidence_floor=services.thresholds.confidence_floor,
                session_id=sid))
        session.trace_event("agent_message", message.to_dict())
        if message.status is not MessageStatus.OK:
            return self._clarify_from_escalation(session, message.note)
        extraction = message.payload

        message = self._call_with_retry(
            lambda: resolve_schema(extraction, services, session_id=sid))
        session.trace_event("agent_message", message.to_dict())
        if message.status is not MessageStatus.OK:
            return self._clarify_from_escalation(session, message.note)
        mapping = message.payload

        message = self._call_with_retry(
            lambda: plan_logic(intent, mapping, services, session_id=sid,
                               memory_context=memory_context))
        session.trace_event("agent_message", message.to_dict())
        if message.status is not MessageStatus.OK:
            return self._clarify_from_escalation(session, message.note)
        plan = message.payload

        message = self._call_with_retry(
            lambda: generate_sql(intent, plan, mapping, services,
                                 session_id=sid,
                                 memory_context=memory_context))
        session.trace_event("agent_message", message.to_dict())
        if message.status is not MessageStatus.OK:
            return self._clarify_from_escalation(session, message.note)
        artifact = message.payload

        outcome = review(intent, artifact, mapping, plan, services,
                         session_id=sid, memory_context=memory_context)
        session.trace_event("review_outcome", outcome.to_dict())

        bundle = self._bundle(session, artifact.sql, outcome)
        self._remember(session, artifact.sql, outcome)
        session.transition(SessionState.PRESENTING)
        summary = "approved" if outcome.approved else "not approved"
        session.add_turn(
            "system",
            f"Prepared a statement for: {intent} (review {summary})",
            closes_request=True)
        session.last_bundle = bundle
        return {"kind": "answer", "bundle": bundle, "trace_id": sid}

    def _bundle(self, session: Session, unreviewed_sql: str,
                outcome: ReviewOutcome) -> dict:
        return {
            "session_id": session.session_id,
            "canonical_intent": session.resolved_intent,
            "unreviewed_sql": unreviewed_sql,
            "reviewed_sql": outcome.final_sql,
            "approved": outcome.approved,
            "preview": _preview_dict(outcome.preview),
            "corrections": [c.to_dict() for c in outcome.corrections],
            "findings": [
                {"rule_id": f.rule_id, "severity": f.severity,
                 "location": f.location, "message": f.message,
                 "suggested_fix": f.suggested_fix}
                for f in outcome.findings],
            "trace_id": session.session_id,
        }

    def _remember(self, session: Session, unreviewed_sql: str,
                  outcome: ReviewOutcome) -> None:
        intent = session.resolved_intent or ""
        question = next(
            (t.text for t in session.active_turns() if t.speaker == "user"),
            intent)
        record = MemoryRecord(
            question=question,
            canonical_intent=intent,
            unreviewed_sql=unreviewed_sql,
            reviewed_sql=outcome.final_sql,
            outcome="approved" if outcome.approved else "unapproved",
            execution_error=outcome.first_error,
            functions_used=_functions_used(outcome.final_sql),
            embedding=tuple(
                float(v) for v in self.services.provider.embed(intent).dims),
            session_id=session.session_id,
        )
        self.memory.append(record)

    def submit_feedback(self, session: Session, verdict: str,
                        note: str = "") -> Optional[MemoryRecord]:
        return record_feedback(self.memory, session.session_id, verdict, note)

    def trace(self, session: Session) -> list[dict]:
        """Ordered structured record of the whole session."""
        return list(session.pipeline_trace)
