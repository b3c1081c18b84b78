"""Long-term conversational memory with similarity recall.

Completed pipeline runs are appended to a JSONL store together with a
question embedding. Later questions recall the most similar past records,
which enter the planning and generation prompts as prior experience:
successes as exemplars, failures as anti-patterns. Recall is the only path
from long-term memory into a prompt.
"""

from __future__ import annotations

import json
import threading
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional
from uuid import uuid4

from .semindex import EmbeddingVector, cosine_similarity
from .sqlkit import StatementClass, classify_statement

FEEDBACK_VERDICTS = ("satisfied", "unsatisfied")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _readonly_or_blank(sql: str) -> str:
    """The store must never hold a statement that could mutate."""
    if not sql:
        return ""
    if classify_statement(sql) is StatementClass.READ_ONLY:
        return sql
    return ""


@dataclass
class MemoryRecord:
    question: str
    canonical_intent: str
    unreviewed_sql: str
    reviewed_sql: str
    outcome: str  # "approved" | "unapproved"
    execution_error: Optional[str] = None
    functions_used: list[str] = field(default_factory=list)
    feedback_verdict: Optional[str] = None
    feedback_note: str = ""
    embedding: tuple[float, ...] = ()
    session_id: str = "-"
    record_id: str = field(default_factory=lambda: uuid4().hex)
    timestamp: str = field(default_factory=_utc_now)

    def __post_init__(self) -> None:
        if self.outcome not in ("approved", "unapproved"):
            raise ValueError(f"unknown outcome: {self.outcome!r}")
        if self.feedback_verdict is not None \
                and self.feedback_verdict not in FEEDBACK_VERDICTS:
            raise ValueError(f"unknown feedback verdict: {self.feedback_verdict!r}")
        self.unreviewed_sql = _readonly_or_blank(self.unreviewed_sql)
        self.reviewed_sql = _readonly_or_blank(self.reviewed_sql)
        if self.outcome == "approved" and not self.reviewed_sql:
            raise ValueError("approved records need read-only reviewed SQL")

    def is_failure(self) -> bool:
        return (self.outcome == "unapproved"
                or self.execution_error is not None
                or self.feedback_verdict == "unsatisfied")

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "session_id": self.session_id,
            "question": self.question,
            "canonical_intent": self.canonical_intent,
            "unreviewed_sql": self.unreviewed_sql,
            "reviewed_sql": self.reviewed_sql,
            "outcome": self.outcome,
            "execution_error": self.execution_error,
            "functions_used": list(self.functions_used),
            "feedback_verdict": self.feedback_verdict,
            "feedback_note": self.feedback_note,
            "embedding": list(self.embedding),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MemoryRecord":
        return cls(
            question=data["question"],
            canonical_intent=data.get("canonical_intent", ""),
            unreviewed_sql=data.get("unreviewed_sql", ""),
            reviewed_sql=data.get("reviewed_sql", ""),
            outcome=data.get("outcome", "unapproved"),
            execution_error=data.get("execution_error"),
            functions_used=list(data.get("functions_used", [])),
            feedback_verdict=data.get("feedback_verdict"),
            feedback_note=data.get("feedback_note", ""),
            embedding=tuple(data.get("embedding", [])),
            session_id=data.get("session_id", "-"),
            record_id=data.get("record_id", uuid4().hex),
            timestamp=data.get("timestamp", _utc_now()),
        )


class MemoryStore:
    """Append-mostly JSONL store; updates rewrite in place (small scale)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def records(self) -> list[MemoryRecord]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open(encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    out.append(MemoryRecord.from_dict(json.loads(line)))
        return out

    def append(self, record: MemoryRecord) -> None:
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    def update(self, record: MemoryRecord) -> None:
        with self._lock:
            rows = self.records()
            replaced = False
            for i, row in enumerate(rows):
                if row.record_id == record.record_id:
                    rows[i] = record
                    replaced = True
            if not replaced:
                raise KeyError(f"no memory record {record.record_id}")
            tmp = self.path.with_suffix(".tmp")
            with tmp.open("w", encoding="utf-8") as handle:
                for row in rows:
                    handle.write(json.dumps(row.to_dict(), sort_keys=True) + "\n")
            tmp.replace(self.path)

    def latest_for_session(self, session_id: str) -> Optional[MemoryRecord]:
        rows = [r for r in self.records() if r.session_id == session_id]
        return rows[-1] if rows else None


def recall_similar(
    question: str,
    store: MemoryStore,
    provider,
    k: int = 3,
    floor: float = 0.75,
) -> list[MemoryRecord]:
    """Top-k past records by question-embedding cosine, floor applied."""
    rows = store.records()
    if not rows:
        return []
    query = provider.embed(question)
    scored = []
    for row in rows:
        if len(row.embedding) != len(query):
            continue
        score = cosine_similarity(
            query, EmbeddingVector.from_values(row.embedding))
        if score >= floor:
            scored.append((score, row.timestamp, row))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [row for _, _, row in scored[:k]]


def record_feedback(
    store: MemoryStore,
    session_id: str,
    verdict: str,
    note: str = "",
) -> Optional[MemoryRecord]:
    """Attach feedback to the session's latest record.

    Repeated feedback overwrites the verdict and concatenates the notes.
    Without a completed record this is a warning no-op."""
    if verdict not in FEEDBACK_VERDICTS:
        raise ValueError(f"unknown feedback verdict: {verdict!r}")
    record = store.latest_for_session(session_id)
    if record is None:
        warnings.warn(f"no completed answer in session {session_id}; "
                      "feedback ignored")
        return None
    record.feedback_verdict = verdict
    if record.feedback_note and note:
        record.feedback_note = f"{record.feedback_note}; {note}"
    elif note:
        record.feedback_note = note
    store.update(record)
    return record


def render_memory_context(records: list[MemoryRecord]) -> str:
    """Prior-experience block for the planning and generation prompts."""
    if not records:
        return ""
    lines: list[str] = []
    for record in records:
        question = record.canonical_intent or record.question
        if record.is_failure():
            lines.append(f"Earlier failure on a similar question: {question}")
            if record.unreviewed_sql:
                lines.append(f"  statement tried: {record.unreviewed_sql}")
            if record.execution_error:
                lines.append(f"  it failed with: {record.execution_error}")
            if record.reviewed_sql and record.outcome == "approved":
                lines.append(f"  corrected version: {record.reviewed_sql}")
            if record.feedback_verdict == "unsatisfied":
                note = record.feedback_note or "user was not satisfied"
                lines.append(f"  user feedback: {note}")
            lines.append("  Avoid repeating this mistake.")
        else:
            lines.append(f"Earlier success on a similar question: {question}")
            if record.reviewed_sql:
                lines.append(f"  accepted statement: {record.reviewed_sql}")
            if record.feedback_verdict == "satisfied" and record.feedback_note:
                lines.append(f"  user feedback: {record.feedback_note}")
    return "\n".join(lines)
