"""Typed message envelope and payloads exchanged by the pipeline agents.

Every hop in the pipeline is an AgentMessage: who sent it, who should act
next, what to do (proceed / request_info / escalate / done) and a typed
payload. Envelopes serialize to plain JSON objects for the session trace.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ..sqlkit import JoinEdge, QueryManifest, SpatialCall

ENTITY_AGENT = "entity_extraction"
METADATA_AGENT = "metadata_retrieval"
LOGIC_AGENT = "query_logic"
GENERATION_AGENT = "sql_generation"
REVIEW_AGENT = "review"
ORCHESTRATOR = "orchestrator"

REGISTERED_AGENTS = frozenset({
    ENTITY_AGENT, METADATA_AGENT, LOGIC_AGENT, GENERATION_AGENT, REVIEW_AGENT,
})

ENTITY_KINDS = frozenset({"place", "organization", "other"})
COLUMN_ROLES = frozenset({
    "join_key", "filter_criterion", "output_field", "aggregation_input", "unused",
})


class NextAction(str, Enum):
    PROCEED = "proceed"
    REQUEST_INFO = "request_info"
    ESCALATE = "escalate"
    DONE = "done"


class MessageStatus(str, Enum):
    OK = "ok"
    LOW_CONFIDENCE = "low_confidence"
    FAILED = "failed"


@dataclass
class EntityExtraction:
    """Structured reading of the user question (first pipeline stage)."""

    named_entities: list[tuple[str, str]] = field(default_factory=list)
    thematic_keywords: list[str] = field(default_factory=list)
    spatial_constraints: list[str] = field(default_factory=list)
    temporal_constraints: list[str] = field(default_factory=list)
    numeric_intents: list[str] = field(default_factory=list)
    operation_phrases: list[str] = field(default_factory=list)
    next_operation_hint: str = ""
    confidence: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")
        for text, kind in self.named_entities:
            if kind not in ENTITY_KINDS:
                raise ValueError(f"unknown entity kind: {kind!r}")
            if not text:
                raise ValueError("empty entity text")

    def search_terms(self) -> list[str]:
        """Entity texts plus keywords, deduplicated, original order."""
        seen: set[str] = set()
        terms: list[str] = []
        for text in [t for t, _ in self.named_entities] + self.thematic_keywords:
            if text and text.lower() not in seen:
                seen.add(text.lower())
                terms.append(text)
        return terms

    def is_empty(self) -> bool:
        return not (self.named_entities or self.thematic_keywords)

    def to_dict(self) -> dict:
        return {
            "named_entities": [{"text": t, "kind": k} for t, k in self.named_entities],
            "thematic_keywords": list(self.thematic_keywords),
            "spatial_constraints": list(self.spatial_constraints),
            "temporal_constraints": list(self.temporal_constraints),
            "numeric_intents": list(self.numeric_intents),
            "operation_phrases": list(self.operation_phrases),
            "next_operation_hint": self.next_operation_hint,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EntityExtraction":
        return cls(
            named_entities=[(e["text"], e["kind"]) for e in data.get("named_entities", [])],
            thematic_keywords=list(data.get("thematic_keywords", [])),
            spatial_constraints=list(data.get("spatial_constraints", [])),
            temporal_constraints=list(data.get("temporal_constraints", [])),
            numeric_intents=list(data.get("numeric_intents", [])),
            operation_phrases=list(data.get("operation_phrases", [])),
            next_operation_hint=data.get("next_operation_hint", ""),
            confidence=float(data.get("confidence", 0.0)),
        )


@dataclass(frozen=True)
class TrimmedColumn:
    """One candidate column with everything the planner needs to reason."""

    column: str
    declared_type: str
    narrative: str
    samples: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "declared_type": self.declared_type,
            "narrative": self.narrative,
            "samples": list(self.samples),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrimmedColumn":
        return cls(
            column=data["column"],
            declared_type=data.get("declared_type", ""),
            narrative=data.get("narrative", ""),
            samples=tuple(data.get("samples", [])),
        )


@dataclass(frozen=True)
class FunctionDoc:
    name: str
    signature: str
    example: str

    def to_dict(self) -> dict:
        return {"name": self.name, "signature": self.signature, "example": self.example}

    @classmethod
    def from_dict(cls, data: dict) -> "FunctionDoc":
        return cls(data["name"], data.get("signature", ""), data.get("example", ""))


@dataclass
class SchemaMapping:
    """Question entities linked to catalog columns, with the trimmed schema."""

    # entity text -> [(table, column or None, score), ...]
    entity_to_columns: dict[str, list[tuple[str, Optional[str], float]]]
    trimmed_schema: dict[str, list[TrimmedColumn]]
    function_docs: list[FunctionDoc] = field(default_factory=list)

    def __post_init__(self) -> None:
        mapped = {(t, c) for cands in self.entity_to_columns.values()
                  for t, c, _ in cands if c is not None}
        mapped_tables = {t for cands in self.entity_to_columns.values()
                         for t, _, _ in cands}
        for table, columns in self.trimmed_schema.items():
            names = [col.column for col in columns]
            if len(names) != len(set(names)):
                raise ValueError(f"duplicate column in trimmed schema for {table}")
            for col in columns:
                if (table, col.column) not in mapped and table not in mapped_tables:
                    raise ValueError(
                        f"{table}.{col.column} not traceable to any entity")

    def is_empty(self) -> bool:
        return not self.trimmed_schema

    def has_column(self, table: str, column: str) -> bool:
        cols = self.trimmed_schema.get(table.lower())
        return cols is not None and any(c.column == column.lower() for c in cols)

    def to_dict(self) -> dict:
        return {
            "entity_to_columns": {
                entity: [{"table": t, "column": c, "score": s} for t, c, s in cands]
                for entity, cands in self.entity_to_columns.items()
            },
            "trimmed_schema": {
                table: [col.to_dict() for col in columns]
                for table, columns in self.trimmed_schema.items()
            },
            "function_docs": [doc.to_dict() for doc in self.function_docs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SchemaMapping":
        return cls(
            entity_to_columns={
                entity: [(c["table"], c.get("column"), float(c["score"])) for c in cands]
                for entity, cands in data.get("entity_to_columns", {}).items()
            },
            trimmed_schema={
                table: [TrimmedColumn.from_dict(c) for c in columns]
                for table, columns in data.get("trimmed_schema", {}).items()
            },
            function_docs=[FunctionDoc.from_dict(d) for d in data.get("function_docs", [])],
        )


@dataclass(frozen=True)
class PlanColumn:
    table: str
    column: str
    role: str
    rationale: str

    def __post_init__(self) -> None:
        if self.role not in COLUMN_ROLES:
            raise ValueError(f"unknown column role: {self.role!r}")


@dataclass(frozen=True)
class JoinChoice:
    relations: str
    kind: str
    condition: str
    justification: str


@dataclass(frozen=True)
class OutputSpec:
    expression: str
    alias: str
    description: str


@dataclass
class LogicalPlan:
    """Abstract query plan: what to read, how to join, what to emit."""

    tables_and_columns: list[PlanColumn]
    join_strategy: list[JoinChoice]
    filter_conditions: list[str]
    output_definition: list[OutputSpec]
    high_level_algorithm: list[str]
    spatial_abstractions: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.high_level_algorithm:
            raise ValueError("high_level_algorithm must not be empty")

    def referenced_columns(self) -> list[tuple[str, str]]:
        """(table, column) pairs the plan actually uses (role != unused)."""
        return [(p.table, p.column) for p in self.tables_and_columns
                if p.role != "unused"]

    def digest(self) -> str:
        import hashlib
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {
            "tables_and_columns": [
                {"table": p.table, "column": p.column, "role": p.role,
                 "rationale": p.rationale}
                for p in self.tables_and_columns
            ],
            "join_strategy": [
                {"relations": j.relations, "kind": j.kind, "condition": j.condition,
                 "justification": j.justification}
                for j in self.join_strategy
            ],
            "filter_conditions": list(self.filter_conditions),
            "output_definition": [
                {"expression": o.expression, "alias": o.alias,
                 "description": o.description}
                for o in self.output_definition
            ],
            "high_level_algorithm": list(self.high_level_algorithm),
            "spatial_abstractions": [
                {"abstraction": a, "function": f} for a, f in self.spatial_abstractions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogicalPlan":
        return cls(
            tables_and_columns=[
                PlanColumn(p["table"], p["column"], p["role"], p.get("rationale", ""))
                for p in data.get("tables_and_columns", [])
            ],
            join_strategy=[
                JoinChoice(j["relations"], j["kind"], j.get("condition", ""),
                           j.get("justification", ""))
                for j in data.get("join_strategy", [])
            ],
            filter_conditions=list(data.get("filter_conditions", [])),
            output_definition=[
                OutputSpec(o["expression"], o["alias"], o.get("description", ""))
                for o in data.get("output_definition", [])
            ],
            high_level_algorithm=list(data.get("high_level_algorithm", [])),
            spatial_abstractions=[
                (a["abstraction"], a["function"])
                for a in data.get("spatial_abstractions", [])
            ],
        )


def manifest_to_dict(manifest: QueryManifest) -> dict:
    return {
        "tables": list(manifest.tables),
        "base_columns": [{"table": t, "column": c} for t, c in manifest.base_columns],
        "output_columns": [{"expression": e, "alias": a}
                           for e, a in manifest.output_columns],
        "predicates": list(manifest.predicates),
        "joins": [{"left": j.left, "right": j.right, "kind": j.kind,
                   "condition": j.condition} for j in manifest.joins],
        "aggregations": list(manifest.aggregations),
        "spatial_functions": [{"name": s.name, "args": list(s.args)}
                              for s in manifest.spatial_functions],
        "limit": manifest.limit,
    }


def manifest_from_dict(data: dict) -> QueryManifest:
    return QueryManifest(
        tables=list(data.get("tables", [])),
        base_columns=[(c["table"], c["column"]) for c in data.get("base_columns", [])],
        output_columns=[(c["expression"], c.get("alias"))
                        for c in data.get("output_columns", [])],
        predicates=list(data.get("predicates", [])),
        joins=[JoinEdge(j["left"], j["right"], j["kind"], j.get("condition"))
               for j in data.get("joins", [])],
        aggregations=list(data.get("aggregations", [])),
        spatial_functions=[SpatialCall(s["name"], tuple(s.get("args", [])))
                           for s in data.get("spatial_functions", [])],
        limit=data.get("limit"),
    )


@dataclass
class SqlArtifact:
    """Generated statement plus its recomputed manifest and caveats."""

    sql: str
    manifest: QueryManifest
    assumptions: list[str] = field(default_factory=list)
    plan_ref: str = ""

    def to_dict(self) -> dict:
        return {
            "sql": self.sql,
            "manifest": manifest_to_dict(self.manifest),
            "assumptions": list(self.assumptions),
            "plan_ref": self.plan_ref,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SqlArtifact":
        return cls(
            sql=data["sql"],
            manifest=manifest_from_dict(data.get("manifest", {})),
            assumptions=list(data.get("assumptions", [])),
            plan_ref=data.get("plan_ref", ""),
        )


_PAYLOAD_TYPES = {
    "entity_extraction": EntityExtraction,
    "schema_mapping": SchemaMapping,
    "logical_plan": LogicalPlan,
    "sql_artifact": SqlArtifact,
}
_PAYLOAD_KINDS = {cls: kind for kind, cls in _PAYLOAD_TYPES.items()}


@dataclass
class AgentMessage:
    """One hop between agents; the orchestrator routes on next_action."""

    sender: str
    recipient: str
    next_action: NextAction
    payload: object
    status: MessageStatus = MessageStatus.OK
    session_id: str = "-"
    note: str = ""
    message_id: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self) -> None:
        if self.recipient not in REGISTERED_AGENTS and self.recipient != ORCHESTRATOR:
            raise ValueError(f"unknown recipient: {self.recipient!r}")
        if self.status is MessageStatus.FAILED and self.next_action is not NextAction.ESCALATE:
            raise ValueError("failed messages must escalate")

    def to_dict(self) -> dict:
        if isinstance(self.payload, dict):
            kind, body = "raw", self.payload
        else:
            kind = _PAYLOAD_KINDS[type(self.payload)]
            body = self.payload.to_dict()
        return {
            "message_id": self.message_id,
            "sender": self.sender,
            "recipient": self.recipient,
            "next_action": self.next_action.value,
            "status": self.status.value,
            "session_id": self.session_id,
            "note": self.note,
            "payload_kind": kind,
            "payload": body,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "AgentMessage":
        kind = data.get("payload_kind", "raw")
        body = data.get("payload", {})
        payload = body if kind == "raw" else _PAYLOAD_TYPES[kind].from_dict(body)
        return cls(
            sender=data["sender"],
            recipient=data["recipient"],
            next_action=NextAction(data["next_action"]),
            payload=payload,
            status=MessageStatus(data.get("status", "ok")),
            session_id=data.get("session_id", "-"),
            note=data.get("note", ""),
            message_id=data.get("message_id", uuid.uuid4().hex),
        )

    @classmethod
    def from_json(cls, text: str) -> "AgentMessage":
        return cls.from_dict(json.loads(text))
