"""Metadata retrieval: schema linking and spatial-function lookup.

Entities and keywords are ranked against the narrative index; a natural-break
cut keeps only the clearly relevant candidates. The surviving tables are
attached whole (every profiled column plus narrative excerpt and sample
values) so the planner sees enough context to assign roles, mirroring how a
human reads a table before writing a join.
"""

from __future__ import annotations

import warnings
from typing import TYPE_CHECKING, Optional

from ..semindex import (
    EmbeddingVector, IndexEntry, SemanticIndex, build_index, cosine_similarity,
    rank_candidates, select_by_natural_breaks,
)
from ..sqlkit import function_registry
from .messages import (
    LOGIC_AGENT, METADATA_AGENT, ORCHESTRATOR, AgentMessage, FunctionDoc,
    MessageStatus, NextAction, SchemaMapping, TrimmedColumn,
)
from .rendering import first_sentence

if TYPE_CHECKING:
    from ..runtime import PipelineServices

# sample values attached per trimmed column; geometry blobs are skipped
_SAMPLES_PER_COLUMN = 5


def _is_geometry_type(declared: str) -> bool:
    upper = declared.upper()
    return upper.startswith("GEOMETRY") or upper.startswith("GEOGRAPHY")


def _format_sample(value: object) -> str:
    if isinstance(value, str):
        return f"'{value}'"
    return str(value)


def _trimmed_columns(services: "PipelineServices", table: str) -> list[TrimmedColumn]:
    columns: list[TrimmedColumn] = []
    profiles = [p for p in services.column_profiles if p.table_name == table]
    for profile in profiles:
        narrative = services.narrative_for(table, profile.column_name)
        excerpt = first_sentence(narrative.text) if narrative else ""
        if _is_geometry_type(profile.data_type):
            samples: tuple[str, ...] = ()
        else:
            pool = services.gateway.sample_values(
                table, profile.column_name, _SAMPLES_PER_COLUMN)
            samples = tuple(_format_sample(v) for v in pool)
        columns.append(TrimmedColumn(
            column=profile.column_name,
            declared_type=profile.data_type,
            narrative=excerpt,
            samples=samples,
        ))
    return columns


def resolve_schema(
    extraction,
    services: "PipelineServices",
    session_id: str = "-",
) -> AgentMessage:
    """Link extracted terms to catalog columns and emit the trimmed schema."""
    thresholds = services.thresholds
    entity_to_columns: dict[str, list[tuple[str, Optional[str], float]]] = {}
    tables: list[str] = []
    for term in extraction.search_terms():
        ranked = rank_candidates(term, services.index, services.provider)
        keep = select_by_natural_breaks(
            [c.score for c in ranked],
            k_min=thresholds.k_min, k_max=thresholds.k_max,
            flatness_epsilon=thresholds.flatness_epsilon)
        chosen = ranked[:keep]
        entity_to_columns[term] = [
            (c.subject[0], c.subject[1], c.score) for c in chosen]
        for candidate in chosen:
            table = candidate.subject[0]
            if table not in tables:
                tables.append(table)

    if not any(entity_to_columns.values()):
        mapping = SchemaMapping(entity_to_columns=entity_to_columns,
                                trimmed_schema={})
        return AgentMessage(
            sender=METADATA_AGENT, recipient=ORCHESTRATOR,
            next_action=NextAction.ESCALATE, status=MessageStatus.FAILED,
            payload=mapping, session_id=session_id,
            note="no schema candidates matched the question")

    trimmed = {table: _trimmed_columns(services, table)
               for table in sorted(tables)}
    mapping = SchemaMapping(
        entity_to_columns=entity_to_columns, trimmed_schema=trimmed)
    return AgentMessage(
        sender=METADATA_AGENT, recipient=LOGIC_AGENT,
        next_action=NextAction.PROCEED, status=MessageStatus.OK,
        payload=mapping, session_id=session_id)


_function_index_cache: dict[str, tuple[SemanticIndex, dict[str, dict]]] = {}


def _function_index(provider) -> tuple[SemanticIndex, dict[str, dict]]:
    """Lazy per-provider index over the bundled function reference corpus."""
    cached = _function_index_cache.get(provider.provider_id)
    if cached is not None:
        return cached
    entries: list[IndexEntry] = []
    by_name: dict[str, dict] = {}
    for record in function_registry():
        text = " ".join(
            [record["name"], record["description"]] + list(record.get("tags", [])))
        vector = provider.embed(text)
        entries.append(IndexEntry(
            subject=(record["name"], None), vector=vector, narrative_ref=""))
        by_name[record["name"]] = record
    index = SemanticIndex(
        provider_id=provider.provider_id, dim=provider.dim, entries=entries)
    _function_index_cache[provider.provider_id] = (index, by_name)
    return index, by_name


def lookup_spatial_functions(
    abstraction: str,
    services: "PipelineServices",
    k: Optional[int] = None,
) -> list[FunctionDoc]:
    """Top-k spatial function references for one abstract operation."""
    if not abstraction.strip():
        warnings.warn("empty abstraction name; no function docs returned")
        return []
    k = k or services.thresholds.function_docs_k
    index, by_name = _function_index(services.provider)
    if not index.entries:
        warnings.warn("spatial function corpus is empty")
        return []
    query: EmbeddingVector = services.provider.embed(abstraction)
    scored = sorted(
        ((cosine_similarity(query, entry.vector), entry.subject[0])
         for entry in index.entries),
        key=lambda pair: (-pair[0], pair[1]))
    docs = []
    for _, name in scored[:k]:
        record = by_name[name]
        docs.append(FunctionDoc(
            name=record["name"], signature=record["signature"],
            example=record.get("example", "")))
    return docs
