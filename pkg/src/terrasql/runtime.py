"""Shared runtime wiring: one object holding every service the pipeline uses.

Building the knowledge base, index and gateway from configuration lives here
so the CLI, the HTTP service and the tests all assemble the system the same
way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import EngineConfig, Thresholds
from .gateway import DbGateway, connect_gateway
from .kb import (
    ColumnProfile, KnowledgeBase, Narrative, TableProfile, catalog_fingerprint,
    enrich_narratives, narrative_digest, profile_database,
)
from .llm import LlmGateway
from .semindex import (
    HashingEmbeddingProvider, SemanticIndex, build_index, deserialize_index,
    serialize_index,
)


@dataclass
class PipelineServices:
    """Everything an agent may touch, assembled once per process."""

    config: EngineConfig
    gateway: DbGateway
    llm: LlmGateway
    provider: HashingEmbeddingProvider
    index: SemanticIndex
    narratives: list[Narrative]
    column_profiles: list[ColumnProfile]
    table_profiles: list[TableProfile]
    knowledge_base: Optional[KnowledgeBase] = None
    _narrative_by_subject: dict = field(default_factory=dict, repr=False)
    _column_by_subject: dict = field(default_factory=dict, repr=False)
    _table_by_name: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._narrative_by_subject = {n.subject: n for n in self.narratives}
        self._column_by_subject = {
            (p.table_name, p.column_name): p for p in self.column_profiles}
        self._table_by_name = {p.table_name: p for p in self.table_profiles}

    @property
    def thresholds(self) -> Thresholds:
        return self.config.thresholds

    def narrative_for(self, table: str, column: Optional[str] = None) -> Optional[Narrative]:
        return self._narrative_by_subject.get((table, column))

    def column_profile(self, table: str, column: str) -> Optional[ColumnProfile]:
        return self._column_by_subject.get((table, column))

    def table_profile(self, table: str) -> Optional[TableProfile]:
        return self._table_by_name.get(table)


def build_knowledge_base(
    config: EngineConfig,
    gateway: DbGateway,
    llm: Optional[LlmGateway] = None,
) -> KnowledgeBase:
    """Profile the database, write narratives, build and persist the index."""
    kb = KnowledgeBase(config.kb_dir)
    fingerprint = catalog_fingerprint(gateway)
    columns, tables = profile_database(gateway, config.thresholds)
    kb.save_profiles(fingerprint, columns, tables)
    narratives = enrich_narratives(columns, tables, llm)
    kb.save_narratives(narrative_digest(narratives), narratives)
    provider = HashingEmbeddingProvider(
        dim=config.embedding.dim, seed=config.embedding.seed)
    index = build_index(narratives, provider)
    kb.save_index(fingerprint, serialize_index(index))
    return kb


def assemble_services(
    config: EngineConfig,
    llm: Optional[LlmGateway] = None,
    gateway: Optional[DbGateway] = None,
) -> PipelineServices:
    """Load (or build) every pipeline dependency from one configuration.

    A stale or partially built knowledge base is completed in place:
    stale profiles trigger a full rebuild, while missing narratives or a
    missing index are derived from the stored pieces without touching
    artifacts that are still valid."""
    gateway = gateway or connect_gateway(config)
    llm = llm or LlmGateway(config.llm)
    kb = KnowledgeBase(config.kb_dir)
    fingerprint = catalog_fingerprint(gateway)
    if kb.version() == 0 or kb.is_stale("profiles", fingerprint):
        build_knowledge_base(config, gateway, None)
        kb = KnowledgeBase(config.kb_dir)
    columns, tables = kb.load_profiles()
    narratives = kb.load_narratives()
    if not narratives:
        narratives = enrich_narratives(columns, tables, None)
        kb.save_narratives(narrative_digest(narratives), narratives)
    provider = HashingEmbeddingProvider(
        dim=config.embedding.dim, seed=config.embedding.seed)
    blob = kb.load_index()
    if blob is None:
        index = build_index(narratives, provider)
        kb.save_index(fingerprint, serialize_index(index))
    else:
        index = deserialize_index(blob)
    return PipelineServices(
        config=config,
        gateway=gateway,
        llm=llm,
        provider=provider,
        index=index,
        narratives=narratives,
        column_profiles=columns,
        table_profiles=tables,
        knowledge_base=kb,
    )


def ephemeral_kb_dir(base: Optional[str] = None) -> str:
    import tempfile
    return tempfile.mkdtemp(prefix="terrasql-kb-", dir=base)


__all__ = [
    "PipelineServices", "assemble_services", "build_knowledge_base",
    "ephemeral_kb_dir",
]
