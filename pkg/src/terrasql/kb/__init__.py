"""Schema knowledge base: profiling, narratives, persistent store."""

from .narratives import (
    Narrative,
    TEMPLATE_MODEL_ID,
    column_template,
    enrich_narratives,
    narrative_digest,
    table_template,
)
from .profiler import (
    ColumnDescriptor,
    ColumnProfile,
    TableProfile,
    catalog_fingerprint,
    classify_value_type,
    introspect_catalog,
    profile_column,
    profile_database,
    profile_table,
)
from .store import KnowledgeBase

__all__ = [
    "ColumnDescriptor",
    "ColumnProfile",
    "KnowledgeBase",
    "Narrative",
    "TEMPLATE_MODEL_ID",
    "TableProfile",
    "catalog_fingerprint",
    "classify_value_type",
    "column_template",
    "enrich_narratives",
    "introspect_catalog",
    "narrative_digest",
    "profile_column",
    "profile_database",
    "profile_table",
    "table_template",
]
