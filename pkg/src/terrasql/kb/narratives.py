"""Turn profiles into prose the retrieval layer can embed and search.

Each table and column gets exactly one narrative. When a language model is
available it writes the prose; otherwise (or on failure) a deterministic
template renders the same facts, so the system works without a model.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

from ..errors import LlmError
from .profiler import (
    ColumnProfile,
    NUMERIC_WITH_STRING_FORMAT,
    MIXED_TYPE,
    TableProfile,
)

TEMPLATE_MODEL_ID = "template/v1"

_LABEL_PHRASES = {
    "purely_numeric": "values are numeric",
    "purely_text": "values are free text",
    "mixed_type": "values mix numeric and text content",
    NUMERIC_WITH_STRING_FORMAT: "values are numbers stored as text",
}


@dataclass
class Narrative:
    subject: tuple[str, Optional[str]]
    text: str
    generated_by: str
    source_profile_hash: str

    @property
    def table(self) -> str:
        return self.subject[0]

    @property
    def column(self) -> Optional[str]:
        return self.subject[1]


def column_template(profile: ColumnProfile) -> str:
    parts = [
        f"Column {profile.table_name}.{profile.column_name} "
        f"stores {profile.data_type or 'untyped'} values."
    ]
    if profile.unique_flag and profile.total_rows > 0:
        parts.append("Every value is unique, so it can serve as an identifier.")
    if profile.fk_reference:
        table, cols = profile.fk_reference
        parts.append(f"It references {table}({', '.join(cols)}).")
    parts.append(
        f"{profile.null_count} of {profile.total_rows} rows are null.")
    phrase = _LABEL_PHRASES.get(profile.value_type_label)
    if phrase:
        parts.append(f"Stored {phrase}.")
    if profile.value_type_label in (NUMERIC_WITH_STRING_FORMAT, MIXED_TYPE):
        parts.append("Cast before comparing or aggregating numerically.")
    if profile.numeric_min is not None and profile.numeric_max is not None:
        parts.append(
            f"Values range from {_fmt(profile.numeric_min)} "
            f"to {_fmt(profile.numeric_max)}.")
    if profile.full_unique_values is not None and len(profile.full_unique_values) <= 12:
        rendered = ", ".join(str(v) for v in profile.full_unique_values)
        parts.append(f"Complete value set: {rendered}.")
    elif profile.sample_values:
        rendered = ", ".join(str(v) for v in profile.sample_values[:5])
        parts.append(f"Sample values: {rendered}.")
    return " ".join(parts)


def table_template(profile: TableProfile) -> str:
    parts = [
        f"Table {profile.table_name} has {profile.row_count} rows and "
        f"{len(profile.columns)} columns ({', '.join(profile.columns)})."
    ]
    if profile.primary_keys:
        parts.append(f"Primary key: {', '.join(profile.primary_keys)}.")
    for column, (ref_table, ref_cols) in sorted(profile.foreign_keys.items()):
        parts.append(f"{column} references {ref_table}({', '.join(ref_cols)}).")
    if profile.has_geometry:
        parts.append(
            f"Geometry column {profile.geometry_column} holds "
            f"{profile.geometry_subtype} shapes in SRID {profile.srid}.")
        if profile.spatial_extent:
            xmin, ymin, xmax, ymax = profile.spatial_extent
            parts.append(
                f"Spatial extent: ({xmin:g}, {ymin:g}) to ({xmax:g}, {ymax:g}).")
        if profile.geometry_valid is not None:
            parts.append("All geometries are valid."
                         if profile.geometry_valid
                         else "Some geometries fail validity checks.")
    if profile.temporal_coverage:
        earliest, latest = profile.temporal_coverage
        parts.append(f"Temporal coverage: {earliest} to {latest}.")
    return " ".join(parts)


def _fmt(value: float) -> str:
    return f"{int(value)}" if float(value).is_integer() else f"{value:g}"


def _narrative(subject, text, generated_by, source_hash) -> Narrative:
    return Narrative(subject=subject, text=text, generated_by=generated_by,
                     source_profile_hash=source_hash)


def enrich_narratives(
    column_profiles: list[ColumnProfile],
    table_profiles: list[TableProfile],
    llm_gateway=None,
) -> list[Narrative]:
    """One narrative per table and per column, model-written when possible."""
    narratives = []
    for table in table_profiles:
        base = table_template(table)
        narratives.append(_enriched(
            (table.table_name, None), base, table.digest(), llm_gateway))
    for column in column_profiles:
        base = column_template(column)
        narratives.append(_enriched(
            (column.table_name, column.column_name), base, column.digest(),
            llm_gateway))
    return narratives


def _enriched(subject, template_text, source_hash, llm_gateway) -> Narrative:
    if llm_gateway is None:
        return _narrative(subject, template_text, TEMPLATE_MODEL_ID, source_hash)
    table, column = subject
    target = f"{table}.{column}" if column else f"table {table}"
    prompt = (
        "Rewrite the following database profile facts as one short plain "
        "paragraph for a data catalog. Expand abbreviations where obvious, "
        "keep every number exactly as given, and do not invent facts.\n"
        f"Subject: {target}\n"
        f"Facts: {template_text}\n")
    try:
        text = llm_gateway.complete("narrative_writer", prompt).strip()
        if not text:
            raise LlmError("empty narrative")
        return _narrative(subject, text, llm_gateway.model_id, source_hash)
    except LlmError:
        return _narrative(subject, template_text, TEMPLATE_MODEL_ID, source_hash)


def narrative_digest(narratives: list[Narrative]) -> str:
    joined = "\n".join(
        f"{n.table}|{n.column or ''}|{n.text}" for n in narratives)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()
