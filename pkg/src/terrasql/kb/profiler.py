"""Schema and data profiling.

Walks the catalog through the gateway (so every statement is audited and
read-only), computes per-column statistics including a shape label for the
stored values, and per-table structure including geometry and temporal
coverage summaries.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from typing import Optional

from ..config import Thresholds
from ..gateway import DbGateway, ExecutionPolicy

PURELY_NUMERIC = "purely_numeric"
PURELY_TEXT = "purely_text"
MIXED_TYPE = "mixed_type"
NUMERIC_WITH_STRING_FORMAT = "numeric_with_string_format"

# Optional sign, digits (with optional thousands separators), optional
# decimal part, optional surrounding whitespace.
_NUMERIC_PATTERN = re.compile(
    r"^\s*[+-]?(?:(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d*)?|\.\d+)\s*$")

_NUMERIC_TYPE_WORDS = (
    "int", "real", "float", "double", "numeric", "decimal", "money", "serial")

_TEMPORAL_NAME = re.compile(r"(^|_)(date|time|year)$|_at$|^(date|time|year)", re.I)

_FULL_SCAN = ExecutionPolicy(row_cap=1_000_000)


@dataclass
class ColumnProfile:
    table_name: str
    column_name: str
    data_type: str
    nullable: bool
    default_value: Optional[str]
    fk_reference: Optional[tuple[str, list[str]]]
    null_count: int
    total_rows: int
    value_type_label: str
    numeric_min: Optional[float]
    numeric_max: Optional[float]
    unique_flag: bool
    full_unique_values: Optional[list]
    sample_values: list

    def digest(self) -> str:
        return _digest(asdict(self))


@dataclass
class TableProfile:
    table_name: str
    row_count: int
    columns: list[str]
    nullable_columns: list[str]
    primary_keys: list[str]
    foreign_keys: dict[str, tuple[str, list[str]]]
    indexed_columns: list[str]
    has_geometry: bool
    geometry_column: Optional[str] = None
    geometry_subtype: Optional[str] = None
    srid: Optional[int] = None
    geometry_valid: Optional[bool] = None
    spatial_extent: Optional[tuple[float, float, float, float]] = None
    temporal_coverage: Optional[tuple[str, str]] = None

    def digest(self) -> str:
        return _digest(asdict(self))


@dataclass
class ColumnDescriptor:
    table: str
    column: str
    data_type: str
    nullable: bool
    default_value: Optional[str]
    is_primary_key: bool
    fk_reference: Optional[tuple[str, list[str]]]
    ordinal: int


def _digest(payload: object) -> str:
    canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _stored_type_is_numeric(declared: str) -> bool:
    lowered = declared.lower()
    if "geometry" in lowered or "geography" in lowered:
        return False
    return any(word in lowered for word in _NUMERIC_TYPE_WORDS)


def classify_value_type(values: list, stored_type_is_numeric: bool = False) -> str:
    """Label the shape of a column's non-null values."""
    if stored_type_is_numeric:
        return PURELY_NUMERIC
    if not values:
        return PURELY_TEXT
    matches = sum(1 for v in values if _NUMERIC_PATTERN.match(str(v)))
    if matches == len(values):
        return NUMERIC_WITH_STRING_FORMAT
    if matches == 0:
        return PURELY_TEXT
    return MIXED_TYPE


def _safe_cast(value: object) -> Optional[float]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    text = str(value).strip().replace(",", "")
    try:
        return float(text)
    except (ValueError, OverflowError):
        return None


def introspect_catalog(gateway: DbGateway) -> list[ColumnDescriptor]:
    """One descriptor per user column, ordered by (table, ordinal)."""
    descriptors = []
    for table in sorted(gateway.tables()):
        meta = gateway.table_meta(table)
        fk_by_column = {
            f.column: (f.ref_table, [f.ref_column]) for f in meta.foreign_keys}
        for ordinal, col in enumerate(meta.columns):
            descriptors.append(ColumnDescriptor(
                table=table,
                column=col.name,
                data_type=col.declared_type,
                nullable=not col.not_null and not col.is_pk,
                default_value=col.default_value,
                is_primary_key=col.is_pk,
                fk_reference=fk_by_column.get(col.name),
                ordinal=ordinal,
            ))
    return descriptors


def catalog_fingerprint(gateway: DbGateway) -> str:
    rows = [
        (d.table, d.column, d.data_type, d.is_primary_key,
         d.fk_reference[0] if d.fk_reference else None)
        for d in introspect_catalog(gateway)
    ]
    return _digest(rows)


def profile_column(
    gateway: DbGateway,
    table: str,
    column: str,
    thresholds: Optional[Thresholds] = None,
) -> ColumnProfile:
    thresholds = thresholds or Thresholds()
    meta = gateway.table_meta(table)
    col_meta = next((c for c in meta.columns if c.name == column), None)
    if col_meta is None:
        from ..errors import ExecutionError

        raise ExecutionError(f'column "{column}" does not exist', column)
    fk = next(
        ((f.ref_table, [f.ref_column]) for f in meta.foreign_keys if f.column == column),
        None)
    q = lambda sql: gateway.execute_readonly(sql, _FULL_SCAN, session_id="profiler")
    qt, qc = f'"{table}"', f'"{column}"'
    total_rows = q(f"SELECT count(*) FROM {qt}").rows[0][0]
    null_count = q(f"SELECT count(*) FROM {qt} WHERE {qc} IS NULL").rows[0][0]
    distinct = q(f"SELECT count(DISTINCT {qc}) FROM {qt}").rows[0][0]
    values = [r[0] for r in q(
        f"SELECT {qc} FROM {qt} WHERE {qc} IS NOT NULL ORDER BY {qc}").rows]
    label = classify_value_type(values, _stored_type_is_numeric(col_meta.declared_type))
    numeric_min = numeric_max = None
    if label in (PURELY_NUMERIC, NUMERIC_WITH_STRING_FORMAT):
        casted = [c for c in (_safe_cast(v) for v in values) if c is not None]
        if casted:
            numeric_min, numeric_max = min(casted), max(casted)
    full_unique = None
    if distinct <= thresholds.unique_values_limit:
        full_unique = sorted(set(values), key=lambda v: (str(type(v)), str(v)))
    return ColumnProfile(
        table_name=table,
        column_name=column,
        data_type=col_meta.declared_type,
        nullable=not col_meta.not_null and not col_meta.is_pk,
        default_value=col_meta.default_value,
        fk_reference=fk,
        null_count=null_count,
        total_rows=total_rows,
        value_type_label=label,
        numeric_min=numeric_min,
        numeric_max=numeric_max,
        unique_flag=distinct == total_rows - null_count,
        full_unique_values=full_unique,
        sample_values=gateway.sample_values(table, column, thresholds.sample_size),
    )


def profile_table(
    gateway: DbGateway,
    table: str,
    column_profiles: list[ColumnProfile],
) -> TableProfile:
    meta = gateway.table_meta(table)
    q = lambda sql: gateway.execute_readonly(sql, _FULL_SCAN, session_id="profiler")
    qt = f'"{table}"'
    row_count = q(f"SELECT count(*) FROM {qt}").rows[0][0]
    columns = [c.name for c in meta.columns]
    geometry_column = next(
        (c.name for c in meta.columns if c.geometry_subtype()), None)
    profile = TableProfile(
        table_name=table,
        row_count=row_count,
        columns=columns,
        nullable_columns=[c.name for c in meta.columns
                          if not c.not_null and not c.is_pk],
        primary_keys=meta.primary_key,
        foreign_keys={f.column: (f.ref_table, [f.ref_column])
                      for f in meta.foreign_keys},
        indexed_columns=sorted({c for i in meta.indexes for c in i.columns}),
        has_geometry=geometry_column is not None,
    )
    if geometry_column:
        col = next(c for c in meta.columns if c.name == geometry_column)
        qg = f'"{geometry_column}"'
        profile.geometry_column = geometry_column
        profile.geometry_subtype = col.geometry_subtype()
        profile.srid = col.geometry_srid()
        invalid = q(f"SELECT count(*) FROM {qt} WHERE {qg} IS NOT NULL "
                    f"AND ST_IsValid({qg}) = 0").rows[0][0]
        profile.geometry_valid = invalid == 0
        extent = q(f"SELECT min(ST_XMin({qg})), min(ST_YMin({qg})), "
                   f"max(ST_XMax({qg})), max(ST_YMax({qg})) FROM {qt} "
                   f"WHERE {qg} IS NOT NULL").rows[0]
        if extent[0] is not None:
            profile.spatial_extent = tuple(float(v) for v in extent)
    profile.temporal_coverage = _temporal_coverage(gateway, table, meta)
    return profile


def _temporal_coverage(gateway, table: str, meta) -> Optional[tuple[str, str]]:
    earliest: Optional[str] = None
    latest: Optional[str] = None
    for col in meta.columns:
        if not _TEMPORAL_NAME.search(col.name):
            continue
        if col.geometry_subtype():
            continue
        lo, hi = gateway.execute_readonly(
            f'SELECT min("{col.name}"), max("{col.name}") FROM "{table}" '
            f'WHERE "{col.name}" IS NOT NULL',
            _FULL_SCAN, session_id="profiler").rows[0]
        if lo is None:
            continue
        lo_s, hi_s = _as_date_string(lo, False), _as_date_string(hi, True)
        if lo_s is None or hi_s is None:
            continue
        earliest = lo_s if earliest is None or lo_s < earliest else earliest
        latest = hi_s if latest is None or hi_s > latest else latest
    if earliest is None or latest is None:
        return None
    return earliest, latest


def _as_date_string(value: object, is_upper: bool) -> Optional[str]:
    """Render a temporal scalar as YYYY-MM-DD; integer years span the year."""
    if isinstance(value, int) and 1000 <= value <= 9999:
        return f"{value}-12-31" if is_upper else f"{value}-01-01"
    text = str(value)
    if re.match(r"^\d{4}-\d{2}-\d{2}", text):
        return text[:10]
    return None


def profile_database(
    gateway: DbGateway,
    thresholds: Optional[Thresholds] = None,
) -> tuple[list[ColumnProfile], list[TableProfile]]:
    """Profile every user table; column profiles first, then table rollups."""
    thresholds = thresholds or Thresholds()
    column_profiles: list[ColumnProfile] = []
    table_profiles: list[TableProfile] = []
    for table in sorted(gateway.tables()):
        per_table = [
            profile_column(gateway, table, col.name, thresholds)
            for col in gateway.table_meta(table).columns
        ]
        column_profiles.extend(per_table)
        table_profiles.append(profile_table(gateway, table, per_table))
    return column_profiles, table_profiles
