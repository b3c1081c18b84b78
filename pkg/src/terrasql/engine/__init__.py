"""Embedded spatial database engine used for sandboxed query execution."""

from .embedded import (
    ColumnMeta,
    EmbeddedEngine,
    ForeignKeyMeta,
    IndexMeta,
    TableMeta,
)
from .geomtext import GeometryValueError, GeoValue, make_point, parse_geo
from .seed import create_toy_engine, seed_toy_database

__all__ = [
    "ColumnMeta",
    "EmbeddedEngine",
    "ForeignKeyMeta",
    "GeoValue",
    "GeometryValueError",
    "IndexMeta",
    "TableMeta",
    "create_toy_engine",
    "make_point",
    "parse_geo",
    "seed_toy_database",
]
