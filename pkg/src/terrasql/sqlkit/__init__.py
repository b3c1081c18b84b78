"""SQL parsing, classification, rewriting and inspection."""

from .classify import StatementClass, classify_statement, is_read_only
from .manifest import JoinEdge, QueryManifest, SpatialCall, extract_manifest
from .nodes import Query, SelectStatement, Statement
from .parser import parse_single_query, parse_sql
from .render import normalize_predicate, render_expr, render_query, quote_ident
from .rewrite import InjectionResult, inject_columns, inject_limit
from .spatial_rules import (
    GeometryColumn, SpatialFinding, check_spatial_rules, function_registry,
    rule_registry,
)

__all__ = [
    "StatementClass", "classify_statement", "is_read_only",
    "JoinEdge", "QueryManifest", "SpatialCall", "extract_manifest",
    "Query", "SelectStatement", "Statement",
    "parse_single_query", "parse_sql",
    "normalize_predicate", "render_expr", "render_query", "quote_ident",
    "InjectionResult", "inject_columns", "inject_limit",
    "GeometryColumn", "SpatialFinding", "check_spatial_rules",
    "function_registry", "rule_registry",
]
