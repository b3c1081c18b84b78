"""Statement classification for the read-only gate.

The classifier is total and fails closed: anything that cannot be parsed,
or parses to a shape with a write path, is reported as mutating.
"""

from __future__ import annotations

import enum

from .nodes import (
    DdlStatement, DmlStatement, ExplainStatement, OtherStatement, Query,
    SelectCore, SelectStatement, Statement,
)
from .parser import parse_sql
from .walk import walk
from ..errors import SqlParseError


class StatementClass(str, enum.Enum):
    READ_ONLY = "read_only"
    INSERT = "insert"
    UPDATE = "update"
    DELETE = "delete"
    DDL_CREATE = "ddl_create"
    DDL_ALTER = "ddl_alter"
    DDL_DROP = "ddl_drop"
    OTHER_MUTATING = "other_mutating"
    MULTI_STATEMENT = "multi_statement"


_DML_KINDS = {
    "insert": StatementClass.INSERT,
    "update": StatementClass.UPDATE,
    "delete": StatementClass.DELETE,
}


def classify_statement(sql: str) -> StatementClass:
    """Classify SQL text. Never raises; unparseable input is OTHER_MUTATING."""
    try:
        statements = parse_sql(sql)
    except SqlParseError:
        return StatementClass.OTHER_MUTATING
    except RecursionError:
        return StatementClass.OTHER_MUTATING
    if not statements:
        return StatementClass.OTHER_MUTATING
    if len(statements) > 1:
        return StatementClass.MULTI_STATEMENT
    return _classify_one(statements[0])


def _classify_one(stmt: Statement) -> StatementClass:
    if isinstance(stmt, SelectStatement):
        return _classify_query_stmt(stmt)
    if isinstance(stmt, DmlStatement):
        return _DML_KINDS.get(stmt.kind, StatementClass.OTHER_MUTATING)
    if isinstance(stmt, DdlStatement):
        return StatementClass(stmt.kind)
    if isinstance(stmt, ExplainStatement):
        if stmt.analyze:
            # EXPLAIN ANALYZE executes the statement it explains.
            return StatementClass.OTHER_MUTATING
        inner = _classify_one(stmt.body)
        return inner
    if isinstance(stmt, OtherStatement):
        return StatementClass.OTHER_MUTATING
    return StatementClass.OTHER_MUTATING


def _classify_query_stmt(stmt: SelectStatement) -> StatementClass:
    for node in walk(stmt.query):
        if isinstance(node, Query):
            for cte in node.ctes:
                if cte.dml_kind:
                    # Top-level data-modifying CTEs are caught at parse time;
                    # one nested deeper is malformed Postgres. Fail closed.
                    return _DML_KINDS.get(cte.dml_kind, StatementClass.OTHER_MUTATING)
            if node.locking:
                # FOR UPDATE / FOR SHARE take row locks.
                return StatementClass.OTHER_MUTATING
        if isinstance(node, SelectCore) and node.into_table:
            # SELECT ... INTO creates a table.
            return StatementClass.DDL_CREATE
    return StatementClass.READ_ONLY


def is_read_only(sql: str) -> bool:
    return classify_statement(sql) is StatementClass.READ_ONLY
