"""Span-based statement rewrites.

Edits are spliced into the original text at recorded character offsets, so
untouched SQL comes through byte for byte. Nothing is re-rendered here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .classify import StatementClass, classify_statement
from .nodes import (
    ColumnRef, ExplainStatement, FuncCall, Join, Literal, Query, SelectCore,
    SelectStatement, Star, SubqueryTable, TableExpr, TableRef,
)
from .parser import parse_sql
from .render import quote_ident
from .walk import walk
from ..errors import BlockedStatementError, ColumnInjectionError, SqlParseError

# Aggregates that make a bare column addition invalid without GROUP BY.
AGGREGATE_FUNCS = frozenset({
    "count", "sum", "avg", "min", "max", "array_agg", "string_agg",
    "bool_and", "bool_or", "every", "stddev", "stddev_pop", "stddev_samp",
    "variance", "var_pop", "var_samp", "percentile_cont", "percentile_disc",
    "mode", "corr", "covar_pop", "covar_samp", "json_agg", "jsonb_agg",
})


def inject_limit(sql: str, n: int) -> str:
    """Return sql with an effective row limit of at most n.

    A tighter existing limit is kept. Set operations, VALUES and non-literal
    limits are wrapped in ``SELECT * FROM (...) AS _sub LIMIT n`` instead of
    edited, so the original ordering semantics are untouched. Applying the
    function twice is a no-op. EXPLAIN output is returned unchanged: its rows
    are plan lines, and wrapping would produce invalid SQL.
    """
    if n < 1:
        raise ValueError(f"row limit must be >= 1, got {n}")
    kind = classify_statement(sql)
    if kind is not StatementClass.READ_ONLY:
        raise BlockedStatementError(kind.value, sql)
    stmt = parse_sql(sql)[0]
    if isinstance(stmt, ExplainStatement):
        return sql
    assert isinstance(stmt, SelectStatement)
    query = stmt.query
    if query.limit is not None:
        if isinstance(query.limit, Literal) and query.limit.kind == "number":
            try:
                current = int(query.limit.text)
            except ValueError:
                return _wrap_with_limit(sql, stmt.start, stmt.end, n)
            if current > n:
                return sql[: query.limit.start] + str(n) + sql[query.limit.end :]
            return sql
        return _wrap_with_limit(sql, stmt.start, stmt.end, n)
    if query.limit_all or not isinstance(query.body, SelectCore):
        return _wrap_with_limit(sql, stmt.start, stmt.end, n)
    return sql[: query.end] + f" LIMIT {n}" + sql[query.end :]


def _wrap_with_limit(sql: str, start: int, end: int, n: int) -> str:
    inner = sql[start:end]
    return f"{sql[:start]}SELECT * FROM ({inner}) AS _sub LIMIT {n}{sql[end:]}"


@dataclass
class InjectionResult:
    sql: str
    added: list[tuple[str, str, str]] = field(default_factory=list)  # (binding, column, alias)
    caveats: list[str] = field(default_factory=list)


def inject_columns(sql: str, columns: Sequence[tuple[str, str, Optional[str]]]) -> InjectionResult:
    """Append columns to the SELECT list of a plain query.

    Each request is ``(relation, column, alias)``; relation may be a FROM
    alias or an underlying table name. Columns already present (directly or
    via a covering ``*``) are skipped. Grouped queries get the new column
    added to GROUP BY as well, with a caveat. Raises ColumnInjectionError
    when the statement shape cannot take an appended column.
    """
    try:
        statements = parse_sql(sql)
    except SqlParseError as exc:
        raise ColumnInjectionError(f"cannot inject into unparseable SQL: {exc}") from exc
    if len(statements) != 1 or not isinstance(statements[0], SelectStatement):
        raise ColumnInjectionError("expected a single SELECT statement")
    core = _effective_core(statements[0].query)
    if core is None:
        raise ColumnInjectionError(
            "cannot append columns to a set operation or VALUES list")

    bindings = _from_bindings(core.from_clause)
    if not bindings:
        raise ColumnInjectionError("statement has no FROM clause")

    has_aggregate = _has_top_level_aggregate(core)
    if has_aggregate and not core.group_by:
        raise ColumnInjectionError(
            "cannot add a bare column to an aggregate query without GROUP BY")

    result = InjectionResult(sql=sql)
    select_inserts: list[str] = []
    group_inserts: list[str] = []
    seen_requests: set[tuple[str, str]] = set()
    existing = _existing_outputs(core)

    for relation, column, alias in columns:
        binding = _resolve_binding(relation, bindings)
        col_l = column.lower()
        if (binding, col_l) in seen_requests:
            continue
        seen_requests.add((binding, col_l))
        out_alias = alias or column
        if _already_selected(existing, binding, col_l, out_alias):
            continue
        if out_alias.lower() in existing.aliases:
            raise ColumnInjectionError(
                f"output alias {out_alias!r} is already in use")
        rendered = f"{quote_ident(binding)}.{quote_ident(column)}"
        select_inserts.append(f"{rendered} AS {quote_ident(out_alias)}")
        existing.aliases.add(out_alias.lower())
        result.added.append((binding, column, out_alias))
        if core.group_by:
            group_inserts.append(rendered)
            result.caveats.append(
                f"{rendered} was added to GROUP BY to keep the query well-formed")

    if not result.added:
        return result

    if core.distinct or core.distinct_on:
        result.caveats.append(
            "query uses DISTINCT; appending columns can change which rows are returned")

    edits: list[tuple[int, str]] = [
        (core.items[-1].end, ", " + ", ".join(select_inserts)),
    ]
    if group_inserts:
        edits.append((core.group_by[-1].end, ", " + ", ".join(group_inserts)))
    # Apply right-to-left so earlier offsets stay valid.
    text = sql
    for offset, insert in sorted(edits, key=lambda e: e[0], reverse=True):
        text = text[:offset] + insert + text[offset:]
    result.sql = text
    return result


def _effective_core(query: Query) -> Optional[SelectCore]:
    body = query.body
    while isinstance(body, Query):
        body = body.body
    return body if isinstance(body, SelectCore) else None


def _from_bindings(from_clause: Sequence[TableExpr]) -> dict[str, str]:
    """Map binding name -> underlying relation name ('' for derived tables)."""
    bindings: dict[str, str] = {}

    def add(t: TableExpr) -> None:
        if isinstance(t, Join):
            add(t.left)
            add(t.right)
        elif isinstance(t, TableRef):
            bindings[t.binding_name()] = t.relation_name()
        elif isinstance(t, SubqueryTable):
            if t.alias:
                bindings[t.alias.lower()] = ""
        else:  # FuncTable
            if t.alias:
                bindings[t.alias.lower()] = ""

    for t in from_clause:
        add(t)
    return bindings


def _resolve_binding(relation: str, bindings: dict[str, str]) -> str:
    rel_l = relation.lower()
    if rel_l in bindings:
        return rel_l
    matches = [b for b, real in bindings.items() if real == rel_l]
    if len(matches) == 1:
        return matches[0]
    raise ColumnInjectionError(f"relation {relation!r} is not in the FROM clause")


@dataclass
class _Outputs:
    columns: set[tuple[str, str]] = field(default_factory=set)  # (qualifier or '', column)
    aliases: set[str] = field(default_factory=set)
    star_all: bool = False
    star_bindings: set[str] = field(default_factory=set)


def _existing_outputs(core: SelectCore) -> _Outputs:
    out = _Outputs()
    for item in core.items:
        if item.alias:
            out.aliases.add(item.alias.lower())
        expr = item.expr
        if isinstance(expr, Star):
            if expr.qualifier:
                out.star_bindings.add(expr.qualifier[-1].lower().strip('"'))
            else:
                out.star_all = True
        elif isinstance(expr, ColumnRef):
            parts = expr.normalized()
            qualifier = parts[-2] if len(parts) > 1 else ""
            out.columns.add((qualifier, parts[-1]))
    return out


def _already_selected(existing: _Outputs, binding: str, column: str, alias: str) -> bool:
    if existing.star_all or binding in existing.star_bindings:
        return True
    if (binding, column) in existing.columns or ("", column) in existing.columns:
        return True
    return False


def _has_top_level_aggregate(core: SelectCore) -> bool:
    for item in core.items:
        for node in walk(item):
            if isinstance(node, FuncCall) and node.name() in AGGREGATE_FUNCS:
                return True
    return False
