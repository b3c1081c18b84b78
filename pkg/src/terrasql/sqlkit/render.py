"""Render parsed SQL back to text.

Two modes:

* ``normalized`` produces the canonical form used in manifests and findings:
  lowercase keywords and unquoted identifiers, single spaces, literals kept
  exactly as written.
* ``sqlite`` translates the tree for the embedded engine: ``::geography``
  becomes a function call, ILIKE becomes LIKE, type casts map to SQLite
  affinities. Constructs the embedded engine cannot honor raise
  UnsupportedSqlError rather than degrading silently.
"""

from __future__ import annotations

import re

from .nodes import (
    Between, Binary, Case, Cast, ColumnRef, Cte, Exists, Expr, FuncCall,
    FuncTable, InList, InSubquery, IsTest, Join, Literal, OrderItem, Param,
    Paren, Query, QueryBody, ScalarSubquery, SelectCore, SelectItem, SetOp,
    Star, Subscript, SubqueryTable, TableExpr, TableRef, TypedLiteral, Unary,
    Values,
)
from ..errors import UnsupportedSqlError

_BARE_IDENT = re.compile(r"^[a-z_][a-z0-9_$]*$")

# Postgres type name -> SQLite cast target. Casts to geometry/geography map
# to registered functions instead.
_SQLITE_AFFINITY = {
    "int": "INTEGER", "integer": "INTEGER", "bigint": "INTEGER",
    "smallint": "INTEGER", "int2": "INTEGER", "int4": "INTEGER",
    "int8": "INTEGER", "serial": "INTEGER", "bigserial": "INTEGER",
    "boolean": "INTEGER", "bool": "INTEGER",
    "real": "REAL", "float": "REAL", "float4": "REAL", "float8": "REAL",
    "double precision": "REAL",
    "numeric": "NUMERIC", "decimal": "NUMERIC", "money": "NUMERIC",
    "text": "TEXT", "varchar": "TEXT", "character varying": "TEXT",
    "char": "TEXT", "character": "TEXT", "citext": "TEXT", "name": "TEXT",
    "json": "TEXT", "jsonb": "TEXT", "uuid": "TEXT",
}

_SQLITE_DATETIME_FUNCS = {
    "date": "date",
    "timestamp": "datetime", "timestamptz": "datetime",
    "timestamp with time zone": "datetime",
    "timestamp without time zone": "datetime",
    "time": "time", "time with time zone": "time",
    "time without time zone": "time",
}


def _ident(part: str, lower: bool) -> str:
    if part.startswith('"'):
        return part
    return part.lower() if lower else part


def quote_ident(name: str) -> str:
    """Quote an identifier unless it is already a safe bare name."""
    if _BARE_IDENT.match(name):
        return name
    return '"' + name.replace('"', '""') + '"'


class _Renderer:
    def __init__(self, mode: str):
        if mode not in ("normalized", "sqlite"):
            raise ValueError(f"unknown render mode {mode!r}")
        self.mode = mode
        self.lower_idents = mode == "normalized"

    def kw(self, word: str) -> str:
        return word.lower() if self.mode == "normalized" else word.upper()

    # -- expressions -----------------------------------------------------

    def expr(self, e: Expr) -> str:
        if isinstance(e, Literal):
            return e.text
        if isinstance(e, TypedLiteral):
            if self.mode == "sqlite":
                word = e.type_word.upper()
                if word == "DATE":
                    return f"date({e.text})"
                if word == "TIMESTAMP":
                    return f"datetime({e.text})"
                if word == "TIME":
                    return f"time({e.text})"
                raise UnsupportedSqlError(
                    f"{e.type_word} literals are not supported by the embedded engine")
            return f"{self.kw(e.type_word)} {e.text}"
        if isinstance(e, Param):
            return e.text
        if isinstance(e, ColumnRef):
            return ".".join(_ident(p, self.lower_idents) for p in e.parts)
        if isinstance(e, Star):
            if e.qualifier:
                return ".".join(_ident(p, self.lower_idents) for p in e.qualifier) + ".*"
            return "*"
        if isinstance(e, FuncCall):
            return self.func_call(e)
        if isinstance(e, Cast):
            return self.cast(e)
        if isinstance(e, Unary):
            sep = " " if e.op.isalpha() else ""
            op = self.kw(e.op) if e.op.isalpha() else e.op
            return f"{op}{sep}{self.expr(e.operand)}"
        if isinstance(e, Binary):
            return self.binary(e)
        if isinstance(e, IsTest):
            not_part = f" {self.kw('NOT')}" if e.negated else ""
            return f"{self.expr(e.operand)} {self.kw('IS')}{not_part} {self.kw(e.target)}"
        if isinstance(e, Between):
            not_part = f"{self.kw('NOT')} " if e.negated else ""
            return (f"{self.expr(e.operand)} {not_part}{self.kw('BETWEEN')} "
                    f"{self.expr(e.low)} {self.kw('AND')} {self.expr(e.high)}")
        if isinstance(e, InList):
            not_part = f"{self.kw('NOT')} " if e.negated else ""
            items = ", ".join(self.expr(i) for i in e.items)
            return f"{self.expr(e.operand)} {not_part}{self.kw('IN')} ({items})"
        if isinstance(e, InSubquery):
            not_part = f"{self.kw('NOT')} " if e.negated else ""
            return f"{self.expr(e.operand)} {not_part}{self.kw('IN')} ({self.query(e.query)})"
        if isinstance(e, Exists):
            return f"{self.kw('EXISTS')} ({self.query(e.query)})"
        if isinstance(e, ScalarSubquery):
            return f"({self.query(e.query)})"
        if isinstance(e, Case):
            return self.case(e)
        if isinstance(e, Paren):
            return f"({self.expr(e.expr)})"
        if isinstance(e, Subscript):
            if self.mode == "sqlite":
                raise UnsupportedSqlError(
                    "array subscripts are not supported by the embedded engine")
            return f"{self.expr(e.operand)}{e.index_text}"
        raise TypeError(f"cannot render expression node {type(e).__name__}")

    def func_call(self, e: FuncCall) -> str:
        name = ".".join(_ident(p, True) for p in e.parts)
        inner = ""
        if e.distinct:
            inner += self.kw("DISTINCT") + " "
        if e.star:
            inner += "*"
        else:
            inner += ", ".join(self.expr(a) for a in e.args)
        if e.agg_order_text:
            inner += " " + e.agg_order_text
        out = f"{name}({inner})"
        if e.filter_where is not None:
            out += f" {self.kw('FILTER')} ({self.kw('WHERE')} {self.expr(e.filter_where)})"
        if e.over_text:
            out += " " + e.over_text
        return out

    def cast(self, e: Cast) -> str:
        operand = self.expr(e.operand)
        if self.mode == "normalized":
            return f"{operand}::{e.type_text.lower()}"
        base = e.type_text.lower()
        base = re.sub(r"\(.*?\)", "", base).replace("[]", "").strip()
        if base.startswith("geography"):
            return f"st_togeography({operand})"
        if base.startswith("geometry"):
            return f"st_togeometry({operand})"
        if base in _SQLITE_DATETIME_FUNCS:
            return f"{_SQLITE_DATETIME_FUNCS[base]}({operand})"
        affinity = _SQLITE_AFFINITY.get(base)
        if affinity is None:
            raise UnsupportedSqlError(
                f"cast to {e.type_text} is not supported by the embedded engine")
        return f"CAST({operand} AS {affinity})"

    def binary(self, e: Binary) -> str:
        op = e.op
        if self.mode == "sqlite":
            if op == "ILIKE":
                op = "LIKE"
            elif op == "NOT ILIKE":
                op = "NOT LIKE"
            elif op == "IS DISTINCT FROM":
                op = "IS NOT"
            elif op == "IS NOT DISTINCT FROM":
                op = "IS"
            elif op == "^":
                return f"pow({self.expr(e.left)}, {self.expr(e.right)})"
            elif op in ("~", "~*", "!~", "!~*", "SIMILAR TO", "NOT SIMILAR TO"):
                raise UnsupportedSqlError(
                    f"operator {e.op} is not supported by the embedded engine")
            elif op == "~~":
                op = "LIKE"
            elif op == "!~~":
                op = "NOT LIKE"
            elif op in ("~~*", "!~~*"):
                op = "LIKE" if op == "~~*" else "NOT LIKE"
        rendered = op.lower() if op[0].isalpha() and self.mode == "normalized" else op
        return f"{self.expr(e.left)} {rendered} {self.expr(e.right)}"

    def case(self, e: Case) -> str:
        parts = [self.kw("CASE")]
        if e.operand is not None:
            parts.append(self.expr(e.operand))
        for cond, result in e.whens:
            parts.append(f"{self.kw('WHEN')} {self.expr(cond)} {self.kw('THEN')} {self.expr(result)}")
        if e.else_ is not None:
            parts.append(f"{self.kw('ELSE')} {self.expr(e.else_)}")
        parts.append(self.kw("END"))
        return " ".join(parts)

    # -- queries -----------------------------------------------------------

    def query(self, q: Query) -> str:
        parts: list[str] = []
        if q.ctes:
            rendered = []
            for cte in q.ctes:
                rendered.append(self.cte(cte))
            parts.append(self.kw("WITH") + " " + ", ".join(rendered))
        parts.append(self.body(q.body))
        if q.order_by:
            items = ", ".join(self.order_item(o) for o in q.order_by)
            parts.append(f"{self.kw('ORDER')} {self.kw('BY')} {items}")
        if q.limit is not None:
            parts.append(f"{self.kw('LIMIT')} {self.expr(q.limit)}")
        elif q.limit_all and self.mode == "normalized":
            parts.append(f"{self.kw('LIMIT')} {self.kw('ALL')}")
        if q.offset is not None:
            parts.append(f"{self.kw('OFFSET')} {self.expr(q.offset)}")
        if q.locking:
            if self.mode == "sqlite":
                raise UnsupportedSqlError(
                    "locking clauses are not supported by the embedded engine")
            parts.append(" ".join(lock.lower() for lock in q.locking))
        return " ".join(parts)

    def cte(self, cte: Cte) -> str:
        if cte.query is None:
            raise UnsupportedSqlError("data-modifying WITH clauses cannot be rendered")
        name = cte.name
        if self.lower_idents and _BARE_IDENT.match(name.lower()):
            name = name.lower()
        cols = f" ({', '.join(quote_ident(c) for c in cte.columns)})" if cte.columns else ""
        return f"{quote_ident(name)}{cols} {self.kw('AS')} ({self.query(cte.query)})"

    def body(self, body: QueryBody) -> str:
        if isinstance(body, SelectCore):
            return self.select_core(body)
        if isinstance(body, Values):
            rows = ", ".join("(" + ", ".join(self.expr(e) for e in row) + ")" for row in body.rows)
            return f"{self.kw('VALUES')} {rows}"
        if isinstance(body, SetOp):
            op = self.kw(body.op) + (f" {self.kw('ALL')}" if body.all else "")
            return f"{self.body(body.left)} {op} {self.body(body.right)}"
        if isinstance(body, Query):
            return f"({self.query(body)})"
        raise TypeError(f"cannot render query body {type(body).__name__}")

    def select_core(self, core: SelectCore) -> str:
        parts = [self.kw("SELECT")]
        if core.distinct_on:
            if self.mode == "sqlite":
                raise UnsupportedSqlError(
                    "DISTINCT ON is not supported by the embedded engine")
            exprs = ", ".join(self.expr(e) for e in core.distinct_on)
            parts.append(f"{self.kw('DISTINCT')} {self.kw('ON')} ({exprs})")
        elif core.distinct:
            parts.append(self.kw("DISTINCT"))
        parts.append(", ".join(self.select_item(i) for i in core.items))
        if core.into_table:
            if self.mode == "sqlite":
                raise UnsupportedSqlError(
                    "SELECT INTO is not supported by the embedded engine")
            parts.append(f"{self.kw('INTO')} {core.into_table}")
        if core.from_clause:
            tables = ", ".join(self.table_expr(t) for t in core.from_clause)
            parts.append(f"{self.kw('FROM')} {tables}")
        if core.where is not None:
            parts.append(f"{self.kw('WHERE')} {self.expr(core.where)}")
        if core.group_by:
            exprs = ", ".join(self.expr(e) for e in core.group_by)
            parts.append(f"{self.kw('GROUP')} {self.kw('BY')} {exprs}")
        if core.having is not None:
            parts.append(f"{self.kw('HAVING')} {self.expr(core.having)}")
        if core.window_text:
            parts.append(core.window_text)
        return " ".join(parts)

    def select_item(self, item: SelectItem) -> str:
        out = self.expr(item.expr)
        if item.alias:
            out += f" {self.kw('AS')} {quote_ident(item.alias)}"
        return out

    def table_expr(self, t: TableExpr) -> str:
        if isinstance(t, TableRef):
            name = ".".join(_ident(p, self.lower_idents) for p in t.parts)
            if t.alias:
                name += f" {self.kw('AS')} {quote_ident(t.alias)}"
            return name
        if isinstance(t, SubqueryTable):
            out = f"({self.query(t.query)})"
            if t.alias:
                out += f" {self.kw('AS')} {quote_ident(t.alias)}"
                if t.column_aliases:
                    out += " (" + ", ".join(quote_ident(c) for c in t.column_aliases) + ")"
            return out
        if isinstance(t, FuncTable):
            out = self.func_call(t.func)
            if t.alias:
                out += f" {self.kw('AS')} {quote_ident(t.alias)}"
                if t.column_aliases:
                    out += " (" + ", ".join(quote_ident(c) for c in t.column_aliases) + ")"
            return out
        if isinstance(t, Join):
            left = self.table_expr(t.left)
            right = self.table_expr(t.right)
            if t.kind == "CROSS":
                return f"{left} {self.kw('CROSS')} {self.kw('JOIN')} {right}"
            kind = {"INNER": "INNER JOIN", "LEFT": "LEFT JOIN",
                    "RIGHT": "RIGHT JOIN", "FULL": "FULL JOIN"}[t.kind]
            kind = " ".join(self.kw(w) for w in kind.split())
            out = f"{left} {kind} {right}"
            if t.on is not None:
                out += f" {self.kw('ON')} {self.expr(t.on)}"
            elif t.using:
                out += f" {self.kw('USING')} ({', '.join(quote_ident(u) for u in t.using)})"
            return out
        raise TypeError(f"cannot render table expression {type(t).__name__}")

    def order_item(self, item: OrderItem) -> str:
        out = self.expr(item.expr)
        if item.direction:
            out += f" {self.kw(item.direction)}"
        if item.nulls:
            out += f" {self.kw('NULLS')} {self.kw(item.nulls)}"
        return out


def render_expr(e: Expr, mode: str = "normalized") -> str:
    return _Renderer(mode).expr(e)


def render_query(q: Query, mode: str = "normalized") -> str:
    return _Renderer(mode).query(q)


def normalize_predicate(e: Expr) -> str:
    """Canonical text for a predicate: used in manifests and rule findings."""
    return render_expr(e, "normalized")
