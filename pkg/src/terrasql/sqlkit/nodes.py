"""AST node types. Every node keeps the character span it covers in the
original statement text so rewrites can splice edits without re-rendering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


@dataclass
class Node:
    start: int = field(default=0, kw_only=True)
    end: int = field(default=0, kw_only=True)


# --------------------------------------------------------------------------
# Expressions


@dataclass
class Literal(Node):
    text: str
    kind: str  # "string" | "number" | "null" | "bool"


@dataclass
class TypedLiteral(Node):
    """Literals like INTERVAL '1 day' or DATE '2020-01-01'."""

    type_word: str
    text: str


@dataclass
class Param(Node):
    text: str


@dataclass
class ColumnRef(Node):
    parts: list[str]  # as written; quoted parts keep their quotes
    quoted: list[bool]

    def normalized(self) -> list[str]:
        out = []
        for part, q in zip(self.parts, self.quoted):
            out.append(part[1:-1].replace('""', '"') if q else part.lower())
        return out


@dataclass
class Star(Node):
    qualifier: list[str]  # empty for bare *


@dataclass
class FuncCall(Node):
    parts: list[str]  # possibly schema-qualified name, as written
    args: list["Expr"]
    distinct: bool = False
    star: bool = False
    filter_where: Optional["Expr"] = None
    over_text: Optional[str] = None  # raw OVER (...) clause, kept verbatim
    agg_order_text: Optional[str] = None  # raw ORDER BY inside the call

    def name(self) -> str:
        last = self.parts[-1]
        if last.startswith('"'):
            last = last[1:-1].replace('""', '"')
        return last.lower()


@dataclass
class Cast(Node):
    operand: "Expr"
    type_text: str  # as written, e.g. "geography" or "numeric(10, 2)"


@dataclass
class Unary(Node):
    op: str  # canonical upper: "-", "+", "NOT"
    operand: "Expr"


@dataclass
class Binary(Node):
    op: str  # canonical upper: "=", "AND", "LIKE", "NOT ILIKE", ...
    left: "Expr"
    right: "Expr"


@dataclass
class IsTest(Node):
    operand: "Expr"
    negated: bool
    target: str  # "NULL" | "TRUE" | "FALSE" | "UNKNOWN"


@dataclass
class Between(Node):
    operand: "Expr"
    low: "Expr"
    high: "Expr"
    negated: bool


@dataclass
class InList(Node):
    operand: "Expr"
    items: list["Expr"]
    negated: bool


@dataclass
class InSubquery(Node):
    operand: "Expr"
    query: "Query"
    negated: bool


@dataclass
class Exists(Node):
    query: "Query"


@dataclass
class ScalarSubquery(Node):
    query: "Query"


@dataclass
class Case(Node):
    operand: Optional["Expr"]
    whens: list[tuple["Expr", "Expr"]]
    else_: Optional["Expr"]


@dataclass
class Paren(Node):
    expr: "Expr"


@dataclass
class Subscript(Node):
    operand: "Expr"
    index_text: str  # raw "[...]" source, kept verbatim


Expr = Union[
    Literal, TypedLiteral, Param, ColumnRef, Star, FuncCall, Cast, Unary,
    Binary, IsTest, Between, InList, InSubquery, Exists, ScalarSubquery,
    Case, Paren, Subscript,
]


# --------------------------------------------------------------------------
# Table expressions


@dataclass
class TableRef(Node):
    parts: list[str]
    quoted: list[bool]
    alias: Optional[str] = None

    def relation_name(self) -> str:
        last, q = self.parts[-1], self.quoted[-1]
        return last[1:-1].replace('""', '"') if q else last.lower()

    def binding_name(self) -> str:
        return self.alias.lower() if self.alias else self.relation_name()


@dataclass
class SubqueryTable(Node):
    query: "Query"
    alias: Optional[str] = None
    column_aliases: list[str] = field(default_factory=list)


@dataclass
class FuncTable(Node):
    func: FuncCall
    alias: Optional[str] = None
    column_aliases: list[str] = field(default_factory=list)


@dataclass
class Join(Node):
    left: "TableExpr"
    right: "TableExpr"
    kind: str  # "INNER" | "LEFT" | "RIGHT" | "FULL" | "CROSS"
    on: Optional[Expr] = None
    using: list[str] = field(default_factory=list)


TableExpr = Union[TableRef, SubqueryTable, FuncTable, Join]


# --------------------------------------------------------------------------
# Queries


@dataclass
class SelectItem(Node):
    expr: Expr
    alias: Optional[str] = None


@dataclass
class SelectCore(Node):
    items: list[SelectItem]
    from_clause: list[TableExpr]
    where: Optional[Expr] = None
    group_by: list[Expr] = field(default_factory=list)
    having: Optional[Expr] = None
    distinct: bool = False
    distinct_on: list[Expr] = field(default_factory=list)
    into_table: Optional[str] = None  # SELECT ... INTO creates a table
    window_text: Optional[str] = None  # raw WINDOW clause, kept verbatim


@dataclass
class Values(Node):
    rows: list[list[Expr]]


@dataclass
class SetOp(Node):
    op: str  # "UNION" | "INTERSECT" | "EXCEPT"
    all: bool
    left: "QueryBody"
    right: "QueryBody"


QueryBody = Union[SelectCore, Values, SetOp, "Query"]


@dataclass
class OrderItem(Node):
    expr: Expr
    direction: Optional[str] = None  # "ASC" | "DESC"
    nulls: Optional[str] = None  # "FIRST" | "LAST"


@dataclass
class Cte(Node):
    name: str
    columns: list[str]
    query: Optional["Query"]  # None when the body is data-modifying
    dml_kind: Optional[str] = None  # "insert" | "update" | "delete"


@dataclass
class Query(Node):
    ctes: list[Cte]
    body: QueryBody
    order_by: list[OrderItem] = field(default_factory=list)
    limit: Optional[Expr] = None  # None when absent; Literal "ALL" normalized away
    limit_all: bool = False
    offset: Optional[Expr] = None
    locking: list[str] = field(default_factory=list)  # e.g. ["FOR UPDATE"]


# --------------------------------------------------------------------------
# Statements


@dataclass
class SelectStatement(Node):
    query: Query


@dataclass
class ExplainStatement(Node):
    analyze: bool
    body: "Statement"


@dataclass
class DmlStatement(Node):
    kind: str  # "insert" | "update" | "delete"
    ctes: list[Cte] = field(default_factory=list)


@dataclass
class DdlStatement(Node):
    kind: str  # "ddl_create" | "ddl_alter" | "ddl_drop"


@dataclass
class OtherStatement(Node):
    first_word: str


Statement = Union[SelectStatement, ExplainStatement, DmlStatement, DdlStatement, OtherStatement]
