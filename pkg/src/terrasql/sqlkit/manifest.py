"""Structural summary of a query: what it reads, filters, joins and returns.

The manifest is the contract the generation and review agents check against:
every claim in it is derived from the parse tree, never from string matching.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .nodes import (
    Binary, ColumnRef, Exists, Expr, FuncCall, FuncTable, InSubquery, Join,
    Literal, Node, Paren, Query, ScalarSubquery, SelectCore, SetOp,
    SubqueryTable, TableExpr, TableRef, Values,
)
from .parser import parse_single_query
from .render import render_expr
from .rewrite import AGGREGATE_FUNCS
from .walk import walk

_SPATIAL_CANONICAL: dict[str, str] = {}


def _spatial_canonical() -> dict[str, str]:
    if not _SPATIAL_CANONICAL:
        from .spatial_rules import function_registry

        for entry in function_registry():
            _SPATIAL_CANONICAL[entry["name"].lower()] = entry["name"]
    return _SPATIAL_CANONICAL


class SpatialCall(NamedTuple):
    name: str  # canonical capitalization where known
    args: tuple[str, ...]  # normalized argument texts

    @property
    def summary(self) -> str:
        return f"{len(self.args)} args"


class JoinEdge(NamedTuple):
    left: str
    right: str
    kind: str  # INNER | LEFT | RIGHT | FULL | CROSS
    condition: Optional[str]  # normalized ON text, None for CROSS/USING


@dataclass
class QueryManifest:
    tables: list[str] = field(default_factory=list)
    base_columns: list[tuple[str, str]] = field(default_factory=list)
    output_columns: list[tuple[str, Optional[str]]] = field(default_factory=list)
    predicates: list[str] = field(default_factory=list)
    joins: list[JoinEdge] = field(default_factory=list)
    aggregations: list[str] = field(default_factory=list)
    spatial_functions: list[SpatialCall] = field(default_factory=list)
    limit: Optional[int] = None


class _Scope:
    """FROM bindings visible at one query level."""

    def __init__(self, parent: Optional["_Scope"], cte_names: set[str]):
        self.parent = parent
        self.cte_names = cte_names
        self.bindings: dict[str, Optional[str]] = {}  # binding -> relation or None for derived

    def add_table(self, ref: TableRef) -> None:
        name = ref.relation_name()
        relation = None if name in self.cte_names else name
        self.bindings[ref.binding_name()] = relation

    def add_derived(self, alias: Optional[str]) -> None:
        if alias:
            self.bindings[alias.lower()] = None

    def resolve_qualified(self, qualifier: str) -> Optional[str]:
        scope: Optional[_Scope] = self
        while scope is not None:
            if qualifier in scope.bindings:
                return scope.bindings[qualifier]
            scope = scope.parent
        return None

    def sole_relation(self) -> Optional[str]:
        scope: Optional[_Scope] = self
        while scope is not None:
            real = [r for r in scope.bindings.values()]
            if real:
                if len(real) == 1:
                    return real[0]
                return None
            scope = scope.parent
        return None


class _Extractor:
    def __init__(self) -> None:
        self.tables: dict[str, None] = {}
        self.base_columns: dict[tuple[str, str], None] = {}
        self.predicates: list[str] = []
        self.joins: list[JoinEdge] = []
        self.aggregations: dict[str, None] = {}
        self.spatial: dict[SpatialCall, None] = {}

    # -- queries ---------------------------------------------------------

    def visit_query(self, query: Query, parent: Optional[_Scope], outer_ctes: set[str]) -> None:
        cte_names = set(outer_ctes)
        for cte in query.ctes:
            if cte.query is not None:
                self.visit_query(cte.query, None, cte_names)
            cte_names.add(cte.name.lower())
        scope = self.visit_body(query.body, parent, cte_names)
        alias_names = self._output_aliases(query.body)
        for item in query.order_by:
            self.visit_expr(item.expr, scope, skip_aliases=alias_names)
        if query.limit is not None:
            self.visit_expr(query.limit, scope)

    def visit_body(self, body, parent: Optional[_Scope], cte_names: set[str]) -> Optional[_Scope]:
        if isinstance(body, SelectCore):
            return self.visit_core(body, parent, cte_names)
        if isinstance(body, SetOp):
            self.visit_body(body.left, parent, cte_names)
            self.visit_body(body.right, parent, cte_names)
            return None
        if isinstance(body, Values):
            for row in body.rows:
                for expr in row:
                    self.visit_expr(expr, _Scope(parent, cte_names))
            return None
        if isinstance(body, Query):
            self.visit_query(body, parent, cte_names)
            return None
        return None

    def visit_core(self, core: SelectCore, parent: Optional[_Scope], cte_names: set[str]) -> _Scope:
        scope = _Scope(parent, cte_names)
        for t in core.from_clause:
            self._collect_bindings(t, scope, cte_names)
        alias_names = {i.alias.lower() for i in core.items if i.alias}
        for item in core.items:
            self.visit_expr(item.expr, scope)
        for t in core.from_clause:
            self._visit_table_expr(t, scope, cte_names)
        if core.where is not None:
            for predicate in _split_and(core.where):
                self.predicates.append(render_expr(predicate))
            self.visit_expr(core.where, scope)
        for expr in core.group_by:
            self.visit_expr(expr, scope, skip_aliases=alias_names)
        if core.having is not None:
            for predicate in _split_and(core.having):
                self.predicates.append(render_expr(predicate))
            self.visit_expr(core.having, scope, skip_aliases=alias_names)
        for expr in core.distinct_on:
            self.visit_expr(expr, scope, skip_aliases=alias_names)
        return scope

    def _collect_bindings(self, t: TableExpr, scope: _Scope, cte_names: set[str]) -> None:
        if isinstance(t, Join):
            self._collect_bindings(t.left, scope, cte_names)
            self._collect_bindings(t.right, scope, cte_names)
        elif isinstance(t, TableRef):
            scope.add_table(t)
            name = t.relation_name()
            if name not in cte_names:
                self.tables.setdefault(name, None)
        elif isinstance(t, (SubqueryTable, FuncTable)):
            scope.add_derived(t.alias)

    def _visit_table_expr(self, t: TableExpr, scope: _Scope, cte_names: set[str]) -> None:
        if isinstance(t, Join):
            self._visit_table_expr(t.left, scope, cte_names)
            self._visit_table_expr(t.right, scope, cte_names)
            condition = None
            if t.on is not None:
                condition = render_expr(t.on)
                self.visit_expr(t.on, scope)
            self.joins.append(JoinEdge(
                left=_leftmost_name(t.left),
                right=_leftmost_name(t.right),
                kind=t.kind,
                condition=condition,
            ))
        elif isinstance(t, SubqueryTable):
            self.visit_query(t.query, scope, cte_names)
        elif isinstance(t, FuncTable):
            self.visit_expr(t.func, scope)

    def _output_aliases(self, body) -> set[str]:
        core = body
        while isinstance(core, Query):
            core = core.body
        if isinstance(core, SetOp):
            core = core.left
            while isinstance(core, (SetOp, Query)):
                core = core.left if isinstance(core, SetOp) else core.body
        if isinstance(core, SelectCore):
            return {i.alias.lower() for i in core.items if i.alias}
        return set()

    # -- expressions -------------------------------------------------------

    def visit_expr(self, expr: Expr, scope: _Scope | None, skip_aliases: set[str] = frozenset()) -> None:
        for node in self._walk_local(expr, scope):
            if isinstance(node, ColumnRef):
                parts = node.normalized()
                if len(parts) == 1:
                    if parts[0] in skip_aliases:
                        continue
                    relation = scope.sole_relation() if scope else None
                    if relation:
                        self.base_columns.setdefault((relation, parts[0]), None)
                    continue
                qualifier, column = parts[-2], parts[-1]
                relation = scope.resolve_qualified(qualifier) if scope else qualifier
                if relation:
                    self.base_columns.setdefault((relation, column), None)
            elif isinstance(node, FuncCall):
                name = node.name()
                if name in AGGREGATE_FUNCS:
                    self.aggregations.setdefault(name, None)
                canonical = _spatial_canonical().get(name)
                if canonical or name.startswith("st_"):
                    args = tuple(render_expr(a) for a in node.args)
                    self.spatial.setdefault(SpatialCall(canonical or node.parts[-1], args), None)

    def _walk_local(self, expr: Expr, scope: _Scope | None):
        """Walk an expression left-to-right, descending into subqueries."""
        stack: list[Node] = [expr]
        while stack:
            node = stack.pop()
            if isinstance(node, (ScalarSubquery, Exists)):
                self.visit_query(node.query, scope, scope.cte_names if scope else set())
                continue
            if isinstance(node, InSubquery):
                stack.append(node.operand)
                self.visit_query(node.query, scope, scope.cte_names if scope else set())
                continue
            yield node
            children: list[Node] = []
            for f in dataclasses.fields(node):
                value = getattr(node, f.name)
                if isinstance(value, Node):
                    children.append(value)
                elif isinstance(value, (list, tuple)):
                    for item in value:
                        if isinstance(item, Node):
                            children.append(item)
                        elif isinstance(item, tuple):
                            children.extend(x for x in item if isinstance(x, Node))
            stack.extend(reversed(children))


def _split_and(expr: Expr) -> list[Expr]:
    node = expr
    while isinstance(node, Paren):
        node = node.expr
    if isinstance(node, Binary) and node.op == "AND":
        return _split_and(node.left) + _split_and(node.right)
    return [expr if not isinstance(expr, Paren) else node]


def _leftmost_name(t: TableExpr) -> str:
    while isinstance(t, Join):
        t = t.left
    if isinstance(t, TableRef):
        return t.relation_name()
    if isinstance(t, (SubqueryTable, FuncTable)) and t.alias:
        return t.alias.lower()
    return "(subquery)"


def extract_manifest(sql: str) -> QueryManifest:
    """Build a QueryManifest for a single SELECT-shaped statement."""
    query = parse_single_query(sql)
    extractor = _Extractor()
    extractor.visit_query(query, None, set())

    outputs: list[tuple[str, Optional[str]]] = []
    core = query.body
    while isinstance(core, Query):
        core = core.body
    while isinstance(core, SetOp):
        core = core.left
        while isinstance(core, Query):
            core = core.body
    if isinstance(core, SelectCore):
        for item in core.items:
            text = render_expr(item.expr)
            alias = item.alias
            if alias is None and isinstance(item.expr, ColumnRef):
                alias = item.expr.normalized()[-1]
            outputs.append((text, alias))

    limit: Optional[int] = None
    if isinstance(query.limit, Literal) and query.limit.kind == "number":
        try:
            limit = int(query.limit.text)
        except ValueError:
            limit = None

    return QueryManifest(
        tables=list(extractor.tables),
        base_columns=list(extractor.base_columns),
        output_columns=outputs,
        predicates=extractor.predicates,
        joins=extractor.joins,
        aggregations=list(extractor.aggregations),
        spatial_functions=list(extractor.spatial),
        limit=limit,
    )
