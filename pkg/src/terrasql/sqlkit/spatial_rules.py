"""Static checks for spatial SQL mistakes.

The rules live in a data registry (data/spatial_rules.json) so the set of
predicates, measures and CRS lists can grow without code changes:

* R1 (error): a boolean spatial predicate used as a comparison operand,
  e.g. ``ST_DWithin(a, b) < 5000``.
* R2 (error): an areal or lineal measure applied to the wrong geometry
  class, e.g. ``ST_Area`` over points.
* R3 (warning): metric measurement on geometry in a geographic CRS (units
  come out in degrees) or in a flagged planar CRS such as Web Mercator.
* R4 (error): a binary spatial function over mixed SRIDs.
* R5 (warning): a spatial function over a geometry column with unknown or
  zero SRID.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional

from .nodes import (
    Between, Binary, Cast, ColumnRef, Expr, FuncCall, Literal, Paren,
    TableRef, Unary,
)
from .parser import parse_sql
from .render import render_expr
from .walk import walk
from ..errors import SqlParseError

_CLASS_BY_SUBTYPE = {
    "POINT": "puntal", "MULTIPOINT": "puntal",
    "LINESTRING": "lineal", "MULTILINESTRING": "lineal",
    "POLYGON": "areal", "MULTIPOLYGON": "areal",
}

_COMPARISON_OPS = {"=", "<", ">", "<=", ">=", "<>", "!=", "+", "-", "*", "/"}

_registry_cache: dict | None = None
_functions_cache: list[dict] | None = None


def rule_registry() -> dict:
    global _registry_cache
    if _registry_cache is None:
        raw = resources.files("terrasql.data").joinpath("spatial_rules.json").read_text()
        _registry_cache = json.loads(raw)
    return _registry_cache


def function_registry() -> list[dict]:
    """The documented spatial function corpus."""
    global _functions_cache
    if _functions_cache is None:
        raw = resources.files("terrasql.data").joinpath("postgis_functions.json").read_text()
        _functions_cache = json.loads(raw)["functions"]
    return _functions_cache


@dataclass(frozen=True)
class GeometryColumn:
    table: str
    column: str
    subtype: str  # POINT, MULTIPOLYGON, ... or GEOMETRY when mixed
    srid: Optional[int]

    def geometry_class(self) -> Optional[str]:
        return _CLASS_BY_SUBTYPE.get(self.subtype.upper())


@dataclass(frozen=True)
class SpatialFinding:
    rule_id: str  # "R1".."R5"
    severity: str  # "error" | "warning"
    location: str  # normalized text of the offending expression
    message: str
    suggested_fix: str


@dataclass
class _GeomInfo:
    srid: Optional[int]  # None = unknown
    klass: Optional[str]  # puntal | lineal | areal | None
    is_geography: bool
    column: Optional[tuple[str, str]]  # source (table, column) when direct


def check_spatial_rules(
    sql: str, geometry_columns: Iterable[GeometryColumn]
) -> list[SpatialFinding]:
    """Run R1-R5 over one statement. Unparseable input yields no findings;
    the classifier rejects it long before rules matter."""
    try:
        statements = parse_sql(sql)
    except SqlParseError:
        return []
    registry = rule_registry()
    geom_map = {(g.table.lower(), g.column.lower()): g for g in geometry_columns}

    aliases: dict[str, str] = {}
    tables: set[str] = set()
    for stmt in statements:
        for node in walk(stmt):
            if isinstance(node, TableRef):
                aliases[node.binding_name()] = node.relation_name()
                tables.add(node.relation_name())

    checker = _Checker(registry, geom_map, aliases, tables)
    for stmt in statements:
        for node in walk(stmt):
            checker.visit(node)
    return checker.finish()


class _Checker:
    def __init__(self, registry: dict, geom_map: dict, aliases: dict[str, str],
                 tables: set[str]):
        self.registry = registry
        self.geom_map = geom_map
        self.aliases = aliases
        self.tables = tables
        self.findings: dict[tuple[str, str], SpatialFinding] = {}
        self.predicates = set(registry["predicates"])
        self.measures = registry["measures"]
        self.binary_funcs = set(registry["binary_geometry_functions"])
        self.distance_predicates = registry["distance_predicates"]
        self.geographic = set(registry["geographic_srids"])
        self.flagged_planar = {int(k): v for k, v in registry["flagged_planar_srids"].items()}
        self.class_transforms = registry["class_transforms"]

    def add(self, rule_id: str, severity: str, location: str, message: str, fix: str) -> None:
        key = (rule_id, location)
        if key not in self.findings:
            self.findings[key] = SpatialFinding(rule_id, severity, location, message, fix)

    def finish(self) -> list[SpatialFinding]:
        order = {"error": 0, "warning": 1}
        return sorted(self.findings.values(),
                      key=lambda f: (order[f.severity], f.rule_id, f.location))

    # -- resolution --------------------------------------------------------

    def resolve_column(self, ref: ColumnRef) -> Optional[GeometryColumn]:
        parts = ref.normalized()
        column = parts[-1]
        if len(parts) > 1:
            table = self.aliases.get(parts[-2], parts[-2])
            return self.geom_map.get((table, column))
        for table in self.tables:
            hit = self.geom_map.get((table, column))
            if hit is not None:
                return hit
        return None

    def geom_info(self, expr: Expr) -> Optional[_GeomInfo]:
        """Effective SRID/class of a geometry-valued expression, if known."""
        e = expr
        while isinstance(e, Paren):
            e = e.expr
        if isinstance(e, Cast):
            inner = self.geom_info(e.operand)
            base = e.type_text.lower()
            if base.startswith("geography"):
                if inner is None:
                    return _GeomInfo(srid=None, klass=None, is_geography=True, column=None)
                return _GeomInfo(inner.srid, inner.klass, True, inner.column)
            if base.startswith("geometry"):
                return inner
            return inner
        if isinstance(e, ColumnRef):
            geom = self.resolve_column(e)
            if geom is None:
                return None
            return _GeomInfo(geom.srid, geom.geometry_class(), False,
                             (geom.table.lower(), geom.column.lower()))
        if isinstance(e, FuncCall):
            name = e.name()
            if name in ("st_transform", "st_setsrid") and e.args:
                inner = self.geom_info(e.args[0])
                srid = _int_literal(e.args[1]) if len(e.args) > 1 else None
                if inner is None:
                    inner = _GeomInfo(None, None, False, None)
                return _GeomInfo(srid, inner.klass, inner.is_geography, inner.column)
            if name in ("st_makepoint", "st_point"):
                srid = _int_literal(e.args[2]) if len(e.args) > 2 else 0
                return _GeomInfo(srid, "puntal", False, None)
            if name in ("st_geomfromtext", "st_geomfromewkt"):
                srid = _int_literal(e.args[1]) if len(e.args) > 1 else None
                return _GeomInfo(srid, None, False, None)
            if name == "st_geogfromtext":
                return _GeomInfo(4326, None, True, None)
            if name in self.class_transforms:
                inner = self.geom_info(e.args[0]) if e.args else None
                klass = self.class_transforms[name]
                if inner is None:
                    return _GeomInfo(None, klass, False, None)
                return _GeomInfo(inner.srid, klass or inner.klass,
                                 inner.is_geography, inner.column)
            if name in self.binary_funcs or name in self.measures:
                return None
            # Unknown function: pass the first argument's geometry through.
            if e.args:
                return self.geom_info(e.args[0])
        return None

    # -- rules -------------------------------------------------------------

    def visit(self, node) -> None:
        if isinstance(node, Binary):
            self.check_r1(node)
        if isinstance(node, FuncCall):
            name = node.name()
            if name in self.measures:
                self.check_r2(node, name)
                self.check_r3(node, name)
            if name in self.binary_funcs:
                self.check_r4(node, name)
            if name in self.predicates or name in self.measures or name in self.class_transforms:
                self.check_r5(node)

    def check_r1(self, node: Binary) -> None:
        if node.op not in _COMPARISON_OPS:
            return
        for side, other in ((node.left, node.right), (node.right, node.left)):
            call = side
            while isinstance(call, Paren):
                call = call.expr
            if not isinstance(call, FuncCall) or call.name() not in self.predicates:
                continue
            name = call.name()
            location = render_expr(node)
            spec = self.distance_predicates.get(name)
            lit = _number_text(other)
            if spec and lit is not None:
                canonical = spec["canonical"]
                args = ", ".join(render_expr(a) for a in call.args[:2])
                fix = (f"pass the distance as argument {spec['distance_arg']}: "
                       f"{canonical}({args}, {lit})")
            else:
                canonical = _canonical_name(name)
                fix = f"use the boolean result of {canonical} directly as the condition"
            self.add("R1", "error", location,
                     f"{_canonical_name(name)} returns a boolean; comparing it with "
                     f"{node.op!r} does not express a distance or size test", fix)

    def check_r2(self, node: FuncCall, name: str) -> None:
        classes = self.measures[name].get("classes") or []
        if not classes or not node.args:
            return
        info = self.geom_info(node.args[0])
        if info is None or info.klass is None:
            return
        if info.klass not in classes:
            canonical = self.measures[name]["canonical"]
            location = render_expr(node)
            self.add("R2", "error", location,
                     f"{canonical} expects {' or '.join(classes)} geometry but the "
                     f"argument is {info.klass}",
                     f"apply {canonical} to a polygonal column, or buffer the "
                     f"geometry first if an area around it is intended")

    def check_r3(self, node: FuncCall, name: str) -> None:
        spec = self.measures[name]
        geometry_args = node.args[:2] if name in self.binary_funcs else node.args[:1]
        for arg in geometry_args:
            info = self.geom_info(arg)
            if info is None or info.is_geography or info.srid is None:
                continue
            location = render_expr(node)
            canonical = spec["canonical"]
            if info.srid in self.geographic:
                self.add("R3", "warning", location,
                         f"{canonical} over geometry in geographic CRS (EPSG:{info.srid}) "
                         f"returns degrees, not meters",
                         f"cast the argument to geography ({render_expr(arg)}::geography) "
                         f"or transform to a metric CRS first")
            elif info.srid in self.flagged_planar:
                why = self.flagged_planar[info.srid]
                self.add("R3", "warning", location,
                         f"{canonical} over EPSG:{info.srid}: {why}",
                         "cast to geography or use an equal-area projection "
                         "such as EPSG:6933 for area work")

    def check_r4(self, node: FuncCall, name: str) -> None:
        infos = [self.geom_info(a) for a in node.args[:2]]
        srids = [i.srid for i in infos if i is not None and i.srid is not None]
        if len(srids) == 2 and srids[0] != srids[1]:
            location = render_expr(node)
            self.add("R4", "error", location,
                     f"{_canonical_name(name)} mixes SRID {srids[0]} with SRID {srids[1]}",
                     f"transform one side first, e.g. ST_Transform(..., {srids[0]})")

    def check_r5(self, node: FuncCall) -> None:
        for arg in node.args:
            info = self.geom_info(arg)
            if info is None or info.column is None:
                continue
            if info.srid is None or info.srid == 0:
                table, column = info.column
                self.add("R5", "warning", f"{table}.{column}",
                         f"geometry column {table}.{column} has no usable SRID "
                         f"(unknown or zero); spatial results are unreliable",
                         "set the column SRID in the database, or wrap references "
                         "in ST_SetSRID(...) with the correct CRS")


def _int_literal(expr: Expr) -> Optional[int]:
    e = expr
    while isinstance(e, Paren):
        e = e.expr
    if isinstance(e, Literal) and e.kind == "number":
        try:
            return int(e.text)
        except ValueError:
            return None
    return None


def _number_text(expr: Expr) -> Optional[str]:
    e = expr
    while isinstance(e, Paren):
        e = e.expr
    if isinstance(e, Unary) and e.op in ("-", "+") and isinstance(e.operand, Literal):
        if e.operand.kind == "number":
            return e.op + e.operand.text
        return None
    if isinstance(e, Literal) and e.kind == "number":
        return e.text
    return None


def _canonical_name(lower_name: str) -> str:
    for entry in function_registry():
        if entry["name"].lower() == lower_name:
            return entry["name"]
    return lower_name
