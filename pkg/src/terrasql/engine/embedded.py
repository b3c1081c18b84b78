"""Embedded spatial database: SQLite plus registered geometry functions.

The engine accepts PostgreSQL-dialect SQL (parsed and re-rendered through
sqlkit), stores geometries as EWKT text and answers the spatial function
calls the sandbox data needs. Error messages are translated to the wording a
PostgreSQL client would see, so the review loop exercises realistic repair
paths.
"""

from __future__ import annotations

import json
import re
import sqlite3
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from shapely.geometry import mapping as _geo_mapping
from shapely.ops import nearest_points as _nearest_points
from shapely.validation import explain_validity as _explain_validity
from shapely.validation import make_valid as _make_valid

from . import geodesy
from .geomtext import GeometryValueError, GeoValue, make_point, parse_geo
from ..errors import ExecutionError, GatewayConnectError, UnsupportedSqlError
from ..sqlkit import parse_sql
from ..sqlkit.nodes import ExplainStatement, SelectStatement
from ..sqlkit.render import render_query

_GEOMETRY_DECL = re.compile(r"(GEOMETRY|GEOGRAPHY)\s*\(\s*(\w+)\s*,\s*(\d+)\s*\)", re.I)


@dataclass
class ColumnMeta:
    name: str
    declared_type: str
    not_null: bool
    is_pk: bool
    default_value: Optional[str] = None

    def geometry_subtype(self) -> Optional[str]:
        m = _GEOMETRY_DECL.search(self.declared_type or "")
        return m.group(2).upper() if m else None

    def geometry_srid(self) -> Optional[int]:
        m = _GEOMETRY_DECL.search(self.declared_type or "")
        return int(m.group(3)) if m else None


@dataclass
class ForeignKeyMeta:
    column: str
    ref_table: str
    ref_column: str


@dataclass
class IndexMeta:
    name: str
    columns: list[str]
    unique: bool


@dataclass
class TableMeta:
    name: str
    columns: list[ColumnMeta]
    foreign_keys: list[ForeignKeyMeta] = field(default_factory=list)
    indexes: list[IndexMeta] = field(default_factory=list)

    @property
    def primary_key(self) -> list[str]:
        return [c.name for c in self.columns if c.is_pk]


class _UdfErrorBox:
    """Carries the real message of a failed registered function.

    sqlite3 collapses any exception raised inside a user function into
    'user-defined function raised exception'; the box preserves the text.
    """

    def __init__(self) -> None:
        self.message: Optional[str] = None

    def set(self, message: str) -> None:
        if self.message is None:
            self.message = message

    def take(self) -> Optional[str]:
        message, self.message = self.message, None
        return message


class EmbeddedEngine:
    """One SQLite connection with the spatial function set installed."""

    def __init__(self, path: str = ":memory:"):
        try:
            # callers serialize access behind the gateway lock, so the
            # connection may move between server worker threads
            self._conn = sqlite3.connect(path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise GatewayConnectError(f"cannot open database at {path}: {exc}") from exc
        self._conn.row_factory = None
        self._error_box = _UdfErrorBox()
        self._deadline: Optional[float] = None
        self._register_functions()
        self._conn.execute("PRAGMA foreign_keys = ON")

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        self._conn.close()

    def executescript_raw(self, script: str) -> None:
        """Run a seeding script. Only for trusted setup code."""
        self._conn.executescript(script)
        self._conn.commit()

    def freeze(self) -> None:
        """Make the connection read-only at the storage layer."""
        self._conn.execute("PRAGMA query_only = ON")

    # -- catalog -----------------------------------------------------------

    def tables(self) -> list[str]:
        rows = self._conn.execute(
            "SELECT name FROM sqlite_master WHERE type = 'table' "
            "AND name NOT LIKE 'sqlite_%' ORDER BY name").fetchall()
        return [r[0] for r in rows]

    def table_meta(self, table: str) -> TableMeta:
        if table not in self.tables():
            raise ExecutionError(f'relation "{table}" does not exist', table)
        cols = []
        for _, name, decl, notnull, dflt, pk in self._conn.execute(
                f"PRAGMA table_info({_q(table)})"):
            cols.append(ColumnMeta(name=name, declared_type=decl or "",
                                   not_null=bool(notnull), is_pk=bool(pk),
                                   default_value=dflt))
        fks = [
            ForeignKeyMeta(column=row[3], ref_table=row[2], ref_column=row[4] or "id")
            for row in self._conn.execute(f"PRAGMA foreign_key_list({_q(table)})")
        ]
        indexes = []
        for row in self._conn.execute(f"PRAGMA index_list({_q(table)})"):
            index_name, unique = row[1], bool(row[2])
            cols_in_index = [
                r[2] for r in self._conn.execute(f"PRAGMA index_info({_q(index_name)})")
                if r[2] is not None
            ]
            indexes.append(IndexMeta(name=index_name, columns=cols_in_index, unique=unique))
        return TableMeta(name=table, columns=cols, foreign_keys=fks, indexes=indexes)

    def row_count(self, table: str) -> int:
        if table not in self.tables():
            raise ExecutionError(f'relation "{table}" does not exist', table)
        return self._conn.execute(f"SELECT count(*) FROM {_q(table)}").fetchone()[0]

    # -- execution -----------------------------------------------------------

    def execute_select(
        self, sql: str, timeout_ms: Optional[int] = None
    ) -> tuple[list[str], list[tuple]]:
        """Run one PostgreSQL-dialect read statement.

        Returns (column names, rows). Raises ExecutionError with a
        server-flavored message on any failure.
        """
        try:
            statements = parse_sql(sql)
        except Exception as exc:
            raise ExecutionError(f"syntax error: {exc}", sql) from exc
        if len(statements) != 1:
            raise ExecutionError("cannot execute multiple statements", sql)
        stmt = statements[0]
        if isinstance(stmt, ExplainStatement):
            if not isinstance(stmt.body, SelectStatement):
                raise ExecutionError("cannot explain a non-query statement", sql)
            rendered = "EXPLAIN QUERY PLAN " + render_query(stmt.body.query, "sqlite")
        elif isinstance(stmt, SelectStatement):
            try:
                rendered = render_query(stmt.query, "sqlite")
            except UnsupportedSqlError as exc:
                raise ExecutionError(str(exc), sql) from exc
        else:
            raise ExecutionError("only queries can be executed on this connection", sql)
        return self._run(rendered, sql, timeout_ms)

    def _run(
        self, rendered: str, original: str, timeout_ms: Optional[int]
    ) -> tuple[list[str], list[tuple]]:
        if timeout_ms is not None:
            self._deadline = time.monotonic() + timeout_ms / 1000.0
            self._conn.set_progress_handler(self._check_deadline, 2000)
        try:
            cursor = self._conn.execute(rendered)
            rows = cursor.fetchall()
            columns = [d[0] for d in cursor.description or []]
            return columns, rows
        except sqlite3.Error as exc:
            raise ExecutionError(self._translate_error(str(exc)), original) from exc
        finally:
            if timeout_ms is not None:
                self._conn.set_progress_handler(None, 0)
                self._deadline = None

    def _check_deadline(self) -> int:
        if self._deadline is not None and time.monotonic() > self._deadline:
            return 1
        return 0

    def _translate_error(self, message: str) -> str:
        boxed = self._error_box.take()
        if "user-defined function raised exception" in message and boxed:
            return boxed
        m = re.search(r"no such table: (\S+)", message)
        if m:
            return f'relation "{m.group(1)}" does not exist'
        m = re.search(r"no such column: (\S+)", message)
        if m:
            return f'column "{m.group(1)}" does not exist'
        m = re.search(r"ambiguous column name: (\S+)", message)
        if m:
            return f'column reference "{m.group(1)}" is ambiguous'
        m = re.search(r"no such function: (\w+)", message)
        if m:
            return f"function {m.group(1)} does not exist"
        m = re.search(r"wrong number of arguments to function st_dwithin\(\)", message)
        if m:
            return "function st_dwithin(geography, geography) does not exist"
        m = re.search(r"wrong number of arguments to function (\w+)\(\)", message)
        if m:
            return f"function {m.group(1)} does not exist with the given argument count"
        if "attempt to write a readonly database" in message:
            return "cannot execute a data-modifying statement in a read-only transaction"
        if "interrupted" in message:
            return "canceling statement due to statement timeout"
        return message

    # -- function registration ---------------------------------------------

    def _register_functions(self) -> None:
        box = self._error_box

        def guard(fn: Callable) -> Callable:
            def wrapper(*args):
                try:
                    return fn(*args)
                except Exception as exc:
                    box.set(str(exc))
                    raise
            return wrapper

        def register(name: str, narg: int, fn: Callable) -> None:
            self._conn.create_function(name, narg, guard(fn), deterministic=True)

        # IO and construction
        register("st_geomfromtext", 1, lambda w: _from_wkt(w, 0))
        register("st_geomfromtext", 2, _from_wkt)
        register("st_geomfromewkt", 1, lambda t: _text_of(parse_geo(t)))
        register("st_geogfromtext", 1, _st_geogfromtext)
        register("st_makepoint", 2, lambda x, y: _null_if_none(x, y) or make_point(x, y, 0).text())
        register("st_point", 2, lambda x, y: _null_if_none(x, y) or make_point(x, y, 0).text())
        register("st_setsrid", 2, _st_setsrid)
        register("st_srid", 1, _unary(lambda g: g.srid))
        register("st_togeography", 1, _unary(lambda g: g.as_geography().text()))
        register("st_togeometry", 1, _unary(lambda g: g.as_geometry().text()))
        register("st_astext", 1, _unary(lambda g: g.geom.wkt))
        register("st_asewkt", 1, _unary(lambda g: GeoValue(g.geom, g.srid).text()))
        register("st_asgeojson", 1, _unary(lambda g: json.dumps(_geo_mapping(g.geom))))

        # Accessors
        register("st_x", 1, _unary(lambda g: _point_coord(g, 0)))
        register("st_y", 1, _unary(lambda g: _point_coord(g, 1)))
        register("st_xmin", 1, _unary(lambda g: g.geom.bounds[0]))
        register("st_ymin", 1, _unary(lambda g: g.geom.bounds[1]))
        register("st_xmax", 1, _unary(lambda g: g.geom.bounds[2]))
        register("st_ymax", 1, _unary(lambda g: g.geom.bounds[3]))
        register("st_geometrytype", 1, _unary(lambda g: "ST_" + g.geom.geom_type))
        register("st_npoints", 1, _unary(lambda g: _count_points(g.geom)))
        register("st_numgeometries", 1, _unary(
            lambda g: len(g.geom.geoms) if hasattr(g.geom, "geoms") else 1))
        register("st_isempty", 1, _unary(lambda g: int(g.geom.is_empty)))

        # Predicates
        for name, prop in (
            ("st_intersects", "intersects"), ("st_contains", "contains"),
            ("st_within", "within"), ("st_touches", "touches"),
            ("st_crosses", "crosses"), ("st_overlaps", "overlaps"),
            ("st_equals", "equals"), ("st_disjoint", "disjoint"),
            ("st_covers", "covers"), ("st_coveredby", "covered_by"),
        ):
            register(name, 2, _predicate(name, prop))

        # Measures
        register("st_distance", 2, _st_distance)
        register("st_dwithin", 3, _st_dwithin)
        register("st_area", 1, _unary(_st_area))
        register("st_length", 1, _unary(_st_length))
        register("st_perimeter", 1, _unary(_st_perimeter))

        # Processing
        register("st_centroid", 1, _unary(
            lambda g: GeoValue(g.geom.centroid, g.srid, g.geography).text()))
        register("st_pointonsurface", 1, _unary(
            lambda g: GeoValue(g.geom.representative_point(), g.srid, g.geography).text()))
        register("st_envelope", 1, _unary(
            lambda g: GeoValue(g.geom.envelope, g.srid, g.geography).text()))
        register("st_convexhull", 1, _unary(
            lambda g: GeoValue(g.geom.convex_hull, g.srid, g.geography).text()))
        register("st_boundary", 1, _unary(
            lambda g: GeoValue(g.geom.boundary, g.srid, g.geography).text()))
        register("st_exteriorring", 1, _unary(_st_exterior_ring))
        register("st_startpoint", 1, _unary(lambda g: _line_end(g, 0)))
        register("st_endpoint", 1, _unary(lambda g: _line_end(g, -1)))
        register("st_buffer", 2, _st_buffer)
        register("st_union", 2, _binary_overlay("union"))
        register("st_intersection", 2, _binary_overlay("intersection"))
        register("st_difference", 2, _binary_overlay("difference"))
        register("st_transform", 2, _st_transform)

        # Validation
        register("st_isvalid", 1, _unary(lambda g: int(g.geom.is_valid)))
        register("st_isvalidreason", 1, _unary(lambda g: _explain_validity(g.geom)))
        register("st_makevalid", 1, _unary(
            lambda g: GeoValue(_make_valid(g.geom), g.srid, g.geography).text()))
        register("st_issimple", 1, _unary(lambda g: int(g.geom.is_simple)))
        register("st_isclosed", 1, _unary(
            lambda g: int(getattr(g.geom, "is_closed", False))))


def _q(ident: str) -> str:
    return '"' + ident.replace('"', '""') + '"'


# -- registered function bodies (module level so they stay picklable/plain) --


def _null_if_none(*args):
    return None if any(a is None for a in args) else False


def _from_wkt(wkt_text: object, srid: object) -> Optional[str]:
    if wkt_text is None:
        return None
    value = parse_geo(f"SRID={int(srid)};{wkt_text}" if srid else str(wkt_text))
    return value.text() if value else None


def _st_geogfromtext(wkt_text: object) -> Optional[str]:
    encoded = _from_wkt(wkt_text, 4326)
    if encoded is None:
        return None
    value = parse_geo(encoded)
    return value.as_geography().text() if value else None


def _text_of(value: Optional[GeoValue | str]) -> Optional[str]:
    if value is None:
        return None
    return value.text() if isinstance(value, GeoValue) else value


def _unary(fn: Callable[[GeoValue], object]) -> Callable:
    def wrapper(raw):
        value = parse_geo(raw)
        return None if value is None else fn(value)
    return wrapper


def _st_setsrid(raw, srid) -> Optional[str]:
    value = parse_geo(raw)
    if value is None or srid is None:
        return None
    return GeoValue(value.geom, int(srid), value.geography).text()


def _point_coord(value: GeoValue, index: int) -> float:
    if value.geom.geom_type != "Point":
        raise GeometryValueError("argument to st_x/st_y must be a point")
    return value.geom.coords[0][index]


def _count_points(geom) -> int:
    if geom.geom_type == "Point":
        return 1
    if hasattr(geom, "geoms"):
        return sum(_count_points(g) for g in geom.geoms)
    if geom.geom_type == "Polygon":
        return len(geom.exterior.coords) + sum(len(r.coords) for r in geom.interiors)
    return len(geom.coords)


def _align(name: str, a: GeoValue, b: GeoValue) -> tuple[GeoValue, GeoValue]:
    """Mimic the server: mixed SRIDs are an error; geography lifts both sides."""
    if a.srid and b.srid and a.srid != b.srid:
        raise GeometryValueError(
            f"{name}: Operation on mixed SRID geometries (SRID {a.srid} != SRID {b.srid})")
    if a.geography != b.geography:
        a, b = a.as_geography(), b.as_geography()
    return a, b


def _predicate(name: str, prop: str) -> Callable:
    def wrapper(raw_a, raw_b):
        a, b = parse_geo(raw_a), parse_geo(raw_b)
        if a is None or b is None:
            return None
        a, b = _align(name, a, b)
        return int(bool(getattr(a.geom, prop)(b.geom)))
    return wrapper


def _spherical_distance(a: GeoValue, b: GeoValue) -> float:
    if a.geom.intersects(b.geom):
        return 0.0
    pa, pb = _nearest_points(a.geom, b.geom)
    return geodesy.haversine_m(pa.x, pa.y, pb.x, pb.y)


def _st_distance(raw_a, raw_b) -> Optional[float]:
    a, b = parse_geo(raw_a), parse_geo(raw_b)
    if a is None or b is None:
        return None
    a, b = _align("st_distance", a, b)
    if a.geography:
        return _spherical_distance(a, b)
    return a.geom.distance(b.geom)


def _st_dwithin(raw_a, raw_b, distance) -> Optional[int]:
    a, b = parse_geo(raw_a), parse_geo(raw_b)
    if a is None or b is None or distance is None:
        return None
    a, b = _align("st_dwithin", a, b)
    if a.geography:
        return int(_spherical_distance(a, b) <= float(distance))
    return int(a.geom.distance(b.geom) <= float(distance))


def _st_area(value: GeoValue) -> float:
    if not value.geography:
        return value.geom.area
    total = 0.0
    geoms = value.geom.geoms if hasattr(value.geom, "geoms") else [value.geom]
    for geom in geoms:
        if geom.geom_type == "Polygon":
            total += geodesy.polygon_area_m2(
                list(geom.exterior.coords),
                [list(r.coords) for r in geom.interiors],
            )
    return total


def _st_length(value: GeoValue) -> float:
    if not value.geography:
        if value.geom.geom_type in ("Polygon", "MultiPolygon"):
            return 0.0  # length of areal geometry is zero, like the server
        return value.geom.length
    total = 0.0
    geoms = value.geom.geoms if hasattr(value.geom, "geoms") else [value.geom]
    for geom in geoms:
        if geom.geom_type == "LineString":
            total += geodesy.path_length_m(list(geom.coords))
    return total


def _st_perimeter(value: GeoValue) -> float:
    geoms = value.geom.geoms if hasattr(value.geom, "geoms") else [value.geom]
    total = 0.0
    for geom in geoms:
        if geom.geom_type != "Polygon":
            continue
        rings = [geom.exterior] + list(geom.interiors)
        for ring in rings:
            if value.geography:
                total += geodesy.path_length_m(list(ring.coords))
            else:
                total += ring.length
    return total


def _st_exterior_ring(value: GeoValue) -> Optional[str]:
    if value.geom.geom_type != "Polygon":
        return None
    from shapely.geometry import LineString

    return GeoValue(LineString(value.geom.exterior.coords), value.srid,
                    value.geography).text()


def _line_end(value: GeoValue, index: int) -> Optional[str]:
    if value.geom.geom_type != "LineString":
        return None
    from shapely.geometry import Point

    return GeoValue(Point(value.geom.coords[index]), value.srid, value.geography).text()


def _st_buffer(raw, distance) -> Optional[str]:
    value = parse_geo(raw)
    if value is None or distance is None:
        return None
    if value.geography:
        raise GeometryValueError(
            "st_buffer over geography is not supported by the embedded engine; "
            "buffer in a projected CRS instead")
    return GeoValue(value.geom.buffer(float(distance)), value.srid).text()


def _binary_overlay(op: str) -> Callable:
    def wrapper(raw_a, raw_b):
        a, b = parse_geo(raw_a), parse_geo(raw_b)
        if a is None or b is None:
            return None
        a, b = _align(f"st_{op}", a, b)
        result = getattr(a.geom, op)(b.geom)
        return GeoValue(result, a.srid, a.geography).text()
    return wrapper


def _st_transform(raw, srid) -> Optional[str]:
    value = parse_geo(raw)
    if value is None or srid is None:
        return None
    return value.transformed(int(srid)).text()
