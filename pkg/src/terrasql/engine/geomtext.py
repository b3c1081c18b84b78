"""Geometry value encoding for the embedded engine.

Geometries travel through SQLite as extended WKT strings:

    SRID=4326;POINT(-77.86 40.79)

Geography values carry a GEOG: prefix so registered functions can pick the
spherical code path:

    GEOG:SRID=4326;POINT(-77.86 40.79)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from shapely import wkt as _wkt
from shapely.geometry.base import BaseGeometry
from shapely.ops import transform as _shapely_transform

from . import geodesy

_GEOG_PREFIX = "GEOG:"


class GeometryValueError(ValueError):
    """A string in a geometry position was not valid (E)WKT."""


@dataclass
class GeoValue:
    geom: BaseGeometry
    srid: int  # 0 = unknown
    geography: bool = False

    def text(self) -> str:
        prefix = _GEOG_PREFIX if self.geography else ""
        srid_part = f"SRID={self.srid};" if self.srid else ""
        return f"{prefix}{srid_part}{self.geom.wkt}"

    def as_geography(self) -> "GeoValue":
        srid = self.srid or 4326
        if srid != 4326:
            raise GeometryValueError(
                f"geography only supports lon/lat (SRID 4326), got SRID {srid}")
        return GeoValue(self.geom, srid, geography=True)

    def as_geometry(self) -> "GeoValue":
        return GeoValue(self.geom, self.srid, geography=False)

    def transformed(self, target_srid: int) -> "GeoValue":
        if self.srid == target_srid:
            return self
        src = self.srid or 0
        if not geodesy.supported_transform(src, target_srid):
            raise GeometryValueError(
                f"transform from SRID {src} to SRID {target_srid} "
                f"is not supported by the embedded engine")
        moved = _shapely_transform(
            lambda x, y, z=None: geodesy.transform_point(x, y, src, target_srid),
            self.geom,
        )
        return GeoValue(moved, target_srid, self.geography)


def parse_geo(value: object) -> Optional[GeoValue]:
    """Parse a database value into a GeoValue. None passes through as None."""
    if value is None:
        return None
    if isinstance(value, GeoValue):
        return value
    if not isinstance(value, (str, bytes)):
        raise GeometryValueError(f"expected geometry text, got {type(value).__name__}")
    text = value.decode() if isinstance(value, bytes) else value
    geography = False
    if text.startswith(_GEOG_PREFIX):
        geography = True
        text = text[len(_GEOG_PREFIX):]
    srid = 0
    if text.upper().startswith("SRID="):
        head, sep, rest = text.partition(";")
        if not sep:
            raise GeometryValueError(f"malformed EWKT: {text[:40]!r}")
        try:
            srid = int(head[5:])
        except ValueError as exc:
            raise GeometryValueError(f"malformed SRID in {head!r}") from exc
        text = rest
    try:
        geom = _wkt.loads(text)
    except Exception as exc:
        raise GeometryValueError(f"parse error - invalid geometry: {text[:40]!r}") from exc
    return GeoValue(geom=geom, srid=srid, geography=geography)


def make_point(x: float, y: float, srid: int = 0) -> GeoValue:
    from shapely.geometry import Point

    return GeoValue(Point(x, y), srid)
