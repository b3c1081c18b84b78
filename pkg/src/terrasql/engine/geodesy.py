"""Spherical-earth math for the embedded engine.

Distances use the haversine formula on a mean-radius sphere. Areas use a
Lambert cylindrical equal-area projection and the shoelace formula, which is
exact on the sphere for straight projected edges. Both match the true
ellipsoid to well under a percent, plenty for an analytics sandbox.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

MEAN_EARTH_RADIUS_M = 6_371_008.8
WGS84_SEMI_MAJOR_M = 6_378_137.0

# Web Mercator clamps latitude so the projection stays finite.
_MERCATOR_MAX_LAT = 85.05112878


def haversine_m(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Great-circle distance in meters between two lon/lat points."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * MEAN_EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def path_length_m(coords: Sequence[tuple[float, float]]) -> float:
    """Length of a lon/lat path in meters."""
    total = 0.0
    for (lon1, lat1), (lon2, lat2) in zip(coords, coords[1:]):
        total += haversine_m(lon1, lat1, lon2, lat2)
    return total


def ring_area_m2(coords: Sequence[tuple[float, float]]) -> float:
    """Unsigned spherical area of a lon/lat ring in square meters."""
    if len(coords) < 4:
        return 0.0
    projected = [_equal_area(lon, lat) for lon, lat in coords]
    acc = 0.0
    for (x1, y1), (x2, y2) in zip(projected, projected[1:]):
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def _equal_area(lon: float, lat: float) -> tuple[float, float]:
    # Lambert cylindrical equal-area on the mean-radius sphere.
    return (
        MEAN_EARTH_RADIUS_M * math.radians(lon),
        MEAN_EARTH_RADIUS_M * math.sin(math.radians(lat)),
    )


def polygon_area_m2(
    exterior: Sequence[tuple[float, float]],
    holes: Iterable[Sequence[tuple[float, float]]] = (),
) -> float:
    area = ring_area_m2(exterior)
    for hole in holes:
        area -= ring_area_m2(hole)
    return max(area, 0.0)


# ---------------------------------------------------------------------------
# Coordinate transforms. The pairs below cover what the sandbox data uses:
# lon/lat (4326), Web Mercator (3857) and the global equal-area grid (6933).


def lonlat_to_web_mercator(lon: float, lat: float) -> tuple[float, float]:
    lat = max(-_MERCATOR_MAX_LAT, min(_MERCATOR_MAX_LAT, lat))
    x = WGS84_SEMI_MAJOR_M * math.radians(lon)
    y = WGS84_SEMI_MAJOR_M * math.log(math.tan(math.pi / 4 + math.radians(lat) / 2))
    return x, y


def web_mercator_to_lonlat(x: float, y: float) -> tuple[float, float]:
    lon = math.degrees(x / WGS84_SEMI_MAJOR_M)
    lat = math.degrees(2 * math.atan(math.exp(y / WGS84_SEMI_MAJOR_M)) - math.pi / 2)
    return lon, lat


_EASE_COS_SP = math.cos(math.radians(30.0))  # standard parallel of EPSG:6933


def lonlat_to_ease2(lon: float, lat: float) -> tuple[float, float]:
    x = WGS84_SEMI_MAJOR_M * math.radians(lon) * _EASE_COS_SP
    y = WGS84_SEMI_MAJOR_M * math.sin(math.radians(lat)) / _EASE_COS_SP
    return x, y


def ease2_to_lonlat(x: float, y: float) -> tuple[float, float]:
    lon = math.degrees(x / (WGS84_SEMI_MAJOR_M * _EASE_COS_SP))
    s = max(-1.0, min(1.0, y * _EASE_COS_SP / WGS84_SEMI_MAJOR_M))
    lat = math.degrees(math.asin(s))
    return lon, lat


_TRANSFORMS = {
    (4326, 3857): lonlat_to_web_mercator,
    (3857, 4326): web_mercator_to_lonlat,
    (4326, 6933): lonlat_to_ease2,
    (6933, 4326): ease2_to_lonlat,
}


def supported_transform(src: int, dst: int) -> bool:
    return src == dst or (src, dst) in _TRANSFORMS


def transform_point(lon_or_x: float, lat_or_y: float, src: int, dst: int) -> tuple[float, float]:
    if src == dst:
        return lon_or_x, lat_or_y
    fn = _TRANSFORMS.get((src, dst))
    if fn is None:
        raise ValueError(f"transform from SRID {src} to SRID {dst} is not supported")
    return fn(lon_or_x, lat_or_y)
