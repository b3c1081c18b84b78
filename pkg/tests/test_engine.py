"""Embedded engine tests: geodesy, geometry text encoding, SQL execution.

Oracle strategy: spherical distances are cross-checked against the law of
cosines (a different formula on the same sphere), areas against the analytic
area of a lon/lat rectangle, and SQL results against plain-Python
computations over the seed literals.
"""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from terrasql.engine import geodesy
from terrasql.engine.geomtext import GeometryValueError, parse_geo
from terrasql.engine.seed import (
    COUNTIES,
    GHCN_STATIONS,
    MATH_SCORES,
    POIS,
    STATES,
    create_toy_engine,
    ghcn_obs_rows,
)
from terrasql.errors import ExecutionError

EARTH_R = 6_371_008.8


def law_of_cosines_m(lon1, lat1, lon2, lat2):
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    cosv = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return EARTH_R * math.acos(min(1.0, max(-1.0, cosv)))


def rect_area_m2(xmin, ymin, xmax, ymax):
    # Exact area of a lon/lat rectangle on the sphere.
    dlam = math.radians(xmax - xmin)
    return EARTH_R ** 2 * dlam * (math.sin(math.radians(ymax)) - math.sin(math.radians(ymin)))


class TestGeodesy:
    def test_zero_distance(self):
        assert geodesy.haversine_m(-77.86, 40.79, -77.86, 40.79) == 0.0

    def test_symmetry(self):
        d1 = geodesy.haversine_m(-77.86, 40.79, -75.16, 39.95)
        d2 = geodesy.haversine_m(-75.16, 39.95, -77.86, 40.79)
        assert d1 == pytest.approx(d2, rel=1e-12)

    def test_known_distance_equator_degree(self):
        # One degree of longitude at the equator is about 111.19 km on
        # a sphere of mean radius: 2*pi*R/360.
        expected = 2 * math.pi * EARTH_R / 360
        assert geodesy.haversine_m(0, 0, 1, 0) == pytest.approx(expected, rel=1e-9)

    @given(
        st.floats(-179, 179), st.floats(-85, 85),
        st.floats(-179, 179), st.floats(-85, 85),
    )
    @settings(max_examples=200)
    def test_haversine_matches_law_of_cosines(self, lon1, lat1, lon2, lat2):
        hav = geodesy.haversine_m(lon1, lat1, lon2, lat2)
        loc = law_of_cosines_m(lon1, lat1, lon2, lat2)
        # The law of cosines loses precision for tiny separations, so
        # compare with an absolute floor.
        assert hav == pytest.approx(loc, rel=1e-6, abs=1.0)

    def test_path_length_sums_segments(self):
        coords = [(-77.0, 40.0), (-76.5, 40.2), (-76.0, 40.1)]
        expected = (geodesy.haversine_m(-77.0, 40.0, -76.5, 40.2)
                    + geodesy.haversine_m(-76.5, 40.2, -76.0, 40.1))
        assert geodesy.path_length_m(coords) == pytest.approx(expected, rel=1e-12)

    def test_rect_ring_area_matches_analytic(self):
        xmin, ymin, xmax, ymax = -78.0, 40.0, -77.0, 41.0
        ring = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax), (xmin, ymin)]
        expected = rect_area_m2(xmin, ymin, xmax, ymax)
        assert geodesy.ring_area_m2(ring) == pytest.approx(expected, rel=1e-9)

    def test_polygon_area_subtracts_holes(self):
        outer = [(-78.0, 40.0), (-77.0, 40.0), (-77.0, 41.0), (-78.0, 41.0), (-78.0, 40.0)]
        hole = [(-77.7, 40.3), (-77.3, 40.3), (-77.3, 40.7), (-77.7, 40.7), (-77.7, 40.3)]
        expected = rect_area_m2(-78, 40, -77, 41) - rect_area_m2(-77.7, 40.3, -77.3, 40.7)
        assert geodesy.polygon_area_m2(outer, [hole]) == pytest.approx(expected, rel=1e-9)

    def test_degenerate_ring_has_zero_area(self):
        assert geodesy.ring_area_m2([(-77.0, 40.0), (-76.0, 40.0)]) == 0.0

    def test_web_mercator_known_values(self):
        x, y = geodesy.lonlat_to_web_mercator(0.0, 0.0)
        assert x == pytest.approx(0.0, abs=1e-9)
        assert y == pytest.approx(0.0, abs=1e-9)
        x, y = geodesy.lonlat_to_web_mercator(180.0, 0.0)
        assert x == pytest.approx(20037508.342789244, rel=1e-12)

    @given(st.floats(-179.9, 179.9), st.floats(-84.9, 84.9))
    @settings(max_examples=200)
    def test_web_mercator_round_trip(self, lon, lat):
        x, y = geodesy.lonlat_to_web_mercator(lon, lat)
        lon2, lat2 = geodesy.web_mercator_to_lonlat(x, y)
        assert lon2 == pytest.approx(lon, abs=1e-9)
        assert lat2 == pytest.approx(lat, abs=1e-9)

    @given(st.floats(-179.9, 179.9), st.floats(-89.9, 89.9))
    @settings(max_examples=200)
    def test_equal_area_round_trip(self, lon, lat):
        x, y = geodesy.lonlat_to_ease2(lon, lat)
        lon2, lat2 = geodesy.ease2_to_lonlat(x, y)
        assert lon2 == pytest.approx(lon, abs=1e-9)
        assert lat2 == pytest.approx(lat, abs=1e-9)

    def test_transform_point_dispatch(self):
        x, y = geodesy.transform_point(-77.86, 40.79, 4326, 3857)
        assert (x, y) == geodesy.lonlat_to_web_mercator(-77.86, 40.79)
        with pytest.raises(ValueError):
            geodesy.transform_point(0, 0, 4326, 2263)

    def test_supported_transform(self):
        assert geodesy.supported_transform(4326, 6933)
        assert not geodesy.supported_transform(3857, 6933)


class TestGeometryText:
    def test_round_trip_point(self):
        value = parse_geo("SRID=4326;POINT(-77.86 40.79)")
        assert value.srid == 4326
        assert not value.geography
        assert value.text() == "SRID=4326;POINT (-77.86 40.79)"

    def test_geography_tag(self):
        value = parse_geo("GEOG:SRID=4326;POINT(1 2)")
        assert value.geography
        assert value.text().startswith("GEOG:SRID=4326;")

    def test_no_srid_header(self):
        value = parse_geo("POINT(1 2)")
        assert value.srid == 0
        assert value.text() == "POINT (1 2)"

    def test_none_passes_through(self):
        assert parse_geo(None) is None

    def test_invalid_text_raises(self):
        with pytest.raises(GeometryValueError):
            parse_geo("POINT(1)")

    def test_geography_requires_lonlat(self):
        value = parse_geo("SRID=3857;POINT(1 2)")
        with pytest.raises(GeometryValueError):
            value.as_geography()

    def test_transform_unsupported_pair(self):
        value = parse_geo("SRID=3857;POINT(1 2)")
        with pytest.raises(GeometryValueError):
            value.transformed(6933)


@pytest.fixture(scope="module")
def engine():
    eng = create_toy_engine()
    yield eng
    eng.close()


class TestEmbeddedEngine:
    def test_tables_listed(self, engine):
        assert engine.tables() == [
            "counties", "ghcn", "ghcn_obs", "ndecoreexcel_math_grade8",
            "ne_protected_areas", "ne_time_zones", "poi", "roads", "states",
        ]

    def test_row_counts_match_seed(self, engine):
        assert engine.row_count("states") == len(STATES)
        assert engine.row_count("counties") == len(COUNTIES)
        assert engine.row_count("poi") == len(POIS)
        assert engine.row_count("ghcn") == len(GHCN_STATIONS)
        assert engine.row_count("ghcn_obs") == 100
        assert engine.row_count("ndecoreexcel_math_grade8") == len(MATH_SCORES)

    def test_table_meta_geometry_declaration(self, engine):
        meta = engine.table_meta("ghcn")
        geom = next(c for c in meta.columns if c.name == "geom")
        assert geom.geometry_subtype() == "POINT"
        assert geom.geometry_srid() == 4326
        assert meta.primary_key == ["id"]

    def test_table_meta_foreign_keys(self, engine):
        meta = engine.table_meta("ghcn_obs")
        assert any(f.column == "station_fk" and f.ref_table == "ghcn"
                   for f in meta.foreign_keys)

    def test_table_meta_unique_index(self, engine):
        meta = engine.table_meta("ghcn")
        assert any(i.unique and i.columns == ["station_id"] for i in meta.indexes)

    def test_table_meta_missing_table(self, engine):
        with pytest.raises(ExecutionError, match='relation "nope" does not exist'):
            engine.table_meta("nope")

    def test_plain_select(self, engine):
        cols, rows = engine.execute_select(
            "SELECT name, population FROM states ORDER BY population DESC")
        assert cols == ["name", "population"]
        expected = sorted(((n, p) for _, n, _, p, _ in STATES),
                          key=lambda r: -r[1])
        assert rows == expected

    def test_aggregate_matches_python(self, engine):
        _, rows = engine.execute_select(
            "SELECT count(*), min(tmax), max(tmax) FROM ghcn_obs")
        tmax = [r[5] for r in ghcn_obs_rows()]
        assert rows == [(len(tmax), min(tmax), max(tmax))]

    def test_point_in_polygon_count(self, engine):
        # Stations falling inside the Pennsylvania rectangle.
        _, rows = engine.execute_select(
            "SELECT count(*) FROM ghcn g JOIN states s ON ST_Intersects(g.geom, s.geom) "
            "WHERE s.name = 'Pennsylvania'")
        xmin, ymin, xmax, ymax = STATES[0][4]
        expected = sum(1 for _, _, _, lon, lat, _ in GHCN_STATIONS
                       if xmin <= lon <= xmax and ymin <= lat <= ymax)
        assert rows == [(expected,)] == [(6,)]

    def test_dwithin_geography_ordering(self, engine):
        sql = """
        SELECT station_id,
               ST_Distance(geom::geography,
                           ST_SetSRID(ST_MakePoint(-77.86, 40.7934), 4326)::geography) AS d
        FROM ghcn
        WHERE ST_DWithin(geom::geography,
                         ST_SetSRID(ST_MakePoint(-77.86, 40.7934), 4326)::geography,
                         20000)
        ORDER BY d
        """
        _, rows = engine.execute_select(sql)
        assert [r[0] for r in rows] == ["USC00368449", "US1PACT0008", "US1PACT0012"]
        expected = [
            geodesy.haversine_m(lon, lat, -77.86, 40.7934)
            for _, sid, _, lon, lat, _ in GHCN_STATIONS
            if sid in ("USC00368449", "US1PACT0008", "US1PACT0012")
        ]
        for (_, got), want in zip(rows, sorted(expected)):
            assert got == pytest.approx(want, rel=1e-9)

    def test_geography_distance_cross_checked(self, engine):
        _, rows = engine.execute_select(
            "SELECT ST_Distance(ST_GeogFromText('POINT(-77.86 40.7934)'), "
            "ST_GeogFromText('POINT(-77.8597 40.7939)'))")
        oracle = law_of_cosines_m(-77.86, 40.7934, -77.8597, 40.7939)
        assert rows[0][0] == pytest.approx(oracle, rel=1e-4, abs=0.5)

    def test_geometry_distance_is_planar(self, engine):
        _, rows = engine.execute_select(
            "SELECT ST_Distance(ST_MakePoint(0, 0), ST_MakePoint(3, 4))")
        assert rows[0][0] == pytest.approx(5.0)

    def test_geography_area_of_state(self, engine):
        _, rows = engine.execute_select(
            "SELECT ST_Area(geom::geography) FROM states WHERE name = 'Florida'")
        assert rows[0][0] == pytest.approx(rect_area_m2(*STATES[2][4]), rel=1e-9)

    def test_transform_to_web_mercator(self, engine):
        _, rows = engine.execute_select(
            "SELECT ST_X(ST_Transform(ST_SetSRID(ST_MakePoint(-77.86, 40.79), 4326), 3857))")
        expected_x, _ = geodesy.lonlat_to_web_mercator(-77.86, 40.79)
        assert rows[0][0] == pytest.approx(expected_x, rel=1e-12)

    def test_centroid_accessors(self, engine):
        _, rows = engine.execute_select(
            "SELECT ST_X(ST_Centroid(geom)), ST_Y(ST_Centroid(geom)) "
            "FROM counties WHERE name = 'Centre'")
        xmin, ymin, xmax, ymax = COUNTIES[0][3]
        assert rows[0][0] == pytest.approx((xmin + xmax) / 2)
        assert rows[0][1] == pytest.approx((ymin + ymax) / 2)

    def test_null_geometry_propagates(self, engine):
        _, rows = engine.execute_select("SELECT ST_X(NULL), ST_AsText(NULL)")
        assert rows == [(None, None)]

    def test_missing_table_message(self, engine):
        with pytest.raises(ExecutionError, match='relation "nowhere" does not exist'):
            engine.execute_select("SELECT * FROM nowhere")

    def test_missing_column_message(self, engine):
        with pytest.raises(ExecutionError, match='column "wrong" does not exist'):
            engine.execute_select("SELECT wrong FROM states")

    def test_missing_function_message(self, engine):
        with pytest.raises(ExecutionError, match="function st_frobnicate does not exist"):
            engine.execute_select("SELECT st_frobnicate(geom) FROM states")

    def test_two_argument_dwithin_message(self, engine):
        # The geography-pair form requires an explicit distance argument.
        with pytest.raises(
            ExecutionError,
            match=r"function st_dwithin\(geography, geography\) does not exist",
        ):
            engine.execute_select(
                "SELECT 1 FROM ghcn WHERE ST_DWithin(geom, geom)")

    def test_write_blocked_by_storage_layer(self, engine):
        with pytest.raises(ExecutionError):
            engine.execute_select("DELETE FROM states")

    def test_mixed_srid_error_surfaces(self, engine):
        with pytest.raises(ExecutionError, match="mixed SRID"):
            engine.execute_select(
                "SELECT ST_Distance(ST_SetSRID(ST_MakePoint(0, 0), 4326), "
                "ST_SetSRID(ST_MakePoint(0, 0), 3857))")

    def test_ambiguous_column_message(self, engine):
        with pytest.raises(ExecutionError, match="ambiguous"):
            engine.execute_select(
                "SELECT name FROM states JOIN counties ON states.fips = counties.state")

    def test_statement_timeout(self, engine):
        heavy = ("SELECT count(*) FROM ghcn_obs a, ghcn_obs b, ghcn_obs c "
                 "WHERE a.tmax + b.tmax + c.tmax > 0")
        with pytest.raises(ExecutionError,
                           match="canceling statement due to statement timeout"):
            engine.execute_select(heavy, timeout_ms=50)

    def test_explain_runs(self, engine):
        cols, rows = engine.execute_select("EXPLAIN SELECT * FROM states")
        assert rows, "expected a query plan"

    def test_multi_statement_rejected(self, engine):
        with pytest.raises(ExecutionError, match="multiple statements"):
            engine.execute_select("SELECT 1; SELECT 2")

    def test_time_zone_places_lookup(self, engine):
        _, rows = engine.execute_select(
            "SELECT tz_name FROM ne_time_zones WHERE places = 'New Zealand'")
        assert rows == [("Pacific/Auckland",)]

    def test_year_top_score(self, engine):
        _, rows = engine.execute_select(
            "SELECT state, average_scale_score FROM ndecoreexcel_math_grade8 "
            "WHERE year = 2017 ORDER BY average_scale_score DESC LIMIT 1")
        best = max((r for r in MATH_SCORES if r[2] == 2017), key=lambda r: r[3])
        assert rows == [(best[1], best[3])]

    def test_strings_with_cast(self, engine):
        # precip_text holds numbers as text; a cast makes them orderable.
        _, rows = engine.execute_select(
            "SELECT max(precip_text::numeric) FROM ghcn_obs")
        non_null = [r[3] for r in ghcn_obs_rows() if r[3] is not None]
        assert rows == [(max(int(v) for v in non_null),)]

    def test_ilike_translates(self, engine):
        _, rows = engine.execute_select(
            "SELECT name FROM poi WHERE name ILIKE '%liberty%'")
        assert rows == [("Liberty Bell",)]

    def test_protected_area_intersection(self, engine):
        _, rows = engine.execute_select(
            "SELECT p.name FROM poi p JOIN ne_protected_areas a "
            "ON ST_Within(p.geom, a.geom) WHERE a.unit_name = 'Everglades National Park'")
        assert rows == [("Everglades Visitor Center",)]
