"""Spatial misuse rules: each rule needs a firing and a non-firing case."""

from terrasql.sqlkit import GeometryColumn, check_spatial_rules

GEOMS = [
    GeometryColumn("counties", "geom", "MULTIPOLYGON", 4326),
    GeometryColumn("poi", "geom", "POINT", 4326),
    GeometryColumn("roads", "geom", "LINESTRING", 4326),
    GeometryColumn("tiles", "geom", "POLYGON", 3857),
    GeometryColumn("legacy", "geom", "POLYGON", None),
    GeometryColumn("zones", "geom", "POLYGON", 2272),  # PA State Plane, meters-ish
]


def rules_fired(sql):
    return {f.rule_id for f in check_spatial_rules(sql, GEOMS)}


def findings_for(sql, rule_id):
    return [f for f in check_spatial_rules(sql, GEOMS) if f.rule_id == rule_id]


class TestR1PredicateAsComparison:
    def test_two_arg_dwithin_compared_to_number_fires(self):
        sql = ("SELECT 1 FROM counties c JOIN poi p "
               "ON ST_DWithin(c.geom::geography, p.geom::geography) < 5000")
        findings = findings_for(sql, "R1")
        assert len(findings) == 1
        f = findings[0]
        assert f.severity == "error"
        assert "boolean" in f.message
        assert "5000" in f.suggested_fix and "argument 3" in f.suggested_fix

    def test_intersects_equalled_to_number_fires(self):
        sql = "SELECT 1 FROM counties c, poi p WHERE ST_Intersects(c.geom, p.geom) = 1"
        findings = findings_for(sql, "R1")
        assert findings and "ST_Intersects" in findings[0].suggested_fix

    def test_proper_three_arg_dwithin_clean(self):
        sql = ("SELECT 1 FROM counties c JOIN poi p "
               "ON ST_DWithin(c.geom::geography, p.geom::geography, 5000)")
        assert "R1" not in rules_fired(sql)

    def test_comparing_distance_is_fine(self):
        sql = "SELECT 1 FROM counties c, poi p WHERE ST_Distance(c.geom, p.geom) < 0.5"
        assert "R1" not in rules_fired(sql)


class TestR2WrongGeometryClass:
    def test_area_of_points_fires(self):
        findings = findings_for("SELECT ST_Area(geom) FROM poi", "R2")
        assert len(findings) == 1
        assert findings[0].severity == "error"
        assert "areal" in findings[0].message

    def test_perimeter_of_lines_fires(self):
        assert findings_for("SELECT ST_Perimeter(geom) FROM roads", "R2")

    def test_length_of_polygons_fires(self):
        assert findings_for("SELECT ST_Length(geom) FROM counties", "R2")

    def test_area_of_polygons_clean(self):
        assert "R2" not in rules_fired("SELECT ST_Area(geom) FROM counties")

    def test_centroid_wrapper_changes_class(self):
        # Centroid of a polygon is a point; area over it is flagged.
        assert findings_for("SELECT ST_Area(ST_Centroid(geom)) FROM counties", "R2")

    def test_buffer_wrapper_makes_area_legal(self):
        assert "R2" not in rules_fired("SELECT ST_Area(ST_Buffer(geom, 1)) FROM poi")


class TestR3MetricOnWrongCrs:
    def test_area_on_lonlat_geometry_warns(self):
        findings = findings_for("SELECT ST_Area(geom) FROM counties", "R3")
        assert len(findings) == 1
        assert findings[0].severity == "warning"
        assert "degrees" in findings[0].message
        assert "geography" in findings[0].suggested_fix

    def test_distance_on_lonlat_geometry_warns(self):
        sql = "SELECT ST_Distance(c.geom, p.geom) FROM counties c, poi p"
        assert findings_for(sql, "R3")

    def test_web_mercator_measure_warns(self):
        findings = findings_for("SELECT ST_Area(geom) FROM tiles", "R3")
        assert findings and "3857" in findings[0].message

    def test_geography_cast_is_clean(self):
        assert "R3" not in rules_fired("SELECT ST_Area(geom::geography) FROM counties")

    def test_equal_area_transform_is_clean(self):
        assert "R3" not in rules_fired(
            "SELECT ST_Area(ST_Transform(geom, 6933)) / 1000000.0 FROM counties")

    def test_state_plane_metric_crs_is_clean(self):
        assert "R3" not in rules_fired("SELECT ST_Area(geom) FROM zones")


class TestR4MixedSrid:
    def test_mixed_srids_fire(self):
        sql = "SELECT 1 FROM counties c, tiles t WHERE ST_Intersects(c.geom, t.geom)"
        findings = findings_for(sql, "R4")
        assert len(findings) == 1
        assert findings[0].severity == "error"
        assert "4326" in findings[0].message and "3857" in findings[0].message
        assert "ST_Transform" in findings[0].suggested_fix

    def test_same_srid_clean(self):
        sql = "SELECT 1 FROM counties c, poi p WHERE ST_Intersects(c.geom, p.geom)"
        assert "R4" not in rules_fired(sql)

    def test_transform_resolves_mixture(self):
        sql = ("SELECT 1 FROM counties c, tiles t "
               "WHERE ST_Intersects(c.geom, ST_Transform(t.geom, 4326))")
        assert "R4" not in rules_fired(sql)

    def test_point_literal_without_srid_fires(self):
        sql = ("SELECT 1 FROM counties c "
               "WHERE ST_Contains(c.geom, ST_MakePoint(-77.8, 40.8))")
        assert findings_for(sql, "R4")  # srid 0 vs 4326

    def test_set_srid_point_literal_clean(self):
        sql = ("SELECT 1 FROM counties c "
               "WHERE ST_Contains(c.geom, ST_SetSRID(ST_MakePoint(-77.8, 40.8), 4326))")
        assert "R4" not in rules_fired(sql)


class TestR5MissingSrid:
    def test_unknown_srid_column_warns(self):
        findings = findings_for("SELECT ST_Area(geom) FROM legacy", "R5")
        assert len(findings) == 1
        assert findings[0].severity == "warning"
        assert "legacy.geom" in findings[0].location

    def test_known_srid_clean(self):
        assert "R5" not in rules_fired("SELECT ST_Area(geom) FROM counties")


def test_unparseable_sql_yields_no_findings():
    assert check_spatial_rules("SELEC nope", GEOMS) == []


def test_findings_sorted_errors_first():
    sql = ("SELECT ST_Area(p.geom) FROM poi p JOIN counties c "
           "ON ST_Intersects(p.geom, c.geom) = 1")
    findings = check_spatial_rules(sql, GEOMS)
    severities = [f.severity for f in findings]
    assert severities == sorted(severities, key=lambda s: 0 if s == "error" else 1)
    assert {"R1", "R2", "R3"} <= {f.rule_id for f in findings}
