"""Manifest extraction: structure claims must come from the parse tree."""

import pytest

from terrasql.errors import SqlParseError
from terrasql.sqlkit import extract_manifest


def test_single_table_lookup():
    manifest = extract_manifest(
        "SELECT ghcn.lon AS longitude, ghcn.lat AS latitude\n"
        "FROM ghcn\n"
        "WHERE ghcn.station_id = 'US1NCHR0026';"
    )
    assert manifest.tables == ["ghcn"]
    assert manifest.base_columns == [
        ("ghcn", "lon"), ("ghcn", "lat"), ("ghcn", "station_id"),
    ]
    assert manifest.output_columns == [
        ("ghcn.lon", "longitude"), ("ghcn.lat", "latitude"),
    ]
    assert manifest.predicates == ["ghcn.station_id = 'US1NCHR0026'"]
    assert manifest.joins == []
    assert manifest.limit is None


def test_unqualified_columns_resolve_to_sole_table():
    manifest = extract_manifest(
        "SELECT DISTINCT lon AS longitude, lat AS latitude "
        "FROM ghcn WHERE station_id = 'US1NCHR0026' LIMIT 1"
    )
    assert manifest.base_columns == [
        ("ghcn", "lon"), ("ghcn", "lat"), ("ghcn", "station_id"),
    ]
    assert manifest.limit == 1


def test_join_edges_and_predicate_split():
    manifest = extract_manifest(
        "SELECT c.name AS county_name, p.name AS poi_name, p.fclass AS poi_type, "
        "ST_Distance(ST_Centroid(c.geom)::geography, p.geom::geography) / 1000 AS distance_km "
        "FROM counties AS c JOIN poi AS p "
        "ON ST_DWithin(ST_Centroid(c.geom)::geography, p.geom::geography) < 5000 "
        "WHERE c.state = '42' AND c.geom IS NOT NULL AND p.geom IS NOT NULL "
        "ORDER BY c.name, distance_km;"
    )
    assert manifest.tables == ["counties", "poi"]
    assert manifest.joins == [(
        "counties", "poi", "INNER",
        "st_dwithin(st_centroid(c.geom)::geography, p.geom::geography) < 5000",
    )]
    assert manifest.predicates == [
        "c.state = '42'", "c.geom is not null", "p.geom is not null",
    ]
    spatial = {(s.name, len(s.args)) for s in manifest.spatial_functions}
    assert ("ST_DWithin", 2) in spatial
    assert ("ST_Distance", 2) in spatial
    assert ("ST_Centroid", 1) in spatial


def test_three_arg_distance_predicate():
    manifest = extract_manifest(
        "SELECT c.name FROM counties c JOIN poi p "
        "ON ST_DWithin(c.geom::geography, p.geom::geography, 5000)"
    )
    spatial = {(s.name, len(s.args)) for s in manifest.spatial_functions}
    assert ("ST_DWithin", 3) in spatial


def test_aliases_resolved_through_as():
    manifest = extract_manifest("SELECT g.station_id FROM ghcn AS g")
    assert manifest.base_columns == [("ghcn", "station_id")]


def test_order_by_output_alias_not_a_base_column():
    manifest = extract_manifest(
        "SELECT state, AVG(average_scale_score) AS avg_math_score "
        "FROM ndecoreexcel_math_grade8 GROUP BY state ORDER BY avg_math_score DESC LIMIT 1"
    )
    assert ("ndecoreexcel_math_grade8", "avg_math_score") not in manifest.base_columns
    assert manifest.base_columns == [
        ("ndecoreexcel_math_grade8", "state"),
        ("ndecoreexcel_math_grade8", "average_scale_score"),
    ]
    assert manifest.aggregations == ["avg"]
    assert manifest.limit == 1


def test_every_predicate_column_is_a_base_column():
    manifest = extract_manifest(
        "SELECT t.a FROM t JOIN u ON t.id = u.t_id "
        "WHERE u.flag = true AND t.score > 10 HAVING max(u.val) > 2"
    )
    base = set(manifest.base_columns)
    for expected in (("t", "id"), ("u", "t_id"), ("u", "flag"), ("t", "score"), ("u", "val")):
        assert expected in base


def test_subquery_base_columns_bubble_up():
    manifest = extract_manifest(
        "SELECT sub.n FROM (SELECT count(*) AS n, state FROM counties GROUP BY state) AS sub "
        "WHERE sub.n > 1"
    )
    assert manifest.tables == ["counties"]
    assert ("counties", "state") in manifest.base_columns
    # sub is a derived table, not a base table
    assert "sub" not in manifest.tables


def test_cte_names_are_not_base_tables():
    manifest = extract_manifest(
        "WITH d AS (SELECT station_id, elev FROM ghcn) SELECT d.elev FROM d"
    )
    assert manifest.tables == ["ghcn"]


def test_aggregations_deduped_in_order():
    manifest = extract_manifest("SELECT sum(a), avg(b), sum(c) FROM t GROUP BY d")
    assert manifest.aggregations == ["sum", "avg"]


def test_outputs_without_alias_use_column_name():
    manifest = extract_manifest("SELECT station_id, 1 + 2 FROM ghcn")
    assert manifest.output_columns[0] == ("station_id", "station_id")
    assert manifest.output_columns[1] == ("1 + 2", None)


def test_case_and_literal_preserved_in_predicates():
    manifest = extract_manifest(
        "SELECT a FROM t WHERE name ILIKE '%Everglades%' AND UPPER(code) = 'ABC'"
    )
    assert manifest.predicates == [
        "name ilike '%Everglades%'", "upper(code) = 'ABC'",
    ]


def test_non_select_raises():
    with pytest.raises(SqlParseError):
        extract_manifest("DELETE FROM t")
    with pytest.raises(SqlParseError):
        extract_manifest("SELECT 1; SELECT 2")
