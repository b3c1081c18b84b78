"""Logical plans the scripted planner emits, one per scenario.

Kept apart from the conversation constants so the plan structures can be
built with the real message types and rendered through the canonical plan
layout, which guarantees they parse back.
"""

from __future__ import annotations

from ..agents.messages import JoinChoice, LogicalPlan, OutputSpec, PlanColumn


def build_plans() -> dict[str, LogicalPlan]:
    plans: dict[str, LogicalPlan] = {}

    plans["pa_stations"] = LogicalPlan(
        tables_and_columns=[
            PlanColumn("ghcn", "station_id", "output_field",
                       "Identifies each station in the answer."),
            PlanColumn("ghcn", "name", "output_field",
                       "Human-readable station name."),
            PlanColumn("ghcn", "geom", "join_key",
                       "Station point tested against the state polygon."),
            PlanColumn("states", "name", "filter_criterion",
                       "Restricts rows to the state named in the question."),
            PlanColumn("states", "geom", "join_key",
                       "State polygon for the containment test."),
        ],
        join_strategy=[JoinChoice(
            relations="ghcn and states", kind="INNER",
            condition="the station point intersects the state polygon",
            justification="Point-in-polygon containment links stations to "
                          "their state.")],
        filter_conditions=["states.name = 'Pennsylvania'"],
        output_definition=[
            OutputSpec("ghcn.station_id", "station_id",
                       "the station identifier"),
            OutputSpec("ghcn.name", "station_name", "the station name"),
        ],
        high_level_algorithm=[
            "Join stations to states on spatial intersection of their "
            "geometries.",
            "Keep only rows where the state name equals Pennsylvania.",
            "Return the station identifier and name.",
        ],
        spatial_abstractions=[
            ("point in polygon containment", "ST_Intersects"),
        ],
    )

    plans["nearby_stations"] = LogicalPlan(
        tables_and_columns=[
            PlanColumn("ghcn", "station_id", "output_field",
                       "Identifies each station in the answer."),
            PlanColumn("ghcn", "name", "output_field",
                       "Human-readable station name."),
            PlanColumn("ghcn", "geom", "filter_criterion",
                       "Station point tested against the 20 km radius and "
                       "measured for the distance output."),
        ],
        join_strategy=[],
        filter_conditions=[
            "stations within 20000 meters of the State College reference "
            "point at longitude -77.86 and latitude 40.7934",
        ],
        output_definition=[
            OutputSpec("ghcn.station_id", "station_id",
                       "the station identifier"),
            OutputSpec("ghcn.name", "station_name", "the station name"),
            OutputSpec("geodesic distance from the reference point divided "
                       "by 1000", "distance_km",
                       "distance from State College in kilometers"),
        ],
        high_level_algorithm=[
            "Build the State College reference point at longitude -77.86 "
            "and latitude 40.7934 in the WGS 84 coordinate system.",
            "Keep stations within 20000 meters of that point using "
            "geography distance.",
            "Return the identifier, name and distance in kilometers, "
            "closest first.",
        ],
        spatial_abstractions=[
            ("geodesic distance within a radius", "ST_DWithin"),
            ("point to point distance in meters", "ST_Distance"),
        ],
    )

    plans["top_math_state"] = LogicalPlan(
        tables_and_columns=[
            PlanColumn("ndecoreexcel_math_grade8", "state", "output_field",
                       "The state identifies the answer row."),
            PlanColumn("ndecoreexcel_math_grade8", "average_scale_score",
                       "aggregation_input",
                       "Averaged per state to find the highest."),
        ],
        join_strategy=[],
        filter_conditions=[],
        output_definition=[
            OutputSpec("state", "state",
                       "the state with the highest mean score"),
            OutputSpec("AVG(average_scale_score)", "avg_score",
                       "mean scale score across every year present"),
        ],
        high_level_algorithm=[
            "Group the rows by state.",
            "Average the scale score within each group across every year "
            "present.",
            "Order the groups by that average in descending order and keep "
            "the first row.",
        ],
        spatial_abstractions=[],
    )

    plans["station_coordinates"] = LogicalPlan(
        tables_and_columns=[
            PlanColumn("ghcn", "lon", "output_field",
                       "Longitude requested by the question."),
            PlanColumn("ghcn", "lat", "output_field",
                       "Latitude requested by the question."),
            PlanColumn("ghcn", "station_id", "filter_criterion",
                       "Selects the single station by its identifier."),
        ],
        join_strategy=[],
        filter_conditions=["ghcn.station_id = 'US1NCHR0026'"],
        output_definition=[
            OutputSpec("ghcn.lon", "longitude", "the station longitude"),
            OutputSpec("ghcn.lat", "latitude", "the station latitude"),
        ],
        high_level_algorithm=[
            "Filter the stations to the row whose identifier matches.",
            "Return its longitude and latitude.",
        ],
        spatial_abstractions=[],
    )

    plans["everglades_area"] = LogicalPlan(
        tables_and_columns=[
            PlanColumn("ne_protected_areas", "unit_name", "filter_criterion",
                       "Selects the protected area named in the question."),
            PlanColumn("ne_protected_areas", "geom", "aggregation_input",
                       "Polygon geometry whose geodesic area is summed."),
        ],
        join_strategy=[],
        filter_conditions=["unit_name matches Everglades"],
        output_definition=[
            OutputSpec("SUM of the geodesic polygon areas divided by "
                       "1000000.0", "area_sq_km",
                       "total area in square kilometers"),
        ],
        high_level_algorithm=[
            "Match protected areas whose unit name refers to Everglades.",
            "Sum the geodesic area of their polygons in square meters.",
            "Convert the total to square kilometers.",
        ],
        spatial_abstractions=[
            ("geodesic polygon area", "ST_Area"),
        ],
    )

    plans["nz_timezone"] = LogicalPlan(
        tables_and_columns=[
            PlanColumn("ne_time_zones", "places", "filter_criterion",
                       "The question names this column for the match."),
            PlanColumn("ne_time_zones", "geom", "output_field",
                       "The zone geometry the question asks for."),
        ],
        join_strategy=[],
        filter_conditions=["places = 'New Zealand'"],
        output_definition=[
            OutputSpec("ne_time_zones.geom", "wgs84_geom",
                       "the zone geometry in the WGS 84 coordinate system"),
        ],
        high_level_algorithm=[
            "Find the time zone row whose places value is New Zealand.",
            "Return its geometry.",
        ],
        spatial_abstractions=[],
    )

    plans["county_pois"] = LogicalPlan(
        tables_and_columns=[
            PlanColumn("counties", "name", "output_field",
                       "Names the county each match belongs to."),
            PlanColumn("counties", "geom", "join_key",
                       "Centroid source for the distance test."),
            PlanColumn("counties", "state", "filter_criterion",
                       "FIPS code 42 selects Pennsylvania."),
            PlanColumn("poi", "name", "output_field",
                       "Name of the point of interest."),
            PlanColumn("poi", "fclass", "output_field",
                       "Feature class describes the point of interest type."),
            PlanColumn("poi", "geom", "join_key",
                       "Point tested against the centroid radius."),
        ],
        join_strategy=[JoinChoice(
            relations="counties and poi", kind="INNER",
            condition="the point of interest lies within 5000 meters of "
                      "the county centroid",
            justification="A geography distance predicate pairs each "
                          "county with its nearby points of interest.")],
        filter_conditions=[
            "counties.state = '42'",
            "counties.geom IS NOT NULL",
            "poi.geom IS NOT NULL",
        ],
        output_definition=[
            OutputSpec("counties.name", "county_name", "the county"),
            OutputSpec("poi.name", "poi_name", "the point of interest"),
            OutputSpec("poi.fclass", "poi_type", "its feature class"),
            OutputSpec("geodesic distance from the county centroid divided "
                       "by 1000", "distance_km",
                       "kilometers from the centroid to the point"),
        ],
        high_level_algorithm=[
            "Compute each Pennsylvania county centroid from its polygon.",
            "Pair counties with points of interest within 5000 meters of "
            "the centroid using geography distance.",
            "Return the county, the point name and class, and the distance "
            "in kilometers, ordered by county and distance.",
        ],
        spatial_abstractions=[
            ("derived centroid of a polygon", "ST_Centroid"),
            ("geodesic distance within a radius", "ST_DWithin"),
            ("point to point distance in meters", "ST_Distance"),
        ],
    )

    return plans
