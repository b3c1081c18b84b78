"""Scripted walkthrough scenarios behind the bundled replay fixtures.

Seven deterministic conversations exercise the engine's behavior envelope:
a plain spatial join, multi-turn intent gathering, an aggregation repair, a
benign dedup rewrite, a value-membership repair, a relation-name repair, and
a learned fix where a second run avoids a distance-call mistake the first
run made. ``scripted_handler`` plays the model role for all of them; running
the conversations once in record mode produces the fixture file that replay
mode and the offline test suite consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..errors import LlmError
from .plans import build_plans

# agent names as they appear in gateway requests
_GATE = "gate"
_EXTRACTION = "entity_extraction"
_PLANNING = "query_logic"
_GENERATION = "sql_generation"
_LOGIC_CHECK = "logic_check"

_NO_FEEDBACK_SUFFIX = "Review feedback on the previous attempt:\nnone"
_LEARNED_MARKER = "Earlier failure on a similar question:"

_PASS_REASON = ("the sampled output answers the question at the asked "
                "granularity and every filter is justified by the question")


@dataclass(frozen=True)
class Scenario:
    """One scripted conversation plus the statements it must produce."""

    name: str
    turns: tuple[str, ...]
    clarifications: tuple[str, ...]
    canonical_intent: str
    extraction: dict
    unreviewed_sql: str
    reviewed_sql: str
    fail_reason: str = ""
    correction_stages: tuple[str, ...] = ()
    approved_attempts: int = 1
    first_error: str | None = None
    learns_from_failure: bool = False
    tags: tuple[str, ...] = ()

    @property
    def question(self) -> str:
        return self.turns[0]

    def __post_init__(self) -> None:
        if len(self.clarifications) != len(self.turns) - 1:
            raise ValueError(
                f"{self.name}: every turn except the last needs a scripted "
                "clarification reply")
        if self.unreviewed_sql != self.reviewed_sql and not self.fail_reason:
            raise ValueError(
                f"{self.name}: a repaired scenario needs a fail_reason")


def _ext(named=(), keywords=(), spatial=(), temporal=(), numeric=(),
         operations=(), hint="", confidence=0.9) -> dict:
    return {
        "named_entities": [{"text": t, "kind": k} for t, k in named],
        "thematic_keywords": list(keywords),
        "spatial_constraints": list(spatial),
        "temporal_constraints": list(temporal),
        "numeric_intents": list(numeric),
        "operation_phrases": list(operations),
        "next_operation_hint": hint,
        "confidence": confidence,
    }


PA_STATIONS_SQL = """\
SELECT ghcn.station_id AS station_id, ghcn.name AS station_name
FROM ghcn
JOIN states ON ST_Intersects(ghcn.geom, states.geom)
WHERE states.name = 'Pennsylvania';"""

NEARBY_STATIONS_SQL = """\
SELECT ghcn.station_id AS station_id,
       ghcn.name AS station_name,
       ST_Distance(ghcn.geom::geography, ST_SetSRID(ST_MakePoint(-77.86, 40.7934), 4326)::geography) / 1000 AS distance_km
FROM ghcn
WHERE ST_DWithin(ghcn.geom::geography, ST_SetSRID(ST_MakePoint(-77.86, 40.7934), 4326)::geography, 20000)
ORDER BY distance_km;"""

TOP_MATH_STATE_UNREVIEWED = """\
SELECT MAX(average_scale_score) AS max_score
FROM ndecoreexcel_math_grade8
WHERE year = 2017;"""

TOP_MATH_STATE_REVIEWED = """\
SELECT state AS state, AVG(average_scale_score) AS avg_score
FROM ndecoreexcel_math_grade8
GROUP BY state
ORDER BY avg_score DESC
LIMIT 1;"""

STATION_COORDS_UNREVIEWED = """\
SELECT ghcn.lon AS longitude, ghcn.lat AS latitude
FROM ghcn
WHERE ghcn.station_id = 'US1NCHR0026';"""

STATION_COORDS_REVIEWED = """\
SELECT DISTINCT lon AS longitude, lat AS latitude
FROM ghcn
WHERE station_id = 'US1NCHR0026'
LIMIT 1;"""

EVERGLADES_AREA_UNREVIEWED = """\
SELECT ST_Area(ST_Transform(geom, 6933)) / 1000000.0 AS area_sq_km
FROM ne_protected_areas
WHERE unit_name = 'Everglades';"""

EVERGLADES_AREA_REVIEWED = """\
SELECT SUM(ST_Area(geom::geography)) / 1000000.0 AS area_sq_km
FROM ne_protected_areas
WHERE unit_name ILIKE '%Everglades%';"""

NZ_TIMEZONE_UNREVIEWED = ("SELECT geom AS wgs84_geom FROM ne_10m_time_zones "
                          "WHERE tz_name = 'New Zealand';")

NZ_TIMEZONE_REVIEWED = ("SELECT geom AS wgs84_geom FROM ne_time_zones "
                        "WHERE places = 'New Zealand';")

COUNTY_POIS_UNREVIEWED = (
    "SELECT c.name AS county_name, p.name AS poi_name, p.fclass AS poi_type, "
    "ST_Distance(ST_Centroid(c.geom)::geography, p.geom::geography) / 1000 "
    "AS distance_km FROM counties AS c JOIN poi AS p ON "
    "ST_DWithin(ST_Centroid(c.geom)::geography, p.geom::geography) < 5000 "
    "WHERE c.state = '42' AND c.geom IS NOT NULL AND p.geom IS NOT NULL "
    "ORDER BY c.name, distance_km;")

COUNTY_POIS_REVIEWED = (
    "SELECT c.name AS county_name, p.name AS poi_name, p.fclass AS poi_type, "
    "ST_Distance(ST_Centroid(c.geom)::geography, p.geom::geography) / 1000 "
    "AS distance_km FROM counties AS c JOIN poi AS p ON "
    "ST_DWithin(ST_Centroid(c.geom)::geography, p.geom::geography, 5000) "
    "WHERE c.state = '42' AND c.geom IS NOT NULL AND p.geom IS NOT NULL "
    "ORDER BY c.name, distance_km;")

NEARBY_LOCATION_QUESTION = (
    "Could you provide me the information of GHCN stations near my location?")
NEARBY_LOCATION_CLARIFICATION = (
    "Which place or area should I treat as your location?")
NEARBY_DISTANCE_CLARIFICATION = (
    "Pennsylvania is a wide area. How far from a reference point such as "
    "State College should I search, for example 20 km?")

_PLANS = build_plans()


SCENARIOS: tuple[Scenario, ...] = (
    Scenario(
        name="pa_stations",
        turns=("Which GHCN stations are located in Pennsylvania?",),
        clarifications=(),
        canonical_intent=("List the GHCN weather stations located in the "
                          "state of Pennsylvania."),
        extraction=_ext(
            named=[("Pennsylvania", "place")],
            keywords=["weather station name", "table states"],
            spatial=["located in"],
            hint="spatial containment join between points and a polygon"),
        unreviewed_sql=PA_STATIONS_SQL,
        reviewed_sql=PA_STATIONS_SQL,
        tags=("spatial", "basic"),
    ),
    Scenario(
        name="nearby_stations",
        turns=(NEARBY_LOCATION_QUESTION, "Pennsylvania, United States",
               "20 km"),
        clarifications=(NEARBY_LOCATION_CLARIFICATION,
                        NEARBY_DISTANCE_CLARIFICATION),
        canonical_intent=("List the GHCN weather stations within 20 km of "
                          "State College, Pennsylvania, with their name and "
                          "distance in kilometers."),
        extraction=_ext(
            named=[("State College, Pennsylvania", "place")],
            keywords=["weather station name"],
            spatial=["within 20 km"],
            numeric=["20 km"],
            operations=["distance"],
            hint="geodesic radius filter around a fixed reference point"),
        unreviewed_sql=NEARBY_STATIONS_SQL,
        reviewed_sql=NEARBY_STATIONS_SQL,
        tags=("spatial", "conversational"),
    ),
    Scenario(
        name="top_math_state",
        turns=("State with highest average math score",),
        clarifications=(),
        canonical_intent=("Identify the state with the highest average math "
                          "scale score across all recorded years."),
        extraction=_ext(
            keywords=["average scale score"],
            numeric=["highest average"],
            hint="aggregate per state, then rank",
            confidence=0.85),
        unreviewed_sql=TOP_MATH_STATE_UNREVIEWED,
        reviewed_sql=TOP_MATH_STATE_REVIEWED,
        fail_reason=("the question asks for the state with the highest "
                     "average score, but this returns a single maximum "
                     "value with no state, and it restricts the data to "
                     "year 2017 even though the question names no year"),
        correction_stages=("regenerate",),
        approved_attempts=2,
        tags=("tabular",),
    ),
    Scenario(
        name="station_coordinates",
        turns=("What are the coordinates (longitude, latitude) of the "
               "weather station with the ID 'US1NCHR0026'",),
        clarifications=(),
        canonical_intent=("Report the longitude and latitude of the weather "
                          "station whose station id is 'US1NCHR0026'."),
        extraction=_ext(
            keywords=["weather station name"],
            numeric=["US1NCHR0026"],
            hint="single-row lookup by identifier"),
        unreviewed_sql=STATION_COORDS_UNREVIEWED,
        reviewed_sql=STATION_COORDS_REVIEWED,
        fail_reason=("a station identifier can repeat across rows, so the "
                     "same coordinates could appear more than once; "
                     "deduplicate and return a single row"),
        correction_stages=("regenerate",),
        approved_attempts=2,
        tags=("spatial", "basic"),
    ),
    Scenario(
        name="everglades_area",
        turns=("What is the area of the protected area called 'Everglades' "
               "in square kilometers?",),
        clarifications=(),
        canonical_intent=("Compute the total area in square kilometers of "
                          "the protected area named 'Everglades'."),
        extraction=_ext(
            named=[("Everglades", "place")],
            keywords=["protected areas"],
            operations=["area"],
            hint="geodesic area of a named polygon"),
        unreviewed_sql=EVERGLADES_AREA_UNREVIEWED,
        reviewed_sql=EVERGLADES_AREA_REVIEWED,
        fail_reason=("the result is empty, which suggests the exact unit "
                     "name filter matched nothing; the protected area may "
                     "be stored as several parts whose areas should be "
                     "summed under a containment match"),
        correction_stages=("regenerate",),
        approved_attempts=2,
        tags=("spatial", "basic"),
    ),
    Scenario(
        name="nz_timezone",
        turns=("Find the WGS 84 geometry for the time zone where "
               "'New Zealand' is listed in the places column.",),
        clarifications=(),
        canonical_intent=("Return the WGS 84 geometry of the time zone "
                          "whose places column lists 'New Zealand'."),
        extraction=_ext(
            named=[("New Zealand", "place")],
            keywords=["tz_name places"],
            hint="lookup by text match in the places column"),
        unreviewed_sql=NZ_TIMEZONE_UNREVIEWED,
        reviewed_sql=NZ_TIMEZONE_REVIEWED,
        fail_reason=("the relation name does not exist in this database, "
                     "and the filter checks tz_name rather than the places "
                     "column the question names"),
        correction_stages=("regenerate",),
        approved_attempts=2,
        first_error='relation "ne_10m_time_zones" does not exist',
        tags=("spatial", "advanced"),
    ),
    Scenario(
        name="county_pois",
        turns=("Find all POIs within 5 km of each county centroid in "
               "Pennsylvania",),
        clarifications=(),
        canonical_intent=("Find all points of interest within 5 km of each "
                          "county centroid in Pennsylvania, including the "
                          "county name, the point of interest name and "
                          "type, and the distance in kilometers."),
        extraction=_ext(
            named=[("Pennsylvania", "place")],
            keywords=["county name", "poi fclass"],
            spatial=["within 5 km"],
            numeric=["5 km"],
            operations=["centroid", "distance"],
            hint="distance from derived centroids to nearby points"),
        unreviewed_sql=COUNTY_POIS_UNREVIEWED,
        reviewed_sql=COUNTY_POIS_REVIEWED,
        fail_reason=("the distance threshold is compared against the "
                     "boolean result of a two-argument distance predicate; "
                     "the threshold belongs inside the call as its third "
                     "argument"),
        correction_stages=("regenerate",),
        approved_attempts=2,
        first_error=("function st_dwithin(geography, geography) "
                     "does not exist"),
        learns_from_failure=True,
        tags=("spatial", "advanced", "self-improvement"),
    ),
)

SCENARIOS_BY_NAME = {s.name: s for s in SCENARIOS}


def scenario_plan(name: str):
    """The logical plan the scripted planner emits for one scenario."""
    return _PLANS[name]


def _scenario_for_prompt(prompt: str) -> Scenario:
    for scenario in SCENARIOS:
        if f"Question: {scenario.canonical_intent}" in prompt:
            return scenario
    raise LlmError("no scripted scenario matches this prompt")


def _last_user_line(prompt: str) -> str:
    latest = ""
    for line in prompt.splitlines():
        if line.startswith("User: "):
            latest = line[len("User: "):].strip()
    return latest


def _gate_reply(prompt: str) -> str:
    latest = _last_user_line(prompt)
    for scenario in SCENARIOS:
        for i, turn in enumerate(scenario.turns[:-1]):
            if latest == turn:
                return json.dumps({
                    "action": "clarify",
                    "canonical_intent": "",
                    "clarification_question": scenario.clarifications[i],
                    "reject_reason": "",
                })
        if latest == scenario.turns[-1]:
            return json.dumps({
                "action": "proceed",
                "canonical_intent": scenario.canonical_intent,
                "clarification_question": "",
                "reject_reason": "",
            })
    raise LlmError("no scripted gate behavior for this conversation")


def _generation_reply(scenario: Scenario, prompt: str) -> str:
    if not prompt.rstrip().endswith(_NO_FEEDBACK_SUFFIX):
        sql = scenario.reviewed_sql
    elif scenario.learns_from_failure and _LEARNED_MARKER in prompt:
        sql = scenario.reviewed_sql
    else:
        sql = scenario.unreviewed_sql
    return f"```sql\n{sql}\n```"


def _verdict_reply(scenario: Scenario, prompt: str) -> str:
    if scenario.reviewed_sql in prompt:
        return json.dumps({"ok": True, "reason": _PASS_REASON})
    if scenario.unreviewed_sql in prompt:
        return json.dumps({"ok": False, "reason": scenario.fail_reason})
    return json.dumps({
        "ok": False,
        "reason": "the statement does not match the plan for this question",
    })


def scripted_handler(agent_name: str, prompt: str) -> str:
    """Deterministic model stand-in for every scripted conversation.

    Unknown prompts raise LlmError so callers escalate gracefully instead
    of acting on an invented reply."""
    if agent_name == _GATE:
        return _gate_reply(prompt)
    scenario = _scenario_for_prompt(prompt)
    if agent_name == _EXTRACTION:
        return json.dumps(scenario.extraction)
    if agent_name == _PLANNING:
        from ..agents.rendering import render_plan_text
        return render_plan_text(scenario_plan(scenario.name))
    if agent_name == _GENERATION:
        return _generation_reply(scenario, prompt)
    if agent_name == _LOGIC_CHECK:
        return _verdict_reply(scenario, prompt)
    raise LlmError(f"no scripted behavior for agent {agent_name!r}")
