"""Review agent: dry runs, logic verdicts, schema cross-checks, repair loop."""

import json

import pytest

from terrasql.agents import (
    Correction, EntityExtraction, JoinChoice, LogicalPlan, MessageStatus,
    OutputSpec, PlanColumn, ReviewOutcome, SqlArtifact, Verdict,
    add_missing_columns, double_check, dry_run, logic_check, resolve_schema,
    review,
)
from terrasql.sqlkit import extract_manifest

EVERGLADES_BAD = (
    "SELECT ST_Area(ST_Transform(geom, 6933)) / 1000000.0 AS area_sq_km\n"
    "FROM ne_protected_areas\n"
    "WHERE unit_name = 'Everglades';"
)
EVERGLADES_GOOD = (
    "SELECT SUM(ST_Area(geom::geography)) / 1000000.0 AS area_sq_km\n"
    "FROM ne_protected_areas\n"
    "WHERE unit_name ILIKE '%Everglades%';"
)

AREA_PLAN = LogicalPlan(
    tables_and_columns=[
        PlanColumn("ne_protected_areas", "unit_name", "filter_criterion",
                   "selects the park"),
        PlanColumn("ne_protected_areas", "geom", "aggregation_input",
                   "polygon parts to measure"),
    ],
    join_strategy=[],
    filter_conditions=["unit_name matches Everglades"],
    output_definition=[OutputSpec(
        "SUM(ST_Area(geom::geography)) / 1000000.0", "area_sq_km",
        "total area in square kilometers")],
    high_level_algorithm=["Select the park polygons.",
                          "Sum their geodesic areas.",
                          "Convert to square kilometers."],
    spatial_abstractions=[("area of a region", "st_area")],
)


def artifact_for(sql: str) -> SqlArtifact:
    return SqlArtifact(sql=sql, manifest=extract_manifest(sql))


def area_mapping(services):
    ex = EntityExtraction(
        named_entities=[("protected areas", "other"),
                        ("everglades unit name", "other")],
        confidence=0.9)
    msg = resolve_schema(ex, services)
    assert msg.status is MessageStatus.OK
    return msg.payload


class TestVerdict:
    def test_negative_verdict_needs_reason(self):
        v = Verdict(ok=False, reason="")
        assert v.reason == "unspecified"

    def test_positive_verdict_keeps_reason(self):
        assert Verdict(ok=True, reason="").reason == ""


class TestLogicCheck:
    def test_accepting_verdict(self, make_services):
        services = make_services(
            lambda a, p: json.dumps({"ok": True, "reason": "looks right"}))
        verdict = logic_check("q", "SELECT 1;", "preview", services.llm)
        assert verdict.ok and verdict.reason == "looks right"

    def test_unusable_model_output_rejects(self, make_services):
        services = make_services(lambda a, p: "not a json verdict")
        verdict = logic_check("q", "SELECT 1;", "preview", services.llm)
        assert not verdict.ok
        assert verdict.reason == "verdict unavailable"

    def test_prompt_carries_rules_and_inputs(self, make_services):
        seen = {}

        def handler(agent, prompt):
            seen["prompt"] = prompt
            return json.dumps({"ok": True, "reason": "fine"})

        services = make_services(handler)
        logic_check("my question", "SELECT 42;", "the preview", services.llm)
        for needle in ("my question", "SELECT 42;", "the preview", "R1", "R5"):
            assert needle in seen["prompt"]


class TestDryRun:
    def test_success_capped_at_ten_rows(self, make_services):
        services = make_services(lambda a, p: "")
        result, error = dry_run("SELECT * FROM ghcn_obs;", services.gateway)
        assert error is None
        assert len(result.rows) == 10
        assert result.truncated

    def test_error_captured_not_raised(self, make_services):
        services = make_services(lambda a, p: "")
        result, error = dry_run("SELECT * FROM missing_table;", services.gateway)
        assert result is None
        assert "missing_table" in error


class TestDoubleCheck:
    def test_unknown_relation_with_suggestion(self, make_services):
        services = make_services(lambda a, p: "")
        findings = double_check("SELECT x FROM ghcnn;", services)
        existence = [f for f in findings if f.rule_id == "existence"]
        assert existence and existence[0].severity == "error"
        assert "ghcn" in existence[0].suggested_fix

    def test_unknown_column_with_suggestion(self, make_services):
        services = make_services(lambda a, p: "")
        findings = double_check("SELECT ghcn.nme FROM ghcn;", services)
        assert any(f.rule_id == "existence" and "ghcn.name" in f.suggested_fix
                   for f in findings)

    def test_value_membership_suggests_nearest(self, make_services):
        services = make_services(lambda a, p: "")
        findings = double_check(EVERGLADES_BAD, services)
        membership = [f for f in findings if f.rule_id == "value_membership"]
        assert len(membership) == 1
        assert membership[0].severity == "error"
        assert "Everglades National Park" in membership[0].suggested_fix

    def test_cross_column_scan_places_misfiled_literal(self, make_services):
        services = make_services(lambda a, p: "")
        sql = ("SELECT geom AS wgs84_geom FROM ne_10m_time_zones "
               "WHERE tz_name = 'New Zealand';")
        findings = double_check(sql, services)
        rules = {f.rule_id for f in findings}
        assert "existence" in rules
        scan = [f for f in findings if f.rule_id == "value_membership"]
        assert scan and "ne_time_zones.places" in scan[0].message

    def test_string_literal_on_numeric_column_warns(self, make_services):
        services = make_services(lambda a, p: "")
        sql = "SELECT * FROM ndecoreexcel_math_grade8 WHERE year = '2017';"
        findings = double_check(sql, services)
        lits = [f for f in findings if f.rule_id == "literal_type"]
        assert lits and lits[0].severity == "warning"

    def test_number_literal_on_text_column_errors(self, make_services):
        services = make_services(lambda a, p: "")
        findings = double_check("SELECT * FROM poi WHERE fclass = 5;", services)
        lits = [f for f in findings if f.rule_id == "literal_type"]
        assert lits and lits[0].severity == "error"

    def test_spatial_rules_are_merged(self, make_services):
        services = make_services(lambda a, p: "")
        sql = ("SELECT p.name FROM counties c JOIN poi p ON "
               "ST_DWithin(ST_Centroid(c.geom)::geography, p.geom::geography)"
               " < 5000 WHERE c.state = '42';")
        findings = double_check(sql, services)
        assert any(f.rule_id == "R1" and f.severity == "error" for f in findings)

    def test_ilike_literal_not_checked_for_membership(self, make_services):
        services = make_services(lambda a, p: "")
        findings = double_check(EVERGLADES_GOOD, services)
        assert [f for f in findings if f.severity == "error"] == []

    def test_clean_statement_yields_nothing(self, make_services):
        services = make_services(lambda a, p: "")
        sql = "SELECT name FROM states WHERE name = 'Pennsylvania';"
        assert double_check(sql, services) == []

    def test_unparseable_statement_is_one_finding(self, make_services):
        services = make_services(lambda a, p: "")
        findings = double_check("SELECT FROM WHERE;", services)
        assert len(findings) == 1
        assert findings[0].rule_id == "existence"
        assert "parse" in findings[0].message


class TestAddMissingColumns:
    def test_named_column_injected(self, make_services):
        services = make_services(lambda a, p: "")
        ex = EntityExtraction(
            named_entities=[("weather station name", "other")], confidence=0.9)
        mapping = resolve_schema(ex, services).payload
        sql = "SELECT ghcn.station_id FROM ghcn;"
        patched, applied, description = add_missing_columns(
            "q", sql, mapping, "the result omits the name column")
        assert applied
        assert "name" in description
        manifest = extract_manifest(patched)
        assert ("ghcn", "name") in manifest.base_columns

    def test_unmatched_reason_defers_to_regeneration(self, make_services):
        services = make_services(lambda a, p: "")
        ex = EntityExtraction(
            named_entities=[("weather station name", "other")], confidence=0.9)
        mapping = resolve_schema(ex, services).payload
        sql = "SELECT ghcn.station_id FROM ghcn;"
        patched, applied, _ = add_missing_columns(
            "q", sql, mapping, "something vague about the output")
        assert not applied
        assert patched == sql

    def test_already_selected_column_not_duplicated(self, make_services):
        services = make_services(lambda a, p: "")
        ex = EntityExtraction(
            named_entities=[("weather station name", "other")], confidence=0.9)
        mapping = resolve_schema(ex, services).payload
        sql = "SELECT ghcn.name FROM ghcn;"
        patched, applied, _ = add_missing_columns(
            "q", sql, mapping, "missing the name column")
        assert not applied
        assert patched == sql


class TestReviewLoop:
    QUESTION = "What is the total area of the Everglades in square kilometers?"

    def test_clean_statement_approved_first_attempt(self, make_services):
        def handler(agent, prompt):
            if agent == "logic_check":
                return json.dumps({"ok": True, "reason": "matches"})
            raise AssertionError(f"unexpected agent {agent}")

        services = make_services(handler)
        mapping = area_mapping(services)
        outcome = review(self.QUESTION, artifact_for(EVERGLADES_GOOD),
                         mapping, AREA_PLAN, services)
        assert outcome.approved
        assert outcome.attempts == 1
        assert outcome.corrections == []
        assert outcome.first_error is None
        assert outcome.preview is not None

    def test_value_error_regenerated_then_approved(self, make_services):
        def handler(agent, prompt):
            if agent == "logic_check":
                ok = "ILIKE" in prompt
                return json.dumps(
                    {"ok": ok, "reason": "fine" if ok else "empty result"})
            if agent == "sql_generation":
                assert "Everglades National Park" in prompt
                return f"```sql\n{EVERGLADES_GOOD}\n```"
            raise AssertionError(f"unexpected agent {agent}")

        services = make_services(handler)
        mapping = area_mapping(services)
        outcome = review(self.QUESTION, artifact_for(EVERGLADES_BAD),
                         mapping, AREA_PLAN, services)
        assert outcome.approved
        assert outcome.attempts == 2
        assert [c.stage for c in outcome.corrections] == ["regenerate"]
        assert outcome.corrections[0].sql_before == EVERGLADES_BAD
        assert outcome.corrections[0].sql_after == EVERGLADES_GOOD
        assert outcome.final_sql == EVERGLADES_GOOD

    def test_missing_column_patched_in_place(self, make_services):
        def handler(agent, prompt):
            if agent == "logic_check":
                ok = "ghcn.name" in prompt or '"name"' in prompt
                return json.dumps(
                    {"ok": ok,
                     "reason": "fine" if ok else
                     "the answer omits the name column"})
            raise AssertionError(f"unexpected agent {agent}")

        services = make_services(handler)
        ex = EntityExtraction(
            named_entities=[("weather station name", "other")], confidence=0.9)
        mapping = resolve_schema(ex, services).payload
        plan = LogicalPlan(
            tables_and_columns=[
                PlanColumn("ghcn", "station_id", "output_field", "id")],
            join_strategy=[], filter_conditions=[],
            output_definition=[OutputSpec("ghcn.station_id", "sid", "id")],
            high_level_algorithm=["Read the stations."],
        )
        outcome = review("station ids and names",
                         artifact_for("SELECT ghcn.station_id FROM ghcn;"),
                         mapping, plan, services)
        assert outcome.approved
        assert outcome.attempts == 2
        assert [c.stage for c in outcome.corrections] == ["add_column"]
        assert "name" in outcome.final_sql

    def test_exhaustion_keeps_one_entry_per_attempt(self, make_services):
        def handler(agent, prompt):
            if agent == "logic_check":
                return json.dumps({"ok": False, "reason": "still wrong"})
            if agent == "sql_generation":
                return f"```sql\n{EVERGLADES_BAD}\n```"
            raise AssertionError(f"unexpected agent {agent}")

        services = make_services(handler)
        mapping = area_mapping(services)
        outcome = review(self.QUESTION, artifact_for(EVERGLADES_BAD),
                         mapping, AREA_PLAN, services)
        assert not outcome.approved
        assert outcome.attempts == services.thresholds.review_attempts == 3
        assert len(outcome.corrections) == 3
        assert [c.stage for c in outcome.corrections] == \
            ["regenerate", "regenerate", "logic_check"]
        assert outcome.corrections[-1].sql_before == \
            outcome.corrections[-1].sql_after

    def test_mutating_input_rejected_without_attempts(self, make_services):
        services = make_services(lambda a, p: "")
        sql = "DELETE FROM ghcn;"
        artifact = SqlArtifact(sql=sql, manifest=extract_manifest("SELECT 1;"))
        outcome = review("q", artifact, area_mapping(services), AREA_PLAN,
                         services)
        assert not outcome.approved
        assert outcome.attempts == 0
        assert "read-only" in outcome.first_error

    def test_dry_run_error_recorded_as_first_error(self, make_services):
        def handler(agent, prompt):
            if agent == "logic_check":
                return json.dumps({"ok": False, "reason": "cannot execute"})
            if agent == "sql_generation":
                return f"```sql\n{EVERGLADES_GOOD}\n```"
            raise AssertionError(f"unexpected agent {agent}")

        services = make_services(handler)
        mapping = area_mapping(services)
        bad = "SELECT unit_name FROM ne_protected_area;"
        outcome = review(self.QUESTION, artifact_for(bad), mapping, AREA_PLAN,
                         services)
        assert outcome.first_error is not None
        assert "ne_protected_area" in outcome.first_error

    def test_regeneration_failure_ends_loop(self, make_services):
        def handler(agent, prompt):
            if agent == "logic_check":
                return json.dumps({"ok": False, "reason": "wrong"})
            if agent == "sql_generation":
                return "no sql in this reply"
            raise AssertionError(f"unexpected agent {agent}")

        services = make_services(handler)
        mapping = area_mapping(services)
        outcome = review(self.QUESTION, artifact_for(EVERGLADES_GOOD),
                         mapping, AREA_PLAN, services)
        assert not outcome.approved
        assert outcome.corrections[-1].stage == "regenerate"
        assert "failed" in outcome.corrections[-1].description

    def test_approved_outcomes_satisfy_contract(self, make_services):
        from terrasql.sqlkit import StatementClass, classify_statement

        def handler(agent, prompt):
            if agent == "logic_check":
                return json.dumps({"ok": True, "reason": "fine"})
            raise AssertionError(f"unexpected agent {agent}")

        services = make_services(handler)
        mapping = area_mapping(services)
        outcome = review(self.QUESTION, artifact_for(EVERGLADES_GOOD),
                         mapping, AREA_PLAN, services)
        assert outcome.approved
        assert classify_statement(outcome.final_sql) is StatementClass.READ_ONLY
        assert not [f for f in outcome.findings if f.severity == "error"]
        result, error = dry_run(outcome.final_sql, services.gateway)
        assert error is None and result is not None


class TestCorrectionRecord:
    def test_unknown_stage_rejected(self):
        with pytest.raises(ValueError, match="stage"):
            Correction(stage="patch", description="", sql_before="", sql_after="")

    def test_outcome_serializes(self):
        outcome = ReviewOutcome(final_sql="SELECT 1;", approved=True)
        data = outcome.to_dict()
        assert data["final_sql"] == "SELECT 1;"
        assert data["approved"] is True
        assert data["corrections"] == []
