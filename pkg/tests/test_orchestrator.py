"""Session control: gating, security screening, memory, and tracing."""

import json

import pytest

from terrasql.fixtures import SCENARIOS_BY_NAME, drive_scenario, scripted_handler
from terrasql.memory import (
    MemoryRecord, MemoryStore, recall_similar, record_feedback,
    render_memory_context,
)
from terrasql.orchestrator import (
    GENERIC_CLARIFICATION, GateDecision, Orchestrator, SecurityFilter, Session,
    SessionState,
)
from terrasql.sqlkit import StatementClass, classify_statement

PA_STATIONS = SCENARIOS_BY_NAME["pa_stations"]
NEARBY = SCENARIOS_BY_NAME["nearby_stations"]
TOP_MATH = SCENARIOS_BY_NAME["top_math_state"]
NZ_TIMEZONE = SCENARIOS_BY_NAME["nz_timezone"]
COUNTY_POIS = SCENARIOS_BY_NAME["county_pois"]


@pytest.fixture
def engine(make_services, tmp_path):
    services = make_services(scripted_handler)
    return Orchestrator(services, memory_path=tmp_path / "memory.jsonl")


class TestSessionStateMachine:
    def test_full_legal_walk(self):
        session = Session()
        session.transition(SessionState.RUNNING_PIPELINE)
        session.transition(SessionState.PRESENTING)
        session.transition(SessionState.GATHERING_INTENT)
        session.transition(SessionState.CLOSED)
        assert session.state is SessionState.CLOSED

    def test_same_state_is_a_no_op(self):
        session = Session()
        session.transition(SessionState.GATHERING_INTENT)
        assert session.state is SessionState.GATHERING_INTENT

    @pytest.mark.parametrize("start,target", [
        (SessionState.GATHERING_INTENT, SessionState.PRESENTING),
        (SessionState.RUNNING_PIPELINE, SessionState.CLOSED),
        (SessionState.CLOSED, SessionState.GATHERING_INTENT),
        (SessionState.CLOSED, SessionState.RUNNING_PIPELINE),
    ])
    def test_illegal_transitions_raise(self, start, target):
        session = Session(state=start)
        with pytest.raises(ValueError, match="illegal session transition"):
            session.transition(target)

    def test_add_turn_appears_in_turns_and_trace(self):
        session = Session()
        session.add_turn("user", "hello")
        assert session.turns[-1].text == "hello"
        assert session.pipeline_trace[-1]["kind"] == "turn"
        assert session.pipeline_trace[-1]["text"] == "hello"


class TestGateDecisionInvariants:
    def test_clarify_requires_a_question(self):
        with pytest.raises(ValueError, match="clarify"):
            GateDecision(kind="clarify")

    def test_proceed_requires_an_intent(self):
        with pytest.raises(ValueError, match="proceed"):
            GateDecision(kind="proceed")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown gate decision"):
            GateDecision(kind="maybe")

    def test_reject_with_reason_is_valid(self):
        decision = GateDecision(kind="reject", reject_reason="no")
        assert decision.to_dict()["kind"] == "reject"


class TestSecurityFilter:
    @pytest.mark.parametrize("text", [
        "DROP TABLE ghcn;",
        "INSERT INTO ghcn VALUES (1)",
        "UPDATE states SET name = 'X'",
        "WITH doomed AS (DELETE FROM poi RETURNING 1) SELECT * FROM doomed",
        "Please drop the poi table",
        "delete all records from ghcn",
        "could you truncate the counties table for me",
        "wipe the database",
    ])
    def test_mutating_requests_are_rejected(self, text):
        assert SecurityFilter().screen(text) is not None

    @pytest.mark.parametrize("text", [
        "Which GHCN stations are located in Pennsylvania?",
        "SELECT * FROM ghcn",
        "Show the table of protected areas",
        "Could you remove duplicates in your answer?",
        "How far is each station from State College?",
    ])
    def test_questions_and_read_only_sql_pass(self, text):
        assert SecurityFilter().screen(text) is None


class TestConversationFlows:
    def test_single_question_yields_answer_bundle(self, engine):
        session = engine.create_session()
        reply = engine.handle_message(session, PA_STATIONS.question)
        assert reply["kind"] == "answer"
        bundle = reply["bundle"]
        assert bundle["approved"] is True
        assert bundle["unreviewed_sql"] == PA_STATIONS.unreviewed_sql
        assert bundle["reviewed_sql"] == PA_STATIONS.reviewed_sql
        assert bundle["canonical_intent"] == PA_STATIONS.canonical_intent
        assert bundle["corrections"] == []
        assert bundle["preview"]["rows"]
        assert bundle["session_id"] == session.session_id
        assert session.state is SessionState.PRESENTING
        assert session.last_bundle is bundle

    def test_clarification_rounds_then_answer(self, engine):
        session = engine.create_session()
        first = engine.handle_message(session, NEARBY.turns[0])
        assert first["kind"] == "clarification"
        assert first["question"] == NEARBY.clarifications[0]
        assert session.state is SessionState.GATHERING_INTENT

        second = engine.handle_message(session, NEARBY.turns[1])
        assert second["kind"] == "clarification"
        assert second["question"] == NEARBY.clarifications[1]

        final = engine.handle_message(session, NEARBY.turns[2])
        assert final["kind"] == "answer"
        assert "20 km" in final["bundle"]["canonical_intent"]
        assert final["bundle"]["reviewed_sql"] == NEARBY.reviewed_sql
        assert session.resolved_intent == NEARBY.canonical_intent

    def test_follow_up_question_in_same_session(self, engine):
        session = engine.create_session()
        engine.handle_message(session, PA_STATIONS.question)
        reply = engine.handle_message(session, TOP_MATH.question)
        assert reply["kind"] == "answer"
        assert reply["bundle"]["reviewed_sql"] == TOP_MATH.reviewed_sql
        outcomes = [e for e in engine.trace(session)
                    if e["kind"] == "review_outcome"]
        assert len(outcomes) == 2

    def test_rejection_keeps_session_usable(self, engine):
        session = engine.create_session()
        reply = engine.handle_message(session, "DROP TABLE ghcn;")
        assert reply["kind"] == "rejection"
        assert "data definition" in reply["reason"] or "ddl" in reply["reason"]
        assert session.state is SessionState.GATHERING_INTENT

        after = engine.handle_message(session, PA_STATIONS.question)
        assert after["kind"] == "answer"

    def test_natural_language_mutation_rejected(self, engine):
        session = engine.create_session()
        reply = engine.handle_message(session, "Please drop the poi table")
        assert reply["kind"] == "rejection"
        assert "change or remove data" in reply["reason"]

    def test_closed_session_refuses_messages(self, engine):
        session = engine.create_session()
        engine.close_session(session)
        reply = engine.handle_message(session, PA_STATIONS.question)
        assert reply["kind"] == "failure"
        assert "closed" in reply["message"]

    def test_unscripted_question_gets_generic_clarification(self, engine):
        session = engine.create_session()
        reply = engine.handle_message(session, "What is the meaning of life?")
        assert reply["kind"] == "clarification"
        assert reply["question"] == GENERIC_CLARIFICATION

    def test_pipeline_escalation_becomes_clarification(self, make_services,
                                                       tmp_path):
        def handler(agent_name, prompt):
            if agent_name == "gate":
                return json.dumps({
                    "action": "proceed",
                    "canonical_intent": "count the mystery rows",
                    "clarification_question": "", "reject_reason": ""})
            return "no json here"

        engine = Orchestrator(make_services(handler),
                              memory_path=tmp_path / "m.jsonl")
        session = engine.create_session()
        reply = engine.handle_message(session, "count the mystery rows")
        assert reply["kind"] == "clarification"
        assert "could not finish" in reply["question"]
        assert session.state is SessionState.GATHERING_INTENT

    def test_get_session_round_trip(self, engine):
        session = engine.create_session()
        assert engine.get_session(session.session_id) is session
        assert engine.get_session("missing") is None


class TestMemoryLifecycle:
    def test_approved_run_is_recorded(self, engine):
        session = engine.create_session()
        engine.handle_message(session, PA_STATIONS.question)
        records = engine.memory.records()
        assert len(records) == 1
        record = records[0]
        assert record.outcome == "approved"
        assert record.execution_error is None
        assert record.functions_used == ["ST_Intersects"]
        assert record.session_id == session.session_id
        assert record.embedding
        assert not record.is_failure()

    def test_execution_error_is_preserved(self, engine):
        session = engine.create_session()
        engine.handle_message(session, NZ_TIMEZONE.question)
        record = engine.memory.records()[-1]
        assert record.execution_error == NZ_TIMEZONE.first_error
        assert record.unreviewed_sql != record.reviewed_sql
        assert record.is_failure()

    def test_second_run_emits_learned_fix(self, engine):
        first = drive_scenario(engine, COUNTY_POIS)
        assert first["bundle"]["unreviewed_sql"] == COUNTY_POIS.unreviewed_sql
        second = drive_scenario(engine, COUNTY_POIS)
        assert second["bundle"]["unreviewed_sql"] == COUNTY_POIS.reviewed_sql
        assert second["bundle"]["corrections"] == []
        records = engine.memory.records()
        assert len(records) == 2
        assert records[0].is_failure()
        assert not records[1].is_failure()

    def test_feedback_attaches_to_latest_run(self, engine):
        session = engine.create_session()
        engine.handle_message(session, PA_STATIONS.question)
        record = engine.submit_feedback(session, "satisfied", "looks right")
        assert record.feedback_verdict == "satisfied"
        assert record.feedback_note == "looks right"

    def test_repeat_feedback_overwrites_verdict_and_joins_notes(self, engine):
        session = engine.create_session()
        engine.handle_message(session, PA_STATIONS.question)
        engine.submit_feedback(session, "satisfied", "fast")
        record = engine.submit_feedback(session, "unsatisfied", "wrong rows")
        assert record.feedback_verdict == "unsatisfied"
        assert record.feedback_note == "fast; wrong rows"

    def test_feedback_without_a_run_warns(self, engine):
        session = engine.create_session()
        with pytest.warns(UserWarning, match="no completed answer"):
            assert engine.submit_feedback(session, "satisfied", "?") is None

    def test_invalid_feedback_verdict_rejected(self, engine):
        session = engine.create_session()
        engine.handle_message(session, PA_STATIONS.question)
        with pytest.raises(ValueError, match="verdict"):
            engine.submit_feedback(session, "meh", "")

    def test_store_never_holds_mutating_sql(self, engine):
        for scenario in (PA_STATIONS, NZ_TIMEZONE, COUNTY_POIS):
            drive_scenario(engine, scenario)
        drive_scenario(engine, COUNTY_POIS)
        records = engine.memory.records()
        assert records
        for record in records:
            for sql in (record.unreviewed_sql, record.reviewed_sql):
                if sql:
                    assert classify_statement(sql) is StatementClass.READ_ONLY

    def test_mutating_sql_blanked_on_write(self):
        record = MemoryRecord(
            question="q", canonical_intent="q",
            unreviewed_sql="DELETE FROM ghcn", reviewed_sql="",
            outcome="unapproved")
        assert record.unreviewed_sql == ""

    def test_approved_record_requires_read_only_sql(self):
        with pytest.raises(ValueError, match="read-only"):
            MemoryRecord(question="q", canonical_intent="q",
                         unreviewed_sql="SELECT 1",
                         reviewed_sql="DROP TABLE ghcn", outcome="approved")


class TestRecallSimilar:
    @pytest.fixture
    def provider(self, make_services):
        return make_services(scripted_handler).provider

    def _record(self, provider, text, **kwargs):
        return MemoryRecord(
            question=text, canonical_intent=text,
            unreviewed_sql="SELECT 1", reviewed_sql="SELECT 1",
            outcome="approved",
            embedding=tuple(float(v) for v in provider.embed(text).dims),
            **kwargs)

    def test_empty_store_returns_nothing(self, tmp_path, provider):
        store = MemoryStore(tmp_path / "m.jsonl")
        assert recall_similar("anything", store, provider) == []

    def test_identical_question_recalled_first(self, tmp_path, provider):
        store = MemoryStore(tmp_path / "m.jsonl")
        store.append(self._record(provider, "find stations in Pennsylvania"))
        store.append(self._record(provider, "average math score by state"))
        hits = recall_similar("find stations in Pennsylvania", store, provider)
        assert [h.question for h in hits] == ["find stations in Pennsylvania"]

    def test_unrelated_questions_fall_below_floor(self, tmp_path, provider):
        store = MemoryStore(tmp_path / "m.jsonl")
        store.append(self._record(provider, "find stations in Pennsylvania"))
        assert recall_similar("average math score by state",
                              store, provider) == []

    def test_dimension_mismatch_skipped(self, tmp_path, provider):
        store = MemoryStore(tmp_path / "m.jsonl")
        store.append(MemoryRecord(
            question="q", canonical_intent="q", unreviewed_sql="",
            reviewed_sql="SELECT 1", outcome="approved",
            embedding=(1.0, 0.0)))
        assert recall_similar("q", store, provider) == []

    def test_k_caps_the_result(self, tmp_path, provider):
        store = MemoryStore(tmp_path / "m.jsonl")
        for i in range(5):
            store.append(self._record(provider, "same question"))
        hits = recall_similar("same question", store, provider, k=3)
        assert len(hits) == 3


class TestMemoryContextRendering:
    def test_failure_framing_shows_mistake_and_fix(self):
        record = MemoryRecord(
            question="q", canonical_intent="find pois near centroids",
            unreviewed_sql="SELECT broken",
            reviewed_sql="SELECT fixed",
            outcome="approved",
            execution_error="function does not exist")
        text = render_memory_context([record])
        assert "Earlier failure on a similar question" in text
        assert "statement tried: SELECT broken" in text
        assert "it failed with: function does not exist" in text
        assert "corrected version: SELECT fixed" in text
        assert "Avoid repeating this mistake." in text

    def test_success_framing_shows_accepted_statement(self):
        record = MemoryRecord(
            question="q", canonical_intent="list stations",
            unreviewed_sql="SELECT 1", reviewed_sql="SELECT 1",
            outcome="approved")
        text = render_memory_context([record])
        assert "Earlier success on a similar question" in text
        assert "accepted statement: SELECT 1" in text

    def test_no_records_renders_empty(self):
        assert render_memory_context([]) == ""


class TestTraceOrdering:
    def test_single_run_event_sequence(self, engine):
        session = engine.create_session()
        engine.handle_message(session, PA_STATIONS.question)
        kinds = [e["kind"] for e in engine.trace(session)]
        assert kinds == ["turn", "gate_decision", "agent_message",
                         "agent_message", "agent_message", "agent_message",
                         "review_outcome", "turn"]

    def test_clarification_turn_sequence(self, engine):
        session = engine.create_session()
        engine.handle_message(session, NEARBY.turns[0])
        kinds = [e["kind"] for e in engine.trace(session)]
        assert kinds == ["turn", "gate_decision", "turn"]

    def test_memory_recall_traced_before_agents(self, engine):
        drive_scenario(engine, COUNTY_POIS)
        session = engine.create_session()
        engine.handle_message(session, COUNTY_POIS.question)
        kinds = [e["kind"] for e in engine.trace(session)]
        assert "memory_recall" in kinds
        assert kinds.index("memory_recall") < kinds.index("agent_message")
