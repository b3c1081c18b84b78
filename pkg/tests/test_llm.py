"""Gateway tests: fixture keys, record/replay, structured parsing, retries."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from terrasql.config import LlmConfig
from terrasql.errors import EscalationError, LlmError, MissingFixtureError
from terrasql.llm import (
    FixtureStore,
    HttpChatProvider,
    LlmGateway,
    LlmRequest,
    ScriptedProvider,
    extract_structured,
    fixture_key,
    normalize_prompt,
    validate_schema,
)


class TestFixtureKey:
    def test_line_ending_normalization(self):
        assert fixture_key("a", "x\r\ny") == fixture_key("a", "x\ny")

    def test_trailing_whitespace_trimmed(self):
        assert fixture_key("a", "x  \ny\n\n") == fixture_key("a", "x\ny")

    def test_agent_name_distinguishes(self):
        assert fixture_key("a", "same") != fixture_key("b", "same")

    def test_normalize_preserves_interior_spaces(self):
        assert normalize_prompt("a  b\nc") == "a  b\nc"


class TestReplayMode:
    def make_gateway(self, tmp_path, records):
        store = FixtureStore(tmp_path / "fixtures.jsonl")
        for agent, prompt, response in records:
            store.append(fixture_key(agent, prompt), prompt, response, "test")
        return LlmGateway(LlmConfig(mode="replay"),
                          fixtures_path=tmp_path / "fixtures.jsonl")

    def test_stored_fixture_returned(self, tmp_path):
        gateway = self.make_gateway(
            tmp_path, [("planner", "plan this", "the plan")])
        response = gateway.complete_response(
            LlmRequest(agent_name="planner", prompt="plan this"))
        assert response.text == "the plan"
        assert response.from_replay

    def test_missing_fixture_names_key(self, tmp_path):
        gateway = self.make_gateway(tmp_path, [])
        with pytest.raises(MissingFixtureError) as err:
            gateway.complete("planner", "never recorded")
        assert err.value.agent_name == "planner"
        assert len(err.value.digest) == 64

    def test_replay_is_bitwise_stable(self, tmp_path):
        gateway = self.make_gateway(tmp_path, [("a", "p", "respé text")])
        first = gateway.complete("a", "p")
        second = gateway.complete("a", "p")
        assert first == second == "respé text"


class _StubHandler(BaseHTTPRequestHandler):
    fail_times = 0
    calls = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).calls.append(body)
        if type(self).fail_times > 0:
            type(self).fail_times -= 1
            self.send_response(503)
            self.end_headers()
            return
        payload = {"choices": [{"message": {"content": "ok"}}]}
        encoded = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(encoded)))
        self.end_headers()
        self.wfile.write(encoded)

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    _StubHandler.fail_times = 0
    _StubHandler.calls = []
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestRecordMode:
    def test_record_against_stub_then_replay(self, stub_server, tmp_path):
        config = LlmConfig(mode="record", base_url=stub_server, model="stub-model")
        path = tmp_path / "rec.jsonl"
        gateway = LlmGateway(config, fixtures_path=path)
        assert gateway.complete("agent", "hello") == "ok"
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["agent_name"] == "agent"
        assert record["response_text"] == "ok"
        replay = LlmGateway(LlmConfig(mode="replay"), fixtures_path=path)
        assert replay.complete("agent", "hello") == "ok"
        assert replay.complete_response(
            LlmRequest("agent", "hello")).from_replay

    def test_transient_errors_retried(self, stub_server, tmp_path):
        _StubHandler.fail_times = 2
        config = LlmConfig(mode="live", base_url=stub_server, model="m",
                           max_retries=4)
        gateway = LlmGateway(config, fixtures_path=tmp_path / "f.jsonl")
        assert gateway.complete("agent", "retry me") == "ok"

    def test_exhausted_retries_escalate(self, stub_server, tmp_path):
        _StubHandler.fail_times = 99
        config = LlmConfig(mode="live", base_url=stub_server, model="m",
                           max_retries=2)
        gateway = LlmGateway(config, fixtures_path=tmp_path / "f.jsonl")
        with pytest.raises(LlmError, match="unreachable after retries"):
            gateway.complete("agent", "down")

    def test_record_mode_requires_provider(self, tmp_path):
        with pytest.raises(LlmError, match="requires a provider"):
            LlmGateway(LlmConfig(mode="record", provider="scripted"),
                       fixtures_path=tmp_path / "f.jsonl")


class TestExtractStructured:
    def test_bare_json(self):
        assert extract_structured('{"ok": true}') == {"ok": True}

    def test_fenced_block_after_prose(self):
        text = 'Here is my verdict.\n```json\n{"ok": false, "reason": "r"}\n```\nDone.'
        assert extract_structured(text) == {"ok": False, "reason": "r"}

    def test_bare_object_inside_prose(self):
        text = 'The answer is {"count": 3} as requested.'
        assert extract_structured(text) == {"count": 3}

    def test_nested_braces_in_strings(self):
        text = 'x {"sql": "SELECT \'{a}\' FROM t", "n": 1} y'
        assert extract_structured(text)["n"] == 1

    def test_no_object_raises(self):
        with pytest.raises(ValueError, match="no JSON object"):
            extract_structured("plain prose only")


class TestValidateSchema:
    def test_missing_field(self):
        with pytest.raises(ValueError, match="missing required field 'ok'"):
            validate_schema({}, {"ok": "boolean"})

    def test_wrong_type(self):
        with pytest.raises(TypeError, match="must be boolean"):
            validate_schema({"ok": "yes"}, {"ok": "boolean"})

    def test_optional_field(self):
        validate_schema({"a": 1}, {"a": "integer", "note?": "string"})

    def test_bool_is_not_number(self):
        with pytest.raises(TypeError):
            validate_schema({"n": True}, {"n": "number"})

    def test_array_and_object(self):
        validate_schema({"xs": [1], "m": {}}, {"xs": "array", "m": "object"})


class TestCompleteStructured:
    def make_gateway(self, responses, repair_rounds=2):
        calls = {"n": 0}

        def handler(agent, prompt):
            reply = responses[min(calls["n"], len(responses) - 1)]
            calls["n"] += 1
            return reply

        config = LlmConfig(mode="live", provider="scripted",
                           repair_rounds=repair_rounds)
        gateway = LlmGateway(config, provider=ScriptedProvider(handler))
        return gateway, calls

    def test_valid_first_try(self):
        gateway, calls = self.make_gateway(
            ['{"ok": true, "reason": "Matches aggregation intent"}'])
        parsed = gateway.complete_structured(
            "reviewer", "check", {"ok": "boolean", "reason": "string"})
        assert parsed["ok"] is True
        assert calls["n"] == 1

    def test_repair_reprompt_carries_error(self):
        gateway, calls = self.make_gateway(
            ["not json at all", '{"ok": true, "reason": "fine"}'])
        parsed = gateway.complete_structured(
            "reviewer", "check", {"ok": "boolean", "reason": "string"})
        assert parsed["ok"] is True
        assert calls["n"] == 2

    def test_escalates_after_budget(self):
        gateway, calls = self.make_gateway(["garbage"], repair_rounds=1)
        with pytest.raises(EscalationError, match="unusable model output"):
            gateway.complete_structured("reviewer", "check", {"ok": "boolean"})
        assert calls["n"] == 2

    def test_validation_failure_triggers_repair(self):
        gateway, calls = self.make_gateway(
            ['{"ok": "not boolean"}', '{"ok": false}'])
        parsed = gateway.complete_structured("reviewer", "check", {"ok": "boolean"})
        assert parsed == {"ok": False}
        assert calls["n"] == 2
