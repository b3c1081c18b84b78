"""Model access with record/replay fixtures and structured-output parsing.

Every agent call goes through one gateway. In replay mode responses come
from a fixture file keyed by (agent name, normalized prompt digest), which
makes the whole pipeline deterministic and network-free. Record mode runs a
real provider and persists what it said; live mode runs without recording.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
import re
import string
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .config import LlmConfig
from .errors import EscalationError, LlmError, MissingFixtureError


@dataclass
class LlmRequest:
    agent_name: str
    prompt: str
    response_schema: Optional[dict] = None
    temperature: float = 0.0
    max_tokens: int = 2048


@dataclass
class LlmResponse:
    text: str
    parsed: Optional[dict] = None
    usage: Optional[dict] = None
    provider: str = ""
    from_replay: bool = False


@dataclass(frozen=True)
class FixtureKey:
    agent_name: str
    prompt_digest: str


def normalize_prompt(prompt: str) -> str:
    lines = prompt.replace("\r\n", "\n").split("\n")
    return "\n".join(line.rstrip() for line in lines).rstrip()


def fixture_key(agent_name: str, prompt: str) -> FixtureKey:
    digest = hashlib.sha256(normalize_prompt(prompt).encode("utf-8")).hexdigest()
    return FixtureKey(agent_name=agent_name, prompt_digest=digest)


class FixtureStore:
    """Append-only JSONL store of recorded model responses."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._cache: Optional[dict[FixtureKey, str]] = None

    def load(self) -> dict[FixtureKey, str]:
        if self._cache is None:
            mapping: dict[FixtureKey, str] = {}
            if self.path.exists():
                for line in self.path.read_text(encoding="utf-8").splitlines():
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    key = FixtureKey(record["agent_name"], record["prompt_digest"])
                    mapping[key] = record["response_text"]
            self._cache = mapping
        return self._cache

    def get(self, key: FixtureKey) -> Optional[str]:
        return self.load().get(key)

    def append(self, key: FixtureKey, prompt: str, response_text: str,
               provider: str) -> None:
        record = {
            "agent_name": key.agent_name,
            "prompt_digest": key.prompt_digest,
            "prompt_excerpt": normalize_prompt(prompt)[:200],
            "response_text": response_text,
            "provider": provider,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            self.load()[key] = response_text


class HttpChatProvider:
    """Chat-completions client over HTTP with bounded retries."""

    def __init__(self, config: LlmConfig):
        self._config = config
        self.name = f"http:{config.model or 'default'}"

    def complete_text(self, request: LlmRequest) -> str:
        import httpx

        config = self._config
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        url = config.base_url.rstrip("/") + "/chat/completions"
        last_error: Optional[Exception] = None
        for attempt in range(max(1, config.max_retries)):
            try:
                response = httpx.post(url, json=body, headers=headers, timeout=60.0)
                if response.status_code in (429,) or response.status_code >= 500:
                    last_error = LlmError(
                        f"transient HTTP {response.status_code} from provider")
                    time.sleep(min(2.0, 0.1 * (2 ** attempt)))
                    continue
                response.raise_for_status()
                payload = response.json()
                return payload["choices"][0]["message"]["content"]
            except httpx.TransportError as exc:
                last_error = exc
                time.sleep(min(2.0, 0.1 * (2 ** attempt)))
            except (KeyError, IndexError, ValueError) as exc:
                raise LlmError(f"malformed provider response: {exc}") from exc
        raise LlmError(f"provider unreachable after retries: {last_error}")


class ScriptedProvider:
    """Deterministic provider driven by a handler function.

    Used to record the bundled fixtures and as a stand-in for a live model
    in offline smoke runs.
    """

    name = "scripted"

    def __init__(self, handler: Callable[[str, str], str]):
        self._handler = handler

    def complete_text(self, request: LlmRequest) -> str:
        return self._handler(request.agent_name, request.prompt)


class LlmGateway:
    def __init__(
        self,
        config: Optional[LlmConfig] = None,
        provider=None,
        fixtures_path: Optional[str | Path] = None,
    ):
        self.config = config or LlmConfig()
        self.mode = self.config.mode
        path = fixtures_path or self.config.fixtures_path
        if path:
            self.fixtures = FixtureStore(path)
        else:
            self.fixtures = FixtureStore(bundled_fixtures_path())
        if provider is not None:
            self.provider = provider
        elif self.config.provider == "http":
            self.provider = HttpChatProvider(self.config)
        else:
            self.provider = None
        if self.mode in ("record", "live") and self.provider is None:
            raise LlmError(f"mode {self.mode!r} requires a provider")

    @property
    def model_id(self) -> str:
        if self.mode == "replay":
            return "replay"
        return getattr(self.provider, "name", "unknown")

    def complete_response(self, request: LlmRequest) -> LlmResponse:
        key = fixture_key(request.agent_name, request.prompt)
        if self.mode == "replay":
            stored = self.fixtures.get(key)
            if stored is None:
                raise MissingFixtureError(request.agent_name, key.prompt_digest)
            return LlmResponse(text=stored, provider="replay", from_replay=True)
        text = self.provider.complete_text(request)
        # repeated identical prompts (shared sub-flows) record only once
        if self.mode == "record" and self.fixtures.get(key) != text:
            self.fixtures.append(key, request.prompt, text, self.provider.name)
        return LlmResponse(text=text, provider=self.provider.name)

    def complete(self, agent_name: str, prompt: str, **kwargs) -> str:
        request = LlmRequest(agent_name=agent_name, prompt=prompt, **kwargs)
        return self.complete_response(request).text

    def complete_structured(
        self,
        agent_name: str,
        prompt: str,
        schema: dict,
    ) -> dict:
        """Completion parsed as JSON and checked against a field schema.

        On a parse or validation failure the model is reprompted with the
        error, up to the configured repair budget, then the agent escalates.
        """
        current = prompt
        last_error = ""
        raw = ""
        for _ in range(1 + max(0, self.config.repair_rounds)):
            response = self.complete_response(
                LlmRequest(agent_name=agent_name, prompt=current,
                           response_schema=schema))
            raw = response.text
            try:
                parsed = extract_structured(raw)
                validate_schema(parsed, schema)
                return parsed
            except (ValueError, TypeError) as exc:
                last_error = str(exc)
                current = (
                    f"{prompt}\n\nYour previous reply could not be used: "
                    f"{last_error}\nReturn ONLY a JSON object with these "
                    f"fields: {json.dumps(schema, sort_keys=True)}")
        raise EscalationError(
            agent_name,
            f"unusable model output after repairs: {last_error}; "
            f"last output: {raw[:200]}")


_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.S)


def extract_structured(text: str) -> dict:
    """First well-formed JSON object in the text, fenced or bare."""
    candidates = [text.strip()]
    candidates.extend(m.strip() for m in _FENCE.findall(text))
    brace = _first_balanced_object(text)
    if brace:
        candidates.append(brace)
    for candidate in candidates:
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    raise ValueError("no JSON object found in model output")


def _first_balanced_object(text: str) -> Optional[str]:
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escape = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start:i + 1]
        start = text.find("{", start + 1)
    return None


_SCHEMA_TYPES = {
    "string": str,
    "number": (int, float),
    "integer": int,
    "boolean": bool,
    "array": list,
    "object": dict,
    "any": object,
}


def validate_schema(value: dict, schema: dict) -> None:
    """Check required fields and their kinds; '?'-suffixed names are optional."""
    for name, kind in schema.items():
        optional = name.endswith("?")
        field_name = name[:-1] if optional else name
        if field_name not in value:
            if optional:
                continue
            raise ValueError(f"missing required field {field_name!r}")
        expected = _SCHEMA_TYPES.get(kind)
        if expected is None:
            raise ValueError(f"unknown schema kind {kind!r}")
        got = value[field_name]
        if kind == "number" and isinstance(got, bool):
            raise TypeError(f"field {field_name!r} must be a number")
        if kind != "any" and not isinstance(got, expected):
            raise TypeError(
                f"field {field_name!r} must be {kind}, got {type(got).__name__}")
        if kind == "integer" and isinstance(got, bool):
            raise TypeError(f"field {field_name!r} must be an integer")


def bundled_fixtures_path() -> Path:
    return Path(str(resources.files("terrasql") / "fixtures" / "scenarios.jsonl"))


def load_prompt(name: str) -> string.Template:
    """Versioned prompt template; placeholders use $name syntax."""
    text = (resources.files("terrasql") / "prompts" / f"{name}.txt").read_text(
        encoding="utf-8")
    return string.Template(text)


def render_prompt(name: str, **values: str) -> str:
    return load_prompt(name).substitute(**values)
