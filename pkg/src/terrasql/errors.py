"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class TerraSqlError(Exception):
    """Base class for all engine errors."""


class ConfigError(TerraSqlError):
    """Fatal misconfiguration (missing key, bad value). Not retriable."""

    def __init__(self, key: str, message: str = "") -> None:
        self.key = key
        super().__init__(message or f"missing or invalid config key: {key}")


class GatewayConnectError(TerraSqlError):
    """Database unreachable. Retriable at the caller's discretion."""


class ExecutionError(TerraSqlError):
    """A statement failed on the server; carries the server message."""

    def __init__(self, message: str, statement: str = "") -> None:
        self.server_message = message
        self.statement = statement
        super().__init__(message)


class BlockedStatementError(TerraSqlError):
    """A statement was refused before reaching the server."""

    def __init__(self, kind: str, statement: str = "") -> None:
        self.kind = kind
        self.statement = statement
        super().__init__(f"blocked: statement classifies as {kind}")


class SqlParseError(TerraSqlError):
    """Input text could not be parsed as SQL."""

    def __init__(self, message: str, offset: int = -1) -> None:
        self.offset = offset
        super().__init__(f"{message} (at offset {offset})" if offset >= 0 else message)


class UnsupportedSqlError(TerraSqlError):
    """Parsed fine, but the embedded engine cannot execute the construct."""


class ColumnInjectionError(TerraSqlError):
    """A requested column could not be injected into the SELECT clause."""


class PlanFormatError(TerraSqlError):
    """A logical-plan text did not follow the documented section layout."""


class BenchmarkFormatError(TerraSqlError):
    """A benchmark suite or label file entry failed validation."""

    def __init__(self, line: int, field: str, message: str) -> None:
        self.line = line
        self.field = field
        super().__init__(f"line {line}: field '{field}': {message}")


class LlmError(TerraSqlError):
    """Provider failure after bounded retries, or unusable model output."""


class MissingFixtureError(LlmError):
    """Replay mode found no recorded response for a fixture key."""

    def __init__(self, agent_name: str, digest: str) -> None:
        self.agent_name = agent_name
        self.digest = digest
        super().__init__(f"no recorded fixture for agent={agent_name} digest={digest}")


class EscalationError(TerraSqlError):
    """An agent gave up; the orchestrator must take over."""

    def __init__(self, agent_name: str, reason: str) -> None:
        self.agent_name = agent_name
        self.reason = reason
        super().__init__(f"{agent_name}: {reason}")
