"""Controlled database access: read-only execution, sampling, previews.

Every statement is classified before it reaches the connection, capped with
an injected LIMIT, executed under a statement timeout on a storage-level
read-only connection, and recorded in an audit log. This is the only module
that talks to the embedded engine on behalf of agents.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import EngineConfig
from .engine import EmbeddedEngine, TableMeta, create_toy_engine, seed_toy_database
from .errors import BlockedStatementError, ExecutionError, GatewayConnectError, SqlParseError
from .sqlkit import StatementClass, classify_statement, inject_limit, parse_sql

NULL_MARKER = "∅"      # ∅
ELLIPSIS = "…"         # …


@dataclass
class ExecutionPolicy:
    row_cap: int = 10
    statement_timeout_ms: int = 10_000
    read_only_transaction: bool = True

    def __post_init__(self) -> None:
        if not self.read_only_transaction:
            raise ValueError("the gateway only accepts read-only policies")
        if self.row_cap < 1:
            raise ValueError("row_cap must be at least 1")


@dataclass
class ResultTable:
    columns: list[tuple[str, str]]
    rows: list[tuple]
    truncated: bool
    elapsed_ms: float
    statement: str


@dataclass
class AuditRecord:
    timestamp: str
    session_id: str
    statement_digest: str
    outcome: str
    statement: str = ""  # kept in memory for assertions, not written to disk

    def to_line(self) -> str:
        return json.dumps({
            "timestamp": self.timestamp,
            "session_id": self.session_id,
            "statement_digest": self.statement_digest,
            "outcome": self.outcome,
        }, ensure_ascii=False)


class AuditLog:
    """Append-only JSONL log; appends are serialized."""

    def __init__(self, path: Optional[str] = None):
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self.records: list[AuditRecord] = []

    def append(self, session_id: str, statement: str, outcome: str) -> AuditRecord:
        record = AuditRecord(
            timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            session_id=session_id,
            statement_digest=hashlib.sha256(statement.encode("utf-8")).hexdigest(),
            outcome=outcome,
            statement=statement,
        )
        with self._lock:
            self.records.append(record)
            if self._path:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(record.to_line() + "\n")
        return record


def _value_type_name(value: object) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "double precision"
    if isinstance(value, bytes):
        return "bytea"
    return "text"


class DbGateway:
    """Read-only facade over one embedded engine connection."""

    def __init__(
        self,
        engine: EmbeddedEngine,
        audit_path: Optional[str] = None,
        sample_seed: int = 42,
    ):
        self._engine = engine
        self._lock = threading.Lock()
        self._sample_seed = sample_seed
        self.audit = AuditLog(audit_path)

    # -- catalog passthrough -------------------------------------------------

    def tables(self) -> list[str]:
        return self._engine.tables()

    def table_meta(self, table: str) -> TableMeta:
        return self._engine.table_meta(table)

    def row_count(self, table: str) -> int:
        return self._engine.row_count(table)

    # -- execution -----------------------------------------------------------

    def execute_readonly(
        self,
        sql: str,
        policy: Optional[ExecutionPolicy] = None,
        session_id: str = "-",
    ) -> ResultTable:
        policy = policy or ExecutionPolicy()
        kind = classify_statement(sql)
        if kind is not StatementClass.READ_ONLY:
            # Unparseable text fails closed too, but the caller needs the
            # parser's message to have any chance of repairing it.
            try:
                parse_sql(sql)
            except SqlParseError as exc:
                self.audit.append(session_id, sql, "error")
                raise ExecutionError(f"syntax error: {exc}", sql) from exc
            self.audit.append(session_id, sql, f"blocked:{kind.value}")
            raise BlockedStatementError(kind.value, sql)
        capped = inject_limit(sql, policy.row_cap)
        started = time.perf_counter()
        try:
            with self._lock:
                names, rows = self._engine.execute_select(
                    capped, timeout_ms=policy.statement_timeout_ms)
        except ExecutionError:
            self.audit.append(session_id, capped, "error")
            raise
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        self.audit.append(session_id, capped, "ok")
        columns = []
        for idx, name in enumerate(names):
            inferred = next(
                (t for t in (_value_type_name(r[idx]) for r in rows) if t), "unknown")
            columns.append((name, inferred))
        return ResultTable(
            columns=columns,
            rows=rows,
            truncated=len(rows) >= policy.row_cap,
            elapsed_ms=elapsed_ms,
            statement=capped,
        )

    def sample_values(self, table: str, column: str, k: int) -> list:
        meta = self.table_meta(table)
        if column not in [c.name for c in meta.columns]:
            raise ExecutionError(f'column "{column}" does not exist', column)
        with self._lock:
            _, rows = self._engine.execute_select(
                f'SELECT DISTINCT "{column}" FROM "{table}" '
                f'WHERE "{column}" IS NOT NULL ORDER BY "{column}"')
        pool = [r[0] for r in rows]
        if len(pool) <= k:
            return pool
        rng = random.Random(self._sample_seed)
        return rng.sample(pool, k)


def format_preview(result: ResultTable, max_width: int = 40) -> str:
    """Fixed-width text rendering of a result, safe to hand to a model."""

    def cell(value: object) -> str:
        if value is None:
            return NULL_MARKER
        text = str(value)
        if len(text) > max_width:
            return text[: max_width - 1] + ELLIPSIS
        return text

    headers = [cell(name) for name, _ in result.columns]
    grid = [[cell(v) for v in row] for row in result.rows]
    widths = [len(h) for h in headers]
    for row in grid:
        for i, text in enumerate(row):
            widths[i] = max(widths[i], len(text))
    lines = []
    if headers:
        lines.append(" | ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip())
        lines.append("-+-".join("-" * w for w in widths))
        for row in grid:
            lines.append(" | ".join(t.ljust(w) for t, w in zip(row, widths)).rstrip())
    count = len(result.rows)
    footer = f"{count} row" + ("" if count == 1 else "s")
    if result.truncated:
        footer += " (truncated)"
    lines.append(footer)
    return "\n".join(lines)


def connect_gateway(config: EngineConfig) -> DbGateway:
    """Open the configured database and wrap it in a gateway."""
    db = config.database
    if db.engine == "embedded":
        if db.path == ":memory:":
            engine = create_toy_engine()
        else:
            existing = Path(db.path).exists()
            engine = EmbeddedEngine(db.path)
            if not existing:
                seed_toy_database(engine)
            engine.freeze()
        return DbGateway(engine, sample_seed=config.thresholds.sample_seed)
    raise GatewayConnectError(
        f"database engine {db.engine!r} requires a server driver that is not "
        f"bundled; use the embedded engine")
