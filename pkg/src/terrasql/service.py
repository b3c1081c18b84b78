"""HTTP surface over the pipeline: sessions, one-shot queries, health.

Every response follows either its documented shape or the uniform error
shape {error_code, message, trace_id}; credentials never appear in any
body or trace.
"""

from __future__ import annotations

import threading
import warnings
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .config import EngineConfig
from .llm import LlmGateway
from .orchestrator import Orchestrator, Session
from .runtime import PipelineServices, assemble_services

_STATUS_CODES = {
    400: "bad_request",
    404: "not_found",
    405: "method_not_allowed",
    422: "invalid_request",
}


class ApiError(Exception):
    """Carried up to the handler that renders the uniform error shape."""

    def __init__(self, status: int, code: str, message: str,
                 trace_id: str = "-") -> None:
        self.status = status
        self.code = code
        self.message = message
        self.trace_id = trace_id
        super().__init__(message)


class MessageBody(BaseModel):
    text: str


class FeedbackBody(BaseModel):
    verdict: str
    note: str = ""


class QueryBody(BaseModel):
    question: str


def _error(status: int, code: str, message: str,
           trace_id: str = "-") -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"error_code": code, "message": message,
                 "trace_id": trace_id})


def create_app(
    services: Optional[PipelineServices] = None,
    config: Optional[EngineConfig] = None,
    memory_path: Optional[str] = None,
) -> FastAPI:
    """Build the application over assembled services (or assemble them)."""
    if services is None:
        config = config or EngineConfig()
        services = assemble_services(config, llm=LlmGateway(config.llm))
    orchestrator = Orchestrator(services, memory_path=memory_path)
    app = FastAPI(title="terrasql", docs_url=None, redoc_url=None)
    app.state.services = services
    app.state.orchestrator = orchestrator
    locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def session_lock(session_id: str) -> threading.Lock:
        with locks_guard:
            return locks.setdefault(session_id, threading.Lock())

    def require_session(session_id: str) -> Session:
        session = orchestrator.get_session(session_id)
        if session is None:
            raise ApiError(404, "unknown_session",
                           f"no session with id {session_id}",
                           trace_id=session_id)
        return session

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return _error(exc.status, exc.code, exc.message, exc.trace_id)

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        code = _STATUS_CODES.get(exc.status_code, "http_error")
        return _error(exc.status_code, code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request,
                                  exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(part) for part in first.get("loc", ()))
        message = f"{first.get('msg', 'invalid request body')} at {where}"
        return _error(422, "invalid_request", message)

    @app.exception_handler(Exception)
    async def on_unexpected(request: Request, exc: Exception):
        return _error(500, "internal_error", str(exc))

    @app.post("/sessions")
    def create_session() -> dict:
        session = orchestrator.create_session()
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageBody) -> dict:
        session = require_session(session_id)
        with session_lock(session_id):
            reply = orchestrator.handle_message(session, body.text)
        kind = reply["kind"]
        if kind == "clarification":
            return {"clarification": reply["question"],
                    "trace_id": reply["trace_id"]}
        if kind == "answer":
            return {"answer_bundle": reply["bundle"],
                    "trace_id": reply["trace_id"]}
        if kind == "rejection":
            raise ApiError(403, "security_rejection", reply["reason"],
                           trace_id=reply["trace_id"])
        raise ApiError(500, "pipeline_failure", reply["message"],
                       trace_id=reply["trace_id"])

    @app.get("/sessions/{session_id}/trace")
    def get_trace(session_id: str) -> dict:
        session = require_session(session_id)
        return {"session_id": session_id,
                "events": orchestrator.trace(session)}

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: FeedbackBody) -> dict:
        session = require_session(session_id)
        try:
            with warnings.catch_warnings():
                # an unanswered session yields a warning and a None record
                warnings.simplefilter("ignore")
                record = orchestrator.submit_feedback(
                    session, body.verdict, body.note)
        except ValueError as exc:
            raise ApiError(422, "invalid_verdict", str(exc),
                           trace_id=session_id)
        return {"acknowledged": True, "recorded": record is not None,
                "trace_id": session_id}

    @app.post("/query")
    def one_shot(body: QueryBody) -> dict:
        session = orchestrator.create_session()
        try:
            reply = orchestrator.handle_message(session, body.question)
        finally:
            orchestrator.close_session(session)
        kind = reply["kind"]
        if kind == "answer":
            return reply["bundle"]
        if kind == "clarification":
            raise ApiError(422, "needs_clarification", reply["question"],
                           trace_id=reply["trace_id"])
        if kind == "rejection":
            raise ApiError(403, "security_rejection", reply["reason"],
                           trace_id=reply["trace_id"])
        raise ApiError(500, "pipeline_failure", reply["message"],
                       trace_id=reply["trace_id"])

    @app.get("/schema")
    def get_schema() -> dict:
        table_text = {n.table: n.text for n in services.narratives
                      if n.column is None}
        column_text = {(n.table, n.column): n.text
                       for n in services.narratives if n.column is not None}
        tables = []
        for profile in sorted(services.table_profiles,
                              key=lambda t: t.table_name):
            columns = [
                {"name": c.column_name, "data_type": c.data_type,
                 "narrative": column_text.get(
                     (c.table_name, c.column_name), "")}
                for c in services.column_profiles
                if c.table_name == profile.table_name]
            tables.append({
                "name": profile.table_name,
                "row_count": profile.row_count,
                "has_geometry": profile.has_geometry,
                "narrative": table_text.get(profile.table_name, ""),
                "columns": columns})
        return {"tables": tables}

    @app.get("/health")
    def health() -> dict:
        try:
            db_ok = bool(services.gateway.tables())
        except Exception:
            db_ok = False
        try:
            kb_ok = services.knowledge_base.version() > 0 and bool(
                services.narratives)
        except Exception:
            kb_ok = False
        status = "ok" if db_ok and kb_ok else "degraded"
        return {"status": status, "db_ok": db_ok, "kb_ok": kb_ok,
                "llm_mode": services.llm.mode}

    return app


def serve(app: FastAPI, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the blocking development server."""
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="warning")
