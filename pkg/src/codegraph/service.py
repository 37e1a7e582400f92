"""HTTP service over loaded snapshots: queries, node navigation, sessions.

One process serves any number of read-only snapshots plus the chat agent
endpoints; the web console consumes exactly this API. Error bodies are
always {error_code, message, position?}.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import agent as agent_mod
from .agent import AgentConfig, BackendError, ConfigError, ProtocolError, Session
from .graph_schema import SCHEMA_VERSION, EdgeType, schema_text
from .graph_store import (
    GraphHandle,
    NoCodeSpan,
    NotFound,
    StaleSource,
    edge_to_json,
    neighbors,
    node_to_json,
    resolve_code,
)
from .query_engine import ExecutionCaps, QueryError, execute, parse_query


class ApiError(Exception):
    def __init__(self, status: int, error_code: str, message: str, position=None):
        super().__init__(message)
        self.status = status
        self.error_code = error_code
        self.message = message
        self.position = position

    def body(self) -> dict:
        payload = {"error_code": self.error_code, "message": self.message}
        if self.position is not None:
            payload["position"] = self.position
        return payload


@dataclass
class RepoEntry:
    id: str
    handle: GraphHandle
    repo_root: str


@dataclass
class SessionEntry:
    session: Session
    config: AgentConfig
    repo_id: str
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class ServiceState:
    """Registry of snapshots and in-memory sessions behind the API."""

    repos: dict[str, RepoEntry] = field(default_factory=dict)
    sessions: dict[str, SessionEntry] = field(default_factory=dict)
    backend: object | None = None
    caps: ExecutionCaps = field(default_factory=ExecutionCaps)
    audit_dir: str | None = None
    registry_lock: threading.RLock = field(default_factory=threading.RLock)

    def add_repo(self, repo_id: str, handle: GraphHandle, repo_root: str | None = None) -> None:
        with self.registry_lock:
            self.repos[repo_id] = RepoEntry(
                id=repo_id, handle=handle, repo_root=repo_root or handle.repo_root
            )

    def repo(self, repo_id: str) -> RepoEntry:
        with self.registry_lock:
            entry = self.repos.get(repo_id)
        if entry is None:
            raise ApiError(404, "unknown_repo", f"no repository {repo_id!r} loaded")
        return entry

    def session(self, session_id: str) -> SessionEntry:
        with self.registry_lock:
            entry = self.sessions.get(session_id)
        if entry is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return entry

    def audit(self, entry: SessionEntry) -> None:
        if not self.audit_dir:
            return
        os.makedirs(self.audit_dir, exist_ok=True)
        path = os.path.join(self.audit_dir, f"{entry.session.id}.jsonl")
        with open(path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry.session.to_json(), sort_keys=True) + "\n")


class QueryRequest(BaseModel):
    query: str
    limit: int | None = None


class SessionCreate(BaseModel):
    preset: str = "chat"
    strategy: str | None = None
    max_rounds: int | None = None


class MessageRequest(BaseModel):
    text: str


def create_app(state: ServiceState, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="codegraph", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.get("/v1/schema")
    def get_schema():
        return {"schema_version": SCHEMA_VERSION, "text": schema_text()}

    @app.get("/v1/repos")
    def list_repos():
        with state.registry_lock:
            entries = list(state.repos.values())
        return {
            "repos": [
                {
                    "id": entry.id,
                    "repo_root": entry.repo_root,
                    "nodes": len(entry.handle.nodes),
                    "edges": len(entry.handle.edges),
                }
                for entry in sorted(entries, key=lambda e: e.id)
            ]
        }

    @app.get("/v1/repos/{repo_id}/stats")
    def repo_stats(repo_id: str):
        entry = state.repo(repo_id)
        return {
            "id": entry.id,
            "repo_root": entry.repo_root,
            "files": len(entry.handle.file_hashes),
            "node_counts": entry.handle.node_counts(),
            "edge_counts": entry.handle.edge_counts(),
        }

    @app.post("/v1/repos/{repo_id}/query")
    def run_query(repo_id: str, body: QueryRequest):
        entry = state.repo(repo_id)
        try:
            ast = parse_query(body.query)
        except QueryError as exc:
            raise ApiError(
                400,
                _query_error_code(exc),
                str(exc),
                position={"line": exc.line, "column": exc.column},
            ) from exc
        caps = ExecutionCaps(
            max_rows=min(state.caps.max_rows, body.limit)
            if body.limit
            else state.caps.max_rows,
            max_chars=state.caps.max_chars,
        )
        return execute(ast, entry.handle, caps).to_json()

    @app.get("/v1/repos/{repo_id}/nodes/{node_id}")
    def get_node(repo_id: str, node_id: str):
        entry = state.repo(repo_id)
        try:
            node = entry.handle.node(node_id)
        except NotFound as exc:
            raise ApiError(404, "unknown_node", str(exc)) from exc
        return node_to_json(node)

    @app.get("/v1/repos/{repo_id}/nodes/{node_id}/neighbors")
    def get_neighbors(
        repo_id: str, node_id: str, direction: str = "both", type: str | None = None
    ):
        entry = state.repo(repo_id)
        type_filter = None
        if type:
            try:
                type_filter = EdgeType(type.upper())
            except ValueError as exc:
                raise ApiError(400, "unknown_edge_type", f"unknown edge type: {type}") from exc
        if direction not in ("out", "in", "both"):
            raise ApiError(400, "bad_direction", "direction must be out, in, or both")
        try:
            pairs = neighbors(entry.handle, node_id, direction, type_filter)
        except NotFound as exc:
            raise ApiError(404, "unknown_node", str(exc)) from exc
        return {
            "neighbors": [
                {"edge": edge_to_json(edge), "node": node_to_json(node)}
                for edge, node in pairs
            ]
        }

    @app.get("/v1/repos/{repo_id}/nodes/{node_id}/code")
    def get_code(repo_id: str, node_id: str):
        entry = state.repo(repo_id)
        try:
            code = resolve_code(entry.handle, node_id, entry.repo_root)
        except NotFound as exc:
            raise ApiError(404, "unknown_node", str(exc)) from exc
        except NoCodeSpan as exc:
            raise ApiError(422, "no_code_span", str(exc)) from exc
        except StaleSource as exc:
            raise ApiError(409, "stale_source", str(exc)) from exc
        return {"code": code}

    @app.post("/v1/repos/{repo_id}/sessions")
    def create_session(repo_id: str, body: SessionCreate):
        state.repo(repo_id)
        try:
            config = AgentConfig(
                app_preset=body.preset,
                strategy=body.strategy,
                temperature=agent_mod.HttpChatBackend.temperature_from_env(os.environ),
                **({"max_rounds": body.max_rounds} if body.max_rounds else {}),
            )
        except ConfigError as exc:
            raise ApiError(422, "bad_config", str(exc)) from exc
        session = Session.new("", config, session_id=uuid.uuid4().hex)
        entry = SessionEntry(session=session, config=config, repo_id=repo_id)
        with state.registry_lock:
            state.sessions[session.id] = entry
        return {"session_id": session.id, "preset": body.preset,
                "strategy": config.effective_strategy()}

    @app.post("/v1/sessions/{session_id}/messages")
    def post_message(session_id: str, body: MessageRequest):
        entry = state.session(session_id)
        if state.backend is None:
            raise ApiError(503, "backend_unavailable", "no chat backend configured")
        repo = state.repo(entry.repo_id)
        with entry.lock:  # one in-flight message per session
            if not entry.session.task:
                entry.session.task = body.text
            queries_before = len(entry.session.issued_queries)
            try:
                answer = agent_mod.send_message(
                    entry.session, body.text, repo.handle, state.backend, entry.config
                )
            except BackendError as exc:
                raise ApiError(503, "backend_unavailable", str(exc)) from exc
            except ProtocolError as exc:
                raise ApiError(502, "protocol_error", str(exc)) from exc
            state.audit(entry)
            return {
                "answer": answer,
                "rounds": entry.session.rounds,
                "queries": [
                    {"nl": q.nl_query, "cypher": q.graph_query, "status": q.status}
                    for q in entry.session.issued_queries[queries_before:]
                ],
                "usage": entry.session.usage.to_json(),
            }

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        entry = state.session(session_id)
        return entry.session.to_json()

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _query_error_code(exc: QueryError) -> str:
    from .query_engine import UnknownEdgeType, UnknownLabel, UnknownProperty

    if isinstance(exc, UnknownLabel):
        return "unknown_label"
    if isinstance(exc, UnknownEdgeType):
        return "unknown_edge_type"
    if isinstance(exc, UnknownProperty):
        return "unknown_property"
    return "syntax_error"
