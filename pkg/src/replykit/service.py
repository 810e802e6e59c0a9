"""HTTP service hosting the merge-session workflow and the suggestion endpoint.

Single-writer discipline: every mutation carries the cursor token it was
issued against and is rejected with 409 when stale, so double-submits from
the UI cannot corrupt the session. Accepted actions are appended and fsynced
to the action log before the response is acknowledged; on startup the log is
replayed, which makes a crash at any point recoverable.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from fastapi import FastAPI
from fastapi.responses import HTMLResponse, JSONResponse
from pydantic import BaseModel

from . import classes as rc
from .classifier import SoftmaxModel
from .clustering import ClusterSet, cluster_set_hash
from .corpus import SPEAKERS, ResponseTable, Turn
from .selective import suggest

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><title>replykit merge service</title></head>
<body><h1>replykit merge service</h1>
<p>No UI bundle configured. The JSON API lives under <code>/api/</code>.</p>
</body></html>"""


class ServiceStartupError(RuntimeError):
    """The service refused to start (e.g. corrupt action log)."""


@dataclass
class ServiceState:
    session: rc.MergeSession
    log_path: Path
    top_n: int
    model: SoftmaxModel | None = None
    catalog: list[rc.ResponseClass] | None = None
    static_dir: Path | None = None
    token: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def build_state(
    cluster_set: ClusterSet,
    table: ResponseTable,
    top_n: int,
    log_path: str | Path,
    model: SoftmaxModel | None = None,
    catalog: list[rc.ResponseClass] | None = None,
    static_dir: str | Path | None = None,
) -> ServiceState:
    """Open (or resume) a merge session backed by a write-ahead action log."""
    log_path = Path(log_path)
    expected_hash = cluster_set_hash(cluster_set)
    if log_path.exists():
        try:
            header, actions = rc.read_action_log(log_path)
        except ValueError as exc:
            raise ServiceStartupError(f"corrupt action log {log_path}: {exc}") from exc
        if header.get("cluster_set_hash") != expected_hash:
            raise ServiceStartupError(
                f"action log {log_path} belongs to a different cluster set "
                f"({header.get('cluster_set_hash')} != {expected_hash})"
            )
        if header.get("top_n") != top_n:
            raise ServiceStartupError(
                f"action log {log_path} was started with top_n={header.get('top_n')}, not {top_n}"
            )
        try:
            session = rc.replay_session(cluster_set, table, top_n, actions)
        except (rc.ActionError, ValueError) as exc:
            raise ServiceStartupError(f"action log {log_path} does not replay: {exc}") from exc
        token = len(actions)
    else:
        session = rc.start_session(cluster_set, table, top_n)
        rc.write_log_header(log_path, top_n, expected_hash)
        token = 0
    if model is not None and catalog is not None:
        actual = rc.catalog_structural_hash(catalog)
        if actual != model.catalog_hash:
            raise ServiceStartupError(
                f"loaded model was trained against catalog {model.catalog_hash}, got {actual}"
            )
    return ServiceState(
        session=session,
        log_path=log_path,
        top_n=top_n,
        model=model,
        catalog=catalog,
        static_dir=Path(static_dir) if static_dir else None,
        token=token,
    )


class ActionSpec(BaseModel):
    kind: Literal["assign", "create", "skip", "undo"]
    class_id: int | None = None
    name: str | None = None
    exemplar: str | None = None


class ActionBody(BaseModel):
    cursor: int
    action: ActionSpec


class TurnBody(BaseModel):
    speaker: str
    text: str


class SuggestBody(BaseModel):
    turns: list[TurnBody]
    threshold: float = 0.5


def _next_payload(state: ServiceState) -> dict:
    session = state.session
    item = session.next_centroid()
    payload: dict = {
        "complete": item is None,
        "cursor": state.token,
        "progress": {"reviewed": session.cursor, "total": len(session.queue)},
        "classes": [
            {"id": c.id, "name": c.name, "exemplar": c.exemplar_text} for c in session.classes
        ],
        "cluster": None,
    }
    if item is not None:
        cluster_id, centroid_text, total_count, _ = item
        cluster = session.cluster_set.by_id(cluster_id)
        payload["cluster"] = {
            "id": cluster_id,
            "centroid_text": centroid_text,
            "total_count": total_count,
            "members": [
                {"text": session.table[m].normalized_text, "count": session.table[m].count}
                for m in sorted(cluster.member_ids)
            ],
        }
    return payload


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="replykit merge service")

    @app.get("/api/session/next")
    def session_next() -> JSONResponse:
        with state.lock:
            return JSONResponse(_next_payload(state))

    @app.post("/api/session/action")
    def session_action(body: ActionBody) -> JSONResponse:
        with state.lock:
            if body.cursor != state.token:
                return JSONResponse(
                    {"error": "stale cursor token", "cursor": state.token}, status_code=409
                )
            current = state.session.current_cluster()
            action = rc.timestamped(
                rc.MergeAction(
                    kind=body.action.kind,
                    cluster_id=current.id if current and body.action.kind != "undo" else None,
                    class_id=body.action.class_id,
                    name=body.action.name,
                    exemplar=body.action.exemplar,
                    actor="ui",
                )
            )
            try:
                state.session.check_action(action)
            except rc.ActionError as exc:
                return JSONResponse({"error": str(exc), "cursor": state.token}, status_code=400)
            rc.append_action(state.log_path, action)  # write-ahead of the in-memory apply
            state.session.apply_action(action)
            state.token += 1
            return JSONResponse({"cursor": state.token})

    @app.get("/api/classes/export")
    def classes_export() -> JSONResponse:
        with state.lock:
            if not state.session.classes:
                return JSONResponse({"error": "no classes to export"}, status_code=400)
            return JSONResponse(rc.catalog_document(state.session.classes))

    @app.post("/api/suggest")
    def api_suggest(body: SuggestBody) -> JSONResponse:
        if state.model is None or state.catalog is None:
            return JSONResponse({"error": "no model loaded"}, status_code=400)
        for t in body.turns:
            if t.speaker not in SPEAKERS:
                return JSONResponse({"error": f"unknown speaker {t.speaker!r}"}, status_code=400)
        if not body.turns:
            return JSONResponse({"error": "turns must be non-empty"}, status_code=400)
        turns = [Turn(speaker=t.speaker, text=t.text) for t in body.turns]
        try:
            result = suggest(state.model, state.catalog, turns, body.threshold)
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        payload: dict = {"opted_out": result.opted_out, "confidence": result.confidence}
        if not result.opted_out:
            payload["class_id"] = result.class_id
            payload["exemplar"] = result.exemplar_text
        return JSONResponse(payload)

    @app.get("/", response_class=HTMLResponse)
    def index() -> HTMLResponse:
        if state.static_dir is not None:
            index_path = state.static_dir / "index.html"
            if index_path.exists():
                return HTMLResponse(index_path.read_text(encoding="utf-8"))
        return HTMLResponse(_PLACEHOLDER_PAGE)

    if state.static_dir is not None and state.static_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/static", StaticFiles(directory=str(state.static_dir)), name="static")

    return app


def serve(state: ServiceState, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(state), host=host, port=port, log_level="info")
