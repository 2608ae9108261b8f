"""HTTP surface: session lifecycle, SSE message turns, uploads, lookups.

Each agent event becomes one server-sent-event frame (``event: <kind>`` +
``data: <json>``, blank-line terminated) flushed as soon as the agent emits
it; the stream closes right after the ``done`` frame. A dropped client only
stops delivery for its own turn — the agent finishes in its worker thread and
the session stays usable.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import date, datetime, timezone

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from starlette.concurrency import run_in_threadpool

from .agent import AgentEvent, EventKind, SessionState
from .corpus import record_to_dict, rfc3339, status_of
from .ingest import RefreshScheduler
from .runtime import Runtime

__all__ = ["create_app", "sse_frame"]

logger = logging.getLogger(__name__)

ALLOWED_UPLOAD_TYPES = {"text/plain", "text/markdown"}


def sse_frame(event: AgentEvent) -> str:
    return f"event: {event.kind.value}\ndata: {json.dumps(event.data(), ensure_ascii=False)}\n\n"


@dataclass
class _SessionRecord:
    state: SessionState
    created_at: datetime
    last_activity: datetime
    turn_guard: threading.Lock = field(default_factory=threading.Lock)


class SessionRegistry:
    """In-memory session store with idle-TTL eviction."""

    def __init__(self, ttl_minutes: float):
        self._sessions: dict[str, _SessionRecord] = {}
        self._lock = threading.Lock()
        self.ttl_minutes = ttl_minutes

    def create(self) -> _SessionRecord:
        now = datetime.now(timezone.utc)
        record = _SessionRecord(state=SessionState(), created_at=now, last_activity=now)
        with self._lock:
            self._evict(now)
            self._sessions[record.state.session_id] = record
        return record

    def get(self, session_id: str) -> _SessionRecord | None:
        now = datetime.now(timezone.utc)
        with self._lock:
            self._evict(now)
            record = self._sessions.get(session_id)
            if record is not None:
                record.last_activity = now
            return record

    def _evict(self, now: datetime) -> None:
        cutoff = self.ttl_minutes * 60.0
        stale = [
            sid
            for sid, rec in self._sessions.items()
            if (now - rec.last_activity).total_seconds() > cutoff
            and not rec.turn_guard.locked()
        ]
        for sid in stale:
            del self._sessions[sid]

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(runtime: Runtime) -> FastAPI:
    sessions = SessionRegistry(ttl_minutes=runtime.config.session_ttl_minutes)
    scheduler: RefreshScheduler | None = None
    if (
        runtime.config.scheduler.enabled
        and runtime.sources
        and runtime.fetcher is not None
    ):
        scheduler = RefreshScheduler(
            runtime.sources,
            runtime.fetcher,
            runtime.gateway,
            runtime.index,
            tick_seconds=runtime.config.scheduler.tick_seconds,
            after_cycle=lambda reports: runtime.save_if_dirty(),
        )

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if scheduler is not None:
            scheduler.start()
        yield
        if scheduler is not None:
            scheduler.stop()
        if runtime.index.dirty:
            runtime.save_if_dirty()
            logger.info("snapshot saved on shutdown")

    app = FastAPI(title="grantforge", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.runtime = runtime
    app.state.sessions = sessions

    @app.post("/v1/sessions", status_code=201)
    def create_session() -> dict:
        record = sessions.create()
        return {
            "session_id": record.state.session_id,
            "created_at": rfc3339(record.created_at),
        }

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        record = sessions.get(session_id)
        if record is None:
            return _error(404, "unknown session")
        return {
            "session_id": record.state.session_id,
            "created_at": rfc3339(record.created_at),
            "turn_count": record.state.turn_count,
            "keywords": list(record.state.plan.keywords),
        }

    @app.post("/v1/sessions/{session_id}/messages")
    async def post_message(session_id: str, request: Request):
        record = sessions.get(session_id)
        if record is None:
            return _error(404, "unknown session")
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be JSON")
        text = str(body.get("text") or "").strip() if isinstance(body, dict) else ""
        if not text:
            return _error(400, "text must be non-empty")
        if not record.turn_guard.acquire(blocking=False):
            return _error(409, "a turn is already active for this session")

        frames: queue.Queue[AgentEvent | None] = queue.Queue()
        last_seq = {"value": -1}

        def sink(event: AgentEvent) -> None:
            last_seq["value"] = event.seq
            frames.put(event)

        def work() -> None:
            try:
                runtime.agent.run_turn(record.state, text, sink=sink)
            except Exception as exc:  # stream must still terminate with done
                logger.exception("turn failed for session %s", session_id)
                frames.put(
                    AgentEvent(
                        seq=last_seq["value"] + 1,
                        kind=EventKind.ERROR,
                        payload={"tool": None, "message": str(exc)},
                    )
                )
                frames.put(
                    AgentEvent(
                        seq=last_seq["value"] + 2,
                        kind=EventKind.DONE,
                        payload={"cards": 0},
                    )
                )
            finally:
                frames.put(None)
                record.turn_guard.release()

        threading.Thread(target=work, name=f"turn-{session_id[:8]}", daemon=True).start()

        async def stream():
            while True:
                event = await run_in_threadpool(frames.get)
                if event is None:
                    break
                yield sse_frame(event)

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.post("/v1/sessions/{session_id}/documents")
    async def upload_document(session_id: str, request: Request, filename: str | None = None):
        record = sessions.get(session_id)
        if record is None:
            return _error(404, "unknown session")
        content_type = request.headers.get("content-type", "").split(";")[0].strip().lower()
        if content_type not in ALLOWED_UPLOAD_TYPES:
            return _error(
                415,
                "unsupported content type: upload extracted text as text/plain or text/markdown",
            )
        raw = await request.body()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            return _error(400, "payload must be UTF-8 text")
        if not text.strip():
            return _error(400, "payload must be non-empty")
        if not record.turn_guard.acquire(blocking=False):
            return _error(409, "a turn is already active for this session")
        try:
            runtime.agent.ingest_document(record.state, text)
        finally:
            record.turn_guard.release()
        return {
            "keywords": list(record.state.plan.keywords),
            "filename": filename,
        }

    @app.get("/v1/opportunities/{opportunity_id}")
    def get_opportunity(opportunity_id: str):
        opp = runtime.index.get(opportunity_id)
        if opp is None:
            return _error(404, "unknown opportunity")
        body = record_to_dict(opp)
        body["status"] = status_of(opp, date.today()).value
        return body

    @app.get("/v1/healthz")
    def health_and_stats() -> dict:
        stats = runtime.index.stats()
        return {
            "status": "ok",
            "doc_count": stats.doc_count,
            "per_agency_counts": stats.per_agency_counts,
            "last_modified": rfc3339(stats.last_modified) if stats.last_modified else None,
        }

    # Optional: serve the chat panel from the same origin (no CORS needed).
    ui_root = runtime.config.resolve(runtime.config.ui_root)
    if ui_root is not None and ui_root.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_root, html=True), name="ui")

    return app
