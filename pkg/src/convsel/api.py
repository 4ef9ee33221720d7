"""HTTP API for interactive sessions: create a session on a passage, ask
questions, and read back the full selection trace per turn.

Sessions are isolated; each holds its conversation-so-far, where every
answered question becomes a history item whose answer text is the
predicted span (live conversations have no gold answers). Models are
read-only at serve time; per-session mutation is serialized by a lock.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .corpus import Conversation, HistoryItem, Passage
from .pipeline import ModelBundle, PipelineConfig, PipelineError, answer_question


class CreateSessionRequest(BaseModel):
    passage_id: str | None = None
    passage_text: str | None = None
    title: str = ""


class AskRequest(BaseModel):
    text: str


@dataclass
class Session:
    id: str
    passage: Passage
    history: list[HistoryItem] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def create_app(
    models: ModelBundle,
    config: PipelineConfig,
    passages: list[Passage] | None = None,
) -> FastAPI:
    app = FastAPI(title="convsel", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    catalog: dict[str, Passage] = {p.id: p for p in (passages or [])}
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    @app.get("/passages")
    def list_passages() -> dict:
        return {
            "passages": [
                {"id": p.id, "title": p.title, "n_tokens": len(p.tokens)}
                for p in catalog.values()
            ]
        }

    @app.post("/sessions")
    def create_session(request: CreateSessionRequest) -> dict:
        if request.passage_id is not None:
            passage = catalog.get(request.passage_id)
            if passage is None:
                raise HTTPException(
                    status_code=404, detail=f"unknown passage {request.passage_id}"
                )
        elif request.passage_text:
            passage = Passage.build(
                f"adhoc-{uuid.uuid4().hex[:8]}", request.title, request.passage_text
            )
        else:
            raise HTTPException(
                status_code=422, detail="passage_id or passage_text required"
            )
        session = Session(id=uuid.uuid4().hex, passage=passage)
        with registry_lock:
            sessions[session.id] = session
        return {"session_id": session.id, "passage": {"id": passage.id, "text": passage.text}}

    @app.post("/sessions/{session_id}/questions")
    def ask(session_id: str, request: AskRequest) -> dict:
        session = get_session(session_id)
        if not request.text.strip():
            raise HTTPException(status_code=422, detail="question text is empty")
        with session.lock:
            try:
                outcome = answer_question(
                    session.passage, session.history, request.text, models, config
                )
            except PipelineError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            trace = outcome.trace_json()
            turn_id = f"t{len(session.history)}"
            trace["turn_id"] = turn_id
            session.history.append(
                HistoryItem(
                    turn_id=turn_id,
                    question=request.text,
                    answer_text=outcome.prediction.text,
                )
            )
            session.traces.append(trace)
            return {
                "turn_id": turn_id,
                "answer": outcome.prediction.to_json(),
                "trace": trace,
                "token_labels": outcome.token_labels,
            }

    @app.get("/sessions/{session_id}/trace")
    def full_trace(session_id: str) -> dict:
        session = get_session(session_id)
        with session.lock:
            return {"session_id": session_id, "turns": session.traces}

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str) -> dict:
        with registry_lock:
            if session_id not in sessions:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
            del sessions[session_id]
        return {"deleted": session_id}

    return app


def serve_api(
    host: str,
    port: int,
    models: ModelBundle,
    config: PipelineConfig,
    passages: list[Passage] | None = None,
    static_dir: str | None = None,
):
    """Run the API with uvicorn; optionally serve the console statically
    under /ui from the given directory."""
    import uvicorn

    app = create_app(models, config, passages)
    if static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="console")
    uvicorn.run(app, host=host, port=port, log_level="info")


def passages_from_corpus(conversations: list[Conversation]) -> list[Passage]:
    return [c.passage for c in conversations]
