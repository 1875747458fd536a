"""HTTP service over the engine: ingest, ask, transcripts, eval, health.

Requests are handled synchronously; session concurrency is bounded by a
semaphore, and ingestion takes an exclusive writer role (asks arriving
mid-ingest get 409). Transcripts are persisted one JSON file per session.
"""

from __future__ import annotations

import json
import threading
from dataclasses import replace
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import agents, corpus, evalkit, vecstore
from .agents import Mode, Outcome
from .config import AppConfig
from .embedder import config_for_model, embed, mock_config
from .errors import (
    ConflictError,
    EngineError,
    ManifestError,
    TransportError,
    ValidationError,
)
from .vecstore import KnowledgeBase, Similarity


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: str = ""):
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail
        super().__init__(message)


class EngineState:
    """Mutable engine state behind the endpoints.

    Readers (ask/eval sessions) and the single writer (ingest) exclude each
    other; both reject instead of queueing so callers see 409 rather than an
    unbounded wait.
    """

    def __init__(self, cfg: AppConfig, chat_backend=None, vision_backend=None, kb=None):
        self.cfg = cfg
        self.chat_backend = chat_backend if chat_backend is not None else cfg.chat.build()
        self.vision_backend = (
            vision_backend if vision_backend is not None else cfg.vision.build()
        )
        self.kb: KnowledgeBase | None = kb
        self.transcripts: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._active_sessions = 0
        self._ingesting = False
        self._session_slots = threading.Semaphore(cfg.service.max_concurrent_sessions)

    # -- reader/writer bookkeeping ------------------------------------

    def begin_session(self) -> None:
        with self._lock:
            if self._ingesting:
                raise ApiError(409, "ingest_in_progress", "ingestion in progress; retry shortly")
            self._active_sessions += 1
        self._session_slots.acquire()

    def end_session(self) -> None:
        self._session_slots.release()
        with self._lock:
            self._active_sessions -= 1

    def begin_ingest(self) -> None:
        with self._lock:
            if self._ingesting:
                raise ApiError(409, "ingest_in_progress", "another ingestion is running")
            if self._active_sessions:
                raise ApiError(409, "sessions_active", "sessions active; retry when idle")
            self._ingesting = True

    def end_ingest(self) -> None:
        with self._lock:
            self._ingesting = False

    # -- persistence ---------------------------------------------------

    def persist_transcript(self, transcript: agents.SessionTranscript) -> dict:
        data = agents.transcript_to_dict(transcript)
        self.transcripts[transcript.session_id] = data
        tdir = Path(self.cfg.service.transcript_dir)
        tdir.mkdir(parents=True, exist_ok=True)
        (tdir / f"{transcript.session_id}.json").write_text(
            json.dumps(data, ensure_ascii=False, indent=2)
        )
        return data

    def find_transcript(self, session_id: str) -> dict | None:
        if session_id in self.transcripts:
            return self.transcripts[session_id]
        candidate = Path(self.cfg.service.transcript_dir) / f"{session_id}.json"
        if candidate.exists():
            return json.loads(candidate.read_text())
        return None

    def embed_cfg(self):
        if self.kb is None:
            return self.cfg.embedding
        return config_for_model(self.kb.model_id, self.cfg.embedding)


class AskBody(BaseModel):
    query: str = ""
    mode: str | None = None


class IngestBody(BaseModel):
    manifest_path: str | None = None
    docs: list[dict] | None = None
    mock_embeddings: bool = False


class EvalBody(BaseModel):
    query_set_path: str
    mode: str = "multi_agent"
    k: int | None = None
    ks: list[int] | None = None
    overrides_path: str | None = None


def _mode_from(raw: str | None, default: Mode) -> Mode:
    if raw is None:
        return default
    try:
        return Mode(raw)
    except ValueError:
        raise ApiError(400, "bad_mode", f"mode must be multi_agent or single_pass, got {raw!r}")


def create_app(
    cfg: AppConfig | None = None,
    chat_backend=None,
    vision_backend=None,
    kb: KnowledgeBase | None = None,
) -> FastAPI:
    cfg = cfg or AppConfig()
    app = FastAPI(title="ragloop", docs_url=None, redoc_url=None)
    state = EngineState(cfg, chat_backend=chat_backend, vision_backend=vision_backend, kb=kb)
    if state.kb is None:
        store = Path(cfg.service.store_path)
        if store.exists():
            state.kb = vecstore.load(store)
    app.state.engine = state

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.exception_handler(EngineError)
    async def _engine_error(_: Request, exc: EngineError):
        return JSONResponse(
            status_code=500,
            content={"code": "internal", "message": str(exc), "detail": type(exc).__name__},
        )

    @app.post("/v1/ask")
    def ask(body: AskBody):
        if not body.query.strip():
            raise ApiError(400, "empty_query", "query must be non-empty")
        if state.kb is None or state.kb.count == 0:
            raise ApiError(409, "no_knowledge_base", "no knowledge base loaded; ingest first")
        mode = _mode_from(body.mode, cfg.orchestrator.mode)
        run_cfg = replace(cfg.orchestrator, mode=mode)
        state.begin_session()
        try:
            transcript = agents.run(
                body.query,
                state.kb,
                run_cfg,
                state.chat_backend,
                prompts=cfg.prompts,
                embed_cfg=state.embed_cfg(),
            )
        except TransportError as exc:
            raise ApiError(503, "backend_unavailable", str(exc))
        finally:
            state.end_session()
        data = state.persist_transcript(transcript)
        if transcript.outcome == Outcome.ERROR:
            raise ApiError(503, "backend_unavailable", transcript.final_answer,
                           detail=transcript.session_id)
        return {
            "session_id": transcript.session_id,
            "answer": transcript.final_answer,
            "outcome": transcript.outcome.value,
            "citations": data["citations"],
            "refinement_count": transcript.refinement_count,
        }

    @app.post("/v1/ingest")
    def ingest(body: IngestBody):
        if body.manifest_path is None and body.docs is None:
            raise ApiError(422, "bad_manifest", "provide manifest_path or inline docs")
        state.begin_ingest()
        try:
            embed_cfg = state.cfg.embedding
            if body.mock_embeddings:
                embed_cfg = mock_config(dim=embed_cfg.dim, seed=getattr(embed_cfg, "mock_seed", 0))
            try:
                if body.manifest_path is not None:
                    docs, units = corpus.load_corpus(body.manifest_path)
                else:
                    docs, units = corpus.load_inline(body.docs)
            except ManifestError as exc:
                raise ApiError(422, "bad_manifest", str(exc))
            except (OSError, ValidationError) as exc:
                raise ApiError(422, "bad_manifest", str(exc))
            if state.kb is None:
                state.kb = KnowledgeBase(
                    dim=embed_cfg.dim,
                    model_id=embed_cfg.model_id,
                    similarity=Similarity(cfg.service.store_similarity),
                )
            try:
                vectors = embed([u.content for u in units], embed_cfg) if units else []
            except TransportError as exc:
                raise ApiError(502, "embedding_backend", str(exc))
            try:
                for unit, vec in zip(units, vectors):
                    state.kb.insert(unit, vec)
            except ConflictError as exc:
                raise ApiError(409, "duplicate_units", str(exc))
            vecstore.save(state.kb, cfg.service.store_path)
            figures = sum(1 for u in units if u.kind == corpus.UnitKind.FIGURE)
            return {"docs": len(docs), "units": len(units), "figures": figures}
        finally:
            state.end_ingest()

    @app.get("/v1/sessions/{session_id}/transcript")
    def transcript(session_id: str):
        found = state.find_transcript(session_id)
        if found is None:
            raise ApiError(404, "unknown_session", f"no transcript for session {session_id!r}")
        return found

    @app.post("/v1/eval/run")
    def eval_run(body: EvalBody):
        if state.kb is None or state.kb.count == 0:
            raise ApiError(409, "no_knowledge_base", "no knowledge base loaded; ingest first")
        mode = _mode_from(body.mode, cfg.orchestrator.mode)
        try:
            queries = evalkit.load_query_set(body.query_set_path)
            if body.overrides_path:
                queries = evalkit.apply_override_labels(
                    queries, evalkit.load_overrides(body.overrides_path)
                )
        except ManifestError as exc:
            raise ApiError(422, "bad_query_set", str(exc))
        except OSError as exc:
            raise ApiError(422, "bad_query_set", str(exc))
        ks = body.ks or [body.k or cfg.orchestrator.retrieval_k]
        state.begin_session()
        try:
            report = evalkit.run_eval(
                queries,
                state.kb,
                cfg.orchestrator,
                state.chat_backend,
                mode,
                ks=ks,
                prompts=cfg.prompts,
                embed_cfg=state.embed_cfg(),
            )
        except TransportError as exc:
            raise ApiError(503, "backend_unavailable", str(exc))
        finally:
            state.end_session()
        return evalkit.report_to_dict(report)

    @app.get("/v1/health")
    def health():
        offline_kinds = {"scripted", "deterministic_mock"}
        return {
            "status": "ok",
            "kb_size": state.kb.count if state.kb is not None else 0,
            "backends": {
                "chat": {
                    "kind": cfg.chat.kind,
                    "reachable": True if cfg.chat.kind in offline_kinds else None,
                },
                "vision": {
                    "kind": cfg.vision.kind,
                    "reachable": True if cfg.vision.kind in offline_kinds else None,
                },
                "embedding": {
                    "kind": cfg.embedding.kind.value,
                    "reachable": True if cfg.embedding.kind.value in offline_kinds else None,
                },
            },
        }

    return app
