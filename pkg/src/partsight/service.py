"""HTTP JSON API for the assistant runtime.

Endpoints:
  POST /sessions                  create a session (optional config overrides)
  POST /sessions/{id}/trigger     start buffering frames
  POST /sessions/{id}/frames      push a frame: JSON detections + depth, or a
                                  multipart image (requires a configured
                                  detector provider) + optional DPTH depth file
  POST /sessions/{id}/query       ask a question once the session is gated
  GET  /sessions/{id}             immutable state snapshot

Error bodies are always {"code", "message", "retriable"}.
"""

from __future__ import annotations

import base64
import io
import struct
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__
from .detectors import DetectorProvider
from .errors import (
    ConfigurationError,
    InputError,
    KnowledgeError,
    PartsightError,
    ProviderError,
    SessionNotFoundError,
    SessionStateError,
)
from .formats import DEPTH_MAGIC
from .knowledge import (
    FlatIndex,
    ResponderProvider,
    TemplateResponder,
    build_index,
    load_index,
    load_knowledge_base,
    make_embedder,
)
from .sessions import SessionManager, parse_detections, resolve_depth


class DetectionModel(BaseModel):
    label: str
    bbox: list[float] = Field(min_length=4, max_length=4)
    confidence: float = Field(ge=0.0, le=1.0)


class DepthModel(BaseModel):
    synthetic: dict | None = None
    path: str | None = None
    b64: str | None = None  # base64-encoded DPTH blob


class FrameRequest(BaseModel):
    detections: list[DetectionModel] = Field(default_factory=list)
    depth: DepthModel | None = None
    frame_index: int | None = None


class SessionCreateRequest(BaseModel):
    config: dict = Field(default_factory=dict)


class QueryRequest(BaseModel):
    q: str


class ErrorBody(BaseModel):
    code: str
    message: str
    retriable: bool


class SessionCreateResponse(BaseModel):
    session_id: str
    state: str
    config: dict


class FrameResponse(BaseModel):
    state: str
    frame_index: int
    frames_buffered: int
    gated: bool
    error: dict | None = None


class QueryResponse(BaseModel):
    answer: str
    ranked: list[dict]
    context: list[dict]
    state: str


class SnapshotResponse(BaseModel):
    session_id: str
    state: str
    config: dict
    frames_seen: int
    frames_buffered: int
    ranked: list[dict]
    context: list[dict]
    answer: str | None
    error: dict | None


_ERROR_MAP: list[tuple[type, int, str, bool]] = [
    (SessionNotFoundError, 404, "not_found", False),
    (SessionStateError, 409, "invalid_state", False),
    (KnowledgeError, 422, "knowledge_error", True),
    (ProviderError, 502, "provider_error", True),
    (ConfigurationError, 400, "bad_config", False),
    (InputError, 400, "bad_input", False),
]


def _error_response(exc: PartsightError) -> JSONResponse:
    for klass, status, code, retriable in _ERROR_MAP:
        if isinstance(exc, klass):
            return JSONResponse(
                status_code=status,
                content=ErrorBody(code=code, message=str(exc), retriable=retriable).model_dump(),
            )
    return JSONResponse(
        status_code=500,
        content=ErrorBody(code="internal", message=str(exc), retriable=False).model_dump(),
    )


def _decode_depth_blob(blob: bytes) -> np.ndarray:
    if len(blob) < 12 or blob[:4] != DEPTH_MAGIC:
        raise InputError("depth payload is not a DPTH blob")
    w, h = struct.unpack("<II", blob[4:12])
    if len(blob) != 12 + 4 * w * h:
        raise InputError("depth payload length mismatch")
    values = np.frombuffer(blob[12:], dtype="<f4").reshape(h, w).astype(np.float32)
    if not np.isfinite(values).all():
        raise InputError("depth values must be finite")
    return values


def _resolve_depth_model(depth: DepthModel | None) -> np.ndarray | None:
    if depth is None:
        return None
    if depth.b64 is not None:
        try:
            return _decode_depth_blob(base64.b64decode(depth.b64))
        except ValueError as exc:
            raise InputError(f"bad base64 depth payload: {exc}") from exc
    spec = {}
    if depth.synthetic is not None:
        spec["synthetic"] = depth.synthetic
    if depth.path is not None:
        spec["path"] = depth.path
    return resolve_depth(spec or None)


def create_app(
    index: FlatIndex | None = None,
    index_path: str | Path | None = None,
    kb_path: str | Path | None = None,
    provider: DetectorProvider | None = None,
    provider_wrapper: str = "none",
    responder: ResponderProvider | None = None,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    if index is None and index_path is not None:
        index = load_index(index_path)
    if index is None and kb_path is not None:
        entries = load_knowledge_base(kb_path)
        index = build_index(entries, make_embedder({"type": "hashing", "dim": 64, "ngram": 3}))
    if provider_wrapper not in ("none", "tta", "slice"):
        raise ConfigurationError(f"unknown provider wrapper {provider_wrapper!r}")

    def run_detector(pixels: np.ndarray, image_id: str | None):
        from .detectors import SliceConfig, TTAConfig, detect_sliced, detect_tta

        if provider is None:
            raise ProviderError("no detector provider configured; post JSON detections")
        if provider_wrapper == "tta":
            return detect_tta(provider, pixels, TTAConfig(), image_id=image_id)
        if provider_wrapper == "slice":
            return detect_sliced(provider, pixels, SliceConfig(), image_id=image_id)
        return provider.detect(pixels, image_id=image_id)

    app = FastAPI(title="partsight assistant", version=__version__)
    manager = SessionManager()
    answerer = responder or TemplateResponder()

    @app.exception_handler(PartsightError)
    async def handle_partsight_error(request: Request, exc: PartsightError):
        return _error_response(exc)

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "version": __version__,
            "knowledge_entries": len(index) if index is not None else 0,
            "provider": type(provider).__name__ if provider is not None else None,
        }

    @app.post("/sessions", response_model=SessionCreateResponse, status_code=201)
    def create_session(body: SessionCreateRequest | None = None):
        session = manager.create(body.config if body else None)
        snap = session.snapshot()
        return SessionCreateResponse(
            session_id=session.session_id, state=snap["state"], config=snap["config"]
        )

    @app.post("/sessions/{session_id}/trigger")
    def trigger(session_id: str):
        session = manager.get(session_id)
        session.trigger()
        return {"session_id": session_id, "state": session.state}

    @app.post("/sessions/{session_id}/frames", response_model=FrameResponse)
    async def push_frame(session_id: str, request: Request):
        session = manager.get(session_id)
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            upload = form.get("image")
            if upload is None:
                raise InputError("multipart frame needs an 'image' file field")
            from PIL import Image

            from .geometry import ensure_image

            raw = await upload.read()
            try:
                with Image.open(io.BytesIO(raw)) as img:
                    pixels = np.asarray(img.convert("RGB"))
            except Exception as exc:
                raise InputError(f"cannot decode image upload: {exc}") from exc
            ensure_image(pixels)
            image_id = form.get("image_id") or Path(getattr(upload, "filename", "") or "").stem
            detections = run_detector(pixels, image_id or None)
            depth_map = None
            depth_upload = form.get("depth")
            if depth_upload is not None:
                depth_map = _decode_depth_blob(await depth_upload.read())
            frame_index = form.get("frame_index")
            status = session.push_frame(
                detections, depth_map, int(frame_index) if frame_index is not None else None
            )
        else:
            try:
                body = FrameRequest.model_validate(await request.json())
            except ValueError as exc:
                raise InputError(f"bad frame payload: {exc}") from exc
            detections = parse_detections([d.model_dump() for d in body.detections])
            depth_map = _resolve_depth_model(body.depth)
            status = session.push_frame(detections, depth_map, body.frame_index)
        return FrameResponse(**status)

    @app.post("/sessions/{session_id}/query", response_model=QueryResponse)
    def query_session(session_id: str, body: QueryRequest):
        session = manager.get(session_id)
        if index is None:
            raise KnowledgeError("service started without a knowledge base")
        result = session.submit_query(body.q, index, responder=answerer)
        return QueryResponse(**result)

    @app.get("/sessions/{session_id}", response_model=SnapshotResponse)
    def get_session(session_id: str):
        return SnapshotResponse(**manager.get(session_id).snapshot())

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(frontend_dir), html=True), name="console")

    return app
