"""Query-lifecycle sessions: buffering, gating, ranking, answering.

A session moves Idle -> Buffering (trigger) -> Gated (consecutive-frame gate
opens) -> Answered (query served); Failed is reachable from Buffering and
Gated. Each session is single-writer; snapshots are plain dicts safe to hand
across threads. The scenario runner replays a recorded frame/query script
through the same engine and emits a byte-stable transcript.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .detectors import Detection, DetectorProvider
from .errors import (
    ConfigurationError,
    InputError,
    KnowledgeError,
    SessionNotFoundError,
    SessionStateError,
)
from .formats import read_depth_map
from .geometry import BoundingBox
from .knowledge import (
    ContextBlock,
    EmbedderProvider,
    FlatIndex,
    ResponderProvider,
    TemplateResponder,
    build_index,
    compose_context,
    generate_answer,
    load_knowledge_base,
    make_embedder,
)
from .postproc import (
    FrameBuffer,
    RankedObject,
    build_synthetic_depth,
    dedup,
    fuse,
    gate_consecutive,
    rank_topk,
)

IDLE = "idle"
BUFFERING = "buffering"
GATED = "gated"
ANSWERED = "answered"
FAILED = "failed"


@dataclass(frozen=True)
class SessionConfig:
    window: int = 5            # consecutive frames required
    conf_threshold: float = 0.4
    fuse_iou: float = 0.5      # merge threshold
    min_votes: int = 3
    top_k: int = 3
    frame_budget: int = 60     # frames allowed before gating times out
    per_object_m: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ConfigurationError("window must be >= 1")
        if not (0.0 <= self.conf_threshold <= 1.0):
            raise ConfigurationError("conf_threshold must be in [0, 1]")
        if not (0.0 <= self.fuse_iou <= 1.0):
            raise ConfigurationError("fuse_iou must be in [0, 1]")
        if self.min_votes < 1:
            raise ConfigurationError("min_votes must be >= 1")
        if self.top_k < 1:
            raise ConfigurationError("top_k must be >= 1")
        if self.frame_budget < 1:
            raise ConfigurationError("frame_budget must be >= 1")
        if self.per_object_m < 1:
            raise ConfigurationError("per_object_m must be >= 1")

    @classmethod
    def with_overrides(cls, overrides: dict | None) -> "SessionConfig":
        fields = dict(overrides or {})
        unknown = set(fields) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**fields)


def _ranked_to_dict(obj: RankedObject) -> dict:
    return {
        "label": obj.label,
        "bbox": [float(v) for v in obj.box.as_list()],
        "depth": float(obj.depth),
        "confidence": float(obj.confidence),
        "votes": int(obj.votes),
    }


class Session:
    def __init__(self, session_id: str, config: SessionConfig):
        self.session_id = session_id
        self.config = config
        self.state = IDLE
        self.buffer = FrameBuffer(config.window)
        self.frames_seen = 0
        self.next_frame_index = 0
        self.ranked: list[RankedObject] = []
        self.context: list[ContextBlock] = []
        self.answer: str | None = None
        self.error: dict | None = None
        self._lock = threading.Lock()

    def trigger(self) -> None:
        with self._lock:
            if self.state != IDLE:
                raise SessionStateError(f"cannot trigger from state {self.state!r}")
            self.state = BUFFERING

    def push_frame(
        self,
        detections: list[Detection],
        depth_map: np.ndarray | None = None,
        frame_index: int | None = None,
    ) -> dict:
        with self._lock:
            if self.state != BUFFERING:
                raise SessionStateError(
                    f"cannot push frames in state {self.state!r}; trigger the session first"
                )
            if frame_index is None:
                frame_index = self.next_frame_index
            if frame_index < self.next_frame_index:
                raise InputError(
                    f"frame index {frame_index} is not increasing (next is {self.next_frame_index})"
                )
            tagged = [
                Detection(d.label, d.box, d.confidence, frame_index) for d in detections
            ]
            self.buffer.push(frame_index, tagged)
            self.next_frame_index = frame_index + 1
            self.frames_seen += 1

            if gate_consecutive(self.buffer, self.config.window, self.config.conf_threshold):
                if depth_map is None:
                    self.state = FAILED
                    self.error = {
                        "code": "depth_missing",
                        "message": "gate opened but the final frame carries no depth map",
                        "retriable": True,
                    }
                    return self._status(frame_index)
                buffered = [d for _, dets in self.buffer.entries() for d in dets]
                fused = fuse(buffered, self.config.fuse_iou, self.config.min_votes)
                deduped = dedup(fused, self.config.fuse_iou)
                self.ranked = rank_topk(deduped, depth_map, self.config.top_k)
                self.state = GATED
            elif self.frames_seen >= self.config.frame_budget:
                self.state = FAILED
                self.error = {
                    "code": "gate_timeout",
                    "message": f"no gate after {self.frames_seen} frames",
                    "retriable": True,
                }
            return self._status(frame_index)

    def submit_query(
        self,
        query_text: str,
        index: FlatIndex,
        embedder: EmbedderProvider | None = None,
        responder: ResponderProvider | None = None,
    ) -> dict:
        with self._lock:
            if self.state not in (GATED, ANSWERED):
                raise SessionStateError(f"cannot query in state {self.state!r}")
            # Knowledge errors leave the session queryable for a retry.
            context = compose_context(
                self.ranked, index, embedder, self.config.per_object_m
            )
            answer = generate_answer(query_text, context, responder or TemplateResponder())
            self.context = context
            self.answer = answer
            self.state = ANSWERED
            return {
                "answer": answer,
                "ranked": [_ranked_to_dict(r) for r in self.ranked],
                "context": [b.to_dict() for b in context],
                "state": self.state,
            }

    def _status(self, frame_index: int) -> dict:
        return {
            "state": self.state,
            "frame_index": frame_index,
            "frames_buffered": len(self.buffer),
            "gated": self.state == GATED,
            "error": self.error,
        }

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "session_id": self.session_id,
                "state": self.state,
                "config": asdict(self.config),
                "frames_seen": self.frames_seen,
                "frames_buffered": len(self.buffer),
                "ranked": [_ranked_to_dict(r) for r in self.ranked],
                "context": [b.to_dict() for b in self.context],
                "answer": self.answer,
                "error": self.error,
            }


class SessionManager:
    """Owns sessions; ids are sequential and process-local."""

    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def create(self, overrides: dict | None = None) -> Session:
        config = SessionConfig.with_overrides(overrides)
        with self._lock:
            self._counter += 1
            session_id = f"s{self._counter:04d}"
            session = Session(session_id, config)
            self._sessions[session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionNotFoundError(f"unknown session {session_id!r}") from None


def parse_detections(records: Iterable[dict]) -> list[Detection]:
    out = []
    for rec in records:
        try:
            out.append(
                Detection(
                    str(rec["label"]),
                    BoundingBox(*(float(v) for v in rec["bbox"])),
                    float(rec["confidence"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad detection record {rec!r}: {exc}") from exc
    return out


def resolve_depth(depth_spec: dict | None, base_dir: Path | None = None) -> np.ndarray | None:
    """Accept {"synthetic": {...}} or {"path": "file.dpth"} depth forms."""
    if depth_spec is None:
        return None
    if "synthetic" in depth_spec:
        return build_synthetic_depth(depth_spec["synthetic"])
    if "path" in depth_spec:
        path = Path(depth_spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return read_depth_map(path)
    raise InputError(f"depth spec needs 'synthetic' or 'path': {depth_spec}")


def simulate(
    scenario: dict,
    index: FlatIndex | None = None,
    responder: ResponderProvider | None = None,
    base_dir: Path | None = None,
    provider: DetectorProvider | None = None,
) -> dict:
    """Replay a recorded scenario through the session engine in-process.

    The scenario carries config overrides, an ordered frame list (detections
    plus optional depth), and a query script. Returns the transcript document;
    identical scenarios produce identical transcripts.
    """
    del provider  # reserved for image-bearing scenarios
    if index is None:
        if "knowledge_base" in scenario:
            entries = load_entries_inline(scenario["knowledge_base"])
        elif "knowledge_base_path" in scenario:
            path = Path(scenario["knowledge_base_path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            entries = load_knowledge_base(path)
        else:
            raise InputError("scenario has no knowledge base and none was supplied")
        embedder = make_embedder(
            scenario.get("embedder", {"type": "hashing", "dim": 64, "ngram": 3})
        )
        index = build_index(entries, embedder)

    manager = SessionManager()
    session = manager.create(scenario.get("config"))
    events: list[dict] = [
        {"type": "session_start", "session_id": session.session_id, "config": asdict(session.config)}
    ]
    session.trigger()
    events.append({"type": "trigger", "state": session.state})

    for frame in scenario.get("frames", []):
        detections = parse_detections(frame.get("detections", []))
        depth = resolve_depth(frame.get("depth"), base_dir)
        status = session.push_frame(detections, depth, frame.get("frame_index"))
        events.append(
            {
                "type": "frame",
                "frame_index": status["frame_index"],
                "detections": len(detections),
                "state": status["state"],
            }
        )
        if status["state"] == GATED:
            events.append(
                {"type": "gated", "ranked": [_ranked_to_dict(r) for r in session.ranked]}
            )
        if status["state"] in (GATED, FAILED):
            break

    if session.state in (GATED, ANSWERED):
        for q in scenario.get("queries", []):
            try:
                result = session.submit_query(q, index, responder=responder)
                events.append(
                    {
                        "type": "query",
                        "q": q,
                        "answer": result["answer"],
                        "context": result["context"],
                    }
                )
            except KnowledgeError as exc:
                events.append({"type": "query_error", "q": q, "message": str(exc)})

    events.append({"type": "final", "state": session.state, "error": session.error})
    return {
        "scenario": scenario.get("name", "unnamed"),
        "engine": "partsight",
        "events": events,
    }


def load_entries_inline(raw_entries: list[dict]):
    from .knowledge import KnowledgeEntry

    return [
        KnowledgeEntry(
            part_id=str(e["part_id"]),
            label=str(e["label"]),
            display_name=str(e.get("display_name", e["label"])),
            description=str(e.get("description", "")),
            attributes=dict(e.get("attributes", {})),
        )
        for e in raw_entries
    ]
