"""HTTP annotation service.

Sessions are created by uploading an image; the encoder runs once per
session and the embedding is cached, so every later prompt is a cheap
decoder-only call. Label state (per-instance accept/reject, polygon edits)
is guarded by an optimistic version token: every PATCH must present the
version it saw, and a mismatch returns 409 so concurrent reviewers cannot
silently clobber each other.

Endpoints:
    POST  /sessions                  image bytes -> {session_id, version}
    POST  /sessions/{id}/prompt      {x, y} -> word/line/paragraph payload
    POST  /sessions/{id}/amg         optional config -> full hierarchy dump
    PATCH /sessions/{id}/labels      {version, edits[]} -> {version}
    GET   /sessions/{id}/export      annotation JSON for downstream use

Prompt responses are byte-identical to library-level results: the payload
is built by ``inference.prompt_to_payload`` and serialized canonically.
"""

from __future__ import annotations

import json
import threading
import time
import uuid

import cv2
import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ValidationError as PydanticValidationError

from .errors import ValidationError
from .geometry import trace_components
from .inference import (
    AmgConfig,
    AmgResult,
    amg,
    amg_to_dump,
    prepare_image,
    prompt_to_payload,
    promptable_segment,
)
from .model.network import ImageEmbedding, TextHierNet

DEFAULT_TTL_SECONDS = 3600.0


def canonical_json(payload: dict) -> bytes:
    """The one serialization used for every JSON body the service emits."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()


def _json_response(payload: dict, status_code: int = 200) -> Response:
    return Response(
        content=canonical_json(payload),
        media_type="application/json",
        status_code=status_code,
    )


class PromptBody(BaseModel):
    x: float
    y: float


class AmgBody(BaseModel):
    points: int | None = None
    point_batch: int | None = None
    seed: int | None = None


class EditOp(BaseModel):
    action: str  # accept | reject | set_polygon
    level: str  # line | word
    index: int
    polygon: list[list[float]] | None = None


class LabelsBody(BaseModel):
    version: int
    edits: list[EditOp] = []


class Session:
    def __init__(self, session_id: str, image: np.ndarray, embedding: ImageEmbedding):
        self.session_id = session_id
        self.image = image
        self.embedding = embedding
        self.version = 1
        self.amg_result: AmgResult | None = None
        self.reviews: dict[tuple[str, int], str] = {}
        self.polygon_edits: dict[int, list[list[float]]] = {}
        self.last_access = time.monotonic()


class SessionStore:
    def __init__(self, ttl_seconds: float) -> None:
        self.ttl = ttl_seconds
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}

    def put(self, session: Session) -> None:
        with self._lock:
            self._purge()
            self._sessions[session.session_id] = session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._purge()
            session = self._sessions.get(session_id)
            if session is None:
                raise HTTPException(status_code=404, detail="unknown session")
            session.last_access = time.monotonic()
            return session

    def _purge(self) -> None:
        now = time.monotonic()
        dead = [
            sid
            for sid, s in self._sessions.items()
            if now - s.last_access > self.ttl
        ]
        for sid in dead:
            del self._sessions[sid]


def _mask_polygon(mask: np.ndarray) -> list[list[float]]:
    polys = trace_components(mask, min_area=1.0)
    if not polys:
        return [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
    largest = max(polys, key=lambda p: cv2.contourArea(p.astype(np.float32)))
    return [[float(x), float(y)] for x, y in largest]


def build_export(session: Session) -> dict:
    """Assemble the annotation export from the AMG result and review state.

    Rejected instances are dropped; polygon edits substitute the predicted
    word polygons. Paragraphs follow the layout clusters.
    """
    result = session.amg_result
    size = result.input_size if result else 0
    paragraphs = []
    if result is not None:
        n_clusters = max(result.layout) + 1 if result.layout else 0
        flat_word_idx = 0
        line_words: list[list[tuple[int, object]]] = []
        for group in result.words:
            entries = []
            for w in group:
                entries.append((flat_word_idx, w))
                flat_word_idx += 1
            line_words.append(entries)
        for cid in range(n_clusters):
            lines_out = []
            members = [i for i, lab in enumerate(result.layout) if lab == cid]
            para_mask = np.zeros((size, size), dtype=bool)
            for li in members:
                if session.reviews.get(("line", li)) == "rejected":
                    continue
                para_mask |= result.paragraphs[li]
                words_out = []
                for wi, inst in line_words[li]:
                    if session.reviews.get(("word", wi)) == "rejected":
                        continue
                    poly = session.polygon_edits.get(
                        wi, [[float(x), float(y)] for x, y in inst.polygon]
                    )
                    words_out.append(
                        {
                            "vertices": poly,
                            "legible": True,
                            "text": "",
                        }
                    )
                lines_out.append(
                    {
                        "vertices": _mask_polygon(result.lines[li].mask),
                        "legible": True,
                        "text": "",
                        "words": words_out,
                    }
                )
            if lines_out:
                paragraphs.append(
                    {
                        "vertices": _mask_polygon(para_mask),
                        "legible": True,
                        "lines": lines_out,
                    }
                )
    return {
        "image_id": session.session_id,
        "image_width": size,
        "image_height": size,
        "paragraphs": paragraphs,
        "version": session.version,
    }


def create_app(model: TextHierNet, ttl_seconds: float = DEFAULT_TTL_SECONDS) -> FastAPI:
    app = FastAPI(title="texthier annotation service")
    # The browser workbench is served as static files from another origin.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(ttl_seconds)
    app.state.model = model
    app.state.store = store

    @app.post("/sessions")
    async def create_session(request: Request) -> Response:
        body = await request.body()
        if not body:
            raise HTTPException(status_code=422, detail="empty image upload")
        buf = np.frombuffer(body, dtype=np.uint8)
        bgr = cv2.imdecode(buf, cv2.IMREAD_COLOR)
        if bgr is None:
            raise HTTPException(status_code=422, detail="undecodable image")
        rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
        resized, original = prepare_image(rgb, model.profile.input_size)
        embedding = model.embed_image(resized)
        session = Session(uuid.uuid4().hex, resized, embedding)
        store.put(session)
        return _json_response(
            {
                "session_id": session.session_id,
                "version": session.version,
                "input_size": model.profile.input_size,
                "original_size": [original[0], original[1]],
            }
        )

    @app.post("/sessions/{session_id}/prompt")
    async def prompt(session_id: str, body: PromptBody) -> Response:
        session = store.get(session_id)
        size = model.profile.input_size
        if not (0 <= body.x < size and 0 <= body.y < size):
            raise HTTPException(
                status_code=422,
                detail=f"click out of bounds for input size {size}",
            )
        try:
            result = promptable_segment(model, session.embedding, (body.x, body.y))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return _json_response(prompt_to_payload(result))

    @app.post("/sessions/{session_id}/amg")
    async def run_amg(session_id: str, body: AmgBody | None = None) -> Response:
        session = store.get(session_id)
        cfg = AmgConfig()
        if body is not None:
            if body.points is not None:
                cfg.points = body.points
            if body.point_batch is not None:
                cfg.point_batch = body.point_batch
            if body.seed is not None:
                cfg.seed = body.seed
        session.amg_result = amg(
            model, session.image, cfg, embedding=session.embedding
        )
        session.reviews = {}
        session.polygon_edits = {}
        session.version += 1
        dump = amg_to_dump(session.amg_result, session.session_id)
        dump["version"] = session.version
        return _json_response(dump)

    @app.patch("/sessions/{session_id}/labels")
    async def patch_labels(session_id: str, body: LabelsBody) -> Response:
        session = store.get(session_id)
        if body.version != session.version:
            raise HTTPException(
                status_code=409,
                detail=f"stale version {body.version}, current {session.version}",
            )
        if session.amg_result is None:
            raise HTTPException(status_code=422, detail="run AMG before labeling")
        n_lines = len(session.amg_result.lines)
        n_words = len(session.amg_result.word_instances())
        for edit in body.edits:
            if edit.level not in ("line", "word"):
                raise HTTPException(status_code=422, detail=f"bad level {edit.level}")
            limit = n_lines if edit.level == "line" else n_words
            if not (0 <= edit.index < limit):
                raise HTTPException(
                    status_code=422,
                    detail=f"{edit.level} index {edit.index} out of range",
                )
            if edit.action in ("accept", "reject"):
                session.reviews[(edit.level, edit.index)] = edit.action + "ed"
            elif edit.action == "set_polygon":
                if edit.level != "word" or not edit.polygon:
                    raise HTTPException(
                        status_code=422, detail="set_polygon needs a word polygon"
                    )
                session.polygon_edits[edit.index] = edit.polygon
            else:
                raise HTTPException(status_code=422, detail=f"bad action {edit.action}")
        session.version += 1
        return _json_response({"version": session.version})

    @app.get("/sessions/{session_id}/export")
    async def export(session_id: str) -> Response:
        session = store.get(session_id)
        return _json_response(build_export(session))

    return app
