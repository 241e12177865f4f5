"""Stateful HTTP editing service for the annotation UI.

A session holds one uploaded image plus its current latent codes.  The
client submits arrow or patch annotations, the service optimizes the
matching code synchronously (bounded by a step budget and hard time
budget), and the preview endpoint renders short loops at reduced
resolution, cached until the codes change.

Network weights are read-only here; no endpoint can mutate them.
Mutations on one session are serialized by a per-session lock, so
concurrent edits follow last-writer-wins on the codes.
"""

from __future__ import annotations

import base64
import hashlib
import io
import threading
import uuid
from dataclasses import dataclass, field as dc_field

import imageio.v3 as iio
import numpy as np
import torch
from fastapi import FastAPI, HTTPException, Request, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware

from .control import (
    appearance_annotation_from_document,
    motion_annotation_from_document,
    optimize_appearance_code,
    optimize_motion_code,
)
from .dataset import Codebook
from .errors import ConfigurationError
from .imageops import denormalize_image, normalize_image
from .networks import PredictorNet
from .synthesis import SynthesisConfig, synthesize

SCHEMA_VERSION = 1


@dataclass
class EditEngine:
    """Read-only model bundle plus service budgets."""

    motion_predictor: PredictorNet
    appearance_predictor: PredictorNet
    motion_codebook: Codebook
    appearance_codebook: Codebook
    beta: float = 64.0
    preview_frame_count: int = 16
    preview_scale: float = 0.25
    optimize_steps: int = 200
    optimize_lr: float = 1e-2
    optimize_time_budget_s: float = 30.0
    max_upload_bytes: int = 16 * 1024 * 1024
    seed: int = 0

    def __post_init__(self):
        if len(self.motion_codebook) == 0 or len(self.appearance_codebook) == 0:
            raise ConfigurationError("service needs non-empty motion and appearance codebooks")


@dataclass
class EditSession:
    session_id: str
    image: torch.Tensor
    motion_code: torch.Tensor
    appearance_codes: list[torch.Tensor]
    revision: int = 0
    motion_trace: list[float] = dc_field(default_factory=list)
    appearance_trace: list[float] = dc_field(default_factory=list)
    preview_cache: dict = dc_field(default_factory=dict)
    lock: threading.Lock = dc_field(default_factory=threading.Lock)


def _frame_to_b64_png(frame: torch.Tensor) -> str:
    buf = io.BytesIO()
    iio.imwrite(buf, denormalize_image(frame), extension=".png")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _codebook_payload(book: Codebook) -> dict:
    entries = []
    for clip_id, value in book.entries.items():
        if book.kind == "motion":
            entries.append({"clip_id": clip_id, "code": [float(v) for v in value]})
        else:
            entries.append({
                "clip_id": clip_id,
                "code_sequence": [[float(v) for v in code] for code in value],
            })
    return {"version": SCHEMA_VERSION, "kind": book.kind, "entries": entries}


def create_app(engine: EditEngine) -> FastAPI:
    app = FastAPI(title="stillmotion editing service", version="1")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, EditSession] = {}
    sessions_lock = threading.Lock()
    session_counter = {"n": 0}

    def get_session(session_id: str) -> EditSession:
        with sessions_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.post("/sessions", status_code=201)
    async def create_session(image: UploadFile):
        body = await image.read()
        if len(body) == 0:
            raise HTTPException(status_code=400, detail="empty upload")
        if len(body) > engine.max_upload_bytes:
            raise HTTPException(status_code=413, detail="upload exceeds size limit")
        try:
            raw = iio.imread(io.BytesIO(body))
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"undecodable image: {exc}") from exc
        if raw.ndim == 2:
            raw = np.stack([raw] * 3, axis=-1)
        img = normalize_image(raw[..., :3])

        with sessions_lock:
            n = session_counter["n"]
            session_counter["n"] += 1
        rng = np.random.default_rng(engine.seed + n)
        m_ids = engine.motion_codebook.ids()
        a_ids = engine.appearance_codebook.ids()
        session = EditSession(
            session_id=uuid.uuid4().hex,
            image=img,
            motion_code=engine.motion_codebook.entries[
                m_ids[int(rng.integers(0, len(m_ids)))]
            ].clone(),
            appearance_codes=[
                c.clone()
                for c in engine.appearance_codebook.entries[
                    a_ids[int(rng.integers(0, len(a_ids)))]
                ]
            ],
        )
        with sessions_lock:
            sessions[session.session_id] = session
        return {
            "session_id": session.session_id,
            "height": int(img.shape[0]),
            "width": int(img.shape[1]),
        }

    @app.post("/sessions/{session_id}/annotations/motion")
    async def submit_motion(session_id: str, request: Request):
        session = get_session(session_id)
        doc = await request.json()
        try:
            annotation = motion_annotation_from_document(doc)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        with session.lock:
            result = optimize_motion_code(
                session.image, annotation, engine.motion_predictor,
                steps=engine.optimize_steps, lr=engine.optimize_lr,
                beta=engine.beta, codebook=engine.motion_codebook,
                time_budget_s=engine.optimize_time_budget_s,
            )
            session.motion_code = result.code
            session.motion_trace = result.objective_trace
            session.revision += 1
            session.preview_cache.clear()
        return {
            "code": [float(v) for v in result.code],
            "objective_trace": result.objective_trace,
            "best_step": result.best_step,
            "best_objective": result.best_objective,
        }

    @app.post("/sessions/{session_id}/annotations/appearance")
    async def submit_appearance(session_id: str, request: Request):
        session = get_session(session_id)
        doc = await request.json()
        try:
            annotation = appearance_annotation_from_document(doc)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        with session.lock:
            result = optimize_appearance_code(
                session.image, annotation, engine.appearance_predictor,
                steps=engine.optimize_steps, lr=engine.optimize_lr,
                codebook=engine.appearance_codebook,
                time_budget_s=engine.optimize_time_budget_s,
            )
            # the optimized code becomes the cycle's far end; the first code
            # stays so the loop departs from and returns to the current look
            session.appearance_codes = [session.appearance_codes[0], result.code]
            session.appearance_trace = result.objective_trace
            session.revision += 1
            session.preview_cache.clear()
        return {
            "code": [float(v) for v in result.code],
            "objective_trace": result.objective_trace,
            "best_step": result.best_step,
            "best_objective": result.best_objective,
        }

    @app.get("/sessions/{session_id}/preview")
    def preview(session_id: str, response: Response, frm: int = 0, count: int | None = None,
                w: int | None = None, h: int | None = None):
        session = get_session(session_id)
        total = engine.preview_frame_count
        count = total if count is None else count
        if frm < 0 or count < 1 or frm + count > total:
            raise HTTPException(status_code=416, detail=f"range outside [0, {total})")
        native_h, native_w = session.image.shape[0], session.image.shape[1]
        h = h or max(8, int(native_h * engine.preview_scale))
        w = w or max(8, int(native_w * engine.preview_scale))

        with session.lock:
            key = (session.revision, w, h)
            frames = session.preview_cache.get(key)
            if frames is None:
                cfg = SynthesisConfig(
                    frame_count=total,
                    loop_enabled=True,
                    motion_code=session.motion_code,
                    appearance_codes=session.appearance_codes,
                    output_resolution=(h, w),
                    beta=engine.beta,
                )
                frames = synthesize(
                    session.image, cfg, engine.motion_predictor,
                    engine.appearance_predictor,
                )
                session.preview_cache = {key: frames}  # latest revision only
        etag = hashlib.sha1(
            f"{session.session_id}:{session.revision}:{frm}:{count}:{w}:{h}".encode()
        ).hexdigest()
        response.headers["ETag"] = etag
        return {
            "etag": etag,
            "from": frm,
            "count": count,
            "total": total,
            "frames": [_frame_to_b64_png(f) for f in frames[frm : frm + count]],
        }

    @app.get("/sessions/{session_id}/state")
    def state(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return {
                "session_id": session.session_id,
                "revision": session.revision,
                "height": int(session.image.shape[0]),
                "width": int(session.image.shape[1]),
                "motion_code": [float(v) for v in session.motion_code],
                "appearance_codes": [
                    [float(v) for v in c] for c in session.appearance_codes
                ],
                "motion_trace": session.motion_trace,
                "appearance_trace": session.appearance_trace,
            }

    @app.get("/codebooks/{kind}")
    def codebook(kind: str):
        if kind == "motion":
            return _codebook_payload(engine.motion_codebook)
        if kind == "appearance":
            return _codebook_payload(engine.appearance_codebook)
        raise HTTPException(status_code=404, detail="kind must be motion or appearance")

    return app
