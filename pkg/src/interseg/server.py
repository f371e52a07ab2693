"""HTTP session service for human-in-the-loop segmentation.

Endpoints: POST /sessions (create from an uploaded or base64 image),
GET /sessions/{id}, POST /sessions/{id}/clicks (one pipeline step),
POST /sessions/{id}/undo (restore the prior round checkpoint bit-exactly),
DELETE /sessions/{id}. Masks travel as base64 run-length payloads. The built
web client, when present, is served from the package's static directory or a
path supplied at app construction.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .codec import encode_mask
from .pipeline import PipelineConfig, SessionState, new_session, step
from .raster import Click, as_mask, iou
from .segmenters import Segmenter, make_segmenter
from .zoom import FusionSchedule

__all__ = ["create_app", "serve"]

MAX_SESSIONS_DEFAULT = 32
IDLE_TIMEOUT_DEFAULT = 1800.0


@dataclass
class _Checkpoint:
    t: int
    clicks: tuple[Click, ...]
    logit: np.ndarray
    mask: np.ndarray
    rounds: int


@dataclass
class ApiSession:
    sid: str
    state: SessionState
    segmenter: Segmenter
    created_at: float
    last_activity: float
    checkpoints: list[_Checkpoint] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def checkpoint(self) -> None:
        self.checkpoints.append(
            _Checkpoint(
                t=self.state.t,
                clicks=tuple(self.state.clicks),
                logit=self.state.current_logit.copy(),
                mask=self.state.current_mask.copy(),
                rounds=len(self.state.rounds),
            )
        )

    def restore_last(self) -> None:
        cp = self.checkpoints.pop()
        st = self.state
        st.t = cp.t
        st.clicks = list(cp.clicks)
        st.current_logit = cp.logit
        st.current_mask = cp.mask
        del st.rounds[cp.rounds :]


class SessionStore:
    def __init__(self, max_sessions: int, idle_timeout: float) -> None:
        self.max_sessions = max_sessions
        self.idle_timeout = idle_timeout
        self._sessions: dict[str, ApiSession] = {}
        self._lock = threading.Lock()

    def sweep(self) -> None:
        now = time.monotonic()
        with self._lock:
            stale = [
                sid
                for sid, s in self._sessions.items()
                if now - s.last_activity > self.idle_timeout
            ]
            for sid in stale:
                del self._sessions[sid]

    def add(self, session: ApiSession) -> None:
        self.sweep()
        with self._lock:
            if len(self._sessions) >= self.max_sessions:
                raise HTTPException(503, "session capacity reached")
            self._sessions[session.sid] = session

    def get(self, sid: str) -> ApiSession:
        self.sweep()
        with self._lock:
            s = self._sessions.get(sid)
        if s is None:
            raise HTTPException(404, f"no session {sid}")
        s.last_activity = time.monotonic()
        return s

    def drop(self, sid: str) -> None:
        with self._lock:
            if sid not in self._sessions:
                raise HTTPException(404, f"no session {sid}")
            del self._sessions[sid]


def _decode_image_bytes(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data)).convert("RGB")
    except Exception as e:
        raise HTTPException(400, f"image does not decode: {e}") from e
    return np.asarray(img, dtype=np.float64) / 255.0


def _decode_mask_bytes(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data)).convert("L")
    except Exception as e:
        raise HTTPException(400, f"mask does not decode: {e}") from e
    return as_mask(np.asarray(img) > 127)


def _session_json(s: ApiSession) -> dict:
    st = s.state
    return {
        "id": s.sid,
        "t": st.t,
        "budget": st.config.budget,
        "height": st.image.shape[0],
        "width": st.image.shape[1],
        "mask": encode_mask(st.current_mask),
        "clicks": [c.to_json() for c in st.clicks],
        "iou": iou(st.current_mask, st.gt) if st.gt is not None else None,
        "rounds": [
            {"t": r.t, "lambda": r.lam, "iou": r.iou, "seconds": r.seconds}
            for r in st.rounds
        ],
    }


def _round_json(s: ApiSession) -> dict:
    st = s.state
    if st.t == 0:
        return {
            "t": 0,
            "mask": encode_mask(st.current_mask),
            "lambda": None,
            "iou": iou(st.current_mask, st.gt) if st.gt is not None else None,
            "seconds": None,
            "grid": None,
        }
    r = st.rounds[-1]
    grid = None
    if r.zoomed and r.grid_x is not None and r.grid_y is not None:
        grid = {"x": [float(v) for v in r.grid_x], "y": [float(v) for v in r.grid_y]}
    return {
        "t": r.t,
        "mask": encode_mask(st.current_mask),
        "lambda": r.lam,
        "iou": r.iou,
        "seconds": r.seconds,
        "grid": grid,
    }


def create_app(
    max_sessions: int = MAX_SESSIONS_DEFAULT,
    idle_timeout: float = IDLE_TIMEOUT_DEFAULT,
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="interseg")
    store = SessionStore(max_sessions, idle_timeout)
    app.state.store = store

    @app.post("/sessions")
    async def create_session(
        request: Request,
        image: UploadFile | None = File(default=None),
        gt: UploadFile | None = File(default=None),
        segmenter: str = Form(default="geodesic"),
        budget: int = Form(default=20),
        working_size: int = Form(default=256),
        seed: int = Form(default=0),
    ):
        image_bytes = gt_bytes = None
        if image is not None:
            image_bytes = await image.read()
            if gt is not None:
                gt_bytes = await gt.read()
        elif request.headers.get("content-type", "").startswith("application/json"):
            body = await request.json()
            segmenter = body.get("segmenter", segmenter)
            budget = int(body.get("budget", budget))
            working_size = int(body.get("working_size", working_size))
            seed = int(body.get("seed", seed))
            if "image_b64" in body:
                try:
                    image_bytes = base64.b64decode(body["image_b64"], validate=True)
                except Exception as e:
                    raise HTTPException(400, f"bad image_b64: {e}") from e
            if "gt_b64" in body:
                try:
                    gt_bytes = base64.b64decode(body["gt_b64"], validate=True)
                except Exception as e:
                    raise HTTPException(400, f"bad gt_b64: {e}") from e
        if image_bytes is None:
            raise HTTPException(400, "no image supplied")
        if budget < 1:
            raise HTTPException(400, "budget must be >= 1")
        img = _decode_image_bytes(image_bytes)
        gt_mask = _decode_mask_bytes(gt_bytes) if gt_bytes is not None else None
        if gt_mask is not None and gt_mask.shape != img.shape[:2]:
            raise HTTPException(400, "ground truth size differs from image")
        try:
            seg = make_segmenter(segmenter, gt=gt_mask, seed=seed)
        except ValueError as e:
            raise HTTPException(400, str(e)) from e
        cfg = PipelineConfig(working_size=working_size, budget=budget)
        state = new_session(img, gt_mask, cfg)
        now = time.monotonic()
        session = ApiSession(
            sid=uuid.uuid4().hex,
            state=state,
            segmenter=seg,
            created_at=now,
            last_activity=now,
        )
        store.add(session)
        return JSONResponse(_session_json(session), status_code=201)

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return _session_json(store.get(sid))

    @app.post("/sessions/{sid}/clicks")
    async def post_click(sid: str, request: Request):
        body = await request.json()
        try:
            row = int(body["row"])
            col = int(body["col"])
            positive = bool(body["positive"])
        except (KeyError, TypeError, ValueError) as e:
            raise HTTPException(400, f"bad click body: {e}") from e
        s = store.get(sid)
        if not s.lock.acquire(blocking=False):
            raise HTTPException(409, "a step is already running for this session")
        try:
            st = s.state
            h, w = st.image.shape[:2]
            if not (0 <= row < h and 0 <= col < w):
                raise HTTPException(400, f"click ({row}, {col}) outside {h}x{w}")
            if st.t >= st.config.budget:
                raise HTTPException(409, "click budget exhausted")
            s.checkpoint()
            try:
                step(st, Click(row, col, positive), s.segmenter)
            except Exception:
                s.restore_last()
                raise
            return _round_json(s)
        finally:
            s.lock.release()

    @app.post("/sessions/{sid}/undo")
    def undo(sid: str):
        s = store.get(sid)
        if not s.lock.acquire(blocking=False):
            raise HTTPException(409, "a step is already running for this session")
        try:
            if not s.checkpoints or s.state.t == 0:
                raise HTTPException(409, "nothing to undo")
            s.restore_last()
            return _round_json(s)
        finally:
            s.lock.release()

    @app.delete("/sessions/{sid}")
    def drop_session(sid: str):
        store.drop(sid)
        return JSONResponse({"deleted": sid})

    @app.get("/lambda-schedule")
    def lambda_schedule(budget: int = 20):
        if budget < 1:
            raise HTTPException(400, "budget must be >= 1")
        sched = FusionSchedule(budget)
        return {"budget": budget, "lambda": [sched.weight(t) for t in range(1, budget + 1)]}

    root = Path(static_dir) if static_dir is not None else _default_static_dir()
    if root is not None and root.is_dir():
        app.mount("/", StaticFiles(directory=root, html=True), name="ui")
    return app


def _default_static_dir() -> Path | None:
    here = Path(__file__).resolve()
    for base in [here.parent / "static", *(
        p / "frontend" / "dist" for p in here.parents[:5]
    )]:
        if base.is_dir():
            return base
    return None


def serve(
    port: int = 8000,
    max_sessions: int = MAX_SESSIONS_DEFAULT,
    idle_timeout: float = IDLE_TIMEOUT_DEFAULT,
    static_dir: str | None = None,
) -> None:
    import uvicorn

    app = create_app(max_sessions, idle_timeout, static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port)
