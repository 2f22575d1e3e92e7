"""HTTP+JSON annotation service over a SessionStore.

Endpoints:
  POST /sessions                       open a session on a frame
  GET  /sessions/{id}                  session state
  POST /sessions/{id}/clicks           submit a click (optimistic version)
  POST /sessions/{id}/undo             journal-aware undo of the last click
  POST /sessions/{id}/commit           persist triangulations to the dataset
  GET  /frames/{capture}/{frame}/views cameras available for a frame
  GET  /images/{view}/{frame}          synthetic joint-marker rendering

Every JSON response carries format_version; errors are structured
{code, message, field}. Synthetic images are rendered from the dataset's
world joints so the browser tool works without real capture data.
"""

from __future__ import annotations

import io
import math

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import errors as err
from .pose import JOINT_NAMES, JOINTS_PER_HAND, parent_index
from .session import SessionStore, session_state
from .triangulation import Reprojection

FORMAT_VERSION = "1"

_ERROR_STATUS = {
    err.UnknownFrame: 404,
    err.UnknownSession: 404,
    err.UnknownView: 404,
    err.UnknownJoint: 404,
    err.NothingToCommit: 409,
    err.StaleVersion: 409,
}


class OpenSessionBody(BaseModel):
    capture_id: str
    frame_id: str
    view_ids: list[str] | None = None


class ClickBody(BaseModel):
    joint_id: int
    view_id: str
    u: float
    v: float
    annotator_id: str = "anon"
    expected_version: int | None = None


def _reproj_json(r: Reprojection) -> dict:
    return {
        "view_id": r.view_id,
        "u": None if math.isnan(r.u) else r.u,
        "v": None if math.isnan(r.v) else r.v,
        "behind_camera": r.behind_camera,
    }


def create_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="handrig annotation service")
    image_cache: dict[tuple[str, str], bytes] = {}

    def error_response(exc: Exception, field: str | None = None) -> JSONResponse:
        status = _ERROR_STATUS.get(type(exc), 400)
        return JSONResponse(status_code=status, content={
            "format_version": FORMAT_VERSION,
            "error": {"code": type(exc).__name__, "message": str(exc), "field": field},
        })

    @app.exception_handler(err.HandrigError)
    async def _handle(request: Request, exc: err.HandrigError):
        return error_response(exc)

    @app.exception_handler(ValueError)
    async def _handle_value(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={
            "format_version": FORMAT_VERSION,
            "error": {"code": "InvalidArgument", "message": str(exc), "field": None},
        })

    @app.exception_handler(RequestValidationError)
    async def _handle_validation(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(p) for p in first.get("loc", [])[1:]) or None
        return JSONResponse(status_code=422, content={
            "format_version": FORMAT_VERSION,
            "error": {"code": "ValidationError",
                      "message": str(first.get("msg", "invalid request")),
                      "field": field},
        })

    @app.post("/sessions")
    def open_session(body: OpenSessionBody):
        session = store.open_session(body.capture_id, body.frame_id, body.view_ids)
        return session_state(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return session_state(store.get_session(session_id))

    @app.post("/sessions/{session_id}/clicks")
    def submit_click(session_id: str, body: ClickBody):
        outcome = store.submit_click(
            session_id, body.joint_id, body.view_id, body.u, body.v,
            annotator_id=body.annotator_id, expected_version=body.expected_version)
        doc = {
            "format_version": FORMAT_VERSION,
            "session_id": session_id,
            "joint_id": outcome.joint_id,
            "joint_name": JOINT_NAMES[outcome.joint_id],
            "status": outcome.status,
            "version": outcome.session.version,
            "idempotent": outcome.idempotent,
            "flagged_residual": outcome.flagged_residual,
            "triangulation": None,
            "reprojections": [_reproj_json(r) for r in outcome.reprojections],
        }
        if outcome.result is not None:
            doc["triangulation"] = {
                "point_world": outcome.result.point_world.tolist(),
                "rms_reprojection_error": outcome.result.rms_reprojection_error,
                "per_view_residual": dict(zip(outcome.result.observation_view_ids,
                                              outcome.result.per_view_residual)),
                "inlier_view_ids": list(outcome.result.inlier_view_ids),
            }
        return doc

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        return session_state(store.undo_last_click(session_id))

    @app.post("/sessions/{session_id}/commit")
    def commit(session_id: str):
        updated = store.commit_frame(session_id)
        session = store.get_session(session_id)
        # committed joints change the rendered markers of that frame
        for rec in updated:
            image_cache.pop((rec.camera_id, rec.frame_id), None)
        return {
            "format_version": FORMAT_VERSION,
            "session_id": session_id,
            "committed_joints": int(sum(
                1 for js in session.joints.values() if js.status == "verified")),
            "records_updated": len(updated),
            "verified": session.verified,
        }

    @app.get("/frames/{capture_id}/{frame_id}/views")
    def frame_views(capture_id: str, frame_id: str):
        records = store.frame_records(capture_id, frame_id)
        return {
            "format_version": FORMAT_VERSION,
            "capture_id": capture_id,
            "frame_id": frame_id,
            "views": [
                {
                    "view_id": rec.camera_id,
                    "image_url": f"/images/{rec.camera_id}/{frame_id}",
                    "image_size": list(rec.camera.image_size),
                    "bbox": list(rec.bbox),
                }
                for rec in records
            ],
        }

    @app.get("/images/{view_id}/{frame_id}")
    def image(view_id: str, frame_id: str):
        key = (view_id, frame_id)
        if key not in image_cache:
            matches = [rec for rec in store.records
                       if rec.camera_id == view_id and rec.frame_id == frame_id]
            if not matches:
                return error_response(err.UnknownFrame(f"no image for view {view_id}, frame {frame_id}"))
            if len({m.capture_id for m in matches}) > 1:
                return error_response(err.UnknownFrame(
                    f"(view={view_id}, frame={frame_id}) ambiguous across captures"))
            image_cache[key] = _render_frame(matches[0])
        return Response(content=image_cache[key], media_type="image/png")

    app.state.store = store
    return app


def _render_frame(rec) -> bytes:
    """Joint-marker PNG of one record (synthetic stand-in imagery)."""
    from PIL import Image, ImageDraw

    w, h = rec.camera.image_size
    img = Image.new("RGB", (w, h), (24, 24, 28))
    draw = ImageDraw.Draw(img)
    cam = rec.camera

    def to_px(p):
        pc = cam.camrot @ (p - cam.campos)
        if pc[2] <= 1e-6:
            return None
        return (cam.focal[0] * pc[0] / pc[2] + cam.princpt[0],
                cam.focal[1] * pc[1] / pc[2] + cam.princpt[1])

    pts = {}
    for j in np.nonzero(rec.joint_valid)[0]:
        uv = to_px(rec.joints_world[j])
        if uv is not None:
            pts[int(j)] = uv
    for j, uv in pts.items():
        parent = parent_index(j)
        if parent is not None and parent in pts:
            draw.line([pts[parent], uv], fill=(90, 90, 110), width=1)
    r = max(1, w // 256)
    for j, uv in pts.items():
        color = (220, 150, 80) if j < JOINTS_PER_HAND else (80, 160, 220)
        draw.ellipse([uv[0] - r, uv[1] - r, uv[0] + r, uv[1] + r], fill=color)
    x, y, bw, bh = rec.bbox
    draw.rectangle([x, y, x + bw, y + bh], outline=(60, 60, 70))

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
