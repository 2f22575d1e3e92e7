"""Live annotation sessions: click -> triangulate -> reproject, persisted.

A session wraps one frame of the dataset and a chosen camera subset
(default six views picked for pairwise triangulation angle). Every state
change is appended to a per-session JSONL journal and fsynced, so a crash
between clicks loses at most the in-flight click. The journal is the
authority on reload (replay is deterministic and cheap); periodic
snapshots exist so operators can inspect a session's current state without
replaying. Undo is journal-aware: an undo event neutralizes the latest
live click and the state is recomputed by replay, keeping the full history
auditable.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import dataset_io
from .errors import (
    DegenerateRays,
    NothingToCommit,
    StaleVersion,
    UnknownFrame,
    UnknownJoint,
    UnknownSession,
    UnknownView,
)
from .pose import NUM_JOINTS
from .triangulation import (
    Detection2DSet,
    Observation,
    RansacConfig,
    Reprojection,
    TriangulationResult,
    reproject_all,
    triangulate_dlt,
)

DEFAULT_SESSION_VIEWS = 6
SNAPSHOT_EVERY = 25

JOINT_UNCLICKED = "unclicked"
JOINT_UNDERDETERMINED = "underdetermined"
JOINT_TRIANGULATED = "triangulated"
JOINT_VERIFIED = "verified"


@dataclass
class Click:
    view_id: str
    u: float
    v: float
    annotator_id: str
    timestamp: float


@dataclass
class JointState:
    status: str = JOINT_UNCLICKED
    clicks: dict = field(default_factory=dict)       # view_id -> Click
    result: TriangulationResult | None = None
    flagged_residual: bool = False


@dataclass
class AnnotationSession:
    session_id: str
    capture_id: str
    frame_id: str
    view_ids: list[str]
    joints: dict = field(default_factory=dict)       # joint_id -> JointState
    version: int = 0
    verified: bool = False

    def joint(self, joint_id: int) -> JointState:
        return self.joints.setdefault(joint_id, JointState())


def select_views(cams, target, count: int = DEFAULT_SESSION_VIEWS) -> list[str]:
    """Greedy max-min-angle camera subset aimed at good triangulation.

    Starts from the widest pair, then repeatedly adds the camera whose
    smallest angle to the chosen set is largest.
    """
    if len(cams) <= count:
        return [c.view_id for c in cams]
    target = np.asarray(target, dtype=np.float64)
    dirs = np.stack([
        (target - c.campos) / np.linalg.norm(target - c.campos) for c in cams])
    cos = np.clip(dirs @ dirs.T, -1.0, 1.0)
    angles = np.arccos(cos)
    n = len(cams)
    iu = np.triu_indices(n, k=1)
    best = int(np.argmax(angles[iu]))
    chosen = [int(iu[0][best]), int(iu[1][best])]
    while len(chosen) < count:
        remaining = [i for i in range(n) if i not in chosen]
        gains = [min(angles[i, j] for j in chosen) for i in remaining]
        chosen.append(remaining[int(np.argmax(gains))])
    return [cams[i].view_id for i in sorted(chosen)]


@dataclass
class ClickOutcome:
    session: AnnotationSession
    joint_id: int
    status: str
    result: TriangulationResult | None
    reprojections: list[Reprojection]
    flagged_residual: bool
    idempotent: bool = False


class SessionStore:
    """Sessions over one dataset file, persisted under a sessions directory."""

    def __init__(self, dataset_path, sessions_dir, clock=time.time,
                 ransac: RansacConfig | None = None):
        self.dataset_path = str(dataset_path)
        self.sessions_dir = str(sessions_dir)
        self.clock = clock
        self.ransac = ransac or RansacConfig()
        os.makedirs(self.sessions_dir, exist_ok=True)
        self.records = dataset_io.read_annotations(dataset_path)
        self._index_dataset()
        self.sessions: dict[str, AnnotationSession] = {}
        self._events: dict[str, list[dict]] = {}
        self._load_existing_sessions()

    # --- dataset indexing ---

    def _index_dataset(self):
        self.frames: dict[tuple[str, str], list[dataset_io.AnnotationRecord]] = {}
        for rec in self.records:
            self.frames.setdefault((rec.capture_id, rec.frame_id), []).append(rec)

    def frame_records(self, capture_id: str, frame_id: str):
        key = (capture_id, frame_id)
        if key not in self.frames:
            raise UnknownFrame(f"frame {key} not in dataset")
        return self.frames[key]

    def frame_cameras(self, capture_id: str, frame_id: str):
        return [rec.camera for rec in self.frame_records(capture_id, frame_id)]

    # --- persistence ---

    def _session_dir(self, session_id: str) -> str:
        return os.path.join(self.sessions_dir, session_id)

    def _journal_path(self, session_id: str) -> str:
        return os.path.join(self._session_dir(session_id), "journal.jsonl")

    def _append_event(self, session_id: str, event: dict):
        event = dict(event)
        event["seq"] = len(self._events[session_id])
        path = self._journal_path(session_id)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event, sort_keys=True))
            f.write("\n")
            f.flush()
            os.fsync(f.fileno())
        self._events[session_id].append(event)
        if len(self._events[session_id]) % SNAPSHOT_EVERY == 0:
            self._write_snapshot(session_id)

    def _write_snapshot(self, session_id: str):
        session = self.sessions[session_id]
        snap = {
            "format_version": "1",
            "n_events": len(self._events[session_id]),
            "state": _session_to_dict(session),
        }
        path = os.path.join(self._session_dir(session_id), "snapshot.json")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(snap, f, sort_keys=True)
        os.replace(tmp, path)

    def _load_existing_sessions(self):
        for name in sorted(os.listdir(self.sessions_dir)):
            journal = self._journal_path(name)
            if not os.path.isfile(journal):
                continue
            events = []
            with open(journal, "r", encoding="utf-8") as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        events.append(json.loads(line))
                    except json.JSONDecodeError:
                        break  # torn tail write: drop the in-flight event
            if not events:
                continue
            self._events[name] = events
            self.sessions[name] = self._replay(events)

    def _replay(self, events: list[dict]) -> AnnotationSession:
        undone = {e["undoes"] for e in events if e["type"] == "undo"}
        head = events[0]
        session = AnnotationSession(
            session_id=head["session_id"],
            capture_id=head["capture_id"],
            frame_id=head["frame_id"],
            view_ids=list(head["view_ids"]),
        )
        for e in events[1:]:
            if e["type"] == "click" and e["seq"] not in undone:
                self._apply_click(session, e["joint_id"], e["view_id"],
                                  e["u"], e["v"], e["annotator_id"], e["timestamp"])
                session.version += 1
            elif e["type"] == "undo":
                session.version += 1
            elif e["type"] == "commit":
                session.verified = True
                for js in session.joints.values():
                    if js.status == JOINT_TRIANGULATED:
                        js.status = JOINT_VERIFIED
                session.version += 1
        return session

    # --- session lifecycle ---

    def open_session(self, capture_id: str, frame_id: str,
                     view_ids: list[str] | None = None) -> AnnotationSession:
        records = self.frame_records(capture_id, frame_id)
        cams = [rec.camera for rec in records]
        if view_ids is not None:
            known = {c.view_id for c in cams}
            for v in view_ids:
                if v not in known:
                    raise UnknownView(f"view {v!r} not available for frame")
            if len(view_ids) < 2:
                raise ValueError("a session needs at least 2 views")
            chosen = list(view_ids)
        else:
            target = self._frame_target(records)
            chosen = select_views(cams, target)

        session_id = f"s{len(self.sessions):06d}"
        while session_id in self.sessions:
            session_id = f"s{int(session_id[1:]) + 1:06d}"
        session = AnnotationSession(
            session_id=session_id, capture_id=capture_id, frame_id=frame_id,
            view_ids=chosen)
        os.makedirs(self._session_dir(session_id), exist_ok=True)
        self.sessions[session_id] = session
        self._events[session_id] = []
        self._append_event(session_id, {
            "type": "open", "session_id": session_id,
            "capture_id": capture_id, "frame_id": frame_id,
            "view_ids": chosen, "timestamp": self.clock(),
        })
        return session

    def _frame_target(self, records) -> np.ndarray:
        rec = records[0]
        if rec.joint_valid.any():
            return rec.joints_world[rec.joint_valid].mean(axis=0)
        return np.mean([r.camera.campos for r in records], axis=0)

    def get_session(self, session_id: str) -> AnnotationSession:
        if session_id not in self.sessions:
            raise UnknownSession(session_id)
        return self.sessions[session_id]

    # --- clicking ---

    def _session_cams(self, session: AnnotationSession):
        cams = {c.view_id: c for c in self.frame_cameras(session.capture_id, session.frame_id)}
        return [cams[v] for v in session.view_ids]

    def _apply_click(self, session: AnnotationSession, joint_id: int, view_id: str,
                     u: float, v: float, annotator_id: str, timestamp: float):
        js = session.joint(joint_id)
        js.clicks[view_id] = Click(view_id=view_id, u=u, v=v,
                                   annotator_id=annotator_id, timestamp=timestamp)
        self._retriangulate(session, joint_id)

    def _retriangulate(self, session: AnnotationSession, joint_id: int):
        js = session.joint(joint_id)
        cams = self._session_cams(session)
        if len(js.clicks) == 0:
            js.status = JOINT_UNCLICKED
            js.result = None
            js.flagged_residual = False
            return
        if len(js.clicks) < 2:
            js.status = JOINT_UNDERDETERMINED
            js.result = None
            js.flagged_residual = False
            return
        det = Detection2DSet(joint_id=joint_id, observations=tuple(
            Observation(view_id=c.view_id, u=c.u, v=c.v)
            for c in sorted(js.clicks.values(), key=lambda c: c.view_id)))
        try:
            js.result = triangulate_dlt(det, cams, refine=True)
        except DegenerateRays:
            js.status = JOINT_UNDERDETERMINED
            js.result = None
            js.flagged_residual = False
            return
        js.status = JOINT_TRIANGULATED
        thr = {c.view_id: self.ransac.threshold_for(c) for c in cams}
        js.flagged_residual = any(
            r > thr[vid] for vid, r in zip(js.result.observation_view_ids,
                                           js.result.per_view_residual))

    def submit_click(self, session_id: str, joint_id: int, view_id: str,
                     u: float, v: float, annotator_id: str = "anon",
                     expected_version: int | None = None) -> ClickOutcome:
        session = self.get_session(session_id)
        if not 0 <= joint_id < NUM_JOINTS:
            raise UnknownJoint(f"joint {joint_id} outside the 42-keypoint schema")
        if view_id not in session.view_ids:
            raise UnknownView(f"view {view_id!r} not part of session {session_id}")
        if expected_version is not None and expected_version != session.version:
            raise StaleVersion(
                f"session at version {session.version}, client expected {expected_version}")

        js = session.joint(joint_id)
        prior = js.clicks.get(view_id)
        cams = self._session_cams(session)
        if prior is not None and prior.u == u and prior.v == v:
            reproj = (reproject_all(js.result.point_world, cams)
                      if js.result is not None else [])
            return ClickOutcome(session=session, joint_id=joint_id,
                                status=js.status, result=js.result,
                                reprojections=reproj,
                                flagged_residual=js.flagged_residual,
                                idempotent=True)

        ts = self.clock()
        self._apply_click(session, joint_id, view_id, u, v, annotator_id, ts)
        session.version += 1
        self._append_event(session_id, {
            "type": "click", "joint_id": joint_id, "view_id": view_id,
            "u": u, "v": v, "annotator_id": annotator_id, "timestamp": ts,
        })
        reproj = (reproject_all(js.result.point_world, cams)
                  if js.result is not None else [])
        return ClickOutcome(session=session, joint_id=joint_id, status=js.status,
                            result=js.result, reprojections=reproj,
                            flagged_residual=js.flagged_residual)

    def undo_last_click(self, session_id: str) -> AnnotationSession:
        """Neutralize the most recent not-yet-undone click and replay."""
        session = self.get_session(session_id)
        events = self._events[session_id]
        undone = {e["undoes"] for e in events if e["type"] == "undo"}
        target = None
        for e in reversed(events):
            if e["type"] == "click" and e["seq"] not in undone:
                target = e["seq"]
                break
        if target is None:
            return session
        self._append_event(session_id, {
            "type": "undo", "undoes": target, "timestamp": self.clock(),
        })
        fresh = self._replay(self._events[session_id])
        self.sessions[session_id] = fresh
        return fresh

    # --- commit ---

    def commit_frame(self, session_id: str) -> list[dataset_io.AnnotationRecord]:
        """Write the session's triangulated joints into the dataset.

        Joints without a triangulation are marked invalid. Committing twice
        produces identical records.
        """
        session = self.get_session(session_id)
        triangulated = {
            j: js.result for j, js in session.joints.items()
            if js.status in (JOINT_TRIANGULATED, JOINT_VERIFIED) and js.result is not None
        }
        if not triangulated:
            raise NothingToCommit(f"session {session_id} has no triangulated joint")

        joints_world = np.zeros((NUM_JOINTS, 3))
        joint_valid = np.zeros(NUM_JOINTS, dtype=bool)
        for j, res in triangulated.items():
            joints_world[j] = res.point_world
            joint_valid[j] = True

        updated = []
        for rec in self.records:
            if (rec.capture_id, rec.frame_id) == (session.capture_id, session.frame_id):
                rec.joints_world = joints_world.copy()
                rec.joint_valid = joint_valid.copy()
                updated.append(rec)
        dataset_io.write_annotations(self.records, self.dataset_path)
        self._index_dataset()

        session.verified = True
        for js in session.joints.values():
            if js.status == JOINT_TRIANGULATED:
                js.status = JOINT_VERIFIED
        session.version += 1
        self._append_event(session_id, {"type": "commit", "timestamp": self.clock()})
        self._write_snapshot(session_id)
        return updated


def _session_to_dict(session: AnnotationSession) -> dict:
    joints = {}
    for j, js in session.joints.items():
        entry = {
            "status": js.status,
            "clicks": [
                {"view_id": c.view_id, "u": c.u, "v": c.v,
                 "annotator_id": c.annotator_id, "timestamp": c.timestamp}
                for c in sorted(js.clicks.values(), key=lambda c: c.view_id)
            ],
            "flagged_residual": js.flagged_residual,
        }
        if js.result is not None:
            entry["point_world"] = js.result.point_world.tolist()
            entry["rms_reprojection_error"] = js.result.rms_reprojection_error
            entry["per_view_residual"] = dict(zip(js.result.observation_view_ids,
                                                  js.result.per_view_residual))
        joints[str(j)] = entry
    return {
        "session_id": session.session_id,
        "capture_id": session.capture_id,
        "frame_id": session.frame_id,
        "view_ids": list(session.view_ids),
        "version": session.version,
        "verified": session.verified,
        "joints": joints,
    }


def session_state(session: AnnotationSession) -> dict:
    """Public JSON shape of a session (used by the HTTP service)."""
    doc = _session_to_dict(session)
    doc["format_version"] = "1"
    return doc
