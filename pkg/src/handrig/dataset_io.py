"""Annotation release format: read, write, validate, merge.

One JSON document per split holds four sections mirroring the public hand
datasets' vocabulary: `images` (id, file name, size, capture/frame/camera
keys), `annotations` (bbox, hand type, per-joint validity, 1:1 with
images), `cameras` (campos mm, camrot row-major, focal, princpt, keyed by
capture then camera) and `joints_world` (42x3 mm, keyed by capture then
frame). When the cameras of one frame carry conflicting world joints the
frame entry becomes a per-camera mapping instead of a single array; the
canonical writer only emits that form when records actually disagree.

Writers canonicalize (sorted records, sorted keys, shortest round-trip
floats) so a write -> read -> write cycle is byte-stable. Unknown fields
are rejected loudly, naming the offending path.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import IoError, ParseError, SchemaViolation
from .geometry import CameraView
from .pose import JOINT_NAMES, JOINTS_PER_HAND, NUM_JOINTS, WRIST

FORMAT_VERSION = "1"
HAND_TYPES = ("right", "left", "interacting")
SPLIT_NAMES = ("Train(H)", "Train(M)", "Train(H+M)", "Val(M)", "Test(H)", "Test(M)", "Test(H+M)")
FRAME_CONSISTENCY_TOL_MM = 1.0

RIGHT_WRIST = WRIST
LEFT_WRIST = JOINTS_PER_HAND + WRIST


@dataclass
class AnnotationRecord:
    """One frame as seen by one camera, with its world-space annotation."""

    capture_id: str
    frame_id: str
    camera_id: str
    camera_type: str
    subject_id: str
    file_name: str
    bbox: tuple[float, float, float, float]
    hand_type: str
    hand_type_valid: bool
    joints_world: np.ndarray
    joint_valid: np.ndarray
    camera: CameraView

    def __post_init__(self):
        self.joints_world = np.asarray(self.joints_world, dtype=np.float64).reshape(NUM_JOINTS, 3)
        self.joint_valid = np.asarray(self.joint_valid, dtype=bool).reshape(NUM_JOINTS)
        self.bbox = tuple(float(v) for v in self.bbox)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.capture_id, self.frame_id, self.camera_id)


def record_violations(rec: AnnotationRecord) -> list[str]:
    """Invariant breaches of a single record (empty when clean)."""
    out = []
    x, y, w, h = rec.bbox
    if not (w > 0 and h > 0):
        out.append(f"bbox size ({w}, {h}) not positive")
    if not all(math.isfinite(v) for v in rec.bbox):
        out.append("bbox contains non-finite values")
    if rec.hand_type not in HAND_TYPES:
        out.append(f"hand_type {rec.hand_type!r} not one of {HAND_TYPES}")
    if np.any(~np.isfinite(rec.joints_world[rec.joint_valid])):
        out.append("valid joints contain non-finite coordinates")
    if rec.hand_type == "interacting" and rec.hand_type_valid:
        if not (rec.joint_valid[RIGHT_WRIST] and rec.joint_valid[LEFT_WRIST]):
            out.append("interacting frame without both wrists valid")
    return out


# --- strict JSON helpers -------------------------------------------------------

def _expect(doc: dict, path: str, allowed: set[str]) -> None:
    extra = set(doc) - allowed
    if extra:
        raise SchemaViolation(f"{path}.{sorted(extra)[0]}", "unknown field")


def _get(doc: dict, path: str, key: str, kind, required: bool = True, default=None):
    if key not in doc or (doc[key] is None and not required):
        if required:
            raise SchemaViolation(f"{path}.{key}", "missing field")
        return default
    val = doc[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaViolation(f"{path}.{key}", f"expected number, got {type(val).__name__}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise SchemaViolation(f"{path}.{key}", f"expected integer, got {type(val).__name__}")
        return val
    if not isinstance(val, kind):
        raise SchemaViolation(f"{path}.{key}", f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def _float_list(val, path: str, n: int) -> list[float]:
    if not isinstance(val, list) or len(val) != n:
        raise SchemaViolation(path, f"expected list of {n} numbers")
    out = []
    for i, v in enumerate(val):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaViolation(f"{path}[{i}]", "expected number")
        out.append(float(v))
    return out


def _joints_array(val, path: str) -> np.ndarray:
    if not isinstance(val, list) or len(val) != NUM_JOINTS:
        raise SchemaViolation(path, f"expected {NUM_JOINTS} joint rows")
    return np.array([_float_list(row, f"{path}[{i}]", 3) for i, row in enumerate(val)])


def _parse_camera(doc, path: str, key: tuple[str, str], image_size) -> CameraView:
    _expect(doc, path, {"campos", "camrot", "focal", "princpt"})
    camrot_raw = doc.get("camrot")
    if not isinstance(camrot_raw, list) or len(camrot_raw) != 3:
        raise SchemaViolation(f"{path}.camrot", "expected 3 rows")
    camrot = [_float_list(r, f"{path}.camrot[{i}]", 3) for i, r in enumerate(camrot_raw)]
    try:
        return CameraView(
            view_id=key[1],
            campos=_float_list(doc.get("campos"), f"{path}.campos", 3),
            camrot=camrot,
            focal=_float_list(doc.get("focal"), f"{path}.focal", 2),
            princpt=_float_list(doc.get("princpt"), f"{path}.princpt", 2),
            image_size=image_size,
        )
    except ValueError as exc:
        raise SchemaViolation(f"{path}", str(exc)) from exc


# --- document <-> records ------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    check: str
    location: str
    message: str

    def __str__(self):
        return f"[{self.check}] {self.location}: {self.message}"


def _parse_document(doc: dict, collect: list[Violation] | None) -> list[AnnotationRecord]:
    """Assemble records; violations either raise (strict) or collect."""

    def fail(check: str, location: str, message: str):
        if collect is None:
            raise SchemaViolation(location, message)
        collect.append(Violation(check=check, location=location, message=message))

    if not isinstance(doc, dict):
        raise ParseError("$", "document root must be an object")
    _expect(doc, "$", {"format_version", "split", "images", "annotations", "cameras", "joints_world"})
    version = _get(doc, "$", "format_version", str)
    if version != FORMAT_VERSION:
        raise SchemaViolation("$.format_version", f"unsupported version {version!r}")
    split = _get(doc, "$", "split", str, required=False)
    if split is not None and split not in SPLIT_NAMES:
        fail("schema", "$.split", f"unknown split {split!r}")

    images = _get(doc, "$", "images", list)
    annotations = _get(doc, "$", "annotations", list)
    cameras_doc = _get(doc, "$", "cameras", dict)
    joints_doc = _get(doc, "$", "joints_world", dict)
    if len(images) != len(annotations):
        raise SchemaViolation("$.annotations", f"{len(annotations)} annotations for {len(images)} images")

    records = []
    ann_by_image = {}
    for i, ann in enumerate(annotations):
        path = f"$.annotations[{i}]"
        try:
            _expect(ann, path, {"id", "image_id", "subject_id", "camera_type", "bbox",
                                "hand_type", "hand_type_valid", "joint_valid"})
            ann_by_image[_get(ann, path, "image_id", int)] = (i, ann)
        except SchemaViolation as exc:
            fail("schema", exc.field, exc.reason)

    for i, img in enumerate(images):
        path = f"$.images[{i}]"
        try:
            records.append(_parse_record(img, path, ann_by_image, cameras_doc, joints_doc))
        except SchemaViolation as exc:
            check = "camera" if str(exc.field).startswith("$.cameras") else "schema"
            fail(check, exc.field, exc.reason)
            continue
        rec = records[-1]
        for msg in record_violations(rec):
            fail("record", path, msg)
            if collect is None:
                break
    return records


def _parse_record(img, path, ann_by_image, cameras_doc, joints_doc) -> AnnotationRecord:
    _expect(img, path, {"id", "file_name", "width", "height",
                        "capture_id", "frame_id", "camera_id"})
    image_id = _get(img, path, "id", int)
    capture = _get(img, path, "capture_id", str)
    frame = _get(img, path, "frame_id", str)
    camera = _get(img, path, "camera_id", str)
    width = _get(img, path, "width", int)
    height = _get(img, path, "height", int)
    if image_id not in ann_by_image:
        raise SchemaViolation(path, f"image id {image_id} has no annotation")
    ai, ann = ann_by_image[image_id]
    apath = f"$.annotations[{ai}]"

    try:
        cam_doc = cameras_doc[capture][camera]
    except (KeyError, TypeError):
        raise SchemaViolation(f"$.cameras.{capture}.{camera}", "missing camera parameters") from None
    cam = _parse_camera(cam_doc, f"$.cameras.{capture}.{camera}", (capture, camera),
                        (width, height))

    capture_joints = joints_doc.get(capture)
    frame_joints = capture_joints.get(frame) if isinstance(capture_joints, dict) else None
    if frame_joints is None:
        raise SchemaViolation(f"$.joints_world.{capture}.{frame}", "missing world joints")
    jpath = f"$.joints_world.{capture}.{frame}"
    if isinstance(frame_joints, dict):
        if camera not in frame_joints:
            raise SchemaViolation(f"{jpath}.{camera}", "missing per-camera world joints")
        joints = _joints_array(frame_joints[camera], f"{jpath}.{camera}")
    else:
        joints = _joints_array(frame_joints, jpath)

    joint_valid_raw = _get(ann, apath, "joint_valid", list)
    if len(joint_valid_raw) != NUM_JOINTS or not all(isinstance(v, bool) for v in joint_valid_raw):
        raise SchemaViolation(f"{apath}.joint_valid", f"expected {NUM_JOINTS} booleans")

    return AnnotationRecord(
        capture_id=capture,
        frame_id=frame,
        camera_id=camera,
        camera_type=_get(ann, apath, "camera_type", str),
        subject_id=_get(ann, apath, "subject_id", str),
        file_name=_get(img, path, "file_name", str),
        bbox=tuple(_float_list(_get(ann, apath, "bbox", list), f"{apath}.bbox", 4)),
        hand_type=_get(ann, apath, "hand_type", str),
        hand_type_valid=_get(ann, apath, "hand_type_valid", bool),
        joints_world=joints,
        joint_valid=joint_valid_raw,
        camera=cam,
    )


def _load_document(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc


def read_annotations(path) -> list[AnnotationRecord]:
    """Read and fully validate a split document. Raises on any violation."""
    return _parse_document(_load_document(path), collect=None)


def _records_to_document(records: list[AnnotationRecord], split: str | None) -> dict:
    for rec in records:
        problems = record_violations(rec)
        if problems:
            raise SchemaViolation(f"record {rec.key}", problems[0])
        if not np.all(np.isfinite(rec.joints_world)):
            raise SchemaViolation(f"record {rec.key}", "joints_world contains non-finite values")

    ordered = sorted(records, key=lambda r: r.key)
    seen = set()
    for rec in ordered:
        if rec.key in seen:
            raise SchemaViolation(f"record {rec.key}", "duplicate (capture, frame, camera) key")
        seen.add(rec.key)

    images, annotations = [], []
    cameras: dict = {}
    by_frame: dict = {}
    for idx, rec in enumerate(ordered):
        images.append({
            "id": idx,
            "file_name": rec.file_name,
            "width": rec.camera.image_size[0],
            "height": rec.camera.image_size[1],
            "capture_id": rec.capture_id,
            "frame_id": rec.frame_id,
            "camera_id": rec.camera_id,
        })
        annotations.append({
            "id": idx,
            "image_id": idx,
            "subject_id": rec.subject_id,
            "camera_type": rec.camera_type,
            "bbox": list(rec.bbox),
            "hand_type": rec.hand_type,
            "hand_type_valid": rec.hand_type_valid,
            "joint_valid": [bool(v) for v in rec.joint_valid],
        })
        cameras.setdefault(rec.capture_id, {})[rec.camera_id] = {
            "campos": rec.camera.campos.tolist(),
            "camrot": rec.camera.camrot.tolist(),
            "focal": list(rec.camera.focal),
            "princpt": list(rec.camera.princpt),
        }
        by_frame.setdefault((rec.capture_id, rec.frame_id), []).append(rec)

    joints_world: dict = {}
    for (capture, frame), recs in by_frame.items():
        first = recs[0].joints_world
        if all(np.array_equal(r.joints_world, first) for r in recs[1:]):
            entry = first.tolist()
        else:
            entry = {r.camera_id: r.joints_world.tolist() for r in recs}
        joints_world.setdefault(capture, {})[frame] = entry

    doc = {
        "format_version": FORMAT_VERSION,
        "images": images,
        "annotations": annotations,
        "cameras": cameras,
        "joints_world": joints_world,
    }
    if split is not None:
        if split not in SPLIT_NAMES:
            raise SchemaViolation("$.split", f"unknown split {split!r}")
        doc["split"] = split
    return doc


def write_annotations(records: list[AnnotationRecord], path, split: str | None = None) -> None:
    """Canonical write; holds an advisory lock file for the duration."""
    doc = _records_to_document(records, split)
    text = json.dumps(doc, sort_keys=True, indent=1, allow_nan=False)
    lock = f"{path}.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise IoError(f"{path} is locked by another writer ({lock} exists)") from exc
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    finally:
        os.close(fd)
        os.unlink(lock)


def records_equal(a: AnnotationRecord, b: AnnotationRecord, tol: float = 1e-9) -> bool:
    """Semantic equality within a numeric tolerance."""
    return (
        a.key == b.key
        and a.camera_type == b.camera_type
        and a.subject_id == b.subject_id
        and a.file_name == b.file_name
        and a.hand_type == b.hand_type
        and a.hand_type_valid == b.hand_type_valid
        and np.array_equal(a.joint_valid, b.joint_valid)
        and np.allclose(a.bbox, b.bbox, atol=tol, rtol=0)
        and np.allclose(a.joints_world, b.joints_world, atol=tol, rtol=0)
        and np.allclose(a.camera.campos, b.camera.campos, atol=tol, rtol=0)
        and np.allclose(a.camera.camrot, b.camera.camrot, atol=tol, rtol=0)
        and np.allclose(a.camera.focal, b.camera.focal, atol=tol, rtol=0)
        and np.allclose(a.camera.princpt, b.camera.princpt, atol=tol, rtol=0)
        and a.camera.image_size == b.camera.image_size
    )


# --- validation ----------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list[Violation]
    summary: dict

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_text(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.summary.items()]
        if self.violations:
            lines.append("")
            lines.append(f"{len(self.violations)} violation(s):")
            lines.extend(f"  {v}" for v in self.violations)
        else:
            lines.append("no violations")
        return "\n".join(lines) + "\n"


def _in_bounds(u: float, v: float, size) -> bool:
    w, h = size
    return -0.5 <= u <= w - 0.5 and -0.5 <= v <= h - 0.5


# chirality dead band: a perfectly flat hand has no handedness signal, and
# slight hyperextension must not trip the check
CHIRALITY_TOL = 0.05
_I1, _P1 = 7, 19  # within-hand indices of the index and pinky roots


def hand_chirality(block: np.ndarray, valid: np.ndarray) -> float | None:
    """Signed curl direction of one 21-joint block; None when undetermined.

    Positive for a right hand, negative for a left hand: fingers flex
    towards the palm, and the palm side of the root plane flips with
    handedness. Magnitude is the normalized fingertip displacement along
    the palm normal, so planar (fully extended) hands return ~0.
    """
    if not (valid[WRIST] and valid[_I1] and valid[_P1]):
        return None
    w = block[WRIST]
    palm = np.cross(block[_I1] - w, block[_P1] - w)
    norm = np.linalg.norm(palm)
    if norm < 1e-9:
        return None
    palm = palm / norm
    num = den = 0.0
    for f in range(1, 5):  # non-thumb fingers
        tip, root = 4 * f, 4 * f + 3
        if not (valid[tip] and valid[root]):
            continue
        d = block[tip] - block[root]
        num += float(d @ palm)
        den += float(np.linalg.norm(d))
    if den < 1e-9:
        return None
    return num / den


def _cross_checks(records: list[AnnotationRecord]) -> list[Violation]:
    out = []
    seen = {}
    for rec in records:
        if rec.key in seen:
            out.append(Violation("duplicate", str(rec.key), "duplicate (capture, frame, camera)"))
        seen[rec.key] = rec

        # hand blocks must match the declared hand type
        if rec.hand_type_valid:
            right_valid = rec.joint_valid[:JOINTS_PER_HAND]
            left_valid = rec.joint_valid[JOINTS_PER_HAND:]
            if rec.hand_type == "right":
                if not rec.joint_valid[RIGHT_WRIST]:
                    out.append(Violation("hand_block", str(rec.key), "hand_type=right but right wrist invalid"))
                if left_valid.any():
                    out.append(Violation("hand_block", str(rec.key), "hand_type=right but left-hand joints marked valid"))
            elif rec.hand_type == "left":
                if not rec.joint_valid[LEFT_WRIST]:
                    out.append(Violation("hand_block", str(rec.key), "hand_type=left but left wrist invalid"))
                if right_valid.any():
                    out.append(Violation("hand_block", str(rec.key), "hand_type=left but right-hand joints marked valid"))
            elif rec.hand_type == "interacting":
                if not (rec.joint_valid[RIGHT_WRIST] and rec.joint_valid[LEFT_WRIST]):
                    out.append(Violation("hand_block", str(rec.key), "interacting frame without both wrists valid"))

        # a right-hand block must curl like a right hand (and vice versa);
        # catches joints stored under the wrong hand's indices
        for hand, sl in (("right", slice(0, JOINTS_PER_HAND)),
                         ("left", slice(JOINTS_PER_HAND, NUM_JOINTS))):
            c = hand_chirality(rec.joints_world[sl], rec.joint_valid[sl])
            if c is None:
                continue
            if (hand == "right" and c < -CHIRALITY_TOL) or (hand == "left" and c > CHIRALITY_TOL):
                out.append(Violation("chirality", str(rec.key),
                                     f"{hand}-hand block curls like the opposite hand (score {c:.3f})"))

        # valid joints must sit in front of the camera and inside the image
        cam = rec.camera
        for j in np.nonzero(rec.joint_valid)[0]:
            name = JOINT_NAMES[j]
            p = rec.joints_world[j]
            if not np.all(np.isfinite(p)):
                out.append(Violation("joint_nan", str(rec.key), f"{name} non-finite"))
                continue
            pc = cam.camrot @ (p - cam.campos)
            if pc[2] <= 1e-6:
                out.append(Violation("behind_camera", str(rec.key), f"{name} behind camera"))
                continue
            u = cam.focal[0] * pc[0] / pc[2] + cam.princpt[0]
            v = cam.focal[1] * pc[1] / pc[2] + cam.princpt[1]
            if not _in_bounds(u, v, cam.image_size):
                out.append(Violation("out_of_bounds", str(rec.key),
                                     f"{name} reprojects to ({u:.1f}, {v:.1f}) outside the image"))

    # cameras of one frame must agree on the world joints
    frames: dict = {}
    for rec in records:
        frames.setdefault((rec.capture_id, rec.frame_id), []).append(rec)
    for (capture, frame), recs in frames.items():
        for i in range(len(recs)):
            for k in range(i + 1, len(recs)):
                both = recs[i].joint_valid & recs[k].joint_valid
                if not both.any():
                    continue
                diff = np.linalg.norm(
                    recs[i].joints_world[both] - recs[k].joints_world[both], axis=1).max()
                if diff > FRAME_CONSISTENCY_TOL_MM:
                    out.append(Violation(
                        "frame_consistency", f"({capture}, {frame})",
                        f"cameras {recs[i].camera_id} and {recs[k].camera_id} disagree by {diff:.3f} mm"))
    return out


def _summary(records: list[AnnotationRecord], split: str | None, n_violations: int) -> dict:
    hand_counts = {h: 0 for h in HAND_TYPES}
    for rec in records:
        if rec.hand_type in hand_counts:
            hand_counts[rec.hand_type] += 1
    n = len(records)
    return {
        "split": split,
        "records": n,
        "captures": len({r.capture_id for r in records}),
        "frames": len({(r.capture_id, r.frame_id) for r in records}),
        "cameras": len({(r.capture_id, r.camera_id) for r in records}),
        "hand_type_counts": hand_counts,
        "pct_interacting": (100.0 * hand_counts["interacting"] / n) if n else 0.0,
        "violations": n_violations,
    }


def validate_records(records: list[AnnotationRecord], split: str | None = None,
                     parse_violations: list[Violation] | None = None) -> ValidationReport:
    violations = list(parse_violations or [])
    for rec in records:
        for msg in record_violations(rec):
            violations.append(Violation("record", str(rec.key), msg))
    violations.extend(_cross_checks(records))
    return ValidationReport(violations=violations,
                            summary=_summary(records, split, len(violations)))


def validate_dataset(path) -> ValidationReport:
    """Lenient read plus per-record and cross-record consistency checks."""
    doc = _load_document(path)
    collected: list[Violation] = []
    records = _parse_document(doc, collect=collected)
    split = doc.get("split") if isinstance(doc, dict) else None
    # record-level violations were already collected during the lenient parse
    violations = list(collected)
    violations.extend(_cross_checks(records))
    return ValidationReport(violations=violations,
                            summary=_summary(records, split, len(violations)))


# --- split management ------------------------------------------------------------

@dataclass(frozen=True)
class SplitManifest:
    """Record keys of one split plus the duplicate-resolution marker."""

    name: str
    record_keys: tuple
    duplicate_rule: str = "prefer-human"

    def __post_init__(self):
        if self.name not in SPLIT_NAMES:
            raise ValueError(f"unknown split name {self.name!r}")
        object.__setattr__(self, "record_keys", tuple(tuple(k) for k in self.record_keys))


def merge_splits(human: list[AnnotationRecord], machine: list[AnnotationRecord]) -> list[AnnotationRecord]:
    """Union keyed by (capture, frame, camera); human wins collisions."""
    human_keys = {rec.key for rec in human}
    return list(human) + [rec for rec in machine if rec.key not in human_keys]


def union_manifest(human: SplitManifest, machine: SplitManifest, name: str = "Train(H+M)") -> SplitManifest:
    keys = list(human.record_keys)
    seen = set(keys)
    for k in machine.record_keys:
        if k not in seen:
            keys.append(k)
            seen.add(k)
    return SplitManifest(name=name, record_keys=tuple(keys))


# --- prediction files --------------------------------------------------------------

@dataclass(frozen=True)
class PredictionRecord:
    """One frame's estimate in the camera space of camera_id."""

    capture_id: str
    frame_id: str
    camera_id: str
    h_right: float
    h_left: float
    joints_right: np.ndarray | None
    joints_left: np.ndarray | None
    z_rel: float | None

    def __post_init__(self):
        for name in ("joints_right", "joints_left"):
            val = getattr(self, name)
            if val is not None:
                arr = np.asarray(val, dtype=np.float64).reshape(JOINTS_PER_HAND, 3)
                object.__setattr__(self, name, arr)
        for name, v in (("h_right", self.h_right), ("h_left", self.h_left)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")


def write_predictions(preds: list[PredictionRecord], path) -> None:
    ordered = sorted(preds, key=lambda p: (p.capture_id, p.frame_id, p.camera_id))
    doc = {
        "format_version": FORMAT_VERSION,
        "predictions": [
            {
                "capture_id": p.capture_id,
                "frame_id": p.frame_id,
                "camera_id": p.camera_id,
                "h_right": p.h_right,
                "h_left": p.h_left,
                "joints_right": None if p.joints_right is None else p.joints_right.tolist(),
                "joints_left": None if p.joints_left is None else p.joints_left.tolist(),
                "z_rel": p.z_rel,
            }
            for p in ordered
        ],
    }
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, sort_keys=True, indent=1, allow_nan=False)
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_predictions(path) -> list[PredictionRecord]:
    doc = _load_document(path)
    _expect(doc, "$", {"format_version", "predictions"})
    if _get(doc, "$", "format_version", str) != FORMAT_VERSION:
        raise SchemaViolation("$.format_version", "unsupported version")
    preds = []
    for i, p in enumerate(_get(doc, "$", "predictions", list)):
        path_i = f"$.predictions[{i}]"
        _expect(p, path_i, {"capture_id", "frame_id", "camera_id", "h_right", "h_left",
                            "joints_right", "joints_left", "z_rel"})
        joints = {}
        for side in ("joints_right", "joints_left"):
            raw = p.get(side)
            if raw is None:
                joints[side] = None
            else:
                arr = _joints_array_hand(raw, f"{path_i}.{side}")
                joints[side] = arr
        z_rel = p.get("z_rel")
        if z_rel is not None:
            z_rel = _get(p, path_i, "z_rel", float)
        try:
            preds.append(PredictionRecord(
                capture_id=_get(p, path_i, "capture_id", str),
                frame_id=_get(p, path_i, "frame_id", str),
                camera_id=_get(p, path_i, "camera_id", str),
                h_right=_get(p, path_i, "h_right", float),
                h_left=_get(p, path_i, "h_left", float),
                joints_right=joints["joints_right"],
                joints_left=joints["joints_left"],
                z_rel=z_rel,
            ))
        except ValueError as exc:
            raise SchemaViolation(path_i, str(exc)) from exc
    return preds


def _joints_array_hand(val, path: str) -> np.ndarray:
    if not isinstance(val, list) or len(val) != JOINTS_PER_HAND:
        raise SchemaViolation(path, f"expected {JOINTS_PER_HAND} joint rows")
    return np.array([_float_list(row, f"{path}[{i}]", 3) for i, row in enumerate(val)])
