"""Synthetic capture studio: camera rigs, hand skeletons, noisy detections.

Everything here is seeded and byte-reproducible: the same seed yields the
same rig, the same skeletons, the same detections and the same sweep
numbers regardless of thread count or evaluation order (per-trial seeds are
derived as seed XOR trial XOR view-count, per-joint seeds as seed XOR
joint id).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dataset_io
from .errors import InsufficientRig
from .geometry import CameraView
from .pose import JOINTS_PER_HAND, NUM_JOINTS, WRIST
from .triangulation import (
    Detection2DSet,
    Observation,
    RansacConfig,
    annotate_frame,
)

DEFAULT_IMAGE_SIZE = (4096, 2668)
DEFAULT_FOCAL = (4000.0, 4000.0)


@dataclass(frozen=True)
class RigSpec:
    """Spherical camera rig aimed at a common target."""

    n_cameras: int = 90
    radius_mm: float = 1000.0
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    jitter_mm: float = 0.0
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    focal: tuple[float, float] = DEFAULT_FOCAL

    def __post_init__(self):
        if self.n_cameras < 2:
            raise ValueError("a rig needs at least 2 cameras")
        if self.radius_mm <= 0:
            raise ValueError("radius_mm must be positive")


def _look_at(campos: np.ndarray, target: np.ndarray) -> np.ndarray:
    """World->camera rotation with +z pointing at the target, y down."""
    forward = target - campos
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(forward, up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(up, forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def generate_rig(spec: RigSpec, seed: int = 0) -> list[CameraView]:
    """Cameras on a (jittered) Fibonacci sphere, all aimed at the target.

    The target projects to each camera's principal point by construction.
    """
    rng = np.random.default_rng(seed)
    target = np.asarray(spec.target, dtype=np.float64)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    cams = []
    for k in range(spec.n_cameras):
        z = 1.0 - (2.0 * k + 1.0) / spec.n_cameras
        r = math.sqrt(max(0.0, 1.0 - z * z))
        phi = golden * k
        pos = target + spec.radius_mm * np.array([r * math.cos(phi), r * math.sin(phi), z])
        if spec.jitter_mm > 0:
            pos = pos + rng.normal(0.0, spec.jitter_mm, size=3)
        cams.append(CameraView(
            view_id=f"cam{k:03d}",
            campos=pos,
            camrot=_look_at(pos, target),
            focal=spec.focal,
            princpt=(spec.image_size[0] / 2.0, spec.image_size[1] / 2.0),
            image_size=spec.image_size,
        ))
    return cams


# --- hand skeleton generator ---------------------------------------------------
#
# Canonical right-hand proportions (mm at subject scale 1.0). Finger chains
# run root -> tip; roots sit in the palm plane fanned around the middle
# finger's axis. The straight-line wrist-to-middle-fingertip span is 184 mm,
# so the +-10% subject scaling keeps it within 165..203 mm.

_BONES = {
    # finger: (wrist->root, root->2, 2->3, 3->tip)
    "thumb": (35.0, 45.0, 35.0, 28.0),
    "index": (85.0, 42.0, 26.0, 20.0),
    "middle": (84.0, 48.0, 30.0, 22.0),
    "ring": (78.0, 44.0, 29.0, 21.0),
    "pinky": (72.0, 34.0, 22.0, 19.0),
}
_FAN_DEG = {"thumb": 75.0, "index": 18.0, "middle": 0.0, "ring": -18.0, "pinky": -38.0}
_FINGER_ORDER = ("thumb", "index", "middle", "ring", "pinky")


def _rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def _single_hand(rng: np.random.Generator, articulation: str, scale: float,
                 mirror: bool) -> np.ndarray:
    """(21, 3) joints around a wrist at the origin, palm normal +z."""
    normal = np.array([0.0, 0.0, 1.0])
    joints = np.zeros((JOINTS_PER_HAND, 3))
    for f, finger in enumerate(_FINGER_ORDER):
        root_dist, b1, b2, b3 = (scale * v for v in _BONES[finger])
        fan = math.radians(_FAN_DEG[finger])
        direction = np.array([math.cos(fan), math.sin(fan), 0.0])
        root = root_dist * direction

        if articulation == "random":
            # flexion is positive (towards the palm); slight hyperextension only
            yaw = math.radians(rng.uniform(-10.0, 10.0))
            pitch = math.radians(rng.uniform(-5.0, 80.0))
            bend2 = math.radians(rng.uniform(0.0, 95.0))
            bend3 = math.radians(rng.uniform(0.0, 80.0))
        else:
            yaw = pitch = bend2 = bend3 = 0.0

        d = _rotation_about(normal, yaw) @ direction
        lateral = np.cross(normal, d)
        d1 = _rotation_about(lateral, pitch) @ d
        d2 = _rotation_about(lateral, pitch + bend2) @ d
        d3 = _rotation_about(lateral, pitch + bend2 + bend3) @ d

        j2 = root + b1 * d1
        j3 = j2 + b2 * d2
        tip = j3 + b3 * d3
        # per-hand layout is fingertip-to-root: T4, T3, T2, T1, ...
        joints[4 * f + 0] = tip
        joints[4 * f + 1] = j3
        joints[4 * f + 2] = j2
        joints[4 * f + 3] = root
    joints[WRIST] = 0.0
    if mirror:
        joints = joints * np.array([-1.0, 1.0, 1.0])
    return joints


def generate_hand(seed: int, hand: str = "right", articulation: str = "neutral",
                  center=(0.0, 0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-space 42-joint skeleton plus validity mask.

    hand: "right" | "left" | "both". Neutral articulation is a flat
    extended hand (all bend angles zero); "random" draws per-finger curls
    within anatomical ranges. Deterministic per seed.
    """
    if hand not in ("right", "left", "both"):
        raise ValueError(f"hand must be right/left/both, got {hand!r}")
    if articulation not in ("neutral", "random"):
        raise ValueError(f"articulation must be neutral/random, got {articulation!r}")
    rng = np.random.default_rng(seed)
    scale = 1.0 + rng.uniform(-0.1, 0.1)
    center = np.asarray(center, dtype=np.float64)

    joints = np.zeros((NUM_JOINTS, 3))
    valid = np.zeros(NUM_JOINTS, dtype=bool)
    separation = rng.uniform(80.0, 250.0) if hand == "both" else 0.0

    if hand in ("right", "both"):
        offset = np.array([0.0, -separation / 2.0, 0.0])
        joints[:JOINTS_PER_HAND] = _single_hand(rng, articulation, scale, mirror=False) + center + offset
        valid[:JOINTS_PER_HAND] = True
    if hand in ("left", "both"):
        offset = np.array([0.0, +separation / 2.0, 0.0])
        joints[JOINTS_PER_HAND:] = _single_hand(rng, articulation, scale, mirror=True) + center + offset
        valid[JOINTS_PER_HAND:] = True
    return joints, valid


CANONICAL_VIEW_DIRECTIONS = {
    # unit direction from the target towards the camera, world frame
    "top": (0.0, 0.0, 1.0),
    "frontal": (0.0, -1.0, 0.0),
    "right": (1.0, 0.0, 0.0),
    "left": (-1.0, 0.0, 0.0),
}


def canonical_views(cams: list[CameraView], target=(0.0, 0.0, 0.0)) -> dict[str, str]:
    """Map the named canonical views onto the nearest rig cameras.

    The mapping convention: "top" is the camera most aligned with world +z
    seen from the target, "frontal" with -y, "right"/"left" with +/-x.
    """
    target = np.asarray(target, dtype=np.float64)
    dirs = np.stack([c.campos - target for c in cams])
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    out = {}
    for name, ref in CANONICAL_VIEW_DIRECTIONS.items():
        out[name] = cams[int(np.argmax(dirs @ np.asarray(ref)))].view_id
    return out


@dataclass(frozen=True)
class NoiseModel:
    """Detector error stand-in: pixel jitter, dropout, gross outliers."""

    pixel_sigma: float = 0.0
    dropout_rate: float = 0.0
    outlier_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be >= 0")
        # dropout 1.0 is allowed (drops everything); an outlier rate of 1.0
        # would leave no true signal to corrupt, so it stays half-open
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise ValueError(f"dropout_rate = {self.dropout_rate} outside [0, 1]")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise ValueError(f"outlier_rate = {self.outlier_rate} outside [0, 1)")


def simulate_detections(skeleton: np.ndarray, valid: np.ndarray,
                        cams: list[CameraView], noise: NoiseModel) -> list[Detection2DSet]:
    """Project every valid joint into every camera and corrupt per the model.

    Inlier detections carry confidence 1.0 and Gaussian pixel noise;
    outliers are uniform in-image pixels with uniform confidence; dropped
    (view, joint) pairs produce no observation. Deterministic per seed.
    """
    rng = np.random.default_rng(noise.seed)
    sets = []
    for j in range(NUM_JOINTS):
        obs = []
        if valid[j]:
            p = skeleton[j]
            for cam in cams:
                pc = cam.camrot @ (p - cam.campos)
                if pc[2] <= 1e-6:
                    continue
                if noise.dropout_rate > 0 and rng.random() < noise.dropout_rate:
                    continue
                w, h = cam.image_size
                if noise.outlier_rate > 0 and rng.random() < noise.outlier_rate:
                    obs.append(Observation(
                        view_id=cam.view_id,
                        u=rng.uniform(0.0, w - 1.0),
                        v=rng.uniform(0.0, h - 1.0),
                        confidence=rng.uniform(0.0, 1.0),
                    ))
                    continue
                u = cam.focal[0] * pc[0] / pc[2] + cam.princpt[0]
                v = cam.focal[1] * pc[1] / pc[2] + cam.princpt[1]
                if noise.pixel_sigma > 0:
                    du, dv = rng.normal(0.0, noise.pixel_sigma, size=2)
                    u, v = u + du, v + dv
                obs.append(Observation(view_id=cam.view_id, u=float(u), v=float(v)))
        sets.append(Detection2DSet(joint_id=j, observations=tuple(obs)))
    return sets


@dataclass(frozen=True)
class SweepEntry:
    views: int
    mean_error_mm: float
    std_error_mm: float
    trials: int


@dataclass(frozen=True)
class SweepResult:
    """Triangulation error statistics per view count, ascending."""

    entries: tuple[SweepEntry, ...]
    degenerate_std: bool = False  # trials < 2: std reported as 0

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        counts = [e.views for e in self.entries]
        if counts != sorted(counts):
            raise ValueError("entries must be sorted by view count")

    def to_dict(self) -> dict:
        return {
            "format_version": "1",
            "degenerate_std": self.degenerate_std,
            "entries": [
                {"views": e.views, "mean_error_mm": e.mean_error_mm,
                 "std_error_mm": e.std_error_mm, "trials": e.trials}
                for e in self.entries
            ],
        }

    def to_text(self) -> str:
        lines = [f"{'views':>6} {'mean_mm':>12} {'std_mm':>12} {'trials':>7}"]
        for e in self.entries:
            lines.append(f"{e.views:>6d} {e.mean_error_mm:>12.6f} {e.std_error_mm:>12.6f} {e.trials:>7d}")
        if self.degenerate_std:
            lines.append("warning: trials < 2, standard deviation reported as 0")
        return "\n".join(lines) + "\n"


def run_view_sweep(skeletons: list[tuple[np.ndarray, np.ndarray]],
                   rig: list[CameraView], noise: NoiseModel,
                   view_counts: list[int], trials: int = 100,
                   cfg: RansacConfig | None = None) -> SweepResult:
    """Triangulation error as a function of the number of views.

    For each view count v and trial, v cameras are drawn uniformly, fresh
    detections are simulated and every joint of every skeleton is RANSAC
    triangulated; the trial error is the mean 3D distance to ground truth
    over the joints that triangulated. Mean and standard deviation
    aggregate over trials.
    """
    if cfg is None:
        cfg = RansacConfig()
    counts = sorted(set(int(v) for v in view_counts))
    if max(counts) > len(rig):
        raise InsufficientRig(f"sweep wants {max(counts)} views, rig has {len(rig)}")
    if min(counts) < 2:
        raise ValueError("view counts must be >= 2")

    entries = []
    for v in counts:
        trial_means = []
        for t in range(trials):
            trial_seed = noise.seed ^ t ^ v
            rng = np.random.default_rng(trial_seed)
            chosen = [rig[i] for i in rng.choice(len(rig), size=v, replace=False)]
            errors = []
            for skeleton, valid in skeletons:
                dets = simulate_detections(
                    skeleton, valid, chosen,
                    NoiseModel(pixel_sigma=noise.pixel_sigma,
                               dropout_rate=noise.dropout_rate,
                               outlier_rate=noise.outlier_rate,
                               seed=trial_seed))
                results, ok = annotate_frame(dets, chosen, cfg.with_seed(trial_seed))
                for j in range(NUM_JOINTS):
                    if ok[j] and valid[j]:
                        errors.append(float(np.linalg.norm(
                            results[j].point_world - skeleton[j])))
            trial_means.append(float(np.mean(errors)) if errors else math.nan)
        arr = np.array(trial_means)
        entries.append(SweepEntry(
            views=v,
            mean_error_mm=float(np.nanmean(arr)),
            std_error_mm=float(np.nanstd(arr, ddof=1)) if trials >= 2 else 0.0,
            trials=trials,
        ))
    return SweepResult(entries=tuple(entries), degenerate_std=trials < 2)


# --- synthetic datasets -----------------------------------------------------------

def make_dataset(n_frames: int, seed: int = 0, n_cameras: int = 8,
                 image_size: tuple[int, int] = (512, 334),
                 focal: tuple[float, float] = (500.0, 500.0),
                 radius_mm: float = 1200.0,
                 split: str | None = None) -> list[dataset_io.AnnotationRecord]:
    """Consistent multi-camera dataset of synthetic hand frames.

    Frames cycle hand types right -> left -> interacting; bounding boxes
    come from the projected joints plus a margin. The scene scale keeps all
    joints in front of every camera and inside every image, so the result
    validates cleanly.
    """
    spec = RigSpec(n_cameras=n_cameras, radius_mm=radius_mm,
                   image_size=image_size, focal=focal)
    cams = generate_rig(spec, seed=seed)
    hand_cycle = ("right", "left", "interacting")
    records = []
    margin = max(4.0, image_size[0] * 0.02)
    for i in range(n_frames):
        hand_type = hand_cycle[i % 3]
        gen_hand = {"right": "right", "left": "left", "interacting": "both"}[hand_type]
        joints, valid = generate_hand(seed ^ (i + 1), hand=gen_hand,
                                      articulation="random")
        frame_id = f"f{i:04d}"
        for cam in cams:
            pc = (joints[valid] - cam.campos) @ cam.camrot.T
            uv = np.stack([
                cam.focal[0] * pc[:, 0] / pc[:, 2] + cam.princpt[0],
                cam.focal[1] * pc[:, 1] / pc[:, 2] + cam.princpt[1],
            ], axis=1)
            lo = uv.min(axis=0) - margin
            hi = uv.max(axis=0) + margin
            records.append(dataset_io.AnnotationRecord(
                capture_id="cap00",
                frame_id=frame_id,
                camera_id=cam.view_id,
                camera_type="color",
                subject_id=f"s{seed % 100:02d}",
                file_name=f"images/{cam.view_id}/{frame_id}.png",
                bbox=(float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1])),
                hand_type=hand_type,
                hand_type_valid=True,
                joints_world=joints,
                joint_valid=valid,
                camera=cam,
            ))
    return records
