"""42-keypoint hand schema, 2.5D -> 3D assembly, and derived pose math.

Joint layout (per hand, 21 joints): for each finger in order thumb, index,
middle, ring, pinky the four points run fingertip -> root (T4, T3, T2, T1,
I4, ..., P1), then the wrist rotation centre last. Right hand occupies
indices 0..20, left hand 21..41; flipping handedness pairs index j with
j + 21.

2.5D coordinates are (x crop px, y crop px, z root-relative mm); a hand's
metric pose lives in camera space (mm).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import DegeneratePose, InvalidRoot, MissingDepth

JOINTS_PER_HAND = 21
NUM_JOINTS = 42
WRIST = 20  # within-hand index of the wrist (root joint)

FINGERS = ("thumb", "index", "middle", "ring", "pinky")
FINGER_LETTERS = ("T", "I", "M", "R", "P")

# Per-hand index of finger f (0..4), level l (4=tip .. 1=root): 4*f + (4-l).
HAND_TAGS = ("right", "left")


def joint_index(hand: str, finger: int | None = None, level: int | None = None) -> int:
    """Index of a joint. finger/level=None addresses the wrist."""
    base = 0 if hand == "right" else JOINTS_PER_HAND
    if finger is None:
        return base + WRIST
    return base + 4 * finger + (4 - level)


def joint_name(index: int) -> str:
    hand = "r" if index < JOINTS_PER_HAND else "l"
    local = index % JOINTS_PER_HAND
    if local == WRIST:
        return f"{hand}_wrist"
    finger, level = divmod(local, 4)
    return f"{hand}_{FINGERS[finger]}{4 - level}"


JOINT_NAMES = tuple(joint_name(i) for i in range(NUM_JOINTS))
NAME_TO_INDEX = {n: i for i, n in enumerate(JOINT_NAMES)}


def flip_pair(index: int) -> int:
    """Right joint j <-> left joint j + 21 (a complete involution)."""
    return (index + JOINTS_PER_HAND) % NUM_JOINTS


def parent_index(index: int) -> int | None:
    """Kinematic parent within the same hand; the wrist has none."""
    local = index % JOINTS_PER_HAND
    base = index - local
    if local == WRIST:
        return None
    finger, level = divmod(local, 4)
    if level == 3:  # finger root attaches to the wrist
        return base + WRIST
    return base + local + 1


def joint_schema_table() -> list[dict]:
    """Machine-readable schema: name, index, flip pair, parent per joint."""
    rows = []
    for i in range(NUM_JOINTS):
        rows.append({
            "index": i,
            "name": JOINT_NAMES[i],
            "hand": "right" if i < JOINTS_PER_HAND else "left",
            "flip_pair": flip_pair(i),
            "parent": parent_index(i),
        })
    return rows


@dataclass(frozen=True)
class Handedness:
    """Independent presence probabilities for the right and left hand."""

    h_right: float
    h_left: float

    def __post_init__(self):
        for name, v in (("h_right", self.h_right), ("h_left", self.h_left)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")

    def present(self, hand: str) -> bool:
        """Presence gate; probability exactly 0.5 counts as present."""
        return (self.h_right if hand == "right" else self.h_left) >= 0.5


# absolute root depths come from an external monocular depth estimator,
# from the network's own relative-depth head, or from ground truth
DEPTH_PROVENANCE = ("external-estimator", "network-relative", "ground-truth")


@dataclass(frozen=True)
class RootDepths:
    """Absolute root depths and the right->left relative depth (mm).

    Each value carries a provenance tag; absent values are None.
    """

    z_right: float | None = None
    z_left: float | None = None
    z_rel: float | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, v in (("z_right", self.z_right), ("z_left", self.z_left),
                        ("z_rel", self.z_rel)):
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} = {v} not finite")
        for key, tag in self.provenance.items():
            if tag not in DEPTH_PROVENANCE:
                raise ValueError(f"unknown provenance tag {tag!r} for {key}")


@dataclass(frozen=True)
class Pose25D:
    """One hand's 2.5D pose: (x crop px, y crop px, z root-relative mm)."""

    joints: np.ndarray
    hand: str

    def __post_init__(self):
        j = np.asarray(self.joints, dtype=np.float64)
        if j.shape != (JOINTS_PER_HAND, 3):
            raise ValueError(f"expected ({JOINTS_PER_HAND}, 3), got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("2.5D pose contains non-finite values")
        if self.hand not in HAND_TAGS:
            raise ValueError(f"hand must be one of {HAND_TAGS}")
        object.__setattr__(self, "joints", j)
        self.joints.setflags(write=False)


@dataclass(frozen=True)
class Pose3D:
    """One hand's camera-space pose (mm) with per-joint validity."""

    joints: np.ndarray
    valid: np.ndarray
    hand: str

    def __post_init__(self):
        j = np.asarray(self.joints, dtype=np.float64)
        v = np.asarray(self.valid, dtype=bool)
        if j.shape != (JOINTS_PER_HAND, 3):
            raise ValueError(f"expected ({JOINTS_PER_HAND}, 3), got {j.shape}")
        if v.shape != (JOINTS_PER_HAND,):
            raise ValueError(f"validity mask must be ({JOINTS_PER_HAND},), got {v.shape}")
        if not np.all(np.isfinite(j[v])):
            raise ValueError("valid joints contain non-finite values")
        if self.hand not in HAND_TAGS:
            raise ValueError(f"hand must be one of {HAND_TAGS}")
        object.__setattr__(self, "joints", j)
        object.__setattr__(self, "valid", v)
        self.joints.setflags(write=False)
        self.valid.setflags(write=False)


def assemble_3d(p25_right: Pose25D, p25_left: Pose25D, h: Handedness,
                depths: RootDepths, crop: "geometry.CropTransform",
                cam) -> tuple[Pose3D | None, Pose3D | None]:
    """Lift 2.5D poses to camera-space 3D, gated by handedness.

    A hand with presence probability < 0.5 yields None. For present hands
    the crop transform is inverted on (x, y), the root absolute depth is
    added to the z column, and the result is back-projected through the
    camera intrinsics (`cam`: CameraView or NormalizedIntrinsics).

    Root depth per hand: right uses z_right; left uses z_left when the
    right hand is absent, otherwise z_right + z_rel.
    """
    inv = geometry.invert_transform(crop)
    out: list[Pose3D | None] = []
    for pose, hand in ((p25_right, "right"), (p25_left, "left")):
        if not h.present(hand):
            out.append(None)
            continue
        if hand == "right":
            if depths.z_right is None:
                raise MissingDepth("right hand present but z_right missing")
            z_root = depths.z_right
        else:
            if not h.present("right"):
                if depths.z_left is None:
                    raise MissingDepth("left hand present alone but z_left missing")
                z_root = depths.z_left
            else:
                if depths.z_right is None or depths.z_rel is None:
                    raise MissingDepth(
                        "both hands present but z_right/z_rel missing")
                z_root = depths.z_right + depths.z_rel
        full = np.empty((JOINTS_PER_HAND, 3))
        full[:, :2] = geometry.apply_transform(inv, pose.joints[:, :2])
        full[:, 2] = pose.joints[:, 2] + z_root
        cam_space = geometry.back_project(full, cam)
        out.append(Pose3D(joints=cam_space,
                          valid=np.ones(JOINTS_PER_HAND, dtype=bool), hand=hand))
    return out[0], out[1]


def flip_pose(joints, valid, h: Handedness, image_width: int):
    """Mirror a 42-joint frame across the image's vertical axis.

    joints: (42, K) with u in column 0; u -> image_width - 1 - u, the
    right/left blocks swap, and the handedness flags swap. Applying twice
    returns the original frame.
    """
    j = np.array(joints, dtype=np.float64)
    v = np.array(valid, dtype=bool)
    if j.shape[0] != NUM_JOINTS:
        raise ValueError(f"expected {NUM_JOINTS} joints, got {j.shape[0]}")
    j[:, 0] = (image_width - 1) - j[:, 0]
    perm = np.array([flip_pair(i) for i in range(NUM_JOINTS)])
    return j[perm], v[perm], Handedness(h_right=h.h_left, h_left=h.h_right)


def root_align(pose: Pose3D) -> Pose3D:
    """Subtract the wrist from every joint of the hand."""
    if not pose.valid[WRIST]:
        raise InvalidRoot(f"{pose.hand} wrist marked invalid")
    return Pose3D(joints=pose.joints - pose.joints[WRIST],
                  valid=pose.valid, hand=pose.hand)


# --- 20-DoF pose vector -----------------------------------------------------
#
# Two angles per finger root (pitch out of the palm plane, yaw within it),
# one bend angle per remaining articulation. The palm plane is the
# total-least-squares plane through the four non-thumb finger roots and the
# wrist. Conventions (the source material leaves them open):
#   * plane normal n oriented so that (I1 - wrist) x (P1 - wrist) . n > 0;
#   * root pitch = elevation of the root bone above the plane, signed by n,
#     in [-pi/2, pi/2];
#   * root yaw = in-plane angle of the root bone measured from the in-plane
#     wrist->root direction, positive towards n x a, in [-pi, pi];
#   * bends are unsigned interphalangeal flexion angles in [0, pi] (a signed
#     bend about the palm normal degenerates once the proximal segment
#     leaves the palm plane, so the magnitude is used).

DOF_VECTOR_ORDER = tuple(
    f"{letter}1_{kind}" for letter in FINGER_LETTERS for kind in ("pitch", "yaw")
) + tuple(
    f"{letter}{level}_bend" for letter in FINGER_LETTERS for level in (2, 3)
)

_PLANE_JOINTS = [joint_index("right", f, 1) % JOINTS_PER_HAND for f in range(1, 5)] + [WRIST]
_COLLINEAR_REL_TOL = 1e-9


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise DegeneratePose(f"zero-length {what}")
    return v / n


def palm_plane(joints: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(centroid, oriented unit normal) of the palm plane.

    Raises DegeneratePose when the five fit points are collinear.
    """
    pts = joints[_PLANE_JOINTS]
    centroid = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centroid)
    if s[1] <= max(s[0] * _COLLINEAR_REL_TOL, 1e-12):
        raise DegeneratePose("plane-fit joints are collinear")
    normal = vt[2]
    wrist = joints[WRIST]
    ref = np.cross(joints[joint_index("right", 1, 1) % JOINTS_PER_HAND] - wrist,
                   joints[joint_index("right", 4, 1) % JOINTS_PER_HAND] - wrist)
    if np.linalg.norm(ref) < 1e-9:
        ref = np.cross(joints[joint_index("right", 2, 1) % JOINTS_PER_HAND] - wrist,
                       joints[joint_index("right", 3, 1) % JOINTS_PER_HAND] - wrist)
    if np.linalg.norm(ref) < 1e-9:
        raise DegeneratePose("cannot orient palm normal")
    if np.dot(normal, ref) < 0:
        normal = -normal
    return centroid, normal


def compute_dof_vector(pose: Pose3D) -> np.ndarray:
    """20 articulation angles (radians) in DOF_VECTOR_ORDER.

    Requires all 21 joints valid. Invariant under rigid motion of the hand.
    """
    if not np.all(pose.valid):
        raise ValueError("all 21 joints must be valid for the DoF vector")
    joints = pose.joints
    _, n = palm_plane(joints)
    wrist = joints[WRIST]

    root_angles = []
    bend_angles = []
    for f in range(5):
        root = joints[4 * f + 3]
        j2 = joints[4 * f + 2]
        j3 = joints[4 * f + 1]
        tip = joints[4 * f + 0]

        a = root - wrist
        a_in = a - np.dot(a, n) * n
        a_hat = _unit(a_in, f"in-plane wrist->{FINGER_LETTERS[f]}1 direction")
        c_hat = np.cross(n, a_hat)

        b = j2 - root
        if np.linalg.norm(b) < 1e-12:
            raise DegeneratePose(f"zero-length {FINGER_LETTERS[f]}1 bone")
        b_n = np.dot(b, n)
        b_a = np.dot(b, a_hat)
        b_c = np.dot(b, c_hat)
        pitch = math.atan2(b_n, math.hypot(b_a, b_c))
        yaw = math.atan2(b_c, b_a)
        root_angles.extend([pitch, yaw])

        for u, v, label in ((j2 - root, j3 - j2, 2), (j3 - j2, tip - j3, 3)):
            uu = _unit(u, f"{FINGER_LETTERS[f]}{label} proximal segment")
            vv = _unit(v, f"{FINGER_LETTERS[f]}{label} distal segment")
            bend_angles.append(math.atan2(np.linalg.norm(np.cross(uu, vv)),
                                          float(np.dot(uu, vv))))

    return np.array(root_angles + bend_angles)
