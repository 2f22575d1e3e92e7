"""Pinhole camera model and crop/resize affine transforms.

Coordinate conventions used throughout the toolkit:

World frame:
  - Millimetres, right-handed. A camera is placed at `campos` (world mm) and
    `camrot` maps world axes to camera axes:  X_cam = camrot @ (X_world - campos).

Camera frame (standard computer vision):
  - Origin at the optical centre, X right, Y down, Z forward along the
    optical axis. Points with z_cam <= 0 are behind the camera.

Image frame:
  - Pixels, continuous coordinates, origin at the centre of the top-left
    pixel. u grows right, v grows down.
    u = fx * x_cam / z_cam + cx,  v = fy * y_cam / z_cam + cy.

No lens distortion is modelled anywhere; parsers reject distortion fields
rather than ignore them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateBBox,
    NonPositiveDepth,
    PointBehindCamera,
    SingularTransform,
)

ROTATION_TOL = 1e-9

# Focal length assumed when no calibration is available (back-projection of
# network output for images of unknown origin). Principal point defaults to
# the image centre.
DEFAULT_FOCAL_PX = 1500.0


def _as_rotation(mat) -> np.ndarray:
    """Validate a world->camera rotation: orthonormal, det +1."""
    r = np.asarray(mat, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"camrot must be 3x3, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("camrot contains non-finite values")
    err = np.abs(r @ r.T - np.eye(3)).max()
    if err > ROTATION_TOL:
        raise ValueError(f"camrot not orthonormal (max |R R^T - I| = {err:.3e})")
    det = np.linalg.det(r)
    if abs(det - 1.0) > ROTATION_TOL:
        raise ValueError(f"camrot determinant {det:.12f} != +1 (reflection?)")
    return r


@dataclass(frozen=True)
class CameraView:
    """One calibrated camera of the rig.

    campos: world-space camera centre (mm).
    camrot: 3x3 rotation, world axes -> camera axes.
    focal:  (fx, fy) pixels.   princpt: (cx, cy) pixels.
    image_size: (width, height) pixels.
    """

    view_id: str
    campos: np.ndarray
    camrot: np.ndarray
    focal: tuple[float, float]
    princpt: tuple[float, float]
    image_size: tuple[int, int]

    def __post_init__(self):
        campos = np.asarray(self.campos, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(campos)):
            raise ValueError("campos contains non-finite values")
        object.__setattr__(self, "campos", campos)
        object.__setattr__(self, "camrot", _as_rotation(self.camrot))
        fx, fy = float(self.focal[0]), float(self.focal[1])
        if fx <= 0 or fy <= 0:
            raise ValueError(f"focal lengths must be positive, got ({fx}, {fy})")
        object.__setattr__(self, "focal", (fx, fy))
        cx, cy = float(self.princpt[0]), float(self.princpt[1])
        object.__setattr__(self, "princpt", (cx, cy))
        w, h = int(self.image_size[0]), int(self.image_size[1])
        if w <= 0 or h <= 0:
            raise ValueError(f"image_size must be positive, got ({w}, {h})")
        object.__setattr__(self, "image_size", (w, h))
        # make in-place mutation of the arrays fail loudly
        self.campos.setflags(write=False)
        self.camrot.setflags(write=False)

    def world_to_camera(self, points_world) -> np.ndarray:
        """World mm -> camera-frame mm. Accepts (3,) or (N, 3)."""
        p = np.asarray(points_world, dtype=np.float64)
        return (p - self.campos) @ self.camrot.T

    def camera_to_world(self, points_cam) -> np.ndarray:
        p = np.asarray(points_cam, dtype=np.float64)
        return p @ self.camrot + self.campos

    def projection_matrix(self) -> np.ndarray:
        """3x4 matrix P with  lambda * (u, v, 1)^T = P @ (X_world, 1)^T."""
        fx, fy = self.focal
        cx, cy = self.princpt
        K = np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
        Rt = np.hstack([self.camrot, (-self.camrot @ self.campos)[:, None]])
        return K @ Rt


@dataclass(frozen=True)
class NormalizedIntrinsics:
    """Fallback intrinsics when no calibration is available.

    fx = fy = DEFAULT_FOCAL_PX, principal point at the image centre.
    """

    image_size: tuple[int, int]
    focal_px: float = DEFAULT_FOCAL_PX

    @property
    def focal(self) -> tuple[float, float]:
        return (self.focal_px, self.focal_px)

    @property
    def princpt(self) -> tuple[float, float]:
        w, h = self.image_size
        return (w / 2.0, h / 2.0)


def intrinsics_of(cam) -> tuple[tuple[float, float], tuple[float, float]]:
    """(focal, princpt) of a CameraView or NormalizedIntrinsics."""
    return cam.focal, cam.princpt


def project_camera_space(points_cam, cam) -> np.ndarray:
    """Camera-frame mm -> pixel coordinates. Accepts (3,) or (N, 3).

    Raises PointBehindCamera if any depth <= 1e-6 mm.
    """
    p = np.asarray(points_cam, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 2]
    if np.any(z <= 1e-6):
        raise PointBehindCamera(f"depth {z.min():.6g} mm <= 1e-6 mm")
    (fx, fy), (cx, cy) = intrinsics_of(cam)
    uv = np.empty((p.shape[0], 2))
    uv[:, 0] = fx * p[:, 0] / z + cx
    uv[:, 1] = fy * p[:, 1] / z + cy
    return uv[0] if single else uv


def project(point_world, cam: CameraView) -> tuple[float, float]:
    """Project one world-space point (mm) into the camera. Returns (u, v) px."""
    uv = project_camera_space(cam.world_to_camera(point_world), cam)
    return (float(uv[0]), float(uv[1]))


def back_project(pose_full, cam) -> np.ndarray:
    """(u, v, z) per joint -> camera-space (x, y, z) mm.

    pose_full: (..., 3) array of full-image pixel coordinates plus absolute
    depth z in mm. `cam` is a CameraView or NormalizedIntrinsics; only the
    intrinsics are used, so the result lives in that camera's frame.

    Raises NonPositiveDepth if any z <= 0.
    """
    p = np.asarray(pose_full, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 2]
    if np.any(z <= 0):
        raise NonPositiveDepth(f"depth {z.min():.6g} mm <= 0")
    (fx, fy), (cx, cy) = intrinsics_of(cam)
    out = np.empty_like(p)
    out[:, 0] = (p[:, 0] - cx) * z / fx
    out[:, 1] = (p[:, 1] - cy) * z / fy
    out[:, 2] = z
    return out[0] if single else out


@dataclass(frozen=True)
class AugmentParams:
    """Training-time augmentation of the crop.

    translation_frac shifts the crop centre by that fraction of the bbox
    size per axis, scale_frac grows/shrinks the sampled box, rotation_deg
    rotates the sampled box about its centre, hflip mirrors the crop's
    u-axis (u -> W_c - 1 - u; joint/handedness relabeling is the caller's
    job, see pose.flip_pose). color_jitter_frac is recorded for the image
    pipeline but has no geometric effect.
    """

    translation_frac: tuple[float, float] = (0.0, 0.0)
    scale_frac: float = 0.0
    rotation_deg: float = 0.0
    hflip: bool = False
    color_jitter_frac: float = 0.0

    TRANSLATION_RANGE = 0.15
    SCALE_RANGE = 0.25
    ROTATION_RANGE = 90.0
    COLOR_RANGE = 0.2

    def __post_init__(self):
        tx, ty = self.translation_frac
        for name, val, lim in [
            ("translation_frac[0]", tx, self.TRANSLATION_RANGE),
            ("translation_frac[1]", ty, self.TRANSLATION_RANGE),
            ("scale_frac", self.scale_frac, self.SCALE_RANGE),
            ("rotation_deg", self.rotation_deg, self.ROTATION_RANGE),
            ("color_jitter_frac", self.color_jitter_frac, self.COLOR_RANGE),
        ]:
            if not -lim <= val <= lim:
                raise ValueError(f"{name} = {val} outside [-{lim}, {lim}]")

    @staticmethod
    def sample(rng: np.random.Generator) -> "AugmentParams":
        """Draw uniform augmentation parameters within the allowed ranges."""
        return AugmentParams(
            translation_frac=(
                rng.uniform(-AugmentParams.TRANSLATION_RANGE, AugmentParams.TRANSLATION_RANGE),
                rng.uniform(-AugmentParams.TRANSLATION_RANGE, AugmentParams.TRANSLATION_RANGE),
            ),
            scale_frac=rng.uniform(-AugmentParams.SCALE_RANGE, AugmentParams.SCALE_RANGE),
            rotation_deg=rng.uniform(-AugmentParams.ROTATION_RANGE, AugmentParams.ROTATION_RANGE),
            hflip=bool(rng.integers(0, 2)),
            color_jitter_frac=rng.uniform(-AugmentParams.COLOR_RANGE, AugmentParams.COLOR_RANGE),
        )


@dataclass(frozen=True)
class CropTransform:
    """2x3 affine mapping full-image pixels -> crop pixels."""

    matrix: np.ndarray
    crop_size: tuple[int, int]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"crop matrix must be 2x3, got {m.shape}")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) <= 1e-12:
            raise SingularTransform(f"linear part determinant {det:.3e}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "crop_size", (int(self.crop_size[0]), int(self.crop_size[1])))
        self.matrix.setflags(write=False)


def make_crop_transform(bbox, crop_size, aug: AugmentParams | None = None) -> CropTransform:
    """Affine taking the (augmented) bbox in the full image onto the crop.

    Without augmentation the bbox corners map exactly onto the crop corners.
    With augmentation the sampled box is first translated by
    translation_frac * (w, h), scaled by (1 + scale_frac) and rotated by
    rotation_deg about its centre; that rotated box then fills the crop.
    hflip mirrors the result across the crop's vertical midline.
    """
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise DegenerateBBox(f"bbox size ({w}, {h})")
    wc, hc = int(crop_size[0]), int(crop_size[1])

    if aug is None:
        aug = AugmentParams()

    cx = x + w / 2.0 + aug.translation_frac[0] * w
    cy = y + h / 2.0 + aug.translation_frac[1] * h
    sw = w * (1.0 + aug.scale_frac)
    sh = h * (1.0 + aug.scale_frac)

    theta = math.radians(aug.rotation_deg)
    ct, st = math.cos(theta), math.sin(theta)
    # p_crop = S @ R^T @ (p - c) + crop_centre, with the sampled box rotated
    # by +theta in the image (y-down) frame.
    rot_t = np.array([[ct, st], [-st, ct]])
    scale = np.array([[wc / sw, 0.0], [0.0, hc / sh]])
    lin = scale @ rot_t
    offset = np.array([wc / 2.0, hc / 2.0]) - lin @ np.array([cx, cy])

    if aug.hflip:
        # u' = (wc - 1) - u, consistent with pose.flip_pose
        lin = np.array([[-1.0, 0.0], [0.0, 1.0]]) @ lin
        offset = np.array([wc - 1.0 - offset[0], offset[1]])

    matrix = np.hstack([lin, offset[:, None]])
    return CropTransform(matrix=matrix, crop_size=(wc, hc))


def apply_transform(t: CropTransform, pts) -> np.ndarray:
    """Apply the affine to (u, v) points. Accepts (2,) or (N, 2)."""
    p = np.asarray(pts, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    out = p @ t.matrix[:, :2].T + t.matrix[:, 2]
    return out[0] if single else out


def invert_transform(t: CropTransform) -> CropTransform:
    """Inverse affine (crop pixels -> full-image pixels)."""
    lin = t.matrix[:, :2]
    det = lin[0, 0] * lin[1, 1] - lin[0, 1] * lin[1, 0]
    if abs(det) <= 1e-12:
        raise SingularTransform(f"linear part determinant {det:.3e}")
    inv_lin = np.array([[lin[1, 1], -lin[0, 1]], [-lin[1, 0], lin[0, 0]]]) / det
    inv_off = -inv_lin @ t.matrix[:, 2]
    return CropTransform(matrix=np.hstack([inv_lin, inv_off[:, None]]), crop_size=t.crop_size)
