"""Volumetric keypoint likelihood maps and their decoders.

A HeatmapVolume stores per-joint likelihood over a D x H x W voxel grid,
indexed values[j, z, y, x] (joint, depth bin, row, column). Voxel-space
coordinates are continuous; an integer coordinate sits exactly on a voxel
centre. The x/y axes live in crop-image space (CROP_PX_PER_BIN pixels per
bin), the z axis in root-relative metric depth.

The stacked-plane layout (J*D, H, W) used by 2D conv stacks and the
4D volume (J, D, H, W) are two views of the same buffer; conversion is a
pure reshape and therefore lossless.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMass, NonPositiveSigma

DEFAULT_DIMS = (21, 64, 64, 64)   # J, D, H, W
DEFAULT_SIGMA_BINS = 2.5
DEFAULT_CROP_SIZE = (256, 256)
CROP_PX_PER_BIN = 4.0             # 256 px crop over 64 spatial bins
# Root-relative depth span of the volume's z axis (a hand's depth extent).
DEFAULT_VOLUME_Z_RANGE_MM = (-200.0, 200.0)
# Span of the 64-bin 1D heatmap for the right-root -> left-root depth gap;
# wider than the volume range because the two roots can be far apart.
DEFAULT_REL_DEPTH_RANGE_MM = (-400.0, 400.0)
REL_DEPTH_BINS = 64

MASS_EPS = 1e-12


@dataclass(frozen=True)
class HeatmapVolume:
    """Per-joint non-negative likelihood volume, values[j, z, y, x]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise ValueError(f"volume must be (J, D, H, W), got shape {v.shape}")
        if np.any(v < 0):
            raise ValueError("volume values must be non-negative")
        object.__setattr__(self, "values", v)
        self.values.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.values.shape


@dataclass(frozen=True)
class RelDepthHeatmap:
    """64-bin 1D heatmap of the right-root -> left-root depth gap."""

    bins: np.ndarray
    range_mm: tuple[float, float] = DEFAULT_REL_DEPTH_RANGE_MM

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=np.float64).reshape(-1)
        if b.shape[0] != REL_DEPTH_BINS:
            raise ValueError(f"expected {REL_DEPTH_BINS} bins, got {b.shape[0]}")
        if not np.all(b >= 0):
            raise ValueError("bins must be non-negative")
        zmin, zmax = float(self.range_mm[0]), float(self.range_mm[1])
        if not zmin < zmax:
            raise ValueError(f"range_mm must be increasing, got ({zmin}, {zmax})")
        object.__setattr__(self, "bins", b)
        object.__setattr__(self, "range_mm", (zmin, zmax))
        self.bins.setflags(write=False)


@dataclass(frozen=True)
class VolumeGeometry:
    """Linear maps between crop-space 2.5D coordinates and voxel space.

    x_bin = x_crop_px / px_per_bin (same for y); an integer bin coordinate
    is that bin's centre. z_bin places metric depth z_mm on bin centres:
    bin k's centre corresponds to z_min + (k + 0.5) * span / D.
    """

    crop_size: tuple[int, int] = DEFAULT_CROP_SIZE
    dims: tuple[int, int, int, int] = DEFAULT_DIMS
    z_range_mm: tuple[float, float] = DEFAULT_VOLUME_Z_RANGE_MM

    @property
    def px_per_bin(self) -> tuple[float, float]:
        _, _, h, w = self.dims
        return (self.crop_size[0] / w, self.crop_size[1] / h)

    def pose25d_to_voxel(self, pose25d) -> np.ndarray:
        """(x crop px, y crop px, z root-relative mm) -> (x, y, z) bins."""
        p = np.asarray(pose25d, dtype=np.float64)
        zmin, zmax = self.z_range_mm
        d = self.dims[1]
        out = np.empty_like(p)
        out[..., 0] = p[..., 0] / self.px_per_bin[0]
        out[..., 1] = p[..., 1] / self.px_per_bin[1]
        out[..., 2] = (p[..., 2] - zmin) / (zmax - zmin) * d - 0.5
        return out

    def voxel_to_pose25d(self, voxel) -> np.ndarray:
        v = np.asarray(voxel, dtype=np.float64)
        zmin, zmax = self.z_range_mm
        d = self.dims[1]
        out = np.empty_like(v)
        out[..., 0] = v[..., 0] * self.px_per_bin[0]
        out[..., 1] = v[..., 1] * self.px_per_bin[1]
        out[..., 2] = zmin + (v[..., 2] + 0.5) * (zmax - zmin) / d
        return out


def render_gaussian(joints, sigma: float = DEFAULT_SIGMA_BINS,
                    dims: tuple[int, int, int, int] = DEFAULT_DIMS) -> HeatmapVolume:
    """Render per-joint Gaussian blobs at continuous voxel coordinates.

    joints: (J, 3) of (x, y, z) bins. Each voxel (z, y, x) of joint j holds
    exp(-((x - x_j)^2 + (y - y_j)^2 + (z - z_j)^2) / (2 sigma^2)); centres
    are not clamped, so out-of-volume joints just leave a faint tail.
    """
    if sigma <= 0:
        raise NonPositiveSigma(f"sigma = {sigma}")
    pts = np.asarray(joints, dtype=np.float64).reshape(-1, 3)
    j, d, h, w = dims
    if pts.shape[0] != j:
        raise ValueError(f"expected {j} joints, got {pts.shape[0]}")
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    zs = np.arange(d, dtype=np.float64)
    inv = 1.0 / (2.0 * sigma * sigma)
    out = np.empty((j, d, h, w))
    for k in range(j):
        # separable: exp splits into a per-axis outer product
        ex = np.exp(-((xs - pts[k, 0]) ** 2) * inv)
        ey = np.exp(-((ys - pts[k, 1]) ** 2) * inv)
        ez = np.exp(-((zs - pts[k, 2]) ** 2) * inv)
        out[k] = ez[:, None, None] * ey[None, :, None] * ex[None, None, :]
    return HeatmapVolume(values=out)


def decode_hard_argmax(volume: HeatmapVolume) -> np.ndarray:
    """Integer (x, y, z) of the maximum voxel per joint.

    Ties resolve to the lowest linear index in (z, y, x) raster order.
    """
    j, d, h, w = volume.dims
    flat = volume.values.reshape(j, -1)
    idx = np.argmax(flat, axis=1)
    z, rem = np.divmod(idx, h * w)
    y, x = np.divmod(rem, w)
    return np.stack([x, y, z], axis=1).astype(np.float64)


def decode_soft_argmax_3d(volume: HeatmapVolume, mode: str = "normalized") -> np.ndarray:
    """Expected (x, y, z) voxel coordinate per joint.

    mode="normalized": treat the (non-negative) volume as an unnormalized
    density; raises DegenerateMass when a joint's total mass <= 1e-12.
    mode="softmax": softmax the values first (for raw network logits).
    The mode is explicit on purpose; nothing switches silently.
    """
    j, d, h, w = volume.dims
    vals = volume.values.reshape(j, -1)
    if mode == "normalized":
        mass = vals.sum(axis=1)
        if np.any(mass <= MASS_EPS):
            bad = int(np.argmin(mass))
            raise DegenerateMass(f"joint {bad} total mass {mass[bad]:.3e}")
        p = vals / mass[:, None]
    elif mode == "softmax":
        shifted = vals - vals.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown soft-argmax mode {mode!r}")
    p = p.reshape(j, d, h, w)
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    zs = np.arange(d, dtype=np.float64)
    x = np.einsum("jzyx,x->j", p, xs)
    y = np.einsum("jzyx,y->j", p, ys)
    z = np.einsum("jzyx,z->j", p, zs)
    return np.stack([x, y, z], axis=1)


def encode_rel_depth(z_rel_mm: float,
                     range_mm: tuple[float, float] = DEFAULT_REL_DEPTH_RANGE_MM,
                     sigma_bins: float = DEFAULT_SIGMA_BINS,
                     peak: float = 60.0) -> RelDepthHeatmap:
    """Logit-scale Gaussian bins whose softmax decode lands near z_rel_mm.

    decode_rel_depth softmaxes its input, so the blob is scaled by `peak`
    to keep the softmax sharp; the decode error is then bounded by roughly
    one bin width.
    """
    if sigma_bins <= 0:
        raise NonPositiveSigma(f"sigma = {sigma_bins}")
    zmin, zmax = range_mm
    center = (z_rel_mm - zmin) / (zmax - zmin) * REL_DEPTH_BINS - 0.5
    k = np.arange(REL_DEPTH_BINS, dtype=np.float64)
    bins = peak * np.exp(-((k - center) ** 2) / (2.0 * sigma_bins ** 2))
    return RelDepthHeatmap(bins=bins, range_mm=range_mm)


def decode_rel_depth(hm: RelDepthHeatmap) -> float:
    """Softmax over the 64 bins, then expectation of bin-centre depths."""
    zmin, zmax = hm.range_mm
    shifted = hm.bins - hm.bins.max()
    e = np.exp(shifted)
    p = e / e.sum()
    centers = zmin + (zmax - zmin) * (np.arange(REL_DEPTH_BINS) + 0.5) / REL_DEPTH_BINS
    return float(np.dot(p, centers))


def to_stacked_planes(volume: HeatmapVolume) -> np.ndarray:
    """(J, D, H, W) -> (J*D, H, W), joint-major then depth."""
    j, d, h, w = volume.dims
    return volume.values.reshape(j * d, h, w)


def from_stacked_planes(planes, joints: int) -> HeatmapVolume:
    """(J*D, H, W) -> (J, D, H, W). Exact inverse of to_stacked_planes."""
    p = np.asarray(planes, dtype=np.float64)
    if p.ndim != 3 or p.shape[0] % joints != 0:
        raise ValueError(f"cannot split {p.shape} into {joints} joints")
    d = p.shape[0] // joints
    return HeatmapVolume(values=p.reshape(joints, d, p.shape[1], p.shape[2]))


# Binary volume dump, used by golden tests and for shipping fixtures:
# header of four little-endian uint32 (J, D, H, W), then float32 values in
# raster order z, y, x within each joint.

_HEADER = struct.Struct("<4I")


def write_volume(volume: HeatmapVolume, path) -> None:
    j, d, h, w = volume.dims
    with open(path, "wb") as f:
        f.write(_HEADER.pack(j, d, h, w))
        f.write(volume.values.astype("<f4").tobytes(order="C"))


def read_volume(path) -> HeatmapVolume:
    with open(path, "rb") as f:
        j, d, h, w = _HEADER.unpack(f.read(_HEADER.size))
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != j * d * h * w:
        raise ValueError(f"volume payload has {data.size} floats, header says {j*d*h*w}")
    return HeatmapVolume(values=data.reshape(j, d, h, w).astype(np.float64))
