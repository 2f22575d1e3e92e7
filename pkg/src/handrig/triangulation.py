"""Multi-view 3D point recovery.

Linear DLT triangulation from >= 2 calibrated views, optional Gauss-Newton
refinement of the reprojection error, RANSAC over 2-view hypotheses for
outlier-contaminated detections, and reprojection of a world point into
every camera of a rig. All functions are pure; RANSAC randomness comes only
from the seed in its config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateRays, InsufficientViews, NoConsensus
from .geometry import CameraView
from .pose import NUM_JOINTS

MIN_RAY_ANGLE_DEG = 0.5
REFERENCE_IMAGE_WIDTH = 4096  # width at which inlier_threshold_px is quoted
GN_MAX_ITERATIONS = 10
GN_REL_STEP_TOL = 1e-8


@dataclass(frozen=True)
class Observation:
    """One 2D keypoint detection in one view."""

    view_id: str
    u: float
    v: float
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Detection2DSet:
    """All 2D observations of one joint across the rig."""

    joint_id: int
    observations: tuple[Observation, ...]

    def __post_init__(self):
        obs = tuple(self.observations)
        ids = [o.view_id for o in obs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate view_id within one detection set")
        object.__setattr__(self, "observations", obs)

    def view_ids(self) -> list[str]:
        return [o.view_id for o in self.observations]


@dataclass(frozen=True)
class TriangulationResult:
    """Triangulated point with reprojection diagnostics.

    per_view_residual aligns with observation_view_ids and covers every
    input view (outliers included) so callers can display disagreement;
    rms_reprojection_error aggregates inlier views only.
    """

    point_world: np.ndarray
    inlier_view_ids: tuple[str, ...]
    rms_reprojection_error: float
    observation_view_ids: tuple[str, ...]
    per_view_residual: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.point_world, dtype=np.float64).reshape(3)
        object.__setattr__(self, "point_world", p)
        object.__setattr__(self, "inlier_view_ids", tuple(self.inlier_view_ids))
        object.__setattr__(self, "observation_view_ids", tuple(self.observation_view_ids))
        object.__setattr__(self, "per_view_residual", tuple(float(r) for r in self.per_view_residual))
        if self.rms_reprojection_error < 0:
            raise ValueError("rms_reprojection_error must be >= 0")
        if len(self.inlier_view_ids) < 2:
            raise ValueError("a triangulation needs at least 2 inlier views")
        if not set(self.inlier_view_ids) <= set(self.observation_view_ids):
            raise ValueError("inlier views must be a subset of the observations")
        self.point_world.setflags(write=False)


@dataclass(frozen=True)
class RansacConfig:
    """Robust triangulation parameters.

    inlier_threshold_px is quoted at a 4096-wide image and scales
    proportionally with each camera's width (threshold_for). Defaults are
    tuned to detector jitter at full capture resolution.
    """

    inlier_threshold_px: float = 10.0
    confidence: float = 0.999
    max_iterations: int = 500
    min_confidence_2d: float = 0.1
    refine: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.inlier_threshold_px <= 0:
            raise ValueError("inlier_threshold_px must be > 0")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def threshold_for(self, cam: CameraView) -> float:
        return self.inlier_threshold_px * cam.image_size[0] / REFERENCE_IMAGE_WIDTH

    def with_seed(self, seed: int) -> "RansacConfig":
        return replace(self, seed=seed)


class _ViewBlock:
    """Stacked camera/observation arrays for vectorized math."""

    def __init__(self, obs_list: list[Observation], cams: list[CameraView]):
        n = len(obs_list)
        self.n = n
        self.rot = np.stack([c.camrot for c in cams])            # (n, 3, 3)
        self.pos = np.stack([c.campos for c in cams])            # (n, 3)
        self.focal = np.array([c.focal for c in cams])           # (n, 2)
        self.princpt = np.array([c.princpt for c in cams])       # (n, 2)
        self.uv = np.array([(o.u, o.v) for o in obs_list])       # (n, 2)

    def select(self, mask) -> "_ViewBlock":
        out = _ViewBlock.__new__(_ViewBlock)
        out.rot = self.rot[mask]
        out.pos = self.pos[mask]
        out.focal = self.focal[mask]
        out.princpt = self.princpt[mask]
        out.uv = self.uv[mask]
        out.n = out.rot.shape[0]
        return out

    def camera_space(self, point: np.ndarray) -> np.ndarray:
        return np.einsum("nij,nj->ni", self.rot, point - self.pos)

    def residuals(self, point: np.ndarray) -> np.ndarray:
        """Per-view reprojection distance in px; inf behind the camera."""
        pc = self.camera_space(point)
        z = pc[:, 2]
        out = np.full(self.n, np.inf)
        front = z > 1e-6
        if front.any():
            proj = self.focal[front] * pc[front, :2] / z[front, None] + self.princpt[front]
            out[front] = np.linalg.norm(proj - self.uv[front], axis=1)
        return out

    def ray_directions(self) -> np.ndarray:
        d_cam = np.concatenate([
            (self.uv - self.princpt) / self.focal,
            np.ones((self.n, 1)),
        ], axis=1)
        d_world = np.einsum("nji,nj->ni", self.rot, d_cam)  # camrot^T @ d
        return d_world / np.linalg.norm(d_world, axis=1, keepdims=True)

    def max_pair_angle_deg(self) -> float:
        dirs = self.ray_directions()
        cosmat = np.clip(dirs @ dirs.T, -1.0, 1.0)
        iu = np.triu_indices(self.n, k=1)
        if iu[0].size == 0:
            return 0.0
        return math.degrees(np.arccos(cosmat[iu].min()))

    def dlt_point(self) -> np.ndarray:
        # P = K [R | -R C]; rows u*P2 - P0 and v*P2 - P1 per view
        rc = -np.einsum("nij,nj->ni", self.rot, self.pos)        # (n, 3)
        p = np.concatenate([self.rot, rc[:, :, None]], axis=2)   # [R | -RC]
        k0 = self.focal[:, 0, None] * p[:, 0] + self.princpt[:, 0, None] * p[:, 2]
        k1 = self.focal[:, 1, None] * p[:, 1] + self.princpt[:, 1, None] * p[:, 2]
        k2 = p[:, 2]
        rows = np.concatenate([
            self.uv[:, 0, None] * k2 - k0,
            self.uv[:, 1, None] * k2 - k1,
        ], axis=0)
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        rows = rows / np.where(norms > 0, norms, 1.0)
        _, _, vt = np.linalg.svd(rows)
        hom = vt[-1]
        if abs(hom[3]) < 1e-14:
            raise DegenerateRays("triangulated point at infinity")
        return hom[:3] / hom[3]

    def total_cost(self, point: np.ndarray) -> float:
        r = self.residuals(point)
        if not np.all(np.isfinite(r)):
            return np.inf
        return float(np.dot(r, r))

    def gauss_newton(self, point: np.ndarray) -> np.ndarray:
        """Damped Gauss-Newton on squared reprojection error.

        Steps that would increase the cost are halved until they do not, so
        the result is never worse than the initialization.
        """
        x = point.copy()
        cost = self.total_cost(x)
        if not math.isfinite(cost):
            return x
        for _ in range(GN_MAX_ITERATIONS):
            pc = self.camera_space(x)
            z = pc[:, 2]
            proj = self.focal * pc[:, :2] / z[:, None] + self.princpt
            res = (proj - self.uv).reshape(-1)  # (2n,) u-then-v per view pair
            # d(u)/dX = fx (z R0 - x_cam R2) / z^2, likewise for v
            ju = self.focal[:, 0, None] * (z[:, None] * self.rot[:, 0] - pc[:, 0, None] * self.rot[:, 2]) / (z * z)[:, None]
            jv = self.focal[:, 1, None] * (z[:, None] * self.rot[:, 1] - pc[:, 1, None] * self.rot[:, 2]) / (z * z)[:, None]
            jac = np.stack([ju, jv], axis=1).reshape(-1, 3)
            jtj = jac.T @ jac
            try:
                step = -np.linalg.solve(jtj, jac.T @ res)
            except np.linalg.LinAlgError:
                break
            accepted = False
            for _ in range(30):
                cand = x + step
                cand_cost = self.total_cost(cand)
                if cand_cost <= cost:
                    accepted = True
                    break
                step = step / 2.0
            if not accepted:
                break
            converged = np.linalg.norm(step) < GN_REL_STEP_TOL * max(np.linalg.norm(x), 1.0)
            x, cost = cand, cand_cost
            if converged:
                break
        return x


def _match_cameras(obs: Detection2DSet, cams: list[CameraView]) -> list[CameraView]:
    by_id = {c.view_id: c for c in cams}
    matched = []
    for o in obs.observations:
        if o.view_id not in by_id:
            raise ValueError(f"no camera for view {o.view_id!r}")
        matched.append(by_id[o.view_id])
    return matched


def _finish(point, block: _ViewBlock, obs_list, inlier_ids) -> TriangulationResult:
    residuals = block.residuals(point)
    inlier_set = set(inlier_ids)
    inlier_res = np.array([r for o, r in zip(obs_list, residuals) if o.view_id in inlier_set])
    rms = float(np.sqrt(np.mean(np.square(inlier_res)))) if np.all(np.isfinite(inlier_res)) else np.inf
    return TriangulationResult(
        point_world=point,
        inlier_view_ids=tuple(inlier_ids),
        rms_reprojection_error=rms,
        observation_view_ids=tuple(o.view_id for o in obs_list),
        per_view_residual=tuple(residuals),
    )


def triangulate_dlt(obs: Detection2DSet, cams: list[CameraView],
                    refine: bool = True) -> TriangulationResult:
    """Homogeneous linear least-squares triangulation of one joint.

    Raises InsufficientViews (< 2 observations) or DegenerateRays when no
    observation pair subtends at least MIN_RAY_ANGLE_DEG.
    """
    obs_list = list(obs.observations)
    if len(obs_list) < 2:
        raise InsufficientViews(f"{len(obs_list)} observation(s)")
    block = _ViewBlock(obs_list, _match_cameras(obs, cams))
    if block.max_pair_angle_deg() < MIN_RAY_ANGLE_DEG:
        raise DegenerateRays(f"all ray pairs under {MIN_RAY_ANGLE_DEG} deg")
    point = block.dlt_point()
    if refine:
        point = block.gauss_newton(point)
    return _finish(point, block, obs_list, [o.view_id for o in obs_list])


def triangulate_ransac(obs: Detection2DSet, cams: list[CameraView],
                       cfg: RansacConfig) -> TriangulationResult:
    """Robust triangulation over 2-view DLT hypotheses.

    Observations below cfg.min_confidence_2d are ignored. The iteration
    count adapts to the observed inlier ratio at cfg.confidence and is
    capped at cfg.max_iterations; the final point is re-triangulated (and
    refined, per cfg.refine) on the full inlier set. Deterministic for a
    fixed seed.
    """
    all_obs = list(obs.observations)
    all_cams = _match_cameras(obs, cams)
    keep = [i for i, o in enumerate(all_obs) if o.confidence >= cfg.min_confidence_2d]
    if len(keep) < 2:
        raise InsufficientViews(
            f"{len(keep)} observation(s) at confidence >= {cfg.min_confidence_2d}")
    cand_obs = [all_obs[i] for i in keep]
    cand_cams = [all_cams[i] for i in keep]
    cand = _ViewBlock(cand_obs, cand_cams)
    thresholds = np.array([cfg.threshold_for(c) for c in cand_cams])
    min_cos = math.cos(math.radians(MIN_RAY_ANGLE_DEG))
    rays = cand.ray_directions()

    rng = np.random.default_rng(cfg.seed)
    n = cand.n
    best_mask = np.zeros(n, dtype=bool)
    best_hyp = None
    needed = cfg.max_iterations
    it = 0
    while it < min(needed, cfg.max_iterations):
        it += 1
        i, j = rng.choice(n, size=2, replace=False)
        if float(rays[i] @ rays[j]) > min_cos:
            continue  # degenerate pair, no usable hypothesis
        pair = cand.select(np.array([i, j]))
        try:
            hyp = pair.dlt_point()
        except DegenerateRays:
            continue
        mask = cand.residuals(hyp) <= thresholds
        if mask.sum() > best_mask.sum():
            best_mask = mask
            best_hyp = hyp
            w = mask.sum() / n
            if w >= 1.0:
                break
            denom = math.log1p(-w * w)
            needed = math.ceil(math.log1p(-cfg.confidence) / denom) if denom < 0 else cfg.max_iterations

    if best_mask.sum() < 2:
        raise NoConsensus(f"best hypothesis had {int(best_mask.sum())} inlier view(s)")

    inliers = cand.select(best_mask)
    if inliers.max_pair_angle_deg() < MIN_RAY_ANGLE_DEG:
        raise NoConsensus("inlier views are mutually degenerate")
    point = inliers.dlt_point()
    if cfg.refine:
        # under heavy noise the algebraic refit can land behind a camera
        # (infinite cost); the winning hypothesis is in front of every
        # inlier view by construction, so it is the robust fallback start
        if inliers.total_cost(best_hyp) < inliers.total_cost(point):
            point = best_hyp
        point = inliers.gauss_newton(point)

    inlier_ids = [o.view_id for o, m in zip(cand_obs, best_mask) if m]
    full = _ViewBlock(all_obs, all_cams)
    return _finish(point, full, all_obs, inlier_ids)


@dataclass(frozen=True)
class Reprojection:
    """A world point seen by one camera; behind-camera views are flagged."""

    view_id: str
    u: float
    v: float
    behind_camera: bool = False


def reproject_all(point_world, cams: list[CameraView]) -> list[Reprojection]:
    """Project one world point into every camera.

    Views where the point sits behind the camera appear with
    behind_camera=True and NaN coordinates rather than being dropped.
    """
    p = np.asarray(point_world, dtype=np.float64).reshape(3)
    out = []
    for c in cams:
        pc = c.camrot @ (p - c.campos)
        if pc[2] <= 1e-6:
            out.append(Reprojection(view_id=c.view_id, u=math.nan, v=math.nan,
                                    behind_camera=True))
            continue
        fx, fy = c.focal
        cx, cy = c.princpt
        out.append(Reprojection(
            view_id=c.view_id,
            u=float(fx * pc[0] / pc[2] + cx),
            v=float(fy * pc[1] / pc[2] + cy),
        ))
    return out


def annotate_frame(per_joint: list[Detection2DSet], cams: list[CameraView],
                   cfg: RansacConfig) -> tuple[list[TriangulationResult | None], np.ndarray]:
    """RANSAC-triangulate all 42 joints of one frame.

    Joints that cannot be triangulated (too few views, no consensus,
    degenerate rays) are marked invalid instead of aborting the frame.
    Per-joint seeds derive from cfg.seed XOR joint_id, so results do not
    depend on evaluation order.
    """
    if len(per_joint) != NUM_JOINTS:
        raise ValueError(f"expected {NUM_JOINTS} detection sets, got {len(per_joint)}")
    results: list[TriangulationResult | None] = []
    valid = np.zeros(NUM_JOINTS, dtype=bool)
    for k, det in enumerate(per_joint):
        try:
            res = triangulate_ransac(det, cams, cfg.with_seed(cfg.seed ^ det.joint_id))
        except (InsufficientViews, NoConsensus, DegenerateRays):
            results.append(None)
            continue
        results.append(res)
        valid[k] = True
    return results, valid
