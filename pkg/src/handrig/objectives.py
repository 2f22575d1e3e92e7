"""Loss values and evaluation metrics as pure numeric oracles.

Losses mirror the training objective of the interacting-hand estimator
(handedness BCE, volumetric pose L2, relative-depth L1); metrics cover
root-aligned per-joint error (MPJPE), relative-root error (MRRPE),
handedness average precision (AP_h), and the single-hand protocol (EPE).

Masking rule used everywhere: a joint contributes iff its ground-truth
joint is valid AND its hand's ground-truth root is valid; a hand
contributes iff its ground-truth presence flag is set. Reductions use
compensated summation so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimMismatch,
    EmptyBatch,
    NoPositives,
    NoQualifyingFrames,
)
from .pose import (
    FINGER_LETTERS,
    JOINTS_PER_HAND,
    WRIST,
    Handedness,
)

BCE_EPS = 1e-7

# Column layout of the per-joint error table: fingertip-to-root per finger.
PER_JOINT_COLUMNS = tuple(
    f"{letter}{level}" for letter in FINGER_LETTERS for level in (4, 3, 2, 1)
)


@dataclass(frozen=True)
class FrameTruth:
    """Ground truth of one frame.

    delta_right/delta_left are the presence indicators; heatmaps (when
    carried) must exist exactly for present hands; z_rel only when both
    hands are present. Poses are camera-space (21, 3) arrays with validity
    masks.
    """

    delta_right: int
    delta_left: int
    pose_right: np.ndarray | None = None
    pose_left: np.ndarray | None = None
    valid_right: np.ndarray | None = None
    valid_left: np.ndarray | None = None
    z_rel: float | None = None
    heatmaps: dict | None = None

    def __post_init__(self):
        for name, d in (("delta_right", self.delta_right), ("delta_left", self.delta_left)):
            if d not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1, got {d}")
        if self.heatmaps is not None:
            want = {h for h, d in (("right", self.delta_right), ("left", self.delta_left)) if d}
            if set(self.heatmaps) != want:
                raise ValueError(
                    f"heatmaps for {sorted(self.heatmaps)} but present hands are {sorted(want)}")
        if self.z_rel is not None and not (self.delta_right and self.delta_left):
            raise ValueError("z_rel given for a frame without both hands")

    def delta(self, hand: str) -> int:
        return self.delta_right if hand == "right" else self.delta_left

    def pose(self, hand: str):
        return self.pose_right if hand == "right" else self.pose_left

    def valid(self, hand: str):
        return self.valid_right if hand == "right" else self.valid_left


@dataclass(frozen=True)
class EvalSample:
    """One frame's prediction paired with its ground truth."""

    handedness: Handedness
    truth: FrameTruth
    pred_right: np.ndarray | None = None
    pred_left: np.ndarray | None = None
    z_rel: float | None = None

    def pred(self, hand: str):
        return self.pred_right if hand == "right" else self.pred_left


EvalBatch = list  # list[EvalSample]


# --- losses ------------------------------------------------------------------

def loss_handedness(h: Handedness, delta: tuple[int, int]) -> float:
    """Binary cross-entropy over the two presence probabilities.

    -1/2 * sum_Q (delta log h + (1 - delta) log(1 - h)); probabilities are
    clamped to [BCE_EPS, 1 - BCE_EPS] so saturated inputs stay finite.
    """
    total = 0.0
    for prob, d in ((h.h_right, delta[0]), (h.h_left, delta[1])):
        p = min(max(prob, BCE_EPS), 1.0 - BCE_EPS)
        total += d * math.log(p) + (1 - d) * math.log(1.0 - p)
    return -0.5 * total


def loss_pose(pred_heatmaps: dict, truth: FrameTruth) -> float:
    """Sum over present hands of ||H - H*||_2 (Euclidean norm of the
    voxel-wise difference); absent hands contribute zero."""
    total = 0.0
    for hand in ("right", "left"):
        if not truth.delta(hand):
            continue
        gt = np.asarray(truth.heatmaps[hand], dtype=np.float64)
        pred = np.asarray(pred_heatmaps[hand], dtype=np.float64)
        if pred.shape != gt.shape:
            raise DimMismatch(f"{hand}: pred {pred.shape} vs gt {gt.shape}")
        total += float(np.linalg.norm((pred - gt).ravel()))
    return total


def loss_rel(z_pred: float, truth: FrameTruth) -> float:
    """L1 on the right->left relative root depth; zero unless both hands
    are present in the ground truth."""
    if not (truth.delta_right and truth.delta_left):
        return 0.0
    return abs(float(z_pred) - float(truth.z_rel))


def loss_total(l_handedness: float, l_pose: float, l_rel: float) -> float:
    return float(l_handedness) + float(l_pose) + float(l_rel)


# --- metrics -----------------------------------------------------------------

def _aligned(pose: np.ndarray) -> np.ndarray:
    return pose - pose[WRIST]


def _hand_contributions(sample: EvalSample, hand: str):
    """Per-joint distances of one qualifying (sample, hand), or None.

    Qualifies when the gt hand is present with a valid root and a
    prediction exists. Returns (distances, mask) over the 21 joints.
    """
    truth = sample.truth
    if not truth.delta(hand):
        return None
    gt_valid = truth.valid(hand)
    gt_pose = truth.pose(hand)
    if gt_pose is None or gt_valid is None or not gt_valid[WRIST]:
        return None
    pred = sample.pred(hand)
    if pred is None:
        return None
    pa = _aligned(np.asarray(pred, dtype=np.float64))
    ga = _aligned(np.asarray(gt_pose, dtype=np.float64))
    dist = np.linalg.norm(pa - ga, axis=1)
    return dist, np.asarray(gt_valid, dtype=bool)


@dataclass(frozen=True)
class MpjpeResult:
    overall_mm: float
    per_hand_mm: dict
    per_joint_mm: dict          # PER_JOINT_COLUMNS order plus "avg"
    n_hand_samples: int
    n_missing_predictions: int


def mpjpe(batch: EvalBatch) -> MpjpeResult:
    """Mean per-joint position error after per-hand root alignment (mm).

    Each qualifying (frame, hand) pair yields the mean distance over its
    valid joints; the headline number averages those pair errors. The
    per-joint table merges right and left (mirror-index) contributions.
    """
    pair_errors = []
    per_hand = {"right": [], "left": []}
    per_joint = [[] for _ in range(JOINTS_PER_HAND)]
    missing = 0
    for sample in batch:
        for hand in ("right", "left"):
            truth = sample.truth
            if truth.delta(hand) and sample.pred(hand) is None:
                missing += 1
            contrib = _hand_contributions(sample, hand)
            if contrib is None:
                continue
            dist, mask = contrib
            if not mask.any():
                continue
            err = math.fsum(dist[mask]) / int(mask.sum())
            pair_errors.append(err)
            per_hand[hand].append(err)
            for j in range(JOINTS_PER_HAND):
                if mask[j]:
                    per_joint[j].append(float(dist[j]))
    if not pair_errors:
        raise EmptyBatch("no qualifying (frame, hand) pair")
    overall = math.fsum(pair_errors) / len(pair_errors)
    table = {}
    for col, j in zip(PER_JOINT_COLUMNS, range(JOINTS_PER_HAND)):
        table[col] = math.fsum(per_joint[j]) / len(per_joint[j]) if per_joint[j] else math.nan
    table["avg"] = overall
    return MpjpeResult(
        overall_mm=overall,
        per_hand_mm={h: (math.fsum(v) / len(v) if v else math.nan) for h, v in per_hand.items()},
        per_joint_mm=table,
        n_hand_samples=len(pair_errors),
        n_missing_predictions=missing,
    )


def mrrpe(batch: EvalBatch) -> float:
    """Mean error of the right-root -> left-root vector (mm).

    Counts only frames where both gt roots are valid and both hands were
    predicted.
    """
    errors = []
    for sample in batch:
        truth = sample.truth
        if not (truth.delta_right and truth.delta_left):
            continue
        if truth.valid_right is None or truth.valid_left is None:
            continue
        if not (truth.valid_right[WRIST] and truth.valid_left[WRIST]):
            continue
        if sample.pred_right is None or sample.pred_left is None:
            continue
        gt_rel = np.asarray(truth.pose_left[WRIST]) - np.asarray(truth.pose_right[WRIST])
        pred_rel = np.asarray(sample.pred_left[WRIST]) - np.asarray(sample.pred_right[WRIST])
        errors.append(float(np.linalg.norm(pred_rel - gt_rel)))
    if not errors:
        raise NoQualifyingFrames("no frame with both roots valid and both hands predicted")
    return math.fsum(errors) / len(errors)


def _average_precision(scores, labels) -> float:
    """All-point-interpolated area under the precision-recall curve.

    Tied scores form a single operating point, so uninformative constant
    scores yield AP equal to the positive fraction.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("no positive label")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    # operating points at the end of each tied-score group
    boundaries = np.nonzero(np.diff(s))[0]
    ends = np.concatenate([boundaries, [len(s) - 1]])
    tp = np.cumsum(y)[ends]
    count = ends + 1
    recall = tp / n_pos
    precision = tp / count
    # precision envelope: best precision at recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * envelope))


@dataclass(frozen=True)
class ApResult:
    ap: float            # mean over the two hand classes
    ap_right: float
    ap_left: float
    accuracy_at_half: float


def ap_handedness(batch: EvalBatch) -> ApResult:
    """Average precision of handedness presence, averaged over both hands.

    The PR integration is the all-point interpolation; an accuracy at the
    0.5 threshold is reported alongside for transparency.
    """
    if not batch:
        raise EmptyBatch("empty batch")
    scores = {"right": [], "left": []}
    labels = {"right": [], "left": []}
    correct = 0
    for sample in batch:
        for hand in ("right", "left"):
            prob = sample.handedness.h_right if hand == "right" else sample.handedness.h_left
            d = sample.truth.delta(hand)
            scores[hand].append(prob)
            labels[hand].append(d)
            correct += int((prob >= 0.5) == bool(d))
    ap_r = _average_precision(scores["right"], labels["right"])
    ap_l = _average_precision(scores["left"], labels["left"])
    return ApResult(
        ap=(ap_r + ap_l) / 2.0,
        ap_right=ap_r,
        ap_left=ap_l,
        accuracy_at_half=correct / (2 * len(batch)),
    )


def epe(batch: EvalBatch, alignment: str = "root") -> float:
    """Mean Euclidean distance (mm), single-hand protocol.

    Same qualifying and masking rules as mpjpe, but the result is the bare
    scalar. Only root alignment is defined.
    """
    if alignment != "root":
        raise ValueError(f"unsupported alignment {alignment!r}")
    errors = []
    for sample in batch:
        for hand in ("right", "left"):
            contrib = _hand_contributions(sample, hand)
            if contrib is None:
                continue
            dist, mask = contrib
            if not mask.any():
                continue
            errors.append(math.fsum(dist[mask]) / int(mask.sum()))
    if not errors:
        raise EmptyBatch("no qualifying hand sample")
    return math.fsum(errors) / len(errors)


# --- evaluation report ---------------------------------------------------------

def evaluation_report(batch: EvalBatch) -> tuple[str, dict]:
    """Human-readable text and machine-readable dict of all metrics."""
    m = mpjpe(batch)
    ap = ap_handedness(batch)
    try:
        rel = mrrpe(batch)
    except NoQualifyingFrames:
        rel = None

    cols = list(PER_JOINT_COLUMNS) + ["avg"]
    header = " ".join(f"{c:>6}" for c in cols)
    vals = " ".join(f"{m.per_joint_mm[c]:6.2f}" for c in cols)
    lines = [
        "per-joint MPJPE (mm)",
        header,
        vals,
        "",
        f"MPJPE (mm):  overall {m.overall_mm:.4f}"
        f"  right {m.per_hand_mm['right']:.4f}  left {m.per_hand_mm['left']:.4f}",
        f"AP_h:        {ap.ap:.4f}  (right {ap.ap_right:.4f}, left {ap.ap_left:.4f};"
        f" accuracy@0.5 {ap.accuracy_at_half:.4f})",
        f"MRRPE (mm):  {'n/a (no qualifying frames)' if rel is None else f'{rel:.4f}'}",
    ]
    report = {
        "format_version": "1",
        "mpjpe_mm": m.overall_mm,
        "mpjpe_per_hand_mm": m.per_hand_mm,
        "mpjpe_per_joint_mm": m.per_joint_mm,
        "n_hand_samples": m.n_hand_samples,
        "n_missing_predictions": m.n_missing_predictions,
        "ap_h": ap.ap,
        "ap_h_right": ap.ap_right,
        "ap_h_left": ap.ap_left,
        "handedness_accuracy_at_half": ap.accuracy_at_half,
        "mrrpe_mm": rel,
    }
    return "\n".join(lines) + "\n", report
