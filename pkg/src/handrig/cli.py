"""Command-line surface: triangulate, evaluate, sweep, validate, synth, serve.

All outputs are canonical JSON (sorted keys, stable ordering) so a fixed
--seed reproduces byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import dataset_io, objectives, synthrig
from .errors import HandrigError, IoError, ParseError, SchemaViolation
from .geometry import CameraView
from .pose import Handedness, JOINTS_PER_HAND, WRIST
from .triangulation import (
    Detection2DSet,
    Observation,
    RansacConfig,
    triangulate_ransac,
)


def _dump(doc, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=1, allow_nan=False)
        f.write("\n")


def _load(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc


def _read_cameras_file(path) -> list[CameraView]:
    doc = _load(path)
    cams = []
    for i, c in enumerate(doc.get("cameras", [])):
        try:
            cams.append(CameraView(
                view_id=c["view_id"],
                campos=c["campos"],
                camrot=c["camrot"],
                focal=tuple(c["focal"]),
                princpt=tuple(c["princpt"]),
                image_size=tuple(c["image_size"]),
            ))
        except (KeyError, ValueError) as exc:
            raise SchemaViolation(f"$.cameras[{i}]", str(exc)) from exc
    return cams


def _read_detections_file(path) -> list[Detection2DSet]:
    doc = _load(path)
    sets = []
    for i, d in enumerate(doc.get("detections", [])):
        try:
            sets.append(Detection2DSet(
                joint_id=int(d["joint_id"]),
                observations=tuple(
                    Observation(view_id=o["view_id"], u=float(o["u"]), v=float(o["v"]),
                                confidence=float(o.get("confidence", 1.0)))
                    for o in d["observations"]),
            ))
        except (KeyError, ValueError) as exc:
            raise SchemaViolation(f"$.detections[{i}]", str(exc)) from exc
    return sets


def cmd_triangulate(args) -> int:
    cams = _read_cameras_file(args.cameras)
    sets = _read_detections_file(args.detections)
    cfg = RansacConfig(inlier_threshold_px=args.ransac_threshold, seed=args.seed)
    results = []
    for det in sets:
        entry = {"joint_id": det.joint_id}
        try:
            res = triangulate_ransac(det, cams, cfg.with_seed(cfg.seed ^ det.joint_id))
        except HandrigError as exc:
            entry.update(valid=False, error=type(exc).__name__)
        else:
            entry.update(
                valid=True,
                point_world=res.point_world.tolist(),
                inlier_view_ids=list(res.inlier_view_ids),
                rms_reprojection_error=res.rms_reprojection_error,
                per_view_residual={
                    vid: (None if math.isinf(r) else r)
                    for vid, r in zip(res.observation_view_ids, res.per_view_residual)},
            )
        results.append(entry)
    _dump({"format_version": "1", "seed": args.seed,
           "ransac_threshold_px": args.ransac_threshold, "results": results}, args.out)
    n_ok = sum(1 for r in results if r["valid"])
    print(f"triangulated {n_ok}/{len(results)} joints -> {args.out}")
    return 0


def _delta_from_hand_type(hand_type: str) -> tuple[int, int]:
    return {"right": (1, 0), "left": (0, 1), "interacting": (1, 1)}[hand_type]


def build_eval_batch(gt_records, predictions):
    """Pair prediction records with ground truth in the prediction camera's
    space. Frames with hand_type_valid=false are skipped (their presence
    label is unusable)."""
    by_key = {rec.key: rec for rec in gt_records}
    batch = []
    skipped = 0
    for p in predictions:
        key = (p.capture_id, p.frame_id, p.camera_id)
        if key not in by_key:
            raise SchemaViolation(str(key), "prediction without a ground-truth record")
        rec = by_key[key]
        if not rec.hand_type_valid:
            skipped += 1
            continue
        dr, dl = _delta_from_hand_type(rec.hand_type)
        cam_joints = rec.camera.world_to_camera(rec.joints_world)
        vr = rec.joint_valid[:JOINTS_PER_HAND]
        vl = rec.joint_valid[JOINTS_PER_HAND:]
        z_rel = None
        if dr and dl and vr[WRIST] and vl[WRIST]:
            z_rel = float(cam_joints[JOINTS_PER_HAND + WRIST, 2] - cam_joints[WRIST, 2])
        truth = objectives.FrameTruth(
            delta_right=dr, delta_left=dl,
            pose_right=cam_joints[:JOINTS_PER_HAND] if dr else None,
            pose_left=cam_joints[JOINTS_PER_HAND:] if dl else None,
            valid_right=vr if dr else None,
            valid_left=vl if dl else None,
            z_rel=z_rel,
        )
        batch.append(objectives.EvalSample(
            handedness=Handedness(p.h_right, p.h_left),
            truth=truth,
            pred_right=p.joints_right,
            pred_left=p.joints_left,
            z_rel=p.z_rel,
        ))
    return batch, skipped


def _sanitize(value):
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def cmd_evaluate(args) -> int:
    gt = dataset_io.read_annotations(args.gt)
    preds = dataset_io.read_predictions(args.pred)
    batch, skipped = build_eval_batch(gt, preds)
    text, doc = objectives.evaluation_report(batch)
    doc["skipped_invalid_hand_type"] = skipped
    _dump(_sanitize(doc), args.report)
    sys.stdout.write(text)
    print(f"report -> {args.report}")
    return 0


def cmd_sweep(args) -> int:
    view_counts = [int(v) for v in args.views.split(",")]
    spec = synthrig.RigSpec(n_cameras=args.rig_size)
    rig = synthrig.generate_rig(spec, seed=args.seed)
    skeletons = [synthrig.generate_hand(args.seed ^ (k + 1), hand="both",
                                        articulation="random")
                 for k in range(args.hands)]
    noise = synthrig.NoiseModel(pixel_sigma=args.noise_sigma, seed=args.seed)
    # inlier threshold follows the injected noise so the consensus set stays
    # meaningful at sweep noise levels (quoted at the 4096-wide reference)
    cfg = RansacConfig(
        inlier_threshold_px=max(10.0, 4.0 * args.noise_sigma), seed=args.seed)
    result = synthrig.run_view_sweep(skeletons, rig, noise, view_counts,
                                     trials=args.trials, cfg=cfg)
    sys.stdout.write(result.to_text())
    if args.out:
        _dump(result.to_dict(), args.out)
        print(f"table -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    report = dataset_io.validate_dataset(args.dataset)
    sys.stdout.write(report.to_text())
    return 0 if report.ok else 1


def cmd_synth(args) -> int:
    records = synthrig.make_dataset(
        args.frames, seed=args.seed, n_cameras=args.cameras,
        image_size=(args.image_width, args.image_height))
    dataset_io.write_annotations(records, args.out, split=args.split)
    print(f"wrote {len(records)} records "
          f"({args.frames} frames x {args.cameras} cameras) -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    from .session import SessionStore

    host, _, port = args.listen.rpartition(":")
    store = SessionStore(args.dataset, args.sessions_dir)
    app = create_app(store)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handrig",
        description="Multi-view hand keypoint annotation and evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("triangulate", help="RANSAC-triangulate detection sets")
    p.add_argument("--detections", required=True, help="detections JSON file")
    p.add_argument("--cameras", required=True, help="cameras JSON file")
    p.add_argument("--ransac-threshold", type=float, default=10.0,
                   help="inlier threshold in px at 4096-wide reference")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_triangulate)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="triangulation error vs number of views")
    p.add_argument("--rig-size", type=int, default=90)
    p.add_argument("--noise-sigma", type=float, default=58.0,
                   help="detector jitter in px at the 4096-wide reference")
    p.add_argument("--views", default="2,5,10,20,40,90")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hands", type=int, default=1,
                   help="number of two-hand skeletons per trial")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="consistency-check a dataset")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cameras", type=int, default=8)
    p.add_argument("--image-width", type=int, default=512)
    p.add_argument("--image-height", type=int, default=334)
    p.add_argument("--split", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--listen", default="127.0.0.1:8000")
    p.add_argument("--sessions-dir", default="sessions")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HandrigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
