"""
Command-line interface.

Exit codes: 0 on success, 1 for invalid input (bad flags, unreadable or
malformed files, inconsistent shapes), 2 for runtime failures (optimizer
divergence, unwritable outputs).
"""

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .exceptions import DivergenceError, ParseError, RetargetError
from .io.bvh import read_bvh, save_bvh
from .io.obj import read_obj, save_obj
from .io.sidecar import WeightsSidecar, read_config, read_weights, save_weights
from .io.synth import SCENES, SceneSpec, generate_scene
from .metrics import append_csv, evaluate_metrics
from .optimizer import OptimizerConfig, optimize_sequence
from .semantic_loss import PRESETS
from .skinning import (
    DEFAULT_EXCLUDED_JOINTS,
    DEFAULT_LIMB_JOINTS,
    SkinnedCharacter,
    sample_points,
    segment_limbs,
)
from .spatial_loss import limb_penetration_loss

DEFAULT_TIERS = ((50, 500), (100, 1000), (200, 2000), (400, 4000))
BENCH_COLUMNS = ("method", "queries", "references", "mean_seconds", "speedup", "loss")


class UsageError(Exception):
    """Invalid invocation or input; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _threads(value):
    if value is None:
        value = os.environ.get("RETARGET_THREADS")
    if value is None or value == "":
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"thread count must be an integer, got {value!r}") from None
    if n < 1:
        raise UsageError("thread count must be at least 1")
    return n


def _read(reader, path, *args):
    try:
        return reader(path, *args)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ParseError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path, doc):
    with open(path, "w", newline="\n") as f:
        json.dump(_clean(doc), f, indent=2, allow_nan=False)
        f.write("\n")


def _character(obj_path, weights_path, skeleton):
    verts, normals, faces = _read(read_obj, obj_path)
    sidecar = _read(read_weights, weights_path)
    try:
        weights = sidecar.dense(skeleton)
    except ParseError as exc:
        raise UsageError(f"{weights_path}: {exc}") from None
    if len(weights) != len(verts):
        raise UsageError(f"{weights_path} has {len(weights)} vertices, {obj_path} has {len(verts)}")
    return SkinnedCharacter(verts, normals, faces, weights, skeleton), sidecar


def _segmentation(character, sidecar):
    limbs = sidecar.limbs or None
    excluded = sidecar.excluded if sidecar.limbs else None
    return segment_limbs(character, limbs, excluded)


def cmd_retarget(args):
    src_skel, src_motion = _read(read_bvh, args.source_bvh)
    tgt_skel = src_skel
    if args.target_bvh:
        tgt_skel, _ = _read(read_bvh, args.target_bvh)
    if tgt_skel.n_joints != src_skel.n_joints:
        raise UsageError("source and target skeletons differ in joint count")
    src_char, _ = _character(args.source_obj, args.source_weights, src_skel)
    tgt_char, tgt_sidecar = _character(args.target_obj, args.target_weights, tgt_skel)
    if args.config:
        cfg, _ = _read(read_config, args.config, args.preset)
    else:
        cfg = OptimizerConfig(weights=args.preset or "final")
    cfg.workers = _threads(args.threads)
    seg = _segmentation(tgt_char, tgt_sidecar)
    try:
        report = optimize_sequence(src_motion, src_char, tgt_char, cfg, segmentation=seg)
    except DivergenceError as exc:
        if args.report and exc.report is not None:
            _write_json(args.report, {"error": str(exc), **_report_doc(exc.report, cfg)})
        raise
    save_bvh(args.out_bvh, tgt_skel, report.motion)
    if args.report:
        _write_json(args.report, _report_doc(report, cfg))
    b, a = report.metrics_before, report.metrics_after
    print(f"{'metric':<12}{'before':>14}{'after':>14}")
    for key in ("pen_rate", "curvature", "mse", "mse_local"):
        print(f"{key:<12}{b[key]:>14.6g}{a[key]:>14.6g}")
    s = report.summary()
    print(f"iterations {s['iterations']}  loss {s['initial_loss']:.6g} -> {s['final_loss']:.6g}"
          f"  time {report.wall_time:.1f}s")
    return 0


def _report_doc(report, cfg):
    cfg_doc = asdict(cfg)
    return {"config": cfg_doc, "summary": report.summary(), "trace": report.trace}


def cmd_evaluate(args):
    pred_skel, pred = _read(read_bvh, args.pred_bvh)
    gt_skel, gt = _read(read_bvh, args.gt_bvh)
    if pred.rotations.shape != gt.rotations.shape:
        raise UsageError(
            f"prediction has {pred.n_frames} frames x {pred.n_joints} joints, "
            f"ground truth has {gt.n_frames} x {gt.n_joints}"
        )
    if pred_skel.names != gt_skel.names:
        raise UsageError("prediction and ground truth use different joint names")
    character = seg = None
    if args.obj or args.weights:
        if not (args.obj and args.weights):
            raise UsageError("--obj and --weights must be given together")
        character, sidecar = _character(args.obj, args.weights, gt_skel)
        seg = _segmentation(character, sidecar)
    start = time.perf_counter()
    report = evaluate_metrics(pred, gt, character, seg, skeleton=gt_skel)
    wall_ms = 1000.0 * (time.perf_counter() - start)
    sequence = args.sequence or Path(args.pred_bvh).stem
    if args.report:
        _write_json(args.report, {"sequence": sequence, "wall_ms": wall_ms, **report.as_dict()})
    if args.csv:
        append_csv(args.csv, sequence, report, wall_ms)
    for key in ("mse", "mse_local", "pen_rate", "curvature"):
        print(f"{key:<12}{getattr(report, key):>14.6g}")
    return 0


def _parse_tiers(text):
    tiers = []
    for part in text.split(","):
        try:
            q, r = part.lower().split("x")
            tiers.append((int(q), int(r)))
        except ValueError:
            raise UsageError(f"bad size {part!r}; expected QUERYxREFERENCE") from None
        if tiers[-1][0] < 1 or tiers[-1][1] < 1:
            raise UsageError(f"sample counts must be positive in {part!r}")
    return tiers


def run_bench(scene, tiers, repeats, n_frames=4, resolution=2, workers=1, seed=0):
    """
    Time the penetration term with brute-force and tree search.

    Returns rows of ``(method, queries, references, mean_seconds, speedup,
    loss)``; ``speedup`` is brute-force time over the row's time.
    """
    if repeats < 1:
        raise UsageError("repeats must be at least 1")
    _, motion, target = generate_scene(SceneSpec(scene, n_frames=n_frames, resolution=resolution, seed=seed))
    seg = segment_limbs(target)
    rows = []
    for q, r in tiers:
        sample = sample_points(target, seg, {"query": q, "reference": r}, seed=seed)
        timing, losses = {}, {}
        for method in ("brute", "tree"):
            spent = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                loss = limb_penetration_loss(target, seg, sample, motion, method=method, workers=workers)
                spent.append(time.perf_counter() - t0)
            timing[method] = float(np.mean(spent))
            losses[method] = loss.total
        for method in ("brute", "tree"):
            rows.append((method, q, r, timing[method], timing["brute"] / timing[method], losses[method]))
    return rows


def cmd_bench(args):
    tiers = _parse_tiers(args.sizes) if args.sizes else list(DEFAULT_TIERS)
    if args.scene not in SCENES:
        raise UsageError(f"unknown scene {args.scene!r}; choose from {list(SCENES)}")
    rows = run_bench(args.scene, tiers, args.repeats, args.frames, args.resolution, _threads(args.threads))
    lines = [",".join(BENCH_COLUMNS)]
    lines += [f"{m},{q},{r},{s!r},{x!r},{l!r}" for m, q, r, s, x, l in rows]
    if args.report:
        with open(args.report, "w", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    print(f"{'method':<7}{'queries':>8}{'refs':>7}{'seconds':>12}{'speedup':>9}  loss")
    for m, q, r, s, x, l in rows:
        print(f"{m:<7}{q:>8}{r:>7}{s:>12.5f}{x:>9.2f}  {l:.12g}")
    return 0


def _scene_params(text):
    if not text:
        return {}
    src = text
    if not text.lstrip().startswith("{"):
        src = _read(lambda p: Path(p).read_text(encoding="utf-8", errors="replace"), text)
    try:
        doc = json.loads(src)
    except ValueError as exc:
        raise UsageError(f"scene parameters are not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError("scene parameters must be a JSON object")
    return doc


def cmd_synth(args):
    params = _scene_params(args.params)
    params.pop("scene_id", None)
    if args.scene not in SCENES:
        raise UsageError(f"unknown scene {args.scene!r}; choose from {list(SCENES)}")
    try:
        spec = SceneSpec(args.scene, **params)
    except TypeError as exc:
        raise UsageError(f"bad scene parameters: {exc}") from None
    src, motion, tgt = generate_scene(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    limbs = {k: list(v) for k, v in DEFAULT_LIMB_JOINTS.items()}
    sidecar = WeightsSidecar.from_dense(src.skeleton, src.weights, limbs, list(DEFAULT_EXCLUDED_JOINTS))
    save_bvh(out / "source.bvh", src.skeleton, motion)
    save_obj(out / "source.obj", src.vertices, src.normals, src.faces)
    save_obj(out / "target.obj", tgt.vertices, tgt.normals, tgt.faces)
    save_weights(out / "weights.json", sidecar)
    print(f"wrote source.bvh, source.obj, target.obj, weights.json to {out}")
    return 0


def build_parser():
    p = _Parser(prog="skinretarget", description="Skinned motion retargeting by per-sequence optimization.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("retarget", help="retarget a BVH motion onto a target mesh")
    r.add_argument("--source-bvh", required=True, help="source skeleton and motion")
    r.add_argument("--source-obj", required=True, help="source mesh in bind pose")
    r.add_argument("--source-weights", required=True, help="source skinning weights (JSON)")
    r.add_argument("--target-obj", required=True, help="target mesh in bind pose")
    r.add_argument("--target-weights", required=True, help="target skinning weights (JSON)")
    r.add_argument("--target-bvh", help="target skeleton; defaults to the source skeleton")
    r.add_argument("--config", help="run configuration (JSON)")
    r.add_argument("--preset", choices=sorted(PRESETS), help="loss weighting preset (default final)")
    r.add_argument("--out-bvh", required=True, help="where to write the retargeted motion")
    r.add_argument("--report", help="JSON report with loss trace and metrics")
    r.add_argument("--threads", help="worker threads (default: RETARGET_THREADS or all cores)")
    r.set_defaults(func=cmd_retarget)

    e = sub.add_parser("evaluate", help="compute metrics of a motion against ground truth")
    e.add_argument("--pred-bvh", required=True, help="predicted motion")
    e.add_argument("--gt-bvh", required=True, help="ground-truth motion")
    e.add_argument("--obj", help="mesh for the penetration rate")
    e.add_argument("--weights", help="skinning weights for --obj")
    e.add_argument("--report", help="JSON metrics report")
    e.add_argument("--csv", help="results file to append one row to")
    e.add_argument("--sequence", help="sequence id for the CSV row (default: prediction file stem)")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="time tree against brute-force search in the penetration term")
    b.add_argument("--scene", default="arm_sweep", help=f"synthetic scene, one of {', '.join(SCENES)}")
    b.add_argument("--sizes", help="comma-separated QUERYxREFERENCE tiers (default 50x500,...,400x4000)")
    b.add_argument("--repeats", type=int, default=3, help="timed evaluations per method and tier")
    b.add_argument("--frames", type=int, default=4, help="frames per evaluation")
    b.add_argument("--resolution", type=int, default=2, help="mesh density multiplier")
    b.add_argument("--report", help="CSV output path")
    b.add_argument("--threads", help="worker threads (default: RETARGET_THREADS or all cores)")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth", help="write a synthetic scene as BVH, OBJ and weights files")
    s.add_argument("--scene", default="arm_sweep", help=f"one of {', '.join(SCENES)}")
    s.add_argument("--params", help="scene parameters as a JSON object or a path to one")
    s.add_argument("--out-dir", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"error: optimization diverged: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ValueError) as exc:
        # contract violations (shapes, weights, segmentation) are input problems
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RetargetError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
