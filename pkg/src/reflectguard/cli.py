"""Command-line interface: filter, eval, compare, synth, heatmap.

Exit codes: 0 on success, 1 for validation problems (bad flags, bad input
data), 2 for I/O failures. All outputs are written atomically, so a failed
run never leaves a truncated file behind. Zero-config invocations use the
reference parameter values (1% upward shift, 0.3 candidacy threshold).
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

from . import coco_io
from ._version import __version__
from .errors import ValidationError
from .evaluation import (
    DEFAULT_IOU_THRESHOLDS,
    DEFAULT_SCORE_THRESHOLDS,
    ApMode,
    EvalReport,
    compare_reports,
    map_summary,
)
from .filtering import FilterParams, ShiftBasis, sliding_filter
from .heatmap import build_heatmap
from .synth import generate_dataset, scene_spec_from_dict

THREADS_ENV_VAR = "REFLECTGUARD_THREADS"


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError as e:
        raise ValidationError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from e
    if n < 1:
        raise ValidationError(f"{THREADS_ENV_VAR} must be >= 1, got {n}")
    return n


def _parse_float_list(raw: str, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError as e:
        raise ValidationError(f"{flag}: expected comma-separated numbers, got {raw!r}") from e
    if not values:
        raise ValidationError(f"{flag}: empty list")
    return values


def _add_threads_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"worker threads (default: ${THREADS_ENV_VAR} or 1)",
    )


def _resolve_threads(args: argparse.Namespace) -> int:
    n = args.threads if args.threads is not None else _default_threads()
    if n < 1:
        raise ValidationError(f"--threads must be >= 1, got {n}")
    return n


def _input_metadata(**paths: str) -> dict:
    return {
        name: {"path": str(p), "sha256": coco_io.file_digest(p)}
        for name, p in paths.items()
    }


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reflectguard",
        description="Remove reflection false positives from detector outputs "
        "and measure the effect.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="remove likely-reflection proposals")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--removal-log", default=None)
    p.add_argument("--shift-fraction", type=float, default=0.01)
    p.add_argument("--conf-threshold", type=float, default=0.3)
    p.add_argument("--shift-basis", choices=["image", "box"], default="image")
    p.add_argument("--heatmap-downscale", type=int, default=1)
    _add_threads_flag(p)

    p = sub.add_parser("eval", help="evaluate detections against annotations")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["coco101", "voc"], default="coco101")
    p.add_argument("--iou-thresholds", default=None, help="comma-separated list")
    p.add_argument("--score-thresholds", default=None, help="comma-separated list")
    p.add_argument("--include-zero-iou", action="store_true")
    p.add_argument("--max-dets", type=int, default=None)
    _add_threads_flag(p)

    p = sub.add_parser("compare", help="before/after evaluation deltas")
    p.add_argument("--before", required=True)
    p.add_argument("--after", default=None)
    p.add_argument("--baseline-score", type=float, default=None)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["coco101", "voc"], default="coco101")
    p.add_argument("--iou-thresholds", default=None)
    _add_threads_flag(p)

    p = sub.add_parser("synth", help="generate a synthetic scene dataset")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-annotations", required=True)
    p.add_argument("--out-detections", required=True)
    p.add_argument("--out-labels", default=None)

    p = sub.add_parser("heatmap", help="render one (image, class) heatmap as PNG")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--image-id", type=int, required=True)
    p.add_argument("--class-id", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--heatmap-downscale", type=int, default=1)

    return parser


def _cmd_filter(args: argparse.Namespace) -> int:
    threads = _resolve_threads(args)
    index = coco_io.load_annotations(args.annotations)
    dets = coco_io.load_detections(args.detections, index)
    params = FilterParams(
        shift_fraction=args.shift_fraction,
        candidate_conf_threshold=args.conf_threshold,
        shift_basis=ShiftBasis(args.shift_basis),
    )
    kept, removed = sliding_filter(
        dets,
        index.dims_by_image,
        params,
        heatmap_downscale=args.heatmap_downscale,
        threads=threads,
    )
    coco_io.save_detections(kept, args.out)
    if args.removal_log:
        coco_io.save_removal_log(removed, args.removal_log)

    per_class: dict[int, int] = {}
    for r in removed:
        per_class[r.detection.class_id] = per_class.get(r.detection.class_id, 0) + 1
    print(
        f"params: shift-fraction={params.shift_fraction:g} "
        f"conf-threshold={params.candidate_conf_threshold:g} "
        f"shift-basis={params.shift_basis.value} "
        f"heatmap-downscale={args.heatmap_downscale}"
    )
    print(f"detections in:  {len(dets)}")
    print(f"removed:        {len(removed)}")
    print(f"kept:           {len(kept)}")
    for class_id in sorted(per_class):
        print(f"  class {class_id}: removed {per_class[class_id]}")
    print(f"wrote {args.out}")
    return 0


def _report_for(
    det_path: str,
    dets,
    index,
    args: argparse.Namespace,
    threads: int,
    extra_meta: dict | None = None,
) -> EvalReport:
    iou_thresholds = (
        _parse_float_list(args.iou_thresholds, "--iou-thresholds")
        if args.iou_thresholds
        else DEFAULT_IOU_THRESHOLDS
    )
    score_thresholds = (
        _parse_float_list(args.score_thresholds, "--score-thresholds")
        if getattr(args, "score_thresholds", None)
        else DEFAULT_SCORE_THRESHOLDS
    )
    metadata = {
        "inputs": _input_metadata(detections=det_path, annotations=args.annotations),
        "num_images": len(index.images),
        "num_detections": len(dets),
    }
    if extra_meta:
        metadata.update(extra_meta)
    return map_summary(
        dets,
        index.annotations,
        ApMode(args.mode),
        iou_thresholds=iou_thresholds,
        score_thresholds=score_thresholds,
        include_zero_iou=getattr(args, "include_zero_iou", False),
        max_dets=getattr(args, "max_dets", None),
        metadata=metadata,
        threads=threads,
    )


def _print_report(report: EvalReport) -> None:
    def fmt(v) -> str:
        return "absent" if v is None else f"{v:.4f}"

    print(
        f"mode={report.mode}  classes={len(report.class_ids)}  "
        f"gts={sum(report.gt_count.values())}"
    )
    print("class        gt   AP@0.50   AP@0.75   AP[mean]")
    for c in report.class_ids:
        ap50 = report.ap[c].get(0.5) if 0.5 in report.iou_thresholds else None
        ap75 = report.ap[c].get(0.75) if 0.75 in report.iou_thresholds else None
        ap_mean = sum(report.ap[c][t] for t in report.iou_thresholds) / len(
            report.iou_thresholds
        )
        print(f"{c:<10} {report.gt_count[c]:>4}   {fmt(ap50):>7}   {fmt(ap75):>7}   {fmt(ap_mean):>7}")
    print(
        f"mAP               {fmt(report.map_50):>7}   {fmt(report.map_75):>7}   "
        f"{fmt(report.map_mean):>7}"
    )
    count_thr = 0.5 if 0.5 in report.iou_thresholds else report.iou_thresholds[0]
    print(
        f"TP/FP @{count_thr:.2f}: {report.total_tp(count_thr)}/{report.total_fp(count_thr)}"
    )
    for s, v in report.mean_iou_by_score.items():
        print(f"mean IoU at score >= {s:g}: {fmt(v)}")


def _cmd_eval(args: argparse.Namespace) -> int:
    threads = _resolve_threads(args)
    index = coco_io.load_annotations(args.annotations)
    dets = coco_io.load_detections(args.detections, index)
    report = _report_for(args.detections, dets, index, args, threads)
    coco_io.save_report(report, args.out)
    _print_report(report)
    print(f"wrote {args.out}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    if (args.after is None) == (args.baseline_score is None):
        raise ValidationError("provide exactly one of --after or --baseline-score")
    threads = _resolve_threads(args)
    args.score_thresholds = None
    index = coco_io.load_annotations(args.annotations)
    before_dets = coco_io.load_detections(args.before, index)
    before = _report_for(args.before, before_dets, index, args, threads)

    if args.after is not None:
        after_dets = coco_io.load_detections(args.after, index)
        after = _report_for(args.after, after_dets, index, args, threads)
    else:
        s = args.baseline_score
        if not 0.0 <= s <= 1.0:
            raise ValidationError(f"--baseline-score must be in [0, 1], got {s}")
        after_dets = [d for d in before_dets if d.confidence >= s]
        after = _report_for(
            args.before,
            after_dets,
            index,
            args,
            threads,
            extra_meta={"baseline_score_threshold": s},
        )

    comparison = compare_reports(before, after)
    coco_io.save_report(comparison, args.out)

    def fmt(v) -> str:
        return "absent" if v is None else f"{v:.4f}"

    def fmt_pct(v) -> str:
        return "n/a" if v is None else f"{v:.2f}%"

    for name, d in comparison.map_deltas.items():
        print(
            f"{name:<10} before {fmt(d['before'])}  after {fmt(d['after'])}  "
            f"delta {fmt(d['delta'])}"
        )
    headline = 0.5 if 0.5 in comparison.iou_thresholds else comparison.iou_thresholds[0]
    c = comparison.counts[headline]
    print(
        f"TP@{headline:.2f}  {c['tp_before']} -> {c['tp_after']}  "
        f"(reduction {fmt_pct(c['tp_reduction_pct'])})"
    )
    print(
        f"FP@{headline:.2f}  {c['fp_before']} -> {c['fp_after']}  "
        f"(reduction {fmt_pct(c['fp_reduction_pct'])})"
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    doc = coco_io.load_json(args.spec)
    raw_specs = doc if isinstance(doc, list) else [doc]
    specs = [scene_spec_from_dict(d) for d in raw_specs]
    ann_doc, dets, tags = generate_dataset(specs)
    coco_io.save_json(ann_doc, args.out_annotations)
    coco_io.save_detections(dets, args.out_detections)
    if args.out_labels:
        coco_io.save_json(tags, args.out_labels)
    print(
        f"generated {len(specs)} scene(s): {len(ann_doc['annotations'])} objects, "
        f"{len(dets)} detections"
    )
    print(f"wrote {args.out_annotations}")
    print(f"wrote {args.out_detections}")
    return 0


def _cmd_heatmap(args: argparse.Namespace) -> int:
    from . import render  # optional dependency, imported on demand

    index = coco_io.load_annotations(args.annotations)
    dets = coco_io.load_detections(args.detections, index)
    dims = index.dims_by_image.get(args.image_id)
    if dims is None:
        raise ValidationError(f"image id {args.image_id} not in {args.annotations}")
    if args.class_id not in index.category_ids:
        raise ValidationError(f"class id {args.class_id} not in {args.annotations}")
    selected = [
        d for d in dets if d.image_id == args.image_id and d.class_id == args.class_id
    ]
    hm = build_heatmap(
        selected, dims, class_id=args.class_id, downscale=args.heatmap_downscale
    )
    render.save_heatmap_png(hm, args.out)
    print(f"{len(selected)} detections, total mass {hm.total_mass():.6g}")
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "filter": _cmd_filter,
    "eval": _cmd_eval,
    "compare": _cmd_compare,
    "synth": _cmd_synth,
    "heatmap": _cmd_heatmap,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except ValueError as e:  # ValidationError and domain-type invariants
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
