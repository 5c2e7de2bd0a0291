"""Detection evaluation: greedy matching, AP/mAP, TP/FP counts, mean IoU.

Matching follows the COCO-style greedy protocol: detections are visited in
descending confidence (ties broken by original input order) and each one
claims the unmatched ground truth with the highest IoU, provided that IoU
meets the threshold. AP supports two interpolation modes: the 101-point
recall sampling used by the COCO tooling and the all-point area-under-curve
used by VOC-style tools.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._pool import ordered_parallel_map
from .errors import ValidationError
from .filtering import Detection
from .geometry import BoundingBox, iou

DEFAULT_IOU_THRESHOLDS: tuple[float, ...] = tuple(
    round(0.5 + 0.05 * i, 2) for i in range(10)
)
DEFAULT_SCORE_THRESHOLDS: tuple[float, ...] = (0.05, 0.3, 0.5, 0.7)

# COCO size buckets on box area, in square pixels.
_SMALL_AREA = 32.0**2
_MEDIUM_AREA = 96.0**2

_RECALL_POINTS = np.round(np.linspace(0.0, 1.0, 101), 2)


@dataclass(frozen=True)
class GroundTruth:
    """One annotated object."""

    image_id: int
    class_id: int
    bbox: BoundingBox


class ApMode(enum.Enum):
    """AP interpolation rule."""

    COCO101 = "coco101"
    VOC_ALL_POINT = "voc"


@dataclass
class MatchResult:
    """Greedy matching outcome at one IoU threshold.

    Arrays are aligned with the input detection / ground-truth lists:
    det_is_tp flags each detection, det_match_gt holds the matched GT index
    (-1 for false positives), det_match_iou the matching IoU (0 for FPs),
    gt_matched flags each ground truth.
    """

    iou_threshold: float
    det_is_tp: np.ndarray
    det_match_gt: np.ndarray
    det_match_iou: np.ndarray
    gt_matched: np.ndarray

    @property
    def num_tp(self) -> int:
        return int(self.det_is_tp.sum())

    @property
    def num_fp(self) -> int:
        return int(len(self.det_is_tp) - self.det_is_tp.sum())


def _confidence_order(dets: Sequence[Detection], indices: Sequence[int]) -> list[int]:
    """Indices sorted by confidence descending, ties by original position."""
    return sorted(indices, key=lambda i: (-dets[i].confidence, i))


def match(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float,
    *,
    threads: int = 1,
) -> MatchResult:
    """Greedily match detections to ground truths at one IoU threshold.

    Groups by (image, class) internally, so mixed-image or mixed-class
    inputs are matched correctly. Each ground truth is claimed at most
    once; a detection is a TP iff its best unmatched-GT IoU reaches the
    threshold. Equal-IoU ties go to the earliest ground truth.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValidationError(f"iou_threshold must be in (0, 1], got {iou_threshold}")

    det_is_tp = np.zeros(len(dets), dtype=bool)
    det_match_gt = np.full(len(dets), -1, dtype=np.int64)
    det_match_iou = np.zeros(len(dets), dtype=np.float64)
    gt_matched = np.zeros(len(gts), dtype=bool)

    det_groups: dict[tuple[int, int], list[int]] = {}
    for i, d in enumerate(dets):
        det_groups.setdefault((d.image_id, d.class_id), []).append(i)
    gt_groups: dict[tuple[int, int], list[int]] = {}
    for j, g in enumerate(gts):
        gt_groups.setdefault((g.image_id, g.class_id), []).append(j)

    def process(key: tuple[int, int]) -> list[tuple[int, int, float]]:
        matches: list[tuple[int, int, float]] = []
        gt_idx = gt_groups.get(key, [])
        if not gt_idx:
            return matches
        taken = [False] * len(gt_idx)
        for i in _confidence_order(dets, det_groups[key]):
            best_iou = 0.0
            best_pos = -1
            for pos, j in enumerate(gt_idx):
                if taken[pos]:
                    continue
                v = iou(dets[i].bbox, gts[j].bbox)
                if v > best_iou:
                    best_iou = v
                    best_pos = pos
            if best_pos >= 0 and best_iou >= iou_threshold:
                taken[best_pos] = True
                matches.append((i, gt_idx[best_pos], best_iou))
        return matches

    keys = list(det_groups.keys())
    for matches in ordered_parallel_map(process, keys, threads):
        for i, j, v in matches:
            det_is_tp[i] = True
            det_match_gt[i] = j
            det_match_iou[i] = v
            gt_matched[j] = True

    return MatchResult(iou_threshold, det_is_tp, det_match_gt, det_match_iou, gt_matched)


def _pr_curve(
    dets: Sequence[Detection],
    matched: MatchResult,
) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall rank-by-rank, detections in confidence order."""
    order = _confidence_order(dets, range(len(dets)))
    tp_flags = matched.det_is_tp[order]
    tp_cum = np.cumsum(tp_flags)
    fp_cum = np.cumsum(~tp_flags)
    n_gt = len(matched.gt_matched)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    return precision, recall


def _ap_from_curve(precision: np.ndarray, recall: np.ndarray, mode: ApMode) -> float:
    if mode is ApMode.COCO101:
        if len(precision) == 0:
            return 0.0
        envelope = np.maximum.accumulate(precision[::-1])[::-1]
        inds = np.searchsorted(recall, _RECALL_POINTS, side="left")
        sampled = np.where(
            inds < len(envelope), envelope[np.minimum(inds, len(envelope) - 1)], 0.0
        )
        return float(sampled.mean())
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    changed = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def _cap_per_image(dets: Sequence[Detection], max_dets: int) -> list[Detection]:
    """Keep at most max_dets highest-confidence detections per image."""
    by_image: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        by_image.setdefault(d.image_id, []).append(i)
    keep: set[int] = set()
    for indices in by_image.values():
        keep.update(_confidence_order(dets, indices)[:max_dets])
    return [d for i, d in enumerate(dets) if i in keep]


def average_precision(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_threshold: float,
    mode: ApMode = ApMode.COCO101,
    *,
    max_dets: int | None = None,
) -> float | None:
    """AP for a single class across all images, or None when no GT exists.

    None distinguishes "the class has no objects" (AP undefined) from
    "every object was missed" (AP 0); absent classes must not drag mAP
    down.
    """
    if len(gts) == 0:
        return None
    if max_dets is not None:
        dets = _cap_per_image(dets, max_dets)
    matched = match(dets, gts, iou_threshold)
    precision, recall = _pr_curve(dets, matched)
    return _ap_from_curve(precision, recall, mode)


@dataclass
class EvalReport:
    """Per-class AP at each IoU threshold plus counts and mean-IoU tables.

    class_ids lists the classes present in ground truth; classes with no
    GT are excluded entirely (never averaged as zero). Detections of
    classes absent from GT do not enter any figure.
    """

    mode: str
    iou_thresholds: tuple[float, ...]
    class_ids: tuple[int, ...]
    ap: dict[int, dict[float, float]]
    tp: dict[int, dict[float, int]]
    fp: dict[int, dict[float, int]]
    gt_count: dict[int, int]
    gt_size_counts: dict[str, int]
    mean_iou_by_score: dict[float, float | None]
    metadata: dict = field(default_factory=dict)

    def map_at(self, iou_threshold: float) -> float | None:
        if not self.class_ids:
            return None
        return float(
            np.mean([self.ap[c][iou_threshold] for c in self.class_ids])
        )

    @property
    def map_mean(self) -> float | None:
        """Mean AP over every evaluated class and IoU threshold."""
        if not self.class_ids:
            return None
        values = [self.ap[c][t] for c in self.class_ids for t in self.iou_thresholds]
        return float(np.mean(values))

    @property
    def map_50(self) -> float | None:
        return self.map_at(0.5) if 0.5 in self.iou_thresholds else None

    @property
    def map_75(self) -> float | None:
        return self.map_at(0.75) if 0.75 in self.iou_thresholds else None

    def total_tp(self, iou_threshold: float) -> int:
        return sum(self.tp[c][iou_threshold] for c in self.class_ids)

    def total_fp(self, iou_threshold: float) -> int:
        return sum(self.fp[c][iou_threshold] for c in self.class_ids)

    def to_json_dict(self) -> dict:
        thr_key = "{:.2f}".format
        return {
            "mode": self.mode,
            "iou_thresholds": list(self.iou_thresholds),
            "map": {
                "map_50_95": self.map_mean,
                "map_50": self.map_50,
                "map_75": self.map_75,
                "by_threshold": {
                    thr_key(t): self.map_at(t) for t in self.iou_thresholds
                },
            },
            "classes": [
                {
                    "class_id": c,
                    "gt_count": self.gt_count[c],
                    "ap": {thr_key(t): self.ap[c][t] for t in self.iou_thresholds},
                    "tp": {thr_key(t): self.tp[c][t] for t in self.iou_thresholds},
                    "fp": {thr_key(t): self.fp[c][t] for t in self.iou_thresholds},
                }
                for c in self.class_ids
            ],
            "totals": {
                thr_key(t): {"tp": self.total_tp(t), "fp": self.total_fp(t)}
                for t in self.iou_thresholds
            },
            "mean_iou_at_score": {
                f"{s:g}": v for s, v in self.mean_iou_by_score.items()
            },
            "gt": {
                "total": sum(self.gt_count.values()),
                "size_counts": dict(self.gt_size_counts),
            },
            "metadata": dict(self.metadata),
        }


def mean_iou_at_score(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    score_threshold: float,
    *,
    include_zero: bool = False,
) -> float | None:
    """Mean best-IoU of detections at or above a confidence threshold.

    Each qualifying detection contributes its maximum IoU against the
    ground truths of the same image and class. By default detections that
    overlap no ground truth at all are excluded from the average (they
    have no object to be measured against); include_zero=True averages
    them in as zeros instead. Returns None when nothing qualifies.
    """
    if not 0.0 <= score_threshold <= 1.0:
        raise ValidationError(
            f"score_threshold must be in [0, 1], got {score_threshold}"
        )
    gt_boxes: dict[tuple[int, int], list[BoundingBox]] = {}
    for g in gts:
        gt_boxes.setdefault((g.image_id, g.class_id), []).append(g.bbox)

    values = []
    for d in dets:
        if d.confidence < score_threshold:
            continue
        candidates = gt_boxes.get((d.image_id, d.class_id), [])
        best = max((iou(d.bbox, b) for b in candidates), default=0.0)
        if best > 0.0 or include_zero:
            values.append(best)
    if not values:
        return None
    return float(np.mean(values))


def _size_bucket(b: BoundingBox) -> str:
    area = b.area()
    if area < _SMALL_AREA:
        return "small"
    if area < _MEDIUM_AREA:
        return "medium"
    return "large"


def map_summary(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    mode: ApMode = ApMode.COCO101,
    *,
    iou_thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    score_thresholds: Sequence[float] = DEFAULT_SCORE_THRESHOLDS,
    include_zero_iou: bool = False,
    max_dets: int | None = None,
    metadata: Mapping | None = None,
    threads: int = 1,
) -> EvalReport:
    """Full evaluation report over a consistent category universe.

    Per-class AP and TP/FP counts at every requested IoU threshold, mAP
    figures averaged over classes present in ground truth, and the
    mean-IoU-at-score table.
    """
    iou_thresholds = tuple(iou_thresholds)
    if not iou_thresholds:
        raise ValidationError("at least one IoU threshold is required")
    class_ids = tuple(sorted({g.class_id for g in gts}))

    if max_dets is not None:
        dets = _cap_per_image(dets, max_dets)

    dets_by_class: dict[int, list[Detection]] = {c: [] for c in class_ids}
    for d in dets:
        if d.class_id in dets_by_class:
            dets_by_class[d.class_id].append(d)
    gts_by_class: dict[int, list[GroundTruth]] = {c: [] for c in class_ids}
    for g in gts:
        gts_by_class[g.class_id].append(g)

    tasks = [(c, t) for c in class_ids for t in iou_thresholds]

    def evaluate(task: tuple[int, float]) -> tuple[float, int, int]:
        c, t = task
        matched = match(dets_by_class[c], gts_by_class[c], t)
        precision, recall = _pr_curve(dets_by_class[c], matched)
        return _ap_from_curve(precision, recall, mode), matched.num_tp, matched.num_fp

    results = ordered_parallel_map(evaluate, tasks, threads)

    ap: dict[int, dict[float, float]] = {c: {} for c in class_ids}
    tp: dict[int, dict[float, int]] = {c: {} for c in class_ids}
    fp: dict[int, dict[float, int]] = {c: {} for c in class_ids}
    for (c, t), (ap_v, tp_v, fp_v) in zip(tasks, results):
        ap[c][t] = ap_v
        tp[c][t] = tp_v
        fp[c][t] = fp_v

    size_counts = {"small": 0, "medium": 0, "large": 0}
    for g in gts:
        size_counts[_size_bucket(g.bbox)] += 1

    return EvalReport(
        mode=mode.value,
        iou_thresholds=iou_thresholds,
        class_ids=class_ids,
        ap=ap,
        tp=tp,
        fp=fp,
        gt_count={c: len(gts_by_class[c]) for c in class_ids},
        gt_size_counts=size_counts,
        mean_iou_by_score={
            s: mean_iou_at_score(dets, gts, s, include_zero=include_zero_iou)
            for s in score_thresholds
        },
        metadata=dict(metadata) if metadata else {},
    )


def _reduction_pct(before: float, after: float) -> float | None:
    if before == 0:
        return None
    return (before - after) / before * 100.0


def _signed_pct(before: float | None, after: float | None) -> float | None:
    if before is None or after is None or before == 0:
        return None
    return (after - before) / before * 100.0


@dataclass
class ComparisonReport:
    """Before/after deltas between two evaluation reports."""

    iou_thresholds: tuple[float, ...]
    map_deltas: dict[str, dict]
    counts: dict[float, dict]
    fp_reduction_pct: float | None
    tp_reduction_pct: float | None
    before: EvalReport
    after: EvalReport

    def to_json_dict(self) -> dict:
        return {
            "fp_reduction_pct": self.fp_reduction_pct,
            "tp_reduction_pct": self.tp_reduction_pct,
            "map_deltas": self.map_deltas,
            "counts": {f"{t:.2f}": v for t, v in self.counts.items()},
            "before": self.before.to_json_dict(),
            "after": self.after.to_json_dict(),
        }


def compare_reports(before: EvalReport, after: EvalReport) -> ComparisonReport:
    """Absolute and percentage deltas for counts and every mAP figure.

    Headline fp/tp reduction percentages are taken at IoU 0.5 when that
    threshold was evaluated, else at the first common threshold. Requires
    the same category universe on both sides.
    """
    if set(before.class_ids) != set(after.class_ids):
        raise ValidationError(
            "reports cover different category sets: "
            f"{sorted(before.class_ids)} vs {sorted(after.class_ids)}"
        )
    common = tuple(t for t in before.iou_thresholds if t in after.iou_thresholds)
    if not common:
        raise ValidationError("reports share no IoU thresholds")

    map_deltas = {}
    for name, b, a in (
        ("map_50_95", before.map_mean, after.map_mean),
        ("map_50", before.map_50, after.map_50),
        ("map_75", before.map_75, after.map_75),
    ):
        delta = None if (b is None or a is None) else a - b
        map_deltas[name] = {
            "before": b,
            "after": a,
            "delta": delta,
            "pct_change": _signed_pct(b, a),
        }

    counts: dict[float, dict] = {}
    for t in common:
        tp_b, tp_a = before.total_tp(t), after.total_tp(t)
        fp_b, fp_a = before.total_fp(t), after.total_fp(t)
        counts[t] = {
            "tp_before": tp_b,
            "tp_after": tp_a,
            "tp_delta": tp_a - tp_b,
            "tp_reduction_pct": _reduction_pct(tp_b, tp_a),
            "fp_before": fp_b,
            "fp_after": fp_a,
            "fp_delta": fp_a - fp_b,
            "fp_reduction_pct": _reduction_pct(fp_b, fp_a),
        }

    headline = 0.5 if 0.5 in common else common[0]
    return ComparisonReport(
        iou_thresholds=common,
        map_deltas=map_deltas,
        counts=counts,
        fp_reduction_pct=counts[headline]["fp_reduction_pct"],
        tp_reduction_pct=counts[headline]["tp_reduction_pct"],
        before=before,
        after=after,
    )
