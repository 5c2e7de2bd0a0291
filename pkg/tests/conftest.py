"""Shared fixtures and independent reference implementations for tests.

The reference helpers here re-derive behavior from first principles (cell
center predicates, step-by-step greedy matching) so production code is
checked against something that shares no logic with it.
"""

from __future__ import annotations

import numpy as np
import pytest

from reflectguard import BoundingBox, Detection, GroundTruth, ImageDims


def brute_rasterize_cells(box: BoundingBox, dims: ImageDims) -> set[tuple[int, int]]:
    """All in-image (col, row) cells whose centers the half-open box contains."""
    return {
        (c, r)
        for r in range(dims.height)
        for c in range(dims.width)
        if box.y <= r + 0.5 < box.y + box.h and box.x <= c + 0.5 < box.x + box.w
    }


def reference_iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    return inter / (a.w * a.h + b.w * b.h - inter)


def reference_greedy_match(
    dets: list[Detection], gts: list[GroundTruth], iou_threshold: float
) -> list[int]:
    """Step-by-step greedy protocol; returns matched gt index per det (-1 = FP).

    Detections are visited in descending confidence with ties broken by
    original position; each claims the unmatched same-image same-class
    ground truth of highest IoU when that IoU meets the threshold.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    taken = [False] * len(gts)
    result = [-1] * len(dets)
    for i in order:
        best_iou, best_j = 0.0, -1
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            if g.image_id != dets[i].image_id or g.class_id != dets[i].class_id:
                continue
            v = reference_iou(dets[i].bbox, g.bbox)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= iou_threshold:
            taken[best_j] = True
            result[i] = best_j
    return result


def random_detections(
    rng: np.random.Generator,
    n: int,
    dims: ImageDims,
    *,
    image_id: int = 1,
    class_id: int = 1,
    allow_outside: bool = True,
) -> list[Detection]:
    dets = []
    lo = -5.0 if allow_outside else 0.0
    for _ in range(n):
        w = float(rng.uniform(0.5, dims.width))
        h = float(rng.uniform(0.5, dims.height))
        x = float(rng.uniform(lo, dims.width))
        y = float(rng.uniform(lo, dims.height))
        dets.append(
            Detection(image_id, class_id, BoundingBox(x, y, w, h), float(rng.uniform(0, 1)))
        )
    return dets


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
