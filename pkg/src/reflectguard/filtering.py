"""Sliding heat filter: drop low-confidence proposals that sit below hotter regions.

Water reflections mirror an object directly beneath it, so a proposal on a
reflection has a hotter region just above its own box. The filter builds a
confidence heatmap per (image, class), compares each proposal's mean heat
against the mean over the same box shifted upward, and removes the proposal
when the shifted mean is strictly higher and the proposal's confidence is
below the candidacy threshold. Decisions are made against the fixed heatmap
in a single pass; removals never trigger rebuilds.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Mapping, Sequence

from ._pool import ordered_parallel_map
from .errors import ValidationError
from .geometry import BoundingBox, ImageDims, shift_up
from .heatmap import Workspace, build_heatmap


@dataclass(frozen=True)
class Detection:
    """One detector proposal: where, what, and how confident."""

    image_id: int
    class_id: int
    bbox: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


class ShiftBasis(enum.Enum):
    """Whose height the upward shift fraction applies to."""

    IMAGE_HEIGHT = "image"
    BOX_HEIGHT = "box"


@dataclass(frozen=True)
class FilterParams:
    """Knobs of the sliding filter.

    shift_fraction: upward shift as a fraction of the shift basis height.
    candidate_conf_threshold: only proposals below this confidence are
        removal candidates; everything still contributes heat.
    shift_basis: image height (default) or the proposal's own box height.
    """

    shift_fraction: float = 0.01
    candidate_conf_threshold: float = 0.3
    shift_basis: ShiftBasis = ShiftBasis.IMAGE_HEIGHT

    def __post_init__(self) -> None:
        if self.shift_fraction <= 0:
            raise ValueError(f"shift_fraction must be > 0, got {self.shift_fraction}")
        if not 0.0 <= self.candidate_conf_threshold <= 1.0:
            raise ValueError(
                "candidate_conf_threshold must be in [0, 1], "
                f"got {self.candidate_conf_threshold}"
            )


@dataclass(frozen=True)
class RemovalRecord:
    """Audit record for one removed proposal.

    mean_heat is the heatmap mean over the proposal's box; shifted_mean_heat
    the mean over the box moved up by shift_px. Only proposals with
    shifted_mean_heat > mean_heat are ever removed, so that ordering holds
    for every record.
    """

    detection: Detection
    mean_heat: float
    shifted_mean_heat: float
    shift_px: float


def sliding_filter(
    detections: Sequence[Detection],
    image_dims: Mapping[int, ImageDims],
    params: FilterParams = FilterParams(),
    *,
    heatmap_downscale: int = 1,
    threads: int = 1,
) -> tuple[list[Detection], list[RemovalRecord]]:
    """Partition detections into (kept, removed) under the sliding heat filter.

    For each (image, class) group, a heatmap is built from ALL proposals of
    the group. A proposal is removed iff the mean heat over its box shifted
    up by shift_fraction * basis-height strictly exceeds the mean over the
    box itself AND its confidence is below candidate_conf_threshold. Both
    output lists preserve input order; kept + removed detections form the
    input as a multiset.

    Raises ValidationError when a detection references an image_id missing
    from image_dims.
    """
    for d in detections:
        if d.image_id not in image_dims:
            raise ValidationError(
                f"no image dimensions for image_id {d.image_id}"
            )

    groups: dict[tuple[int, int], list[tuple[int, Detection]]] = {}
    for idx, d in enumerate(detections):
        groups.setdefault((d.image_id, d.class_id), []).append((idx, d))

    # One workspace per worker thread: heatmap buffers are recycled across
    # groups, and each group's heatmap dies before the next build.
    local = threading.local()

    def process(group: list[tuple[int, Detection]]) -> list[tuple[int, Detection, bool, float, float, float]]:
        workspace = getattr(local, "workspace", None)
        if workspace is None:
            workspace = local.workspace = Workspace()
        image_id, class_id = group[0][1].image_id, group[0][1].class_id
        dims = image_dims[image_id]
        hm = build_heatmap(
            [d for _, d in group],
            dims,
            class_id=class_id,
            downscale=heatmap_downscale,
            workspace=workspace,
        )
        if params.shift_basis is ShiftBasis.IMAGE_HEIGHT:
            dy_fixed = params.shift_fraction * dims.height
        else:
            dy_fixed = None
        out = []
        for idx, d in group:
            dy = dy_fixed if dy_fixed is not None else params.shift_fraction * d.bbox.h
            mean_heat = hm.region_mean(d.bbox)
            shifted = hm.region_mean(shift_up(d.bbox, dy))
            remove = shifted > mean_heat and d.confidence < params.candidate_conf_threshold
            out.append((idx, d, remove, mean_heat, shifted, dy))
        return out

    results = ordered_parallel_map(process, list(groups.values()), threads)

    decisions = sorted((item for chunk in results for item in chunk), key=lambda t: t[0])
    kept: list[Detection] = []
    removed: list[RemovalRecord] = []
    for _, d, remove, mean_heat, shifted, dy in decisions:
        if remove:
            removed.append(RemovalRecord(d, mean_heat, shifted, dy))
        else:
            kept.append(d)
    return kept, removed
