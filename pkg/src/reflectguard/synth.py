"""Synthetic mirror-reflection scenes and brute-force oracles.

Scenes model the phenomenon the filter targets: objects sit above a
horizontal waterline and each one casts an exact mirror image below it.
Proposals cluster on both, with reflection proposals at a fraction of the
object confidence. Generation is fully deterministic for a given seed.

Generated confidences are quantized to multiples of 1/1024. Sums of such
values (at the scales this module produces) are exact in float64, so the
production filter and the per-pixel oracle here compute bit-identical
region means and must agree decision-for-decision, not just approximately.

The oracle functions re-derive everything from first principles: pixel
membership by testing each cell center, accumulation by adding confidence
over every covered cell, means by direct summation. No difference arrays,
no summed-area tables, no shared helpers with the production path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .evaluation import GroundTruth
from .filtering import Detection, FilterParams, RemovalRecord, ShiftBasis
from .geometry import BoundingBox, ImageDims

CONF_QUANTUM = 1.0 / 1024.0

OBJECT_TAG = "object"
REFLECTION_TAG = "reflection"


def quantize_conf(c: float) -> float:
    """Snap a confidence to the nearest multiple of 1/1024, clamped to [0, 1]."""
    return min(1.0, max(0.0, round(c * 1024.0) / 1024.0))


def mirror_box(b: BoundingBox, waterline_y: float) -> BoundingBox:
    """Mirror a box about a horizontal line; x extent is unchanged."""
    return BoundingBox(b.x, 2.0 * waterline_y - b.y - b.h, b.w, b.h)


@dataclass(frozen=True)
class ProposalNoise:
    """Jitter magnitudes for generated proposals.

    center_px: max absolute center shift per axis, in pixels.
    size_frac: max relative size change per dimension.
    conf: max absolute confidence jitter (applied before scaling).
    """

    center_px: float = 2.0
    size_frac: float = 0.05
    conf: float = 0.02

    def __post_init__(self) -> None:
        if self.center_px < 0 or not 0 <= self.size_frac < 1 or self.conf < 0:
            raise ValidationError(f"invalid proposal noise {self}")


@dataclass(frozen=True)
class SceneSpec:
    """One synthetic image: objects above a waterline, mirrors below it."""

    dims: ImageDims
    waterline_y: float
    objects: tuple[BoundingBox, ...]
    reflection_conf_scale: float = 0.15
    noise: ProposalNoise = field(default_factory=ProposalNoise)
    proposals_per_object: int = 3
    base_conf: float = 0.85
    seed: int = 0
    image_id: int = 1
    class_id: int = 1
    file_name: str = ""

    def __post_init__(self) -> None:
        if not 0 < self.waterline_y < self.dims.height:
            raise ValidationError(
                f"waterline_y {self.waterline_y} outside image of height "
                f"{self.dims.height}"
            )
        if not 0 < self.reflection_conf_scale < 1:
            raise ValidationError(
                f"reflection_conf_scale must be in (0, 1), got "
                f"{self.reflection_conf_scale}"
            )
        if self.proposals_per_object < 1:
            raise ValidationError("proposals_per_object must be >= 1")
        if not 0 < self.base_conf <= 1:
            raise ValidationError(f"base_conf must be in (0, 1], got {self.base_conf}")
        for i, b in enumerate(self.objects):
            if b.x < 0 or b.x2 > self.dims.width or b.y < 0:
                raise ValidationError(f"object {i} extends outside the image: {b}")
            if b.y2 > self.waterline_y:
                raise ValidationError(
                    f"object {i} crosses the waterline at y={self.waterline_y}: {b}"
                )
            m = mirror_box(b, self.waterline_y)
            if m.y2 > self.dims.height:
                raise ValidationError(
                    f"mirror of object {i} falls outside the image: {m}"
                )


def _jitter_box(b: BoundingBox, noise: ProposalNoise, rng: np.random.Generator) -> BoundingBox:
    if noise.center_px == 0 and noise.size_frac == 0:
        return b
    dx = rng.uniform(-noise.center_px, noise.center_px)
    dy = rng.uniform(-noise.center_px, noise.center_px)
    sw = 1.0 + rng.uniform(-noise.size_frac, noise.size_frac)
    sh = 1.0 + rng.uniform(-noise.size_frac, noise.size_frac)
    cx = b.x + b.w / 2.0 + dx
    cy = b.y + b.h / 2.0 + dy
    w = b.w * sw
    h = b.h * sh
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)


def generate(spec: SceneSpec) -> tuple[list[GroundTruth], list[Detection], list[str]]:
    """Build (ground truths, detections, provenance tags) for one scene.

    Ground truths are the object boxes. Detections are jittered proposals
    on each object at roughly base_conf, followed by jittered proposals on
    each mirrored box at reflection_conf_scale times that. Tags mark each
    detection "object" or "reflection" so filter precision can be scored.
    """
    rng = np.random.default_rng(spec.seed)
    gts = [GroundTruth(spec.image_id, spec.class_id, b) for b in spec.objects]
    dets: list[Detection] = []
    tags: list[str] = []
    for b in spec.objects:
        for _ in range(spec.proposals_per_object):
            conf = spec.base_conf
            if spec.noise.conf > 0:
                conf += rng.uniform(-spec.noise.conf, spec.noise.conf)
            dets.append(
                Detection(
                    spec.image_id,
                    spec.class_id,
                    _jitter_box(b, spec.noise, rng),
                    quantize_conf(conf),
                )
            )
            tags.append(OBJECT_TAG)
    for b in spec.objects:
        m = mirror_box(b, spec.waterline_y)
        for _ in range(spec.proposals_per_object):
            conf = spec.base_conf
            if spec.noise.conf > 0:
                conf += rng.uniform(-spec.noise.conf, spec.noise.conf)
            conf *= spec.reflection_conf_scale
            dets.append(
                Detection(
                    spec.image_id,
                    spec.class_id,
                    _jitter_box(m, spec.noise, rng),
                    quantize_conf(conf),
                )
            )
            tags.append(REFLECTION_TAG)
    return gts, dets, tags


def scene_spec_from_dict(d: Mapping) -> SceneSpec:
    """Parse a scene spec from its JSON form (see README for the schema)."""
    try:
        dims = ImageDims(int(d["width"]), int(d["height"]))
        objects = tuple(
            BoundingBox(float(x), float(y), float(w), float(h))
            for x, y, w, h in d["objects"]
        )
        noise_d = d.get("noise", {})
        noise = ProposalNoise(
            center_px=float(noise_d.get("center_px", 2.0)),
            size_frac=float(noise_d.get("size_frac", 0.05)),
            conf=float(noise_d.get("conf", 0.02)),
        )
        return SceneSpec(
            dims=dims,
            waterline_y=float(d["waterline_y"]),
            objects=objects,
            reflection_conf_scale=float(d.get("reflection_conf_scale", 0.15)),
            noise=noise,
            proposals_per_object=int(d.get("proposals_per_object", 3)),
            base_conf=float(d.get("base_conf", 0.85)),
            seed=int(d.get("seed", 0)),
            image_id=int(d.get("image_id", 1)),
            class_id=int(d.get("class_id", 1)),
            file_name=str(d.get("file_name", "")),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"invalid scene spec: {e!r}") from e


def generate_dataset(
    specs: Sequence[SceneSpec],
) -> tuple[dict, list[Detection], list[str]]:
    """Generate scenes and assemble a COCO annotation document for them.

    Returns (annotation document, detections across scenes, tags). Scene
    image ids must be distinct.
    """
    ids = [s.image_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"scene image ids are not unique: {ids}")
    images = []
    annotations = []
    class_ids: set[int] = set()
    all_dets: list[Detection] = []
    all_tags: list[str] = []
    ann_id = 1
    for spec in specs:
        images.append(
            {
                "id": spec.image_id,
                "width": spec.dims.width,
                "height": spec.dims.height,
                "file_name": spec.file_name or f"scene_{spec.image_id:06d}.png",
            }
        )
        class_ids.add(spec.class_id)
        gts, dets, tags = generate(spec)
        for g in gts:
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": g.image_id,
                    "category_id": g.class_id,
                    "bbox": [g.bbox.x, g.bbox.y, g.bbox.w, g.bbox.h],
                    "area": g.bbox.area(),
                    "iscrowd": 0,
                }
            )
            ann_id += 1
        all_dets.extend(dets)
        all_tags.extend(tags)
    doc = {
        "images": images,
        "categories": [{"id": c, "name": f"class_{c}"} for c in sorted(class_ids)],
        "annotations": annotations,
    }
    return doc, all_dets, all_tags


def _covered_rows_cols(
    b: BoundingBox, dims: ImageDims
) -> tuple[list[int], list[int]]:
    """In-image rows and columns whose cell centers the box contains."""
    rows = [r for r in range(dims.height) if b.y <= r + 0.5 < b.y + b.h]
    cols = [c for c in range(dims.width) if b.x <= c + 0.5 < b.x + b.w]
    return rows, cols


def brute_force_grid(dets: Sequence[Detection], dims: ImageDims) -> np.ndarray:
    """Reference heatmap: add each confidence over every covered cell.

    Accumulates in the same canonical order as the production builder so
    the two grids agree exactly even for non-quantized confidences.
    """
    grid = np.zeros((dims.height, dims.width), dtype=np.float64)
    ordered = sorted(
        dets, key=lambda d: (d.confidence, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h)
    )
    for d in ordered:
        rows, cols = _covered_rows_cols(d.bbox, dims)
        if rows and cols:
            grid[np.ix_(rows, cols)] += d.confidence
    return grid


def brute_region_mean(grid: np.ndarray, b: BoundingBox) -> float:
    """Reference region mean: direct sum over covered in-image cells."""
    h, w = grid.shape
    rows, cols = _covered_rows_cols(b, ImageDims(w, h))
    if not rows or not cols:
        return 0.0
    return float(np.sum(grid[np.ix_(rows, cols)])) / (len(rows) * len(cols))


def oracle_sliding_filter(
    detections: Sequence[Detection],
    image_dims: Mapping[int, ImageDims],
    params: FilterParams = FilterParams(),
) -> tuple[list[Detection], list[RemovalRecord]]:
    """Reference implementation of the sliding heat filter.

    Same contract as filtering.sliding_filter, computed with per-pixel
    loops and direct sums only. Used to cross-check the production path.
    """
    for d in detections:
        if d.image_id not in image_dims:
            raise ValidationError(f"no image dimensions for image_id {d.image_id}")

    groups: dict[tuple[int, int], list[Detection]] = {}
    for d in detections:
        groups.setdefault((d.image_id, d.class_id), []).append(d)
    grids = {
        key: brute_force_grid(group, image_dims[key[0]])
        for key, group in groups.items()
    }

    kept: list[Detection] = []
    removed: list[RemovalRecord] = []
    for d in detections:
        grid = grids[(d.image_id, d.class_id)]
        if params.shift_basis is ShiftBasis.IMAGE_HEIGHT:
            dy = params.shift_fraction * image_dims[d.image_id].height
        else:
            dy = params.shift_fraction * d.bbox.h
        mean_heat = brute_region_mean(grid, d.bbox)
        shifted_box = BoundingBox(d.bbox.x, d.bbox.y - dy, d.bbox.w, d.bbox.h)
        shifted_mean = brute_region_mean(grid, shifted_box)
        if shifted_mean > mean_heat and d.confidence < params.candidate_conf_threshold:
            removed.append(RemovalRecord(d, mean_heat, shifted_mean, dy))
        else:
            kept.append(d)
    return kept, removed
