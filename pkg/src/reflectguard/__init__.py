"""reflectguard: reflection false-positive removal and detection evaluation.

Detector-agnostic post-processing: build per-image, per-class confidence
heatmaps from raw proposals, drop low-confidence proposals whose upward-
shifted box sits under a hotter region (the signature of a water-surface
reflection below a real object), and quantify the effect with a built-in
mAP / TP / FP evaluation engine.
"""

from ._version import __version__
from .coco_io import (
    Category,
    DatasetIndex,
    DetectionFile,
    ImageInfo,
    file_digest,
    load_annotations,
    load_detections,
    save_detections,
    save_removal_log,
    save_report,
)
from .errors import ValidationError
from .evaluation import (
    ApMode,
    ComparisonReport,
    EvalReport,
    GroundTruth,
    MatchResult,
    average_precision,
    compare_reports,
    map_summary,
    match,
    mean_iou_at_score,
)
from .filtering import (
    Detection,
    FilterParams,
    RemovalRecord,
    ShiftBasis,
    sliding_filter,
)
from .geometry import BoundingBox, ImageDims, PixelRegion, iou, rasterize, shift_up
from .heatmap import Heatmap, build_heatmap, region_mean, render_heatmap
from .synth import (
    ProposalNoise,
    SceneSpec,
    generate,
    generate_dataset,
    mirror_box,
    oracle_sliding_filter,
)

__all__ = [
    "__version__",
    "ApMode",
    "BoundingBox",
    "Category",
    "ComparisonReport",
    "DatasetIndex",
    "Detection",
    "DetectionFile",
    "EvalReport",
    "FilterParams",
    "GroundTruth",
    "Heatmap",
    "ImageDims",
    "ImageInfo",
    "MatchResult",
    "ProposalNoise",
    "PixelRegion",
    "RemovalRecord",
    "SceneSpec",
    "ShiftBasis",
    "ValidationError",
    "average_precision",
    "build_heatmap",
    "compare_reports",
    "file_digest",
    "generate",
    "generate_dataset",
    "iou",
    "load_annotations",
    "load_detections",
    "map_summary",
    "match",
    "mean_iou_at_score",
    "mirror_box",
    "oracle_sliding_filter",
    "rasterize",
    "region_mean",
    "render_heatmap",
    "save_detections",
    "save_removal_log",
    "save_report",
    "shift_up",
    "sliding_filter",
]
