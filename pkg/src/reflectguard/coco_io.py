"""COCO-style JSON ingestion and deterministic serialization.

Annotation files follow the COCO detection schema (images, categories,
annotations); detection files are flat COCO "results" arrays. Ingestion is
fail-closed: any invalid record rejects the whole file, so evaluation
numbers can never silently exclude data. Writers are atomic (temp file +
rename) and deterministic: fixed key order and floats at 6 significant
digits, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ._version import __version__
from .errors import ValidationError
from .evaluation import GroundTruth
from .filtering import Detection, RemovalRecord
from .geometry import BoundingBox, ImageDims

DetectionFile = list[Detection]


@dataclass(frozen=True)
class ImageInfo:
    id: int
    file_name: str
    dims: ImageDims


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass
class DatasetIndex:
    """Validated view of one annotation file."""

    images: list[ImageInfo]
    categories: list[Category]
    annotations: list[GroundTruth]

    @property
    def dims_by_image(self) -> dict[int, ImageDims]:
        return {im.id: im.dims for im in self.images}

    @property
    def image_ids(self) -> set[int]:
        return {im.id for im in self.images}

    @property
    def category_ids(self) -> set[int]:
        return {c.id for c in self.categories}


def load_json(path: str | Path):
    """Read a JSON document; malformed input raises ValidationError with a byte offset."""
    with open(path, "rb") as f:
        data = f.read()
    try:
        return json.loads(data)
    except json.JSONDecodeError as e:
        raise ValidationError(
            f"{path}: invalid JSON at byte offset {e.pos}: {e.msg}"
        ) from e


def _require_int(record: dict, key: str, where: str) -> int:
    v = record.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{where}: missing or non-integer field '{key}'")
    return v


def _require_number(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"{where}: expected a finite number, got {v!r}")
    return float(v)


def _parse_bbox(record: dict, where: str) -> list[float]:
    bbox = record.get("bbox")
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise ValidationError(f"{where}: field 'bbox' must be a list of 4 numbers")
    return [_require_number(v, f"{where}: bbox[{i}]") for i, v in enumerate(bbox)]


def load_annotations(path: str | Path) -> DatasetIndex:
    """Parse and validate a COCO annotation file.

    Raises ValidationError for malformed JSON (with byte offset), for
    schema violations (naming the offending record and field), and for
    annotations with non-positive box sizes or dangling references.
    """
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: top level must be a JSON object")
    for key in ("images", "categories", "annotations"):
        if not isinstance(doc.get(key), list):
            raise ValidationError(f"{path}: missing or non-array section '{key}'")

    images: list[ImageInfo] = []
    seen_images: set[int] = set()
    for i, rec in enumerate(doc["images"]):
        where = f"{path}: images[{i}]"
        if not isinstance(rec, dict):
            raise ValidationError(f"{where}: not an object")
        image_id = _require_int(rec, "id", where)
        where = f"{path}: image id {image_id}"
        if image_id in seen_images:
            raise ValidationError(f"{where}: duplicate image id")
        seen_images.add(image_id)
        width = _require_int(rec, "width", where)
        height = _require_int(rec, "height", where)
        if width <= 0 or height <= 0:
            raise ValidationError(f"{where}: non-positive dimensions {width}x{height}")
        file_name = rec.get("file_name")
        if not isinstance(file_name, str):
            raise ValidationError(f"{where}: missing field 'file_name'")
        images.append(ImageInfo(image_id, file_name, ImageDims(width, height)))

    categories: list[Category] = []
    seen_cats: set[int] = set()
    for i, rec in enumerate(doc["categories"]):
        where = f"{path}: categories[{i}]"
        if not isinstance(rec, dict):
            raise ValidationError(f"{where}: not an object")
        cat_id = _require_int(rec, "id", where)
        if cat_id in seen_cats:
            raise ValidationError(f"{path}: category id {cat_id}: duplicate id")
        seen_cats.add(cat_id)
        name = rec.get("name")
        if not isinstance(name, str):
            raise ValidationError(f"{path}: category id {cat_id}: missing field 'name'")
        categories.append(Category(cat_id, name))

    annotations: list[GroundTruth] = []
    bad_boxes: list = []
    for i, rec in enumerate(doc["annotations"]):
        where = f"{path}: annotations[{i}]"
        if not isinstance(rec, dict):
            raise ValidationError(f"{where}: not an object")
        ann_label = rec.get("id", i)
        where = f"{path}: annotation {ann_label}"
        image_id = _require_int(rec, "image_id", where)
        category_id = _require_int(rec, "category_id", where)
        if image_id not in seen_images:
            raise ValidationError(f"{where}: references unknown image_id {image_id}")
        if category_id not in seen_cats:
            raise ValidationError(
                f"{where}: references unknown category_id {category_id}"
            )
        x, y, w, h = _parse_bbox(rec, where)
        if w <= 0 or h <= 0:
            bad_boxes.append(ann_label)
            continue
        annotations.append(GroundTruth(image_id, category_id, BoundingBox(x, y, w, h)))

    if bad_boxes:
        raise ValidationError(
            f"{path}: annotations with non-positive box size, ids {bad_boxes}"
        )
    return DatasetIndex(images, categories, annotations)


def load_detections(path: str | Path, index: DatasetIndex) -> DetectionFile:
    """Parse and validate a COCO results array against a dataset index.

    Fail-closed: records referencing unknown image or category ids, or
    carrying invalid boxes/scores, reject the whole file.
    """
    doc = load_json(path)
    if not isinstance(doc, list):
        raise ValidationError(f"{path}: top level must be a JSON array")

    image_ids = index.image_ids
    category_ids = index.category_ids
    detections: list[Detection] = []
    unknown_images: dict[int, list[int]] = {}
    unknown_cats: dict[int, list[int]] = {}
    for i, rec in enumerate(doc):
        where = f"{path}: detections[{i}]"
        if not isinstance(rec, dict):
            raise ValidationError(f"{where}: not an object")
        image_id = _require_int(rec, "image_id", where)
        category_id = _require_int(rec, "category_id", where)
        x, y, w, h = _parse_bbox(rec, where)
        if w <= 0 or h <= 0:
            raise ValidationError(f"{where}: non-positive box size {w}x{h}")
        score = _require_number(rec.get("score"), f"{where}: score")
        if not 0.0 <= score <= 1.0:
            raise ValidationError(f"{where}: score {score} outside [0, 1]")
        if image_id not in image_ids:
            unknown_images.setdefault(image_id, []).append(i)
        if category_id not in category_ids:
            unknown_cats.setdefault(category_id, []).append(i)
        detections.append(
            Detection(image_id, category_id, BoundingBox(x, y, w, h), score)
        )

    problems = []
    if unknown_images:
        problems.append(
            f"unknown image_ids {sorted(unknown_images)} "
            f"(records {sorted(i for v in unknown_images.values() for i in v)})"
        )
    if unknown_cats:
        problems.append(
            f"unknown category_ids {sorted(unknown_cats)} "
            f"(records {sorted(i for v in unknown_cats.values() for i in v)})"
        )
    if problems:
        raise ValidationError(f"{path}: detections reference " + "; ".join(problems))
    return detections


def _round6(v: float) -> float:
    return float(f"{v:.6g}")


def _normalize(obj):
    """Round floats to 6 significant digits recursively, for stable output."""
    if isinstance(obj, float):
        return _round6(obj)
    if isinstance(obj, dict):
        return {k: _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    return obj


def _atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _detection_dict(d: Detection) -> dict:
    return {
        "image_id": d.image_id,
        "category_id": d.class_id,
        "bbox": [_round6(d.bbox.x), _round6(d.bbox.y), _round6(d.bbox.w), _round6(d.bbox.h)],
        "score": _round6(d.confidence),
    }


def save_detections(dets: Sequence[Detection], path: str | Path) -> None:
    """Write detections as a COCO results array, atomically."""
    doc = [_detection_dict(d) for d in dets]
    _atomic_write_text(path, json.dumps(doc, separators=(",", ":")) + "\n")


def save_removal_log(records: Sequence[RemovalRecord], path: str | Path) -> None:
    """Write the filter's audit log as a JSON array, atomically."""
    doc = [
        {
            "detection": _detection_dict(r.detection),
            "mu1": _round6(r.mean_heat),
            "mu2": _round6(r.shifted_mean_heat),
            "shift_px": _round6(r.shift_px),
        }
        for r in records
    ]
    _atomic_write_text(path, json.dumps(doc, separators=(",", ":")) + "\n")


def save_json(obj, path: str | Path, *, pretty: bool = True) -> None:
    """Write any JSON-serializable object atomically and deterministically."""
    if pretty:
        text = json.dumps(_normalize(obj), indent=2)
    else:
        text = json.dumps(_normalize(obj), separators=(",", ":"))
    _atomic_write_text(path, text + "\n")


def save_report(report, path: str | Path) -> None:
    """Write an evaluation or comparison report as pretty JSON, atomically.

    Accepts anything with a to_json_dict() method, or a plain dict. The
    document is prefixed with the tool name and version.
    """
    body = report.to_json_dict() if hasattr(report, "to_json_dict") else dict(report)
    doc = {"tool": {"name": "reflectguard", "version": __version__}}
    doc.update(_normalize(body))
    _atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def file_digest(path: str | Path) -> str:
    """Hex SHA-256 of a file's bytes, for report provenance metadata."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
