"""Axis-aligned bounding boxes, pixel rasterization, and IoU.

Boxes use the COCO (x, y, w, h) convention: origin at the top-left corner
of the image, y growing downward, so moving a box "up" decreases y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator


@dataclass(frozen=True)
class BoundingBox:
    """A rectangle with strictly positive width and height.

    Coordinates are continuous pixel units; negative x/y are legal (a box
    may extend beyond the image, e.g. after an upward shift).
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"bounding box {name} must be finite, got {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(
                f"bounding box must have positive size, got w={self.w}, h={self.h}"
            )

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class ImageDims:
    """Integer pixel dimensions of an image."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class PixelRegion:
    """A half-open rectangle of integer pixel cells: [col_start, col_stop) x [row_start, row_stop).

    The rasterization of an axis-aligned box is always such a rectangle.
    An empty region is normalized to all zeros.
    """

    col_start: int
    col_stop: int
    row_start: int
    row_stop: int

    @property
    def is_empty(self) -> bool:
        return self.col_stop <= self.col_start or self.row_stop <= self.row_start

    @property
    def count(self) -> int:
        if self.is_empty:
            return 0
        return (self.col_stop - self.col_start) * (self.row_stop - self.row_start)

    def cells(self) -> Iterator[tuple[int, int]]:
        """Yield (col, row) pairs; intended for tests and small regions."""
        for row in range(self.row_start, self.row_stop):
            for col in range(self.col_start, self.col_stop):
                yield (col, row)


_EMPTY_REGION = PixelRegion(0, 0, 0, 0)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, on continuous rectangle areas.

    Returns 0.0 for disjoint boxes; symmetric in its arguments. Identical
    rectangles give exactly 1.0 (the general formula would round).
    """
    if a == b:
        return 1.0
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union


def shift_up(b: BoundingBox, dy: float) -> BoundingBox:
    """Translate a box upward (toward smaller y) by dy pixels, unclamped.

    The result may extend above y=0; clipping to the image is the concern
    of whoever rasterizes the box.
    """
    if dy < 0:
        raise ValueError(f"shift amount must be non-negative, got {dy}")
    if dy == 0:
        return b
    return BoundingBox(b.x, b.y - dy, b.w, b.h)


def rasterize(b: BoundingBox, dims: ImageDims) -> PixelRegion:
    """Pixel cells covered by a box under the pixel-center rule.

    A cell (col, row) is covered iff its center (col + 0.5, row + 0.5) lies
    in the half-open rectangle [x, x+w) x [y, y+h). The result is clipped
    to the image and may be empty.
    """
    # col + 0.5 >= x  <=>  col >= ceil(x - 0.5);  col + 0.5 < x + w  <=>  col < ceil(x + w - 0.5)
    col_start = max(0, math.ceil(b.x - 0.5))
    col_stop = min(dims.width, math.ceil(b.x2 - 0.5))
    row_start = max(0, math.ceil(b.y - 0.5))
    row_stop = min(dims.height, math.ceil(b.y2 - 0.5))
    if col_stop <= col_start or row_stop <= row_start:
        return _EMPTY_REGION
    return PixelRegion(col_start, col_stop, row_start, row_stop)
