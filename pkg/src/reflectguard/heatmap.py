"""Per-image, per-class confidence heatmaps with O(1) region-mean queries.

Each cell of the grid holds the sum of confidences of every proposal whose
rasterized box covers that cell. Accumulation uses a 2D difference array
(four signed corner writes per box, then prefix sums), so build cost is
O(P + W*H) instead of O(sum of box areas). A summed-area table built after
accumulation answers rectangular sum queries in constant time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ValidationError
from .geometry import BoundingBox, ImageDims, rasterize

if TYPE_CHECKING:
    from .filtering import Detection


@dataclass(frozen=True)
class Heatmap:
    """A sealed confidence-accumulation grid for one image and one class.

    `dims` are the original image dimensions; `grid` has shape
    (ceil(height/downscale), ceil(width/downscale)). Queries take boxes in
    original image coordinates and map them onto the grid. Immutable after
    construction; safe to share across threads.
    """

    dims: ImageDims
    class_id: int | None
    downscale: int
    grid: np.ndarray
    _sat: np.ndarray = field(repr=False)

    @property
    def grid_dims(self) -> ImageDims:
        gh, gw = self.grid.shape
        return ImageDims(gw, gh)

    def total_mass(self) -> float:
        return float(self.grid.sum())

    def _to_grid_box(self, b: BoundingBox) -> BoundingBox:
        if self.downscale == 1:
            return b
        f = float(self.downscale)
        return BoundingBox(b.x / f, b.y / f, b.w / f, b.h / f)

    def _sat_query(self, region) -> float:
        # _sat is the inclusive 2D prefix of grid: _sat[r, c] = sum over
        # grid[:r+1, :c+1]. Region bounds are half-open.
        s = self._sat
        r0, r1 = region.row_start, region.row_stop
        c0, c1 = region.col_start, region.col_stop
        total = s[r1 - 1, c1 - 1]
        if r0 > 0:
            total = total - s[r0 - 1, c1 - 1]
        if c0 > 0:
            total = total - s[r1 - 1, c0 - 1]
            if r0 > 0:
                total = total + s[r0 - 1, c0 - 1]
        return float(total)

    def region_sum(self, b: BoundingBox) -> float:
        """Sum of grid values over the rasterized, image-clipped box."""
        region = rasterize(self._to_grid_box(b), self.grid_dims)
        if region.is_empty:
            return 0.0
        return self._sat_query(region)

    def region_mean(self, b: BoundingBox) -> float:
        """Mean grid value over the rasterized box, clipped to the image.

        The divisor is the number of in-image cells; a box whose raster is
        empty (fully outside the image, or thinner than a pixel center)
        yields 0.0.
        """
        region = rasterize(self._to_grid_box(b), self.grid_dims)
        if region.is_empty:
            return 0.0
        return self._sat_query(region) / region.count


# Grids at or above this cell count go through the compiled fused kernel;
# smaller ones stay on the numpy path (not worth the numba import).
_FUSED_MIN_CELLS = 1 << 20

_fused_prefix = None
_fused_unavailable = False


class Workspace:
    """Reusable build buffers for batch heatmap construction.

    Allocating tens of megabytes of fresh pages per image costs more than
    the accumulation itself, so batch users (the filter, for one) pass a
    per-thread Workspace and recycle the memory. A heatmap built with a
    workspace is only valid until the next build that uses the same
    workspace; omit the workspace to get an independently-owned heatmap.
    Not thread-safe: use one workspace per thread.
    """

    __slots__ = ("_diff", "_grid", "_sat")

    def __init__(self) -> None:
        self._diff: np.ndarray | None = None
        self._grid: np.ndarray | None = None
        self._sat: np.ndarray | None = None

    def _arena(self, name: str, size: int, zeroed: bool) -> np.ndarray:
        buf = getattr(self, name)
        if buf is None or buf.size < size:
            buf = np.zeros(size, dtype=np.float64)
            setattr(self, name, buf)
        elif zeroed:
            buf[:size].fill(0.0)
        return buf[:size]

    def diff(self, gh: int, gw: int) -> np.ndarray:
        return self._arena("_diff", (gh + 1) * (gw + 1), zeroed=True).reshape(
            gh + 1, gw + 1
        )

    def out_grid(self, gh: int, gw: int) -> np.ndarray:
        return self._arena("_grid", gh * gw, zeroed=False).reshape(gh, gw)

    def out_sat(self, gh: int, gw: int) -> np.ndarray:
        return self._arena("_sat", gh * gw, zeroed=False).reshape(gh, gw)


def _prefix_2d(a: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Inclusive 2D prefix sum: rows first, then columns.

    With out=a the row pass runs in place, which spares one multi-megabyte
    allocation per heatmap; fresh pages are what dominates build time at
    2MP+ sizes. The column pass accumulates each row into the next, which
    matches np.cumsum(axis=0) bit for bit while running several times
    faster.
    """
    out = np.cumsum(a, axis=1, out=out)
    for r in range(1, out.shape[0]):
        np.add(out[r], out[r - 1], out=out[r])
    return out


def _grid_and_sat(
    diff: np.ndarray, gh: int, gw: int, workspace: Workspace | None
) -> tuple[np.ndarray, np.ndarray]:
    """Turn the corner-delta array into (grid, summed-area table)."""
    global _fused_prefix, _fused_unavailable
    if gh * gw >= _FUSED_MIN_CELLS and not _fused_unavailable:
        if _fused_prefix is None:
            try:
                from ._kernels import fused_prefix as _fused_prefix
            except ImportError:
                _fused_unavailable = True
        if _fused_prefix is not None:
            if workspace is not None:
                grid = workspace.out_grid(gh, gw)
                sat = workspace.out_sat(gh, gw)
            else:
                grid = np.empty((gh, gw), dtype=np.float64)
                sat = np.empty((gh, gw), dtype=np.float64)
            _fused_prefix(diff, grid, sat)
            return grid, sat
    _prefix_2d(diff, out=diff)
    grid = diff[:gh, :gw]
    if workspace is not None:
        sat = workspace.out_sat(gh, gw)
        _prefix_2d(grid, out=sat)
        return grid, sat
    return grid, _prefix_2d(grid)


def build_heatmap(
    detections: Sequence["Detection"],
    dims: ImageDims,
    *,
    class_id: int | None = None,
    downscale: int = 1,
    workspace: Workspace | None = None,
) -> Heatmap:
    """Accumulate proposal confidences into a sealed heatmap.

    Every supplied detection contributes, whatever its confidence; no
    score cutoff is applied here. Detections are accumulated in a sorted
    canonical order so the grid is exactly independent of input order.

    With a workspace the arrays are borrowed, not owned: the heatmap is
    valid only until the workspace's next build (see Workspace).

    Raises ValidationError on a class mismatch, a confidence outside
    [0, 1], or a non-positive downscale factor.
    """
    if downscale < 1 or int(downscale) != downscale:
        raise ValidationError(f"downscale must be a positive integer, got {downscale}")
    downscale = int(downscale)

    if class_id is None and detections:
        class_id = detections[0].class_id
    for d in detections:
        if d.class_id != class_id:
            raise ValidationError(
                f"detection class {d.class_id} differs from heatmap class {class_id}"
            )
        if not 0.0 <= d.confidence <= 1.0:
            raise ValidationError(
                f"confidence must be in [0, 1], got {d.confidence}"
            )

    gw = -(-dims.width // downscale)
    gh = -(-dims.height // downscale)
    grid_dims = ImageDims(gw, gh)

    # Canonical accumulation order: input permutation never changes the grid.
    ordered = sorted(
        detections,
        key=lambda d: (d.confidence, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h),
    )

    # Difference array: +conf at the region's top-left corner, cancelling
    # entries one past the right and bottom edges (hence the +1 row/col).
    if workspace is not None:
        diff = workspace.diff(gh, gw)
    else:
        diff = np.zeros((gh + 1, gw + 1), dtype=np.float64)
    r0s, r1s, c0s, c1s, confs = [], [], [], [], []
    f = float(downscale)
    for d in ordered:
        b = d.bbox
        if downscale != 1:
            b = BoundingBox(b.x / f, b.y / f, b.w / f, b.h / f)
        region = rasterize(b, grid_dims)
        if region.is_empty:
            continue
        r0s.append(region.row_start)
        r1s.append(region.row_stop)
        c0s.append(region.col_start)
        c1s.append(region.col_stop)
        confs.append(d.confidence)

    if confs:
        r0 = np.asarray(r0s)
        r1 = np.asarray(r1s)
        c0 = np.asarray(c0s)
        c1 = np.asarray(c1s)
        conf = np.asarray(confs, dtype=np.float64)
        np.add.at(diff, (r0, c0), conf)
        np.add.at(diff, (r0, c1), -conf)
        np.add.at(diff, (r1, c0), -conf)
        np.add.at(diff, (r1, c1), conf)

    grid, sat = _grid_and_sat(diff, gh, gw, workspace)
    if workspace is None:
        grid.setflags(write=False)
        sat.setflags(write=False)
    return Heatmap(dims=dims, class_id=class_id, downscale=downscale, grid=grid, _sat=sat)


def region_mean(heatmap: Heatmap, b: BoundingBox) -> float:
    return heatmap.region_mean(b)


def render_heatmap(heatmap: Heatmap) -> np.ndarray:
    """Linear 8-bit grayscale rendering of the grid.

    The grid maximum maps to 255 (nearest-integer rounding below it); an
    all-zero heatmap renders all black. Returns a (rows, cols) uint8 array.
    """
    grid = heatmap.grid
    peak = float(grid.max()) if grid.size else 0.0
    if peak <= 0.0:
        return np.zeros(grid.shape, dtype=np.uint8)
    scaled = np.rint((grid / peak) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)
