"""Qualitative visualization: box overlays and heatmap PNGs.

This module is the only place that touches image files; it is an optional
feature (install the `render` extra for Pillow) so the core toolkit stays
free of image-decoding dependencies.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

try:
    from PIL import Image, ImageDraw
except ImportError as e:  # pragma: no cover
    raise ImportError(
        "rendering requires Pillow; install the 'render' extra "
        "(pip install reflectguard[render])"
    ) from e

from .filtering import Detection, RemovalRecord
from .geometry import ImageDims
from .heatmap import Heatmap, render_heatmap

KEPT_COLOR = (0, 200, 0)
REMOVED_COLOR = (230, 40, 40)
_BACKGROUND = (0, 0, 0)


def save_heatmap_png(heatmap: Heatmap, out_path: str | Path) -> None:
    """Write the 8-bit grayscale rendering of a heatmap as a PNG."""
    Image.fromarray(render_heatmap(heatmap), mode="L").save(out_path, format="PNG")


def _draw_box(draw: "ImageDraw.ImageDraw", det: Detection, color: tuple) -> None:
    b = det.bbox
    draw.rectangle([b.x, b.y, b.x2, b.y2], outline=color, width=2)
    draw.text((b.x + 2, b.y + 2), f"{det.confidence:.2f}", fill=color)


def render_overlay(
    dims: ImageDims,
    kept: Sequence[Detection],
    removed: Sequence[RemovalRecord | Detection],
    out_path: str | Path,
    *,
    image_path: str | Path | None = None,
) -> None:
    """Draw kept and removed boxes in distinct colors and write a PNG.

    Kept boxes are green, removed red, each labeled with its confidence.
    With image_path the boxes are drawn over that image (errors if it
    cannot be read); otherwise over a blank canvas of the given size.
    Detection data is never modified.
    """
    if image_path is not None:
        try:
            img = Image.open(image_path).convert("RGB")
        except OSError as e:
            raise OSError(f"cannot read source image {image_path}: {e}") from e
    else:
        img = Image.new("RGB", (dims.width, dims.height), _BACKGROUND)

    draw = ImageDraw.Draw(img)
    for det in kept:
        _draw_box(draw, det, KEPT_COLOR)
    for item in removed:
        det = item.detection if isinstance(item, RemovalRecord) else item
        _draw_box(draw, det, REMOVED_COLOR)
    img.save(out_path, format="PNG")
