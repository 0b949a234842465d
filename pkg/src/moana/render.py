"""Drawing helpers for result visualization.

Boxes are colored by a deterministic hash of the track identity, labeled
with the identity number, and trailed by the past bottom-center points.
Averaged appearance models can be composed into a side panel.
"""

from __future__ import annotations

import colorsys

import numpy as np
from PIL import Image, ImageDraw

from .appearance import AppearanceModel, averaged_model
from .geometry import BoundingBox

_GOLDEN = 0.61803398875
_TRAIL_LENGTH = 40
_PANEL_CELL = 64
_PANEL_PAD = 4


def color_for_identity(identity: int) -> tuple[int, int, int]:
    """Deterministic, well-separated RGB color for a track identity."""
    hue = (identity * _GOLDEN) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 0.95)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def draw_frame(
    image: np.ndarray,
    boxes: list[tuple[int, BoundingBox]],
    trails: dict[int, list[tuple[float, float]]] | None = None,
) -> Image.Image:
    """Overlay identity-colored boxes, labels, and trails on one frame."""
    canvas = Image.fromarray(image.astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(canvas)
    if trails:
        for identity, points in trails.items():
            color = color_for_identity(identity)
            tail = points[-_TRAIL_LENGTH:]
            if len(tail) >= 2:
                draw.line([(float(x), float(y)) for x, y in tail], fill=color, width=2)
    for identity, bbox in boxes:
        color = color_for_identity(identity)
        draw.rectangle((bbox.left, bbox.top, bbox.right, bbox.bottom), outline=color, width=2)
        draw.text((bbox.left + 2, bbox.top + 2), str(identity), fill=color)
    return canvas


def model_panel(models: dict[int, AppearanceModel]) -> Image.Image | None:
    """Stack averaged-model color thumbnails (one row per identity)."""
    if not models:
        return None
    rows = []
    for identity in sorted(models):
        mean = averaged_model(models[identity])
        rgb = mean[:, :, : min(3, mean.shape[2])]
        if rgb.shape[2] < 3:
            rgb = np.repeat(rgb[:, :, :1], 3, axis=2)
        thumb = Image.fromarray(np.clip(rgb, 0, 255).astype(np.uint8), mode="RGB")
        thumb = thumb.resize((_PANEL_CELL, _PANEL_CELL), Image.NEAREST)
        framed = Image.new("RGB", (_PANEL_CELL + 2 * _PANEL_PAD, _PANEL_CELL + 2 * _PANEL_PAD), (24, 24, 24))
        framed.paste(thumb, (_PANEL_PAD, _PANEL_PAD))
        d = ImageDraw.Draw(framed)
        d.rectangle(
            (_PANEL_PAD - 1, _PANEL_PAD - 1, _PANEL_PAD + _PANEL_CELL, _PANEL_PAD + _PANEL_CELL),
            outline=color_for_identity(identity),
        )
        d.text((_PANEL_PAD + 2, _PANEL_PAD + 2), str(identity), fill=color_for_identity(identity))
        rows.append(framed)
    panel = Image.new("RGB", (rows[0].width, sum(r.height for r in rows)), (24, 24, 24))
    y = 0
    for row in rows:
        panel.paste(row, (0, y))
        y += row.height
    return panel


def compose(frame: Image.Image, panel: Image.Image | None) -> Image.Image:
    """Attach the model panel to the right edge of a rendered frame."""
    if panel is None:
        return frame
    out = Image.new("RGB", (frame.width + panel.width, max(frame.height, panel.height)), (24, 24, 24))
    out.paste(frame, (0, 0))
    out.paste(panel, (frame.width, 0))
    return out
