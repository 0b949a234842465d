"""Pixel-template features on a fixed grid.

Every detection is resampled to a ``grid_width x grid_height`` patch whose
cells carry a configurable stack of channels: raw RGB, an 8-neighbor local
binary pattern, and Sobel gradient magnitude/orientation.  All channels live
on a common [0, 255] scale so one distance threshold per channel group is
meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch, EmptyIntersection, TooSmall
from .geometry import BoundingBox

# Fixed channel order; selection is any non-empty subset of these names.
FEATURE_ORDER = ("rgb", "lbp", "grad")
_FEATURE_WIDTH = {"rgb": 3, "lbp": 1, "grad": 2}
_GROUP_NAME = {"rgb": "color", "lbp": "texture", "grad": "edge"}


@dataclass(frozen=True)
class ChannelGroup:
    """A named slice of grid channels sharing one match threshold."""

    name: str
    start: int
    stop: int
    tau_f: float

    @property
    def channels(self) -> slice:
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class FeatureLayout:
    """Which features are enabled and how channels map to groups."""

    features: tuple
    groups: tuple
    channels: int

    @classmethod
    def build(cls, features, tau_f_by_group) -> "FeatureLayout":
        ordered = tuple(name for name in FEATURE_ORDER if name in features)
        unknown = set(features) - set(FEATURE_ORDER)
        if unknown:
            raise ValueError(f"unknown features: {sorted(unknown)}")
        if not ordered:
            raise ValueError("at least one feature must be enabled")
        groups = []
        offset = 0
        for name in ordered:
            width = _FEATURE_WIDTH[name]
            group = _GROUP_NAME[name]
            groups.append(ChannelGroup(group, offset, offset + width, float(tau_f_by_group[group])))
            offset += width
        return cls(features=ordered, groups=tuple(groups), channels=offset)

    @classmethod
    def from_config(cls, config) -> "FeatureLayout":
        taus = {"color": config.tau_f_color, "texture": config.tau_f_texture, "edge": config.tau_f_edge}
        return cls.build(config.features, taus)


@dataclass
class FeatureGrid:
    """A resampled patch: (height, width, channels) float32 values in [0, 255]."""

    width: int
    height: int
    values: np.ndarray

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def cells(self) -> int:
        return self.width * self.height


@dataclass
class VisibilityMask:
    """Per-cell booleans aligned with a FeatureGrid."""

    width: int
    height: int
    bits: np.ndarray

    @property
    def visible_count(self) -> int:
        return int(self.bits.sum())


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B, rounded."""
    rgb = np.asarray(rgb, dtype=np.float64)
    gray = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.rint(gray)


def compute_lbp(gray: np.ndarray) -> np.ndarray:
    """8-neighbor local binary pattern at radius 1.

    A bit is set when the neighbor is >= the center; bits are ordered
    clockwise starting at the top-left neighbor, most significant first.
    Borders are replicate-padded, so a constant image codes to 255
    everywhere.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2 or gray.shape[0] < 3 or gray.shape[1] < 3:
        raise TooSmall(f"LBP needs at least a 3x3 image, got {gray.shape}")
    h, w = gray.shape
    p = np.pad(gray, 1, mode="edge")

    def sh(dy: int, dx: int) -> np.ndarray:
        return p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    # Clockwise from top-left: TL, T, TR, R, BR, B, BL, L.
    offsets = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]
    code = np.zeros((h, w), dtype=np.float64)
    for i, (dy, dx) in enumerate(offsets):
        bit = (sh(dy, dx) >= gray).astype(np.float64)
        code += bit * float(1 << (7 - i))
    return code


def compute_gradient(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel gradient as (magnitude, orientation) on the [0, 255] scale.

    Magnitude is clamped to [0, 255]; orientation in [0, 2*pi) is mapped
    linearly onto [0, 255].  Borders are replicate-padded.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2 or gray.shape[0] < 3 or gray.shape[1] < 3:
        raise TooSmall(f"Sobel needs at least a 3x3 image, got {gray.shape}")
    h, w = gray.shape
    p = np.pad(gray, 1, mode="edge")

    def sh(dy: int, dx: int) -> np.ndarray:
        return p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    gx = (sh(-1, 1) + 2.0 * sh(0, 1) + sh(1, 1)) - (sh(-1, -1) + 2.0 * sh(0, -1) + sh(1, -1))
    gy = (sh(1, -1) + 2.0 * sh(1, 0) + sh(1, 1)) - (sh(-1, -1) + 2.0 * sh(-1, 0) + sh(-1, 1))

    magnitude = np.clip(np.hypot(gx, gy), 0.0, 255.0)
    angle = np.mod(np.arctan2(gy, gx), 2.0 * math.pi)
    orientation = angle * (255.0 / (2.0 * math.pi))
    return magnitude, orientation


def bilinear_sample(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample image planes at fractional pixel-center coordinates.

    Coordinates are in pixel-index space (pixel p has its center at p);
    samples outside the image clamp to the border.  Returns
    (len(ys), len(xs), channels).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    ih, iw = image.shape[:2]

    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, iw - 1.0)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, ih - 1.0)

    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, iw - 1)
    y1 = np.minimum(y0 + 1, ih - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]

    top = image[y0[:, None], x0[None, :]] * (1.0 - fx) + image[y0[:, None], x1[None, :]] * fx
    bottom = image[y1[:, None], x0[None, :]] * (1.0 - fx) + image[y1[:, None], x1[None, :]] * fx
    return top * (1.0 - fy) + bottom * fy


def extract_feature_grid(
    image: np.ndarray,
    bbox: BoundingBox,
    layout: FeatureLayout,
    grid_width: int,
    grid_height: int,
) -> FeatureGrid:
    """Resample a bounding box to the feature grid and stack its channels.

    The box is sampled bilinearly at half-pixel cell centers, so a box that
    exactly covers a grid-sized pixel region reproduces those pixels.
    Derived channels (LBP, gradient) are computed on the resampled grayscale
    patch.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an RGB image, got shape {image.shape}")
    ih, iw = image.shape[:2]
    if bbox.right <= 0.0 or bbox.left >= iw or bbox.bottom <= 0.0 or bbox.top >= ih:
        raise EmptyIntersection(f"box {bbox} does not intersect a {iw}x{ih} image")
    if bbox.width <= 0.0 or bbox.height <= 0.0:
        raise ValueError(f"bounding box must have positive extent, got {bbox}")

    xs = bbox.left + (np.arange(grid_width) + 0.5) * (bbox.width / grid_width) - 0.5
    ys = bbox.top + (np.arange(grid_height) + 0.5) * (bbox.height / grid_height) - 0.5
    patch = bilinear_sample(image, xs, ys)

    planes = []
    gray = None
    for name in layout.features:
        if name == "rgb":
            planes.append(patch)
        elif name == "lbp":
            gray = to_grayscale(patch) if gray is None else gray
            planes.append(compute_lbp(gray)[:, :, None])
        elif name == "grad":
            gray = to_grayscale(patch) if gray is None else gray
            magnitude, orientation = compute_gradient(gray)
            planes.append(np.stack([magnitude, orientation], axis=-1))
    values = np.concatenate(planes, axis=-1).astype(np.float32)
    return FeatureGrid(width=grid_width, height=grid_height, values=values)


@lru_cache(maxsize=32)
def _ellipse_bits(width: int, height: int) -> np.ndarray:
    xs = (np.arange(width) + 0.5 - width / 2.0) / (width / 2.0)
    ys = (np.arange(height) + 0.5 - height / 2.0) / (height / 2.0)
    return (xs[None, :] ** 2 + ys[:, None] ** 2) <= 1.0


def maximum_ellipse_mask(width: int, height: int) -> VisibilityMask:
    """Visibility restricted to the largest ellipse inscribed in the grid.

    Cell (x, y) is visible iff its center satisfies
    ((x+0.5-w/2)/(w/2))^2 + ((y+0.5-h/2)/(h/2))^2 <= 1.
    """
    if width < 1 or height < 1:
        raise TooSmall(f"mask needs at least one cell, got {width}x{height}")
    return VisibilityMask(width=width, height=height, bits=_ellipse_bits(width, height).copy())


def occlusion_clipped_mask(
    base: VisibilityMask,
    bbox: BoundingBox,
    occluder_bboxes: list[BoundingBox],
    occluder_depths: list[float],
    self_depth: float,
) -> VisibilityMask:
    """Clear cells whose source pixel falls inside any strictly nearer box.

    Occluders at equal or greater depth are ignored.  With no effective
    occluder the base mask object is returned unchanged.
    """
    if len(occluder_bboxes) != len(occluder_depths):
        raise DimensionMismatch("occluder boxes and depths must align")
    nearer = [b for b, d in zip(occluder_bboxes, occluder_depths) if d < self_depth]
    if not nearer:
        return base

    w, h = base.width, base.height
    px = bbox.left + (np.arange(w) + 0.5) * (bbox.width / w)
    py = bbox.top + (np.arange(h) + 0.5) * (bbox.height / h)
    bits = base.bits.copy()
    for occ in nearer:
        inside_x = (px >= occ.left) & (px <= occ.right)
        inside_y = (py >= occ.top) & (py <= occ.bottom)
        bits[np.ix_(inside_y, inside_x)] = False
    return VisibilityMask(width=w, height=h, bits=bits)
