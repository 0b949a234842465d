"""Ground-plane geometry for a single calibrated view.

Targets are modelled as vertical poles standing on the Z=0 plane.  A 3x4
projection matrix maps homogeneous world coordinates (meters) to homogeneous
pixels; the restriction of that matrix to the ground plane (columns 1, 2, 4)
is an invertible homography, which is what lets a bounding box's ground
contact point be recovered from a single view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateHeight, PointAtInfinity

_W_EPS = 1e-12
_DIST_EPS = 1e-3
_MIN_EXTENT = 1e-6


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned 2D box stored as center + size, in pixels.

    Files use the left-top + size convention; conversion happens only at the
    I/O boundary via :meth:`from_ltwh` / :meth:`to_ltwh`.
    """

    cx: float
    cy: float
    width: float
    height: float

    @classmethod
    def from_ltwh(cls, left: float, top: float, width: float, height: float) -> "BoundingBox":
        return cls(left + width / 2.0, top + height / 2.0, width, height)

    def to_ltwh(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.width, self.height)

    @property
    def left(self) -> float:
        return self.cx - self.width / 2.0

    @property
    def right(self) -> float:
        return self.cx + self.width / 2.0

    @property
    def top(self) -> float:
        return self.cy - self.height / 2.0

    @property
    def bottom(self) -> float:
        return self.cy + self.height / 2.0

    @property
    def bottom_center(self) -> tuple[float, float]:
        return (self.cx, self.bottom)

    @property
    def area(self) -> float:
        return self.width * self.height

    def intersection_area(self, other: "BoundingBox") -> float:
        iw = min(self.right, other.right) - max(self.left, other.left)
        ih = min(self.bottom, other.bottom) - max(self.top, other.top)
        if iw <= 0.0 or ih <= 0.0:
            return 0.0
        return iw * ih

    def overlaps(self, other: "BoundingBox") -> bool:
        return self.intersection_area(other) > 0.0

    def contains_point(self, x: float, y: float) -> bool:
        return self.left <= x <= self.right and self.top <= y <= self.bottom

    def iou(self, other: "BoundingBox") -> float:
        inter = self.intersection_area(other)
        union = self.area + other.area - inter
        if union <= 0.0:
            return 0.0
        return inter / union


@dataclass
class Geometry3D:
    """3D interpretation of one bounding box (or one predicted state).

    foot is the ground-plane contact point in meters, depth the Euclidean
    distance from the camera center to that point, velocity the ground-plane
    velocity in meters/frame (zero for raw observations; the Kalman filter
    owns it afterwards).
    """

    bbox: BoundingBox
    foot: np.ndarray
    depth: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    width3d: float = 0.0
    height3d: float = 0.0


class CalibratedCamera:
    """A fixed pinhole view of the ground plane.

    Wraps a 3x4 projection matrix, its camera center (finite, in meters) and
    the ground homography formed by projection columns 1, 2 and 4.
    """

    def __init__(self, projection: np.ndarray):
        projection = np.asarray(projection, dtype=np.float64)
        if projection.shape != (3, 4):
            raise ValueError(f"projection must be 3x4, got {projection.shape}")
        self.projection = projection

        homography = projection[:, [0, 1, 3]]
        if abs(np.linalg.det(homography)) <= 1e-12:
            raise ValueError("ground homography is singular; camera cannot see the ground plane")
        self.ground_homography = homography
        self._homography_inv = np.linalg.inv(homography)

        # The camera center spans the right null space of the projection.
        _, _, vt = np.linalg.svd(projection)
        center_h = vt[-1]
        if abs(center_h[3]) < _W_EPS:
            raise ValueError("camera center lies at infinity")
        self.center = center_h[:3] / center_h[3]

        residual = self.projection @ np.append(self.center, 1.0)
        scale = max(np.abs(self.projection).max(), 1.0)
        if np.abs(residual).max() > 1e-9 * scale:
            raise ValueError("projection does not annihilate its own camera center")

    def project(self, point3d: np.ndarray) -> np.ndarray:
        """Project one world point (meters) to pixel coordinates."""
        point3d = np.asarray(point3d, dtype=np.float64)
        p = self.projection @ np.append(point3d, 1.0)
        if abs(p[2]) < _W_EPS:
            raise PointAtInfinity(f"world point {point3d} projects to infinity")
        return p[:2] / p[2]


def back_project_ground(camera: CalibratedCamera, pixel: tuple[float, float]) -> np.ndarray:
    """Map a pixel to the ground plane through the inverse homography.

    Raises PointAtInfinity when the pixel lies on (or numerically at) the
    horizon, where the homogeneous scale vanishes.
    """
    v = camera._homography_inv @ np.array([pixel[0], pixel[1], 1.0])
    if abs(v[2]) < _W_EPS:
        raise PointAtInfinity(f"pixel {pixel} back-projects to the horizon")
    return v[:2] / v[2]


def observation_geometry(camera: CalibratedCamera, bbox: BoundingBox) -> Geometry3D:
    """Lift one bounding box to its 3D pole interpretation.

    The foot is the back-projected bottom-center pixel.  The 3D height is the
    Z whose projection from the foot's (X, Y) lands on the box's top scanline;
    the 3D width is the ground distance between the back-projected bottom
    corners.  Velocity starts at zero.
    """
    if bbox.width <= 0.0 or bbox.height <= 0.0:
        raise ValueError(f"bounding box must have positive extent, got {bbox}")

    foot = back_project_ground(camera, bbox.bottom_center)
    offset = camera.center - np.array([foot[0], foot[1], 0.0])
    depth = float(np.linalg.norm(offset))

    # Solve P @ (X, Y, Z, 1) = a + Z*b for the Z that hits the top scanline.
    a = camera.projection @ np.array([foot[0], foot[1], 0.0, 1.0])
    b = camera.projection[:, 2]
    v_top = bbox.top
    denom = b[1] - v_top * b[2]
    if abs(denom) < _W_EPS:
        raise DegenerateHeight(f"top scanline {v_top} is parallel to the vertical axis")
    height3d = (v_top * a[2] - a[1]) / denom
    if height3d <= 0.0:
        raise DegenerateHeight(f"top scanline {v_top} yields non-positive height {height3d}")

    left_foot = back_project_ground(camera, (bbox.left, bbox.bottom))
    right_foot = back_project_ground(camera, (bbox.right, bbox.bottom))
    width3d = float(np.linalg.norm(right_foot - left_foot))

    return Geometry3D(
        bbox=bbox,
        foot=foot,
        depth=depth,
        velocity=np.zeros(2),
        width3d=width3d,
        height3d=float(height3d),
    )


def depth_weight(depth: float, eta_d: float, c_d: float) -> float:
    """Linear depth compensation used to scale distance gates and scores."""
    return depth * eta_d + c_d


def divided_distance(
    predicted_foot: np.ndarray,
    observed_foot: np.ndarray,
    observed_depth: float,
    eta_d: float,
    c_d: float,
) -> float:
    """Ground distance between feet, divided by the observation's depth weight."""
    dist = float(np.linalg.norm(np.asarray(predicted_foot) - np.asarray(observed_foot)))
    return dist / depth_weight(observed_depth, eta_d, c_d)


def state_to_geometry(
    camera: CalibratedCamera,
    foot: np.ndarray,
    velocity: np.ndarray,
    width3d: float,
    height3d: float,
) -> Geometry3D:
    """Build the geometry of a predicted state, synthesizing its image box.

    The image box is anchored by projecting the foot and the head of the
    pole; its pixel width is scaled from the pixel height by the 3D aspect
    ratio.  Depth is recomputed from the foot.
    """
    width3d = max(float(width3d), _MIN_EXTENT)
    height3d = max(float(height3d), _MIN_EXTENT)
    x, y = float(foot[0]), float(foot[1])

    bottom = camera.project(np.array([x, y, 0.0]))
    top = camera.project(np.array([x, y, height3d]))
    height_px = max(abs(bottom[1] - top[1]), _MIN_EXTENT)
    width_px = height_px * width3d / height3d
    bbox = BoundingBox(
        cx=(bottom[0] + top[0]) / 2.0,
        cy=(top[1] + bottom[1]) / 2.0,
        width=width_px,
        height=height_px,
    )

    depth = float(np.linalg.norm(camera.center - np.array([x, y, 0.0])))
    return Geometry3D(
        bbox=bbox,
        foot=np.array([x, y], dtype=np.float64),
        depth=depth,
        velocity=np.asarray(velocity, dtype=np.float64).copy(),
        width3d=width3d,
        height3d=height3d,
    )
