"""Running Gaussian statistics over per-target 3D properties.

Each track keeps an online mean/variance (Welford recurrences) of the
4-vector (Vx, Vy, W, H): the per-frame ground displacement implied by its
matches and the physical extent of its observations.  Candidate
observations whose implied properties fall outside three standard
deviations on any axis are rejected as physically implausible for that
track.  A variance floor keeps the filter from becoming degenerate when
early observations are near-identical, and a warm-up count disables the
test entirely until enough evidence has accumulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIMS = 4


@dataclass
class GaussianPropertyModel:
    count: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(DIMS))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(DIMS))

    def std(self) -> np.ndarray:
        """Sample standard deviation per axis (zeros until two samples)."""
        if self.count < 2:
            return np.zeros(DIMS)
        return np.sqrt(self.m2 / (self.count - 1))


def _vector(velocity, width3d: float, height3d: float) -> np.ndarray:
    v = np.asarray(velocity, dtype=np.float64)
    if v.shape != (2,):
        raise ValueError(f"velocity must be a 2-vector, got shape {v.shape}")
    return np.array([v[0], v[1], float(width3d), float(height3d)])


def update_properties(model: GaussianPropertyModel, velocity, width3d: float, height3d: float) -> None:
    """Fold one property observation into the running statistics."""
    x = _vector(velocity, width3d, height3d)
    model.count += 1
    delta = x - model.mean
    model.mean = model.mean + delta / model.count
    model.m2 = model.m2 + delta * (x - model.mean)


def is_inlier(
    model: GaussianPropertyModel,
    velocity,
    width3d: float,
    height3d: float,
    min_count: int = 10,
    sigma_floor=(0.05, 0.05, 0.05, 0.05),
) -> bool:
    """Three-sigma test per axis, boundary inclusive.

    Always true during warm-up (fewer than min_count updates).  Each axis
    uses max(sample std, floor) as its scale.
    """
    if model.count < min_count:
        return True
    x = _vector(velocity, width3d, height3d)
    sigma = np.maximum(model.std(), np.asarray(sigma_floor, dtype=np.float64))
    return bool(np.all(np.abs(x - model.mean) <= 3.0 * sigma))
