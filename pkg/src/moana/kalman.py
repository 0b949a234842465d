"""Constant-velocity filtering of target states on the ground plane.

The state is (Px, Py, Vx, Vy, W, H): ground position and velocity in meters
(velocity per frame) plus the physical extent of the target.  Position and
size are measured directly; velocity is inferred.  Process noise uses the
integrated white-noise form so that predicting in two hops is the same as
predicting once over the combined interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CalibratedCamera, Geometry3D, depth_weight, state_to_geometry

STATE_DIM = 6
MEAS_DIM = 4

# Measurement picks (Px, Py, W, H) out of the state.
_H = np.zeros((MEAS_DIM, STATE_DIM))
_H[0, 0] = _H[1, 1] = 1.0
_H[2, 4] = _H[3, 5] = 1.0


@dataclass
class TrackState3D:
    """Filter state: mean, covariance, and the frame it is valid for."""

    x: np.ndarray
    covariance: np.ndarray
    frame: int

    @property
    def foot(self) -> np.ndarray:
        return self.x[:2]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[2:4]

    @property
    def width3d(self) -> float:
        return float(self.x[4])

    @property
    def height3d(self) -> float:
        return float(self.x[5])


def init_state(
    geom: Geometry3D,
    frame: int,
    sigma_position: float = 0.5,
    sigma_velocity: float = 1.0,
    sigma_size: float = 0.2,
) -> TrackState3D:
    """Start a filter from one observation: zero velocity, diagonal spread."""
    x = np.array(
        [geom.foot[0], geom.foot[1], 0.0, 0.0, geom.width3d, geom.height3d],
        dtype=np.float64,
    )
    covariance = np.diag(
        [
            sigma_position**2,
            sigma_position**2,
            sigma_velocity**2,
            sigma_velocity**2,
            sigma_size**2,
            sigma_size**2,
        ]
    ).astype(np.float64)
    return TrackState3D(x=x, covariance=covariance, frame=int(frame))


def _transition(dt: float) -> np.ndarray:
    F = np.eye(STATE_DIM)
    F[0, 2] = dt
    F[1, 3] = dt
    return F


def _process_noise(q_diag: np.ndarray, dt: float) -> np.ndarray:
    """Integrated constant-velocity process noise over an interval dt.

    Treating the configured diagonal as continuous noise intensities
    (qp, qp, qv, qv, qs, qs) gives per-axis blocks
    [[qp dt + qv dt^3/3, qv dt^2/2], [qv dt^2/2, qv dt]] for position /
    velocity and qs dt for the sizes.  This form composes exactly:
    two consecutive predictions equal one prediction over the sum.
    """
    qp_x, qp_y, qv_x, qv_y, qs_w, qs_h = np.asarray(q_diag, dtype=np.float64)
    Q = np.zeros((STATE_DIM, STATE_DIM))
    for pos, vel, qp, qv in ((0, 2, qp_x, qv_x), (1, 3, qp_y, qv_y)):
        Q[pos, pos] = qp * dt + qv * dt**3 / 3.0
        Q[pos, vel] = Q[vel, pos] = qv * dt**2 / 2.0
        Q[vel, vel] = qv * dt
    Q[4, 4] = qs_w * dt
    Q[5, 5] = qs_h * dt
    return Q


def predict(
    state: TrackState3D,
    dt: int,
    camera: CalibratedCamera,
    process_noise: np.ndarray | tuple = (1e-2, 1e-2, 1e-2, 1e-2, 1e-4, 1e-4),
) -> Geometry3D:
    """Advance the state dt frames and return the predicted geometry.

    The state is mutated in place; the returned geometry carries the
    predicted foot, velocity and extent with depth recomputed from the
    predicted foot and a synthesized image box.
    """
    if dt < 1:
        raise ValueError(f"prediction interval must be at least one frame, got {dt}")
    F = _transition(float(dt))
    state.x = F @ state.x
    state.covariance = F @ state.covariance @ F.T + _process_noise(process_noise, float(dt))
    state.frame += int(dt)
    return state_to_geometry(camera, state.x[:2], state.x[2:4], state.x[4], state.x[5])


def correct(
    state: TrackState3D,
    measurement: np.ndarray | tuple,
    measurement_noise: np.ndarray | tuple = (5e-2, 5e-2, 1e-2, 1e-2),
) -> None:
    """Fold a (Px, Py, W, H) measurement into the state.

    Standard Kalman update with the 4x6 selection matrix; the covariance is
    re-symmetrized afterwards to keep round-off from accumulating.
    """
    z = np.asarray(measurement, dtype=np.float64)
    if z.shape != (MEAS_DIM,):
        raise ValueError(f"measurement must have {MEAS_DIM} entries, got {z.shape}")
    R = np.diag(np.asarray(measurement_noise, dtype=np.float64))

    P = state.covariance
    S = _H @ P @ _H.T + R
    K = P @ _H.T @ np.linalg.inv(S)
    state.x = state.x + K @ (z - _H @ state.x)
    P = (np.eye(STATE_DIM) - K @ _H) @ P
    state.covariance = (P + P.T) / 2.0


def innovation_stats(
    state: TrackState3D, measurement: np.ndarray, measurement_noise: np.ndarray | tuple
) -> tuple[np.ndarray, np.ndarray]:
    """Innovation vector and its covariance for the given measurement."""
    z = np.asarray(measurement, dtype=np.float64)
    R = np.diag(np.asarray(measurement_noise, dtype=np.float64))
    nu = z - _H @ state.x
    S = _H @ state.covariance @ _H.T + R
    return nu, S


def gate(
    predicted: Geometry3D,
    observation: Geometry3D,
    tau_p: float,
    eta_d: float,
    c_d: float,
) -> bool:
    """Depth-compensated position gate.

    Passes when the ground distance between predicted and observed feet,
    divided by the observation's depth weight, is below tau_p.
    """
    dist = float(np.linalg.norm(predicted.foot - observation.foot))
    return dist / depth_weight(observation.depth, eta_d, c_d) < tau_p
