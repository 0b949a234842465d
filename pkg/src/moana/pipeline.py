"""The online tracking pipeline: one tracker object, one step per frame.

Each step lifts detections to 3D, extracts masked feature grids, predicts
every live track, resolves isolated observations by gated geometry and
contested ones by appearance cross-matching in a single optimal assignment,
offers the leftovers to the lost pool for re-identification, and finally
spawns, confirms, or retires tracks.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import association, kalman
from .appearance import AppearanceModel, update_model
from .association import LostTarget, TrackPoint
from .config import TrackerConfig
from .errors import MoanaError, NonMonotonicFrame, PointAtInfinity
from .features import (
    FeatureGrid,
    FeatureLayout,
    VisibilityMask,
    extract_feature_grid,
    maximum_ellipse_mask,
    occlusion_clipped_mask,
)
from .geometry import BoundingBox, CalibratedCamera, Geometry3D, depth_weight, observation_geometry
from .ingest import DetectionRecord
from .property_model import GaussianPropertyModel, is_inlier, update_properties

logger = logging.getLogger(__name__)

# An observation mostly hidden behind nearer boxes cannot be trusted for
# association; its target waits in the lost pool instead.
MIN_VISIBLE_FRACTION = 0.5


class TrackStatus(Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    LOST = "lost"
    TERMINATED = "terminated"


@dataclass
class Observation:
    """One detection lifted to 3D with its appearance grid."""

    bbox: BoundingBox
    confidence: float
    geometry: Geometry3D
    grid: FeatureGrid
    mask: VisibilityMask
    visible_fraction: float = 1.0


@dataclass
class Track:
    identity: int
    state: kalman.TrackState3D
    appearance: AppearanceModel
    properties: GaussianPropertyModel
    status: TrackStatus
    history: list = field(default_factory=list)
    hits: int = 1
    misses: int = 0
    frame_lost: int | None = None
    confirmed_ever: bool = False
    # Last matched observation's corrected position/frame, for implied
    # velocities.
    last_foot: np.ndarray | None = None
    last_matched_frame: int = 0


@dataclass
class TrackSnapshot:
    identity: int
    bbox: BoundingBox
    foot: np.ndarray


class Tracker:
    """Online multi-target tracker over a fixed calibrated view."""

    def __init__(self, camera: CalibratedCamera, config: TrackerConfig | None = None):
        self.camera = camera
        self.config = config if config is not None else TrackerConfig()
        self.layout = FeatureLayout.from_config(self.config)
        self.rng = np.random.default_rng(self.config.seed)
        self.tracks: list[Track] = []
        self.finished: list[Track] = []
        self._next_identity = 1
        self._last_frame: int | None = None
        self._base_mask = maximum_ellipse_mask(self.config.grid_width, self.config.grid_height)

    # -- observation construction -------------------------------------------

    def _build_observations(self, image: np.ndarray, detections: list[DetectionRecord]) -> list[Observation]:
        cfg = self.config
        lifted: list[tuple[DetectionRecord, Geometry3D]] = []
        for det in detections:
            if det.confidence < cfg.min_confidence:
                continue
            try:
                geom = observation_geometry(self.camera, det.bbox)
            except MoanaError as exc:
                logger.warning("dropping detection %s: %s", det.bbox, exc)
                continue
            lifted.append((det, geom))

        geoms = [g for _, g in lifted]
        observations = []
        for j, (det, geom) in enumerate(lifted):
            grid = extract_feature_grid(image, det.bbox, self.layout, cfg.grid_width, cfg.grid_height)
            pad = cfg.occlusion_margin
            occluders = [
                BoundingBox(g.bbox.cx, g.bbox.cy, g.bbox.width + 2 * pad, g.bbox.height + 2 * pad)
                for jj, g in enumerate(geoms)
                if jj != j
            ]
            depths = [g.depth for jj, g in enumerate(geoms) if jj != j]
            mask = occlusion_clipped_mask(self._base_mask, det.bbox, occluders, depths, geom.depth)
            fraction = association.visible_fraction(geom, geoms)
            observations.append(
                Observation(
                    bbox=det.bbox,
                    confidence=det.confidence,
                    geometry=geom,
                    grid=grid,
                    mask=mask,
                    visible_fraction=fraction,
                )
            )
        return observations

    # -- matching ------------------------------------------------------------

    def _implied_velocity(self, track: Track, geom: Geometry3D, frame: int) -> np.ndarray:
        dt = max(frame - track.last_matched_frame, 1)
        return (geom.foot - track.last_foot) / dt

    def _score_matrix(
        self,
        active: list[Track],
        predictions: list[Geometry3D | None],
        observations: list[Observation],
        frame: int,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cfg = self.config
        usable = [i for i, p in enumerate(predictions) if p is not None]
        lists = association.build_candidate_lists(
            [o.geometry for o in observations],
            [predictions[i] for i in usable],
            cfg.tau_p,
            cfg.eta_d,
            cfg.c_d,
        )
        scores = np.zeros((len(active), len(observations)))
        valid = np.zeros_like(scores, dtype=bool)
        distances = np.full_like(scores, np.inf)
        for cl in lists:
            j = cl.observation
            obs = observations[j]
            for ui in cl.candidates:
                i = usable[ui]
                track = active[i]
                pred = predictions[i]
                v = self._implied_velocity(track, obs.geometry, frame)
                if not is_inlier(
                    track.properties,
                    v,
                    obs.geometry.width3d,
                    obs.geometry.height3d,
                    cfg.min_count,
                    cfg.sigma_floor,
                ):
                    continue
                nu, S = kalman.innovation_stats(
                    track.state,
                    np.array(
                        [
                            obs.geometry.foot[0],
                            obs.geometry.foot[1],
                            obs.geometry.width3d,
                            obs.geometry.height3d,
                        ]
                    ),
                    cfg.measurement_noise,
                )
                if float(nu @ np.linalg.solve(S, nu)) > cfg.nis_gate:
                    continue
                valid[i, j] = True
                dist = float(np.linalg.norm(pred.foot - obs.geometry.foot))
                distances[i, j] = dist
                if cl.state is association.ObservationState.GROUPED and cfg.cross_matching:
                    scores[i, j] = association.cross_match_score(
                        pred, track.appearance, obs.geometry, obs.grid, obs.mask, cfg.eta_d, cfg.c_d
                    )
                else:
                    weight = depth_weight(obs.geometry.depth, cfg.eta_d, cfg.c_d)
                    scores[i, j] = weight / max(dist, association.DIST_EPS)
        return scores, valid, distances

    # -- track mutations -----------------------------------------------------

    def _apply_match(self, track: Track, obs: Observation, frame: int) -> None:
        cfg = self.config
        geom = obs.geometry
        implied = self._implied_velocity(track, geom, frame)
        kalman.correct(
            track.state,
            (geom.foot[0], geom.foot[1], geom.width3d, geom.height3d),
            cfg.measurement_noise,
        )
        update_model(track.appearance, obs.grid, obs.mask, self.rng, spatial=cfg.spatial_weighting)
        update_properties(track.properties, implied, geom.width3d, geom.height3d)
        track.hits += 1
        track.misses = 0
        track.frame_lost = None
        track.last_foot = track.state.foot.copy()
        track.last_matched_frame = frame
        track.history.append(TrackPoint(frame=frame, bbox=obs.bbox, foot=track.state.foot.copy()))
        if track.status is TrackStatus.TENTATIVE and track.hits >= cfg.confirm_hits:
            track.status = TrackStatus.CONFIRMED
            track.confirmed_ever = True
            logger.debug("track %d confirmed at frame %d", track.identity, frame)
        elif track.status is TrackStatus.LOST:
            track.status = TrackStatus.CONFIRMED

    def _in_reid_gate(self, track: Track, geom: Geometry3D, frame_index: int) -> bool:
        """Whether geom falls inside a lost track's expanded recovery gate."""
        cfg = self.config
        missing = frame_index - track.frame_lost
        predicted = track.state.foot + missing * track.state.velocity
        radius = cfg.tau_p * (1.0 + missing / cfg.fps) * depth_weight(geom.depth, cfg.eta_d, cfg.c_d)
        return float(np.linalg.norm(predicted - geom.foot)) < radius

    def _spawn(self, obs: Observation, frame: int) -> Track:
        cfg = self.config
        state = kalman.init_state(
            obs.geometry,
            frame,
            cfg.init_sigma_position,
            cfg.init_sigma_velocity,
            cfg.init_sigma_size,
        )
        model = AppearanceModel(cfg.grid_width, cfg.grid_height, cfg.n_max, self.layout)
        update_model(model, obs.grid, obs.mask, self.rng, spatial=cfg.spatial_weighting)
        track = Track(
            identity=self._next_identity,
            state=state,
            appearance=model,
            properties=GaussianPropertyModel(),
            status=TrackStatus.TENTATIVE,
            history=[TrackPoint(frame=frame, bbox=obs.bbox, foot=state.foot.copy())],
            last_foot=state.foot.copy(),
            last_matched_frame=frame,
        )
        if cfg.confirm_hits <= 1:
            track.status = TrackStatus.CONFIRMED
            track.confirmed_ever = True
        self._next_identity += 1
        self.tracks.append(track)
        logger.debug("spawned track %d at frame %d", track.identity, frame)
        return track

    # -- the per-frame step ----------------------------------------------------

    def step(self, frame_index: int, image: np.ndarray, detections: list[DetectionRecord]) -> list[TrackSnapshot]:
        """Advance the tracker by one frame and return the live snapshots."""
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise NonMonotonicFrame(f"frame {frame_index} after frame {self._last_frame}")
        self._last_frame = frame_index
        cfg = self.config

        observations = self._build_observations(image, detections)
        associable = [j for j, o in enumerate(observations) if o.visible_fraction > MIN_VISIBLE_FRACTION]

        active = [t for t in self.tracks if t.status in (TrackStatus.TENTATIVE, TrackStatus.CONFIRMED)]
        predictions: list[Geometry3D | None] = []
        for track in active:
            dt = frame_index - track.state.frame
            try:
                predictions.append(kalman.predict(track.state, dt, self.camera, cfg.process_noise))
            except PointAtInfinity:
                logger.warning("track %d predicted outside the view at frame %d", track.identity, frame_index)
                predictions.append(None)

        obs_subset = [observations[j] for j in associable]
        scores, valid, distances = self._score_matrix(active, predictions, obs_subset, frame_index)

        if cfg.cross_matching:
            result = association.solve_assignment(scores, min_score=0.0)
            pairs = [(i, j) for i, j in result.pairs if valid[i, j] and scores[i, j] > 0.0]
        else:
            pairs = association.greedy_nearest_assignment(distances, valid)

        matched_tracks: set[int] = set()
        matched_obs: set[int] = set()
        snapshots: list[TrackSnapshot] = []
        for i, j in sorted(pairs, key=lambda p: active[p[0]].identity):
            track = active[i]
            obs = obs_subset[j]
            self._apply_match(track, obs, frame_index)
            matched_tracks.add(i)
            matched_obs.add(j)
            if track.status is TrackStatus.CONFIRMED:
                snapshots.append(TrackSnapshot(track.identity, obs.bbox, track.state.foot.copy()))

        # Unmatched live tracks: tentative ones die; confirmed ones coast on
        # prediction alone for up to grace_frames of consecutive misses —
        # absorbing detector dropouts and occlusion blips — then freeze to
        # LOST.  A prediction that left the view freezes immediately.
        for i, track in enumerate(active):
            if i in matched_tracks:
                continue
            track.misses += 1
            if track.status is TrackStatus.TENTATIVE:
                # One miss of slack before an unconfirmed track dies: killing
                # it instantly leaves its observation ownerless on the next
                # frame, where a neighbouring track can swallow it unopposed.
                if track.misses >= 2 or predictions[i] is None:
                    track.status = TrackStatus.TERMINATED
                    logger.debug("track %d terminated unconfirmed at frame %d", track.identity, frame_index)
                continue
            if predictions[i] is None or track.misses > cfg.grace_frames:
                track.status = TrackStatus.LOST
                track.frame_lost = frame_index
                logger.debug("track %d lost at frame %d", track.identity, frame_index)

        # Re-identification against the frozen lost pool.
        remaining = [j for j in range(len(obs_subset)) if j not in matched_obs]
        if cfg.reidentification and remaining:
            # Only tracks lost in earlier frames: a track that failed this
            # frame's association does not get a same-frame second chance.
            lost_tracks = [
                t for t in self.tracks if t.status is TrackStatus.LOST and t.frame_lost < frame_index
            ]
            views = [
                LostTarget(
                    identity=t.identity,
                    model=t.appearance,
                    state=t.state,
                    frame_lost=t.frame_lost,
                    frames_missing=frame_index - t.frame_lost,
                )
                for t in lost_tracks
            ]
            matches = association.reidentify(
                views,
                [obs_subset[j].geometry for j in remaining],
                [obs_subset[j].grid for j in remaining],
                [obs_subset[j].mask for j in remaining],
                cfg.tau_s,
                cfg.tau_p,
                cfg.eta_d,
                cfg.c_d,
                cfg.fps,
            )
            for li, rj in matches:
                track = lost_tracks[li]
                j = remaining[rj]
                obs = obs_subset[j]
                dt = frame_index - track.state.frame
                try:
                    kalman.predict(track.state, dt, self.camera, cfg.process_noise)
                except PointAtInfinity:
                    continue
                track.status = TrackStatus.CONFIRMED
                self._apply_match(track, obs, frame_index)
                matched_obs.add(j)
                if len([p for p in track.history if not p.synthetic]) >= 2:
                    association.interpolate_gaps(track)
                snapshots.append(TrackSnapshot(track.identity, obs.bbox, track.state.foot.copy()))
                logger.debug(
                    "track %d re-identified at frame %d after %d missing frames",
                    track.identity,
                    frame_index,
                    dt,
                )

        # Fresh targets from whatever is still unmatched (and not occluded).
        # An observation gated by a coasting track is withheld from spawning:
        # it is plausibly that track's next match, and a duplicate identity
        # would shadow the original from then on.  While re-identification is
        # on, lost tracks withhold spawns inside their expanded gate for the
        # same reason: an emerging target is often still half-covered, so its
        # colors read wrong for a frame or two before the model reclaims it.
        coasting = [
            (track, predictions[i])
            for i, track in enumerate(active)
            if i not in matched_tracks
            and track.status is TrackStatus.CONFIRMED
            and predictions[i] is not None
        ]
        frozen = (
            [t for t in self.tracks if t.status is TrackStatus.LOST]
            if cfg.reidentification
            else []
        )
        for j in range(len(obs_subset)):
            if j in matched_obs:
                continue
            geom = obs_subset[j].geometry
            if any(kalman.gate(pred, geom, cfg.tau_p, cfg.eta_d, cfg.c_d) for _, pred in coasting):
                continue
            if any(self._in_reid_gate(t, geom, frame_index) for t in frozen):
                continue
            self._spawn(obs_subset[j], frame_index)

        # Retire lost tracks that have been gone too long.
        survivors = []
        for track in self.tracks:
            if track.status is TrackStatus.LOST and frame_index - track.frame_lost >= cfg.max_lost_frames:
                track.status = TrackStatus.TERMINATED
                logger.debug("track %d retired at frame %d", track.identity, frame_index)
            if track.status is TrackStatus.TERMINATED:
                self.finished.append(track)
            else:
                survivors.append(track)
        self.tracks = survivors

        snapshots.sort(key=lambda s: s.identity)
        return snapshots

    def finalize(self) -> list[Track]:
        """Close the sequence: return confirmed tracks with gaps interpolated."""
        everything = self.finished + self.tracks
        kept = [t for t in everything if t.confirmed_ever]
        for track in kept:
            if len([p for p in track.history if not p.synthetic]) >= 2:
                association.interpolate_gaps(track)
        kept.sort(key=lambda t: t.identity)
        return kept


def tracks_to_rows(tracks: list[Track]) -> list[tuple[int, int, BoundingBox, tuple[float, float]]]:
    """Flatten finalized tracks into (frame, identity, bbox, world) rows."""
    rows = []
    for track in tracks:
        for point in track.history:
            rows.append((point.frame, track.identity, point.bbox, (float(point.foot[0]), float(point.foot[1]))))
    return rows


def run_sequence(
    camera: CalibratedCamera,
    config: TrackerConfig,
    frames,
) -> tuple[list[Track], float]:
    """Drive a tracker over (frame_index, image, detections) triples.

    Returns the finalized tracks and the achieved processing rate in frames
    per second.
    """
    tracker = Tracker(camera, config)
    count = 0
    start = time.perf_counter()
    for frame_index, image, detections in frames:
        tracker.step(frame_index, image, detections)
        count += 1
    elapsed = time.perf_counter() - start
    tracks = tracker.finalize()
    rate = count / elapsed if elapsed > 0 else float("inf")
    return tracks, rate
