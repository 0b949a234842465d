"""Candidate grouping, assignment solvers, re-identification, gap filling."""

import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest

from moana.appearance import AppearanceModel
from moana.association import (
    DIST_EPS,
    LostTarget,
    ObservationState,
    TrackPoint,
    build_candidate_lists,
    cross_match_score,
    greedy_nearest_assignment,
    interpolate_gaps,
    reidentify,
    solve_assignment,
    visible_fraction,
)
from moana.features import FeatureLayout, VisibilityMask
from moana.geometry import BoundingBox, Geometry3D
from moana.kalman import TrackState3D

from conftest import constant_grid, full_mask

GATE_KW = dict(tau_p=2.0, eta_d=1.0 / 30.0, c_d=1.0)


def geom(bbox=None, foot=(0.0, 8.0), depth=0.0):
    if bbox is None:
        bbox = BoundingBox.from_ltwh(100.0, 100.0, 40.0, 80.0)
    return Geometry3D(
        bbox=bbox,
        foot=np.asarray(foot, dtype=np.float64),
        depth=float(depth),
        velocity=np.zeros(2),
        width3d=0.55,
        height3d=1.75,
    )


# -- candidate lists ---------------------------------------------------------------


def test_single_gated_prediction_is_isolated():
    obs = [geom(foot=(0.0, 8.0))]
    preds = [geom(foot=(0.5, 8.0))]
    lists = build_candidate_lists(obs, preds, **GATE_KW)
    assert lists[0].candidates == [0]
    assert lists[0].state is ObservationState.ISOLATED


def test_two_gated_predictions_force_grouped():
    obs = [geom(foot=(0.0, 8.0))]
    preds = [geom(foot=(0.5, 8.0)), geom(foot=(-0.7, 8.0))]
    lists = build_candidate_lists(obs, preds, **GATE_KW)
    assert lists[0].candidates == [0, 1]
    assert lists[0].state is ObservationState.GROUPED


def test_box_overlap_forces_grouped_even_with_one_candidate():
    box_a = BoundingBox.from_ltwh(100.0, 100.0, 40.0, 80.0)
    box_b = BoundingBox.from_ltwh(130.0, 110.0, 40.0, 80.0)
    obs = [geom(bbox=box_a, foot=(0.0, 8.0)), geom(bbox=box_b, foot=(5.0, 8.0))]
    preds = [geom(foot=(0.2, 8.0)), geom(foot=(5.2, 8.0))]
    lists = build_candidate_lists(obs, preds, **GATE_KW)
    assert [c.candidates for c in lists] == [[0], [1]]
    assert all(c.state is ObservationState.GROUPED for c in lists)


def test_out_of_gate_prediction_excluded():
    obs = [geom(foot=(0.0, 8.0))]
    preds = [geom(foot=(10.0, 8.0))]
    lists = build_candidate_lists(obs, preds, **GATE_KW)
    assert lists[0].candidates == []
    assert lists[0].state is ObservationState.ISOLATED


# -- visible fraction --------------------------------------------------------------


def raster_fraction(observation, others):
    """Unit-cell rasterization oracle; exact for integer box edges."""
    box = observation.bbox
    covered = 0
    total = 0
    for y in np.arange(box.top + 0.5, box.bottom, 1.0):
        for x in np.arange(box.left + 0.5, box.right, 1.0):
            total += 1
            for other in others:
                if other.depth < observation.depth and other.bbox.contains_point(x, y):
                    covered += 1
                    break
    return 1.0 - covered / total


def test_visible_fraction_no_others():
    assert visible_fraction(geom(depth=10.0), []) == 1.0


def test_visible_fraction_half_covered():
    obs = geom(bbox=BoundingBox.from_ltwh(0.0, 0.0, 10.0, 10.0), depth=10.0)
    front = geom(bbox=BoundingBox.from_ltwh(0.0, 0.0, 5.0, 10.0), depth=5.0)
    assert visible_fraction(obs, [front]) == pytest.approx(0.5, abs=1e-12)


def test_visible_fraction_union_not_double_counted():
    obs = geom(bbox=BoundingBox.from_ltwh(0.0, 0.0, 10.0, 10.0), depth=10.0)
    a = geom(bbox=BoundingBox.from_ltwh(0.0, 0.0, 6.0, 10.0), depth=5.0)
    b = geom(bbox=BoundingBox.from_ltwh(4.0, 0.0, 6.0, 10.0), depth=6.0)
    assert visible_fraction(obs, [a, b]) == pytest.approx(0.0, abs=1e-12)


def test_visible_fraction_ignores_deeper_and_equal():
    obs = geom(bbox=BoundingBox.from_ltwh(0.0, 0.0, 10.0, 10.0), depth=10.0)
    behind = geom(bbox=BoundingBox.from_ltwh(0.0, 0.0, 10.0, 10.0), depth=11.0)
    level = geom(bbox=BoundingBox.from_ltwh(0.0, 0.0, 10.0, 10.0), depth=10.0)
    assert visible_fraction(obs, [behind, level]) == 1.0


def test_visible_fraction_matches_raster_oracle():
    rng = np.random.default_rng(31)
    for _ in range(25):
        obs = geom(bbox=BoundingBox.from_ltwh(0.0, 0.0, 12.0, 9.0), depth=10.0)
        others = []
        for _ in range(rng.integers(1, 5)):
            l = float(rng.integers(-4, 10))
            t = float(rng.integers(-4, 7))
            w = float(rng.integers(1, 9))
            h = float(rng.integers(1, 9))
            depth = float(rng.choice([5.0, 8.0, 15.0]))
            others.append(geom(bbox=BoundingBox.from_ltwh(l, t, w, h), depth=depth))
        expected = raster_fraction(obs, others)
        assert visible_fraction(obs, others) == pytest.approx(expected, abs=1e-9)


# -- cross-match score -------------------------------------------------------------


def saturated_model(vector, width=2, height=2):
    layout = FeatureLayout.build(("rgb",), {"color": 30.0, "texture": 30.0, "edge": 30.0})
    model = AppearanceModel(width, height, 1, layout)
    model.samples[:, 0, :] = vector
    model.counts[:] = 1
    return model


def test_cross_match_score_decreases_with_distance():
    model = saturated_model([10.0, 10.0, 10.0])
    grid = constant_grid(2, 2, [10.0, 10.0, 10.0])
    mask = full_mask(2, 2)
    pred = geom(foot=(0.0, 8.0))
    scores = [
        cross_match_score(pred, model, geom(foot=(dx, 8.0)), grid, mask, 1.0 / 30.0, 1.0)
        for dx in (0.5, 1.0, 2.0)
    ]
    assert scores[0] == pytest.approx(2.0)
    assert scores[1] == pytest.approx(1.0)
    assert scores[2] == pytest.approx(0.5)


def test_cross_match_score_distance_floor():
    model = saturated_model([10.0, 10.0, 10.0])
    grid = constant_grid(2, 2, [10.0, 10.0, 10.0])
    pred = geom(foot=(0.0, 8.0))
    score = cross_match_score(pred, model, geom(foot=(0.0, 8.0)), grid, full_mask(2, 2), 1.0 / 30.0, 1.0)
    assert score == pytest.approx(1.0 / DIST_EPS)


def test_cross_match_score_zero_similarity_is_zero():
    model = saturated_model([10.0, 10.0, 10.0])
    grid = constant_grid(2, 2, [200.0, 200.0, 200.0])
    pred = geom(foot=(0.0, 8.0))
    score = cross_match_score(pred, model, geom(foot=(0.5, 8.0)), grid, full_mask(2, 2), 1.0 / 30.0, 1.0)
    assert score == 0.0


# -- optimal assignment ------------------------------------------------------------


def brute_force_total(scores):
    m, k = scores.shape
    best = -1.0
    if m <= k:
        for perm in itertools.permutations(range(k), m):
            best = max(best, math.fsum(float(scores[i, j]) for i, j in enumerate(perm)))
    else:
        for perm in itertools.permutations(range(m), k):
            best = max(best, math.fsum(float(scores[i, j]) for j, i in enumerate(perm)))
    return best


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(60):
        m = int(rng.integers(1, 6))
        k = int(rng.integers(1, 6))
        scores = rng.uniform(0.0, 10.0, size=(m, k))
        result = solve_assignment(scores)
        total = math.fsum(float(scores[i, j]) for i, j in result.pairs)
        assert total == brute_force_total(scores)
        assert len(result.pairs) == min(m, k)


def test_assignment_lexicographic_tie_break():
    result = solve_assignment(np.array([[2.0, 2.0], [1.0, 1.0]]))
    assert result.pairs == [(0, 0), (1, 1)]


def test_assignment_min_score_filters_after_solving():
    result = solve_assignment(np.array([[5.0, 0.0], [0.0, 0.5]]), min_score=1.0)
    assert result.pairs == [(0, 0)]
    assert result.unmatched_rows == [1]
    assert result.unmatched_cols == [1]


def test_assignment_empty_matrix():
    result = solve_assignment(np.zeros((0, 3)))
    assert result.pairs == []
    assert result.unmatched_rows == []
    assert result.unmatched_cols == [0, 1, 2]


def test_assignment_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_assignment(np.array([[1.0, -0.5]]))
    with pytest.raises(ValueError):
        solve_assignment(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        solve_assignment(np.zeros((2, 2, 2)))


def test_assignment_unmatched_bookkeeping():
    result = solve_assignment(np.array([[1.0, 2.0, 3.0]]))
    assert result.pairs == [(0, 2)]
    assert result.unmatched_rows == []
    assert result.unmatched_cols == [0, 1]


# -- greedy baseline ---------------------------------------------------------------


def test_greedy_takes_nearest_first():
    distances = np.array([[1.0, 0.2], [0.5, 0.3]])
    valid = np.ones((2, 2), dtype=bool)
    # Ascending: (0,1)=0.2 then (1,0)=0.5 (0.3 blocked by used column 1).
    assert greedy_nearest_assignment(distances, valid) == [(0, 1), (1, 0)]


def test_greedy_tie_break_row_then_column():
    distances = np.zeros((2, 2))
    valid = np.ones((2, 2), dtype=bool)
    assert greedy_nearest_assignment(distances, valid) == [(0, 0), (1, 1)]


def test_greedy_respects_validity_mask():
    distances = np.array([[0.1, 0.9], [0.2, 0.8]])
    valid = np.array([[False, True], [True, True]])
    assert greedy_nearest_assignment(distances, valid) == [(0, 1), (1, 0)]


def test_greedy_differs_from_optimal_on_trap():
    # Greedy grabs the single cheapest pair and pays for it globally.
    distances = np.array([[1.0, 2.0], [1.1, 10.0]])
    valid = np.ones((2, 2), dtype=bool)
    greedy = greedy_nearest_assignment(distances, valid)
    assert greedy == [(0, 0), (1, 1)]
    optimal = solve_assignment(distances.max() - distances)
    assert optimal.pairs == [(0, 1), (1, 0)]


# -- re-identification -------------------------------------------------------------


def lost_target(identity=5, foot=(0.0, 8.0), velocity=(0.1, 0.0), frames_missing=5):
    model = saturated_model([10.0, 10.0, 10.0])
    x = np.array([foot[0], foot[1], velocity[0], velocity[1], 0.55, 1.75])
    state = TrackState3D(x=x, covariance=np.eye(6), frame=10)
    return LostTarget(identity=identity, model=model, state=state, frame_lost=10, frames_missing=frames_missing)


REID_KW = dict(tau_s=0.30, tau_p=2.0, eta_d=1.0 / 30.0, c_d=1.0, fps=10.0)


def test_reidentify_matches_inside_expanded_gate():
    target = lost_target()
    # Predicted foot is (0.5, 8.0); radius = 2 * (1 + 5/10) * 1 = 3.
    obs = [geom(foot=(2.0, 8.0))]
    grids = [constant_grid(2, 2, [10.0, 10.0, 10.0])]
    masks = [full_mask(2, 2)]
    assert reidentify([target], obs, grids, masks, **REID_KW) == [(0, 0)]


def test_reidentify_rejects_outside_gate():
    target = lost_target()
    obs = [geom(foot=(4.0, 8.0))]  # distance 3.5 >= radius 3
    grids = [constant_grid(2, 2, [10.0, 10.0, 10.0])]
    masks = [full_mask(2, 2)]
    assert reidentify([target], obs, grids, masks, **REID_KW) == []


def test_reidentify_gate_widens_with_absence():
    far = geom(foot=(4.0, 8.0))
    grids = [constant_grid(2, 2, [10.0, 10.0, 10.0])]
    masks = [full_mask(2, 2)]
    stale = lost_target(frames_missing=15, velocity=(0.0, 0.0))
    # radius = 2 * (1 + 15/10) = 5 > distance 4.
    assert reidentify([stale], [far], grids, masks, **REID_KW) == [(0, 0)]


def test_reidentify_requires_similarity_floor():
    target = lost_target()
    obs = [geom(foot=(1.0, 8.0))]
    grids = [constant_grid(2, 2, [200.0, 200.0, 200.0])]  # nothing matches
    masks = [full_mask(2, 2)]
    assert reidentify([target], obs, grids, masks, **REID_KW) == []


def test_reidentify_is_one_to_one():
    targets = [lost_target(identity=1), lost_target(identity=2)]
    obs = [geom(foot=(1.0, 8.0))]
    grids = [constant_grid(2, 2, [10.0, 10.0, 10.0])]
    masks = [full_mask(2, 2)]
    pairs = reidentify(targets, obs, grids, masks, **REID_KW)
    assert len(pairs) == 1


def test_reidentify_empty_inputs():
    assert reidentify([], [geom()], [], [], **REID_KW) == []
    assert reidentify([lost_target()], [], [], [], **REID_KW) == []


# -- gap interpolation -------------------------------------------------------------


def track_with_frames(frames):
    history = [
        TrackPoint(
            frame=f,
            bbox=BoundingBox(cx=10.0 * f, cy=50.0, width=8.0 + f, height=20.0),
            foot=np.array([0.1 * f, 8.0]),
        )
        for f in frames
    ]
    return SimpleNamespace(history=history)


def test_interpolation_fills_gap_linearly():
    track = interpolate_gaps(track_with_frames([1, 2, 5]))
    frames = [p.frame for p in track.history]
    assert frames == [1, 2, 3, 4, 5]
    flags = [p.synthetic for p in track.history]
    assert flags == [False, False, True, True, False]
    p3 = track.history[2]
    assert p3.bbox.cx == pytest.approx(30.0)
    assert p3.bbox.width == pytest.approx(11.0)
    np.testing.assert_allclose(p3.foot, [0.3, 8.0])
    p4 = track.history[3]
    assert p4.bbox.cx == pytest.approx(40.0)


def test_interpolation_dense_track_unchanged():
    track = interpolate_gaps(track_with_frames([3, 4, 5]))
    assert [p.frame for p in track.history] == [3, 4, 5]
    assert not any(p.synthetic for p in track.history)


def test_interpolation_needs_two_observed_frames():
    with pytest.raises(ValueError):
        interpolate_gaps(track_with_frames([7]))
