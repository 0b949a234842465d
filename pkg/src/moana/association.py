"""Frame-to-frame association machinery.

Observations are first classified by how contested they are: an observation
is GROUPED when more than one predicted target sits inside its position gate
or when its box overlaps another observation's box, and ISOLATED otherwise.
Isolated observations can be resolved by geometry alone; grouped ones are
scored by appearance cross-matching.  Targets that lose their observation
drop into a lost pool and can only return through re-identification against
their frozen appearance model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .appearance import AppearanceModel, similarity
from .features import FeatureGrid, VisibilityMask
from .geometry import BoundingBox, Geometry3D, depth_weight
from .kalman import TrackState3D, gate

DIST_EPS = 1e-3


class ObservationState(Enum):
    ISOLATED = "isolated"
    GROUPED = "grouped"


@dataclass
class CandidateList:
    """Predicted targets whose gate contains one observation."""

    observation: int
    candidates: list[int]
    state: ObservationState


@dataclass
class AssignmentResult:
    pairs: list[tuple[int, int]]
    unmatched_rows: list[int]
    unmatched_cols: list[int]


@dataclass
class LostTarget:
    """A frozen track waiting for re-identification."""

    identity: int
    model: AppearanceModel
    state: TrackState3D
    frame_lost: int
    frames_missing: int


@dataclass
class TrackPoint:
    """One frame of a track's reported trajectory."""

    frame: int
    bbox: BoundingBox
    foot: np.ndarray
    synthetic: bool = False


def build_candidate_lists(
    observations: list[Geometry3D],
    predictions: list[Geometry3D],
    tau_p: float,
    eta_d: float,
    c_d: float,
) -> list[CandidateList]:
    """Gate every prediction against every observation and classify contests.

    Observation j collects the predictions passing the depth-compensated
    position gate; it is GROUPED iff that list has more than one entry or
    its box overlaps any other observation's box.
    """
    lists = []
    for j, obs in enumerate(observations):
        candidates = [i for i, pred in enumerate(predictions) if gate(pred, obs, tau_p, eta_d, c_d)]
        overlapped = any(
            obs.bbox.overlaps(other.bbox) for jj, other in enumerate(observations) if jj != j
        )
        state = ObservationState.GROUPED if (len(candidates) > 1 or overlapped) else ObservationState.ISOLATED
        lists.append(CandidateList(observation=j, candidates=candidates, state=state))
    return lists


def visible_fraction(observation: Geometry3D, others: list[Geometry3D]) -> float:
    """Fraction of the observation's box not covered by strictly nearer boxes.

    The covered region is the exact area of the union of the nearer boxes
    clipped to the observation, computed on the coordinate grid induced by
    all box edges.
    """
    box = observation.bbox
    if box.area <= 0.0:
        return 1.0
    clipped = []
    for other in others:
        if other is observation or other.depth >= observation.depth:
            continue
        l = max(box.left, other.bbox.left)
        r = min(box.right, other.bbox.right)
        t = max(box.top, other.bbox.top)
        b = min(box.bottom, other.bbox.bottom)
        if r > l and b > t:
            clipped.append((l, t, r, b))
    if not clipped:
        return 1.0

    xs = sorted({box.left, box.right} | {c[0] for c in clipped} | {c[2] for c in clipped})
    ys = sorted({box.top, box.bottom} | {c[1] for c in clipped} | {c[3] for c in clipped})
    covered = 0.0
    for x0, x1 in zip(xs[:-1], xs[1:]):
        mx = (x0 + x1) / 2.0
        for y0, y1 in zip(ys[:-1], ys[1:]):
            my = (y0 + y1) / 2.0
            if any(l <= mx <= r and t <= my <= b for l, t, r, b in clipped):
                covered += (x1 - x0) * (y1 - y0)
    return 1.0 - covered / box.area


def cross_match_score(
    predicted: Geometry3D,
    model: AppearanceModel,
    observation: Geometry3D,
    grid: FeatureGrid,
    mask: VisibilityMask,
    eta_d: float,
    c_d: float,
) -> float:
    """Appearance similarity scaled by depth weight over ground distance.

    score = similarity(model, grid, mask) * w(depth) / max(||P_hat - P||, eps)
    with the observation's depth weight and a small distance floor.
    """
    s = similarity(model, grid, mask)
    dist = float(np.linalg.norm(predicted.foot - observation.foot))
    return s * depth_weight(observation.depth, eta_d, c_d) / max(dist, DIST_EPS)


def _matching_total(scores: np.ndarray, pairs: list[tuple[int, int]]) -> float:
    """Order-independent (correctly rounded) total score of a matching."""
    return math.fsum(float(scores[i, j]) for i, j in pairs)


def _solve_raw(scores: np.ndarray) -> list[tuple[int, int]]:
    rows, cols = linear_sum_assignment(scores, maximize=True)
    return list(zip(rows.tolist(), cols.tolist()))


def _upper_bound(scores: np.ndarray) -> float:
    """Cheap upper bound on any matching's total: largest per-row maxima."""
    if scores.size == 0:
        return 0.0
    row_max = scores.max(axis=1)
    take = min(scores.shape[0], scores.shape[1])
    return math.fsum(np.sort(row_max)[::-1][:take].tolist())


def _lexicographic_pairs(scores: np.ndarray, target: float) -> list[tuple[int, int]]:
    """Choose, among maximum-total matchings, the lexicographically smallest.

    Rows are fixed in ascending order; for each row the smallest column that
    still permits reaching the optimal total is kept.  Totals are compared
    with correctly rounded sums, so only genuine score ties are re-broken.
    """
    m, k = scores.shape
    row_ids = list(range(m))
    col_ids = list(range(k))
    sub = scores
    fixed: list[tuple[int, int]] = []
    fixed_scores: list[float] = []

    while sub.shape[0] and sub.shape[1]:
        reference = dict(_solve_raw(sub))
        ref_col = reference.get(0)
        chosen = ref_col
        limit = ref_col if ref_col is not None else sub.shape[1]
        for c in range(limit):
            rest = np.delete(np.delete(sub, 0, axis=0), c, axis=1)
            bound = math.fsum(fixed_scores + [float(sub[0, c]), _upper_bound(rest)])
            if bound < target:
                continue
            total = math.fsum(
                fixed_scores + [float(sub[0, c]), _matching_total(rest, _solve_raw(rest))]
            )
            if total == target:
                chosen = c
                break
        if chosen is None:
            # Row 0 is unmatched in every optimal matching.
            sub = sub[1:]
            row_ids.pop(0)
            continue
        fixed.append((row_ids[0], col_ids[chosen]))
        fixed_scores.append(float(sub[0, chosen]))
        sub = np.delete(np.delete(sub, 0, axis=0), chosen, axis=1)
        row_ids.pop(0)
        col_ids.pop(chosen)

    return fixed


def solve_assignment(scores: np.ndarray, min_score: float = 0.0) -> AssignmentResult:
    """Maximum-total-score matching with deterministic tie-breaking.

    Scores must be finite and non-negative.  Among matchings of equal
    (correctly rounded) total the lexicographically smallest pair set by
    (row, column) wins.  Matched pairs scoring below min_score are removed
    afterwards and reported unmatched.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError(f"score matrix must be 2-D, got shape {scores.shape}")
    m, k = scores.shape
    if m and k and (not np.all(np.isfinite(scores)) or scores.min() < 0.0):
        raise ValueError("scores must be finite and non-negative")
    if m == 0 or k == 0:
        return AssignmentResult(pairs=[], unmatched_rows=list(range(m)), unmatched_cols=list(range(k)))

    target = _matching_total(scores, _solve_raw(scores))
    pairs = _lexicographic_pairs(scores, target)
    kept = [(i, j) for i, j in pairs if scores[i, j] >= min_score]
    kept.sort()
    matched_rows = {i for i, _ in kept}
    matched_cols = {j for _, j in kept}
    return AssignmentResult(
        pairs=kept,
        unmatched_rows=[i for i in range(m) if i not in matched_rows],
        unmatched_cols=[j for j in range(k) if j not in matched_cols],
    )


def greedy_nearest_assignment(distances: np.ndarray, valid: np.ndarray) -> list[tuple[int, int]]:
    """Nearest-first greedy matching over valid pairs (ablation baseline).

    Pairs are taken in ascending distance order (ties by row then column);
    each row and column is used at most once.
    """
    distances = np.asarray(distances, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    order = sorted(
        ((float(distances[i, j]), i, j) for i, j in zip(*np.nonzero(valid))),
        key=lambda t: (t[0], t[1], t[2]),
    )
    used_rows: set[int] = set()
    used_cols: set[int] = set()
    pairs = []
    for _, i, j in order:
        if i in used_rows or j in used_cols:
            continue
        pairs.append((i, j))
        used_rows.add(i)
        used_cols.add(j)
    pairs.sort()
    return pairs


def reidentify(
    lost: list[LostTarget],
    observations: list[Geometry3D],
    grids: list[FeatureGrid],
    masks: list[VisibilityMask],
    tau_s: float,
    tau_p: float,
    eta_d: float,
    c_d: float,
    fps: float,
) -> list[tuple[int, int]]:
    """Match lost targets to observations by frozen-model similarity.

    A pair is considered only when the observation's foot lies inside the
    lost target's expanded gate: the frozen foot advanced frames_missing
    steps at the frozen velocity, with radius
    tau_p * (1 + frames_missing / fps) * w(depth).  Surviving pairs score by
    appearance similarity and are matched optimally; scores below tau_s do
    not match.
    """
    if not lost or not observations:
        return []
    scores = np.zeros((len(lost), len(observations)))
    for i, target in enumerate(lost):
        predicted_foot = target.state.foot + target.frames_missing * target.state.velocity
        for j, obs in enumerate(observations):
            radius = tau_p * (1.0 + target.frames_missing / fps) * depth_weight(obs.depth, eta_d, c_d)
            dist = float(np.linalg.norm(predicted_foot - obs.foot))
            if dist < radius:
                scores[i, j] = similarity(target.model, grids[j], masks[j])
    result = solve_assignment(scores, min_score=tau_s)
    return result.pairs


def interpolate_gaps(track) -> object:
    """Linearly fill unobserved frames between consecutive history entries.

    Box parameters and foot coordinates are interpolated; inserted entries
    are flagged synthetic.  A track with no gaps is returned unchanged.
    Requires at least two observed frames.
    """
    history = sorted(track.history, key=lambda p: p.frame)
    observed = [p for p in history if not p.synthetic]
    if len(observed) < 2:
        raise ValueError("gap interpolation needs at least two observed frames")

    filled: list[TrackPoint] = []
    for prev, nxt in zip(history[:-1], history[1:]):
        filled.append(prev)
        span = nxt.frame - prev.frame
        for f in range(prev.frame + 1, nxt.frame):
            t = (f - prev.frame) / span
            bbox = BoundingBox(
                cx=prev.bbox.cx + t * (nxt.bbox.cx - prev.bbox.cx),
                cy=prev.bbox.cy + t * (nxt.bbox.cy - prev.bbox.cy),
                width=prev.bbox.width + t * (nxt.bbox.width - prev.bbox.width),
                height=prev.bbox.height + t * (nxt.bbox.height - prev.bbox.height),
            )
            foot = prev.foot + t * (nxt.foot - prev.foot)
            filled.append(TrackPoint(frame=f, bbox=bbox, foot=foot, synthetic=True))
    filled.append(history[-1])
    track.history = filled
    return track
