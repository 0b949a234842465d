"""CLEAR-MOT evaluation of tracking output against ground truth.

Correspondences established in one frame are carried into the next as long
as they stay within the match threshold; only the remainder is re-matched
optimally.  Identity switches are counted whenever a ground-truth identity
is matched to a different hypothesis than its most recent one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ModeMismatch

_INVALID = 1e9


@dataclass
class MotMetrics:
    mota: float
    motp: float
    id_switches: int
    fragments: int
    mostly_tracked: float
    mostly_lost: float
    false_positives: int
    false_negatives: int
    matches: int
    gt_boxes: int
    gt_tracks: int


def _distance_matrix(gts, hyps, mode: str, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise cost and validity; cost is meters (3d) or 1 - IoU (2d)."""
    cost = np.full((len(gts), len(hyps)), _INVALID)
    valid = np.zeros((len(gts), len(hyps)), dtype=bool)
    for g, gt in enumerate(gts):
        for h, hyp in enumerate(hyps):
            if mode == "3d":
                if gt.world is None or hyp.world is None:
                    raise ModeMismatch("3d evaluation needs world coordinates on every row")
                d = float(np.hypot(gt.world[0] - hyp.world[0], gt.world[1] - hyp.world[1]))
                if d <= threshold:
                    cost[g, h] = d
                    valid[g, h] = True
            else:
                iou = gt.bbox.iou(hyp.bbox)
                if iou >= threshold:
                    cost[g, h] = 1.0 - iou
                    valid[g, h] = True
    return cost, valid


def evaluate(ground_truth: dict, hypotheses: dict, mode: str = "3d", threshold: float | None = None) -> MotMetrics:
    """Run the CLEAR-MOT protocol over frame-indexed record dicts.

    mode "3d" matches by ground-plane distance (threshold in meters,
    default 1.0) and reports MOTP as the mean matched distance; mode "2d"
    matches by box IoU (default 0.5) and reports MOTP as the mean matched
    IoU.
    """
    if mode not in ("2d", "3d"):
        raise ValueError(f"mode must be '2d' or '3d', got {mode!r}")
    if threshold is None:
        threshold = 1.0 if mode == "3d" else 0.5

    frames = sorted(set(ground_truth) | set(hypotheses))
    correspondences: dict[int, int] = {}  # gt identity -> hyp identity, current
    last_match: dict[int, int] = {}  # gt identity -> hyp identity, ever
    matched_frames: dict[int, list[bool]] = {}  # gt identity -> per-frame matched flags

    fp = fn = idsw = matches = gt_boxes = 0
    motp_accum = 0.0

    for frame in frames:
        gts = ground_truth.get(frame, [])
        hyps = hypotheses.get(frame, [])
        gt_boxes += len(gts)
        gt_ids = [g.identity for g in gts]
        hyp_ids = [h.identity for h in hyps]
        cost, valid = _distance_matrix(gts, hyps, mode, threshold)

        frame_pairs: list[tuple[int, int]] = []
        used_g: set[int] = set()
        used_h: set[int] = set()

        # Carry over standing correspondences that are still close enough.
        for g, gid in enumerate(gt_ids):
            hid = correspondences.get(gid)
            if hid is None or hid not in hyp_ids:
                continue
            h = hyp_ids.index(hid)
            if valid[g, h]:
                frame_pairs.append((g, h))
                used_g.add(g)
                used_h.add(h)

        # Optimal matching over what remains.
        free_g = [g for g in range(len(gts)) if g not in used_g]
        free_h = [h for h in range(len(hyps)) if h not in used_h]
        if free_g and free_h:
            sub = cost[np.ix_(free_g, free_h)]
            rows, cols = linear_sum_assignment(sub)
            for r, c in zip(rows, cols):
                g, h = free_g[r], free_h[c]
                if valid[g, h]:
                    frame_pairs.append((g, h))

        matched_g = set()
        for g, h in frame_pairs:
            gid, hid = gt_ids[g], hyp_ids[h]
            if gid in last_match and last_match[gid] != hid:
                idsw += 1
            last_match[gid] = hid
            correspondences[gid] = hid
            matches += 1
            matched_g.add(g)
            motp_accum += (1.0 - cost[g, h]) if mode == "2d" else cost[g, h]

        fp += len(hyps) - len(frame_pairs)
        fn += len(gts) - len(frame_pairs)
        for g, gid in enumerate(gt_ids):
            matched_frames.setdefault(gid, []).append(g in matched_g)

    mota = 1.0 - (fp + fn + idsw) / gt_boxes if gt_boxes else 0.0
    motp = motp_accum / matches if matches else 0.0

    fragments = 0
    mostly_tracked = mostly_lost = 0
    for flags in matched_frames.values():
        ratio = sum(flags) / len(flags)
        if ratio >= 0.8:
            mostly_tracked += 1
        if ratio <= 0.2:
            mostly_lost += 1
        # One fragment per resumption after an interruption.
        seen = False
        in_gap = False
        for flag in flags:
            if flag:
                if seen and in_gap:
                    fragments += 1
                seen = True
                in_gap = False
            elif seen:
                in_gap = True

    n_tracks = len(matched_frames)
    return MotMetrics(
        mota=mota,
        motp=motp,
        id_switches=idsw,
        fragments=fragments,
        mostly_tracked=mostly_tracked / n_tracks if n_tracks else 0.0,
        mostly_lost=mostly_lost / n_tracks if n_tracks else 0.0,
        false_positives=fp,
        false_negatives=fn,
        matches=matches,
        gt_boxes=gt_boxes,
        gt_tracks=n_tracks,
    )


_COLUMNS = (
    ("MOTA", lambda m: f"{m.mota * 100.0:.1f}%"),
    ("MOTP", lambda m: f"{m.motp:.3f}"),
    ("MT", lambda m: f"{m.mostly_tracked * 100.0:.1f}%"),
    ("ML", lambda m: f"{m.mostly_lost * 100.0:.1f}%"),
    ("FP", lambda m: str(m.false_positives)),
    ("FN", lambda m: str(m.false_negatives)),
    ("IDsw", lambda m: str(m.id_switches)),
    ("Frag", lambda m: str(m.fragments)),
)


def format_report(metrics: MotMetrics) -> str:
    """Render both an aligned table and a CSV block for one evaluation."""
    names = [name for name, _ in _COLUMNS]
    values = [fmt(metrics) for _, fmt in _COLUMNS]
    widths = [max(len(n), len(v)) for n, v in zip(names, values)]
    header = "  ".join(n.rjust(w) for n, w in zip(names, widths))
    row = "  ".join(v.rjust(w) for v, w in zip(values, widths))
    csv = ",".join(names) + "\n" + ",".join(values)
    return header + "\n" + row + "\n\n" + csv
