"""Shared fixtures: a standard camera, feature layouts, and small builders."""

import numpy as np
import pytest

from moana.features import FeatureGrid, FeatureLayout, VisibilityMask
from moana.geometry import BoundingBox
from moana.ingest import GroundTruthRecord
from moana.synth import build_pinhole_camera


@pytest.fixture
def camera():
    """The synthetic scenes' default view: 6 m up, 35 degrees down."""
    return build_pinhole_camera(640, 480, 520.0, 6.0, 35.0)


@pytest.fixture
def rgb_layout():
    return FeatureLayout.build(("rgb",), {"color": 30.0, "texture": 30.0, "edge": 30.0})


@pytest.fixture
def default_layout():
    return FeatureLayout.build(("rgb", "lbp"), {"color": 30.0, "texture": 30.0, "edge": 30.0})


def full_mask(width: int, height: int) -> VisibilityMask:
    return VisibilityMask(width=width, height=height, bits=np.ones((height, width), dtype=bool))


def constant_grid(width: int, height: int, vector) -> FeatureGrid:
    values = np.tile(np.asarray(vector, dtype=np.float32), (height, width, 1))
    return FeatureGrid(width=width, height=height, values=values)


def five_frame_swap_fixture():
    """Two parallel ground-truth tracks whose hypotheses swap ids at frame 3.

    Worked by hand: 10 GT boxes over 5 frames, all positions matched exactly,
    no FP, no FN.  At frame 3 each GT identity changes hypothesis partner, so
    IDSW = 2 and MOTA = 1 - 2/10 = 0.8.  MOTP = 0 (all matched distances 0).
    """
    gt = {}
    hyp = {}
    for frame in range(1, 6):
        a = (float(frame), 0.0)
        b = (float(frame), 5.0)
        box_a = BoundingBox.from_ltwh(10.0 * frame, 10.0, 8.0, 20.0)
        box_b = BoundingBox.from_ltwh(10.0 * frame, 200.0, 8.0, 20.0)
        gt[frame] = [
            GroundTruthRecord(frame=frame, identity=1, bbox=box_a, world=a),
            GroundTruthRecord(frame=frame, identity=2, bbox=box_b, world=b),
        ]
        if frame < 3:
            pair = ((101, box_a, a), (102, box_b, b))
        else:
            pair = ((102, box_a, a), (101, box_b, b))
        hyp[frame] = [
            GroundTruthRecord(frame=frame, identity=i, bbox=bb, world=w) for i, bb, w in pair
        ]
    expected = {"idsw": 2, "mota": 0.8, "fp": 0, "fn": 0, "matches": 10, "motp": 0.0}
    return gt, hyp, expected
