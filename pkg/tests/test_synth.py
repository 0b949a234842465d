"""Synthetic sequence generator: scenario format, motion, noise channels."""

import numpy as np
import pytest

from moana.errors import ParseError
from moana.synth import (
    Scenario,
    build_pinhole_camera,
    billboard_bbox,
    generate,
    load_scenario,
    parse_scenario,
    scenario_text,
    write_sequence,
)


BASIC = """\
frames = 12
fps = 10
agent = -1.0, 8.0, 0.1, 0.0, 0.55, 1.75, 200, 60, 60
"""


def basic_scenario(**overrides):
    scenario = parse_scenario(BASIC)
    for key, value in overrides.items():
        setattr(scenario, key, value)
    return scenario


# -- text format -------------------------------------------------------------------


def test_parse_minimal_scenario():
    scenario = parse_scenario(BASIC)
    assert scenario.frames == 12
    assert len(scenario.agents) == 1
    agent = scenario.agents[0]
    assert agent.start == (-1.0, 8.0)
    assert agent.velocity == (0.1, 0.0)
    assert agent.color == (200, 60, 60)


def test_scenario_text_round_trip():
    scenario = parse_scenario(
        """
        frames = 30
        det_noise = 1.5
        dropout = 0.1
        wander = 0.004
        seed = 3
        agent = -2.0, 9.0, 0.05, 0.0, 0.55, 1.75, 210, 45, 45
        agent = 2.0, 9.1, -0.05, 0.0, 0.55, 1.70, 45, 60, 210
        occluder = 0.3, 7.5, 1.1, 2.4
        blackout = 0, 10, 14
        turn = 1, 15, 0.05, 0.01
        """
    )
    again = parse_scenario(scenario_text(scenario))
    assert again == scenario


def test_parse_ignores_comments_and_blanks():
    scenario = parse_scenario("# a comment\n\n" + BASIC)
    assert scenario.frames == 12


def test_parse_unknown_key_raises():
    with pytest.raises(ParseError):
        parse_scenario(BASIC + "gravity = 9.8\n")


def test_parse_requires_agents():
    with pytest.raises(ParseError):
        parse_scenario("frames = 10\n")


def test_parse_agent_field_count():
    with pytest.raises(ParseError):
        parse_scenario("agent = 1, 2, 3\n")


def test_parse_blackout_validation():
    with pytest.raises(ParseError):
        parse_scenario(BASIC + "blackout = 3, 1, 5\n")  # no agent 3
    with pytest.raises(ParseError):
        parse_scenario(BASIC + "blackout = 0, 9, 4\n")  # reversed window


def test_parse_turn_validation():
    with pytest.raises(ParseError):
        parse_scenario(BASIC + "turn = 2, 5, 0.0, 0.1\n")


def test_parse_missing_equals():
    with pytest.raises(ParseError) as info:
        parse_scenario("frames 12\n" + BASIC)
    assert info.value.line == 1


def test_load_scenario_builtin_and_file(tmp_path):
    builtin = load_scenario("two_cross")
    assert len(builtin.agents) == 2
    path = tmp_path / "mine.txt"
    path.write_text(BASIC)
    from_file = load_scenario(path)
    assert from_file.frames == 12
    with pytest.raises(ParseError):
        load_scenario("no_such_scenario")


# -- motion ------------------------------------------------------------------------


def test_straight_line_motion_is_exact():
    seq = generate(basic_scenario())
    feet = [seq.ground_truth[f][0].world for f in range(1, 13)]
    for i, (x, y) in enumerate(feet):
        assert x == pytest.approx(-1.0 + 0.1 * i, abs=1e-12)
        assert y == pytest.approx(8.0, abs=1e-12)


def test_turn_switches_velocity_after_its_frame():
    scenario = basic_scenario()
    scenario.turns = [(0, 5, 0.0, 0.2)]
    seq = generate(scenario)
    feet = {f: seq.ground_truth[f][0].world for f in range(1, 13)}
    # Through frame 5 the original velocity holds...
    assert feet[5][0] == pytest.approx(-0.6, abs=1e-12)
    assert feet[5][1] == pytest.approx(8.0, abs=1e-12)
    # ...then the new one takes over.
    assert feet[6][0] == pytest.approx(-0.6, abs=1e-12)
    assert feet[6][1] == pytest.approx(8.2, abs=1e-12)
    assert feet[12][1] == pytest.approx(8.0 + 0.2 * 7, abs=1e-12)


def test_wander_perturbs_but_is_seeded():
    scenario = basic_scenario(wander=0.01)
    a = generate(scenario, seed=5)
    b = generate(scenario, seed=5)
    c = generate(scenario, seed=6)
    feet_a = np.array([a.ground_truth[f][0].world for f in range(1, 13)])
    feet_b = np.array([b.ground_truth[f][0].world for f in range(1, 13)])
    feet_c = np.array([c.ground_truth[f][0].world for f in range(1, 13)])
    np.testing.assert_array_equal(feet_a, feet_b)
    assert np.any(feet_a != feet_c)
    straight = np.array([(-1.0 + 0.1 * i, 8.0) for i in range(12)])
    assert 0.0 < np.max(np.abs(feet_a - straight)) < 1.0


# -- detection channels ------------------------------------------------------------


def test_blackout_removes_detections_keeps_truth():
    scenario = basic_scenario()
    scenario.blackouts = [(0, 4, 6)]
    seq = generate(scenario)
    for frame in range(1, 13):
        assert len(seq.ground_truth[frame]) == 1
        expected = 0 if 4 <= frame <= 6 else 1
        assert len(seq.detections[frame]) == expected


def test_dropout_rate_is_roughly_honored():
    scenario = basic_scenario(frames=400, dropout=0.3)
    seq = generate(scenario, seed=11)
    kept = sum(len(v) for v in seq.detections.values())
    assert kept / 400 == pytest.approx(0.7, abs=0.1)


def test_detection_noise_perturbs_boxes_with_floor():
    scenario = basic_scenario(det_noise=3.0)
    seq = generate(scenario, seed=2)
    offsets = []
    for frame in range(1, 13):
        gt_box = seq.ground_truth[frame][0].bbox
        det_box = seq.detections[frame][0].bbox
        offsets.append(abs(det_box.cx - gt_box.cx))
        assert det_box.width >= 2.0
        assert det_box.height >= 2.0
    assert max(offsets) > 0.5


def test_noiseless_detections_equal_truth():
    seq = generate(basic_scenario())
    for frame in range(1, 13):
        assert seq.detections[frame][0].bbox == seq.ground_truth[frame][0].bbox


def test_generate_is_deterministic():
    scenario = basic_scenario(det_noise=1.5, dropout=0.2, wander=0.005)
    a = generate(scenario, seed=9)
    b = generate(scenario, seed=9)
    assert all(np.array_equal(fa, fb) for fa, fb in zip(a.frames, b.frames))
    for frame in range(1, 13):
        boxes_a = [d.bbox for d in a.detections[frame]]
        boxes_b = [d.bbox for d in b.detections[frame]]
        assert boxes_a == boxes_b


# -- rendering and geometry --------------------------------------------------------


def test_billboard_bottom_center_back_projects_to_foot(camera):
    from moana.geometry import back_project_ground

    for foot in ((-2.0, 9.0), (0.5, 7.0), (2.4, 12.0)):
        bbox = billboard_bbox(camera, foot, 0.55, 1.75)
        ground = back_project_ground(camera, bbox.bottom_center)
        np.testing.assert_allclose(ground, foot, atol=1e-9)


def test_agents_are_painted_far_to_near():
    scenario = parse_scenario(
        """
        frames = 1
        agent = 0.0, 8.0, 0.0, 0.0, 0.55, 1.75, 255, 0, 0
        agent = 0.0, 10.0, 0.0, 0.0, 0.55, 1.75, 0, 255, 0
        """
    )
    seq = generate(scenario)
    image = seq.frames[0]
    near_box = seq.ground_truth[1][0].bbox
    x = int(round(near_box.cx))
    y = int(round(near_box.cy))
    # The nearer (red) agent overdraws the farther one where they overlap.
    assert tuple(image[y, x]) == (255, 0, 0)


def test_frames_match_scenario_dimensions():
    seq = generate(basic_scenario())
    assert len(seq.frames) == 12
    assert seq.frames[0].shape == (480, 640, 3)
    assert seq.frames[0].dtype == np.uint8


# -- directory layout --------------------------------------------------------------


def test_write_sequence_layout(tmp_path):
    seq = generate(basic_scenario(det_noise=1.0))
    out = tmp_path / "seq"
    write_sequence(seq, out)
    assert (out / "det.txt").exists()
    assert (out / "gt.txt").exists()
    assert (out / "calib.txt").exists()
    assert (out / "scenario.txt").exists()
    pngs = sorted((out / "frames").glob("*.png"))
    assert len(pngs) == 12
    assert pngs[0].name == "000001.png"

    from moana.ingest import load_calibration, load_detections, load_ground_truth

    dets = load_detections(out / "det.txt")
    gt = load_ground_truth(out / "gt.txt")
    assert sorted(dets) == list(range(1, 13))
    assert sorted(gt) == list(range(1, 13))
    camera = load_calibration(out / "calib.txt")
    np.testing.assert_allclose(camera.projection, seq.camera.projection, rtol=1e-9)
    assert parse_scenario((out / "scenario.txt").read_text()) == seq.scenario
