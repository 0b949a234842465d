"""Synthetic ground-plane scenes with exact ground truth.

A scenario is a small flat text file describing a pinhole camera pose and a
handful of colored-rectangle agents moving at constant velocity on the
ground plane.  The generator renders frames, produces detections (optionally
jittered and dropped) and emits ground truth whose world coordinates are
exact, which makes the scenes usable as oracles for the full pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .geometry import BoundingBox, CalibratedCamera
from .ingest import DetectionRecord, GroundTruthRecord


@dataclass
class Agent:
    start: tuple[float, float]
    velocity: tuple[float, float]
    width: float
    height: float
    color: tuple[int, int, int]


@dataclass
class Occluder:
    """A static billboard that hides whatever passes behind it."""

    position: tuple[float, float]
    width: float
    height: float
    color: tuple[int, int, int] = (70, 70, 70)


@dataclass
class Scenario:
    frames: int = 100
    fps: float = 10.0
    image_width: int = 640
    image_height: int = 480
    background: tuple[int, int, int] = (96, 96, 96)
    camera_height: float = 6.0
    camera_tilt_deg: float = 35.0
    camera_focal: float = 520.0
    det_noise: float = 0.0
    dropout: float = 0.0
    # Per-frame sigma of a random walk added to each agent's path, in meters.
    # Real targets never hold a perfectly straight line, so a constant-velocity
    # extrapolation should drift away from the truth while the target is hidden.
    wander: float = 0.0
    seed: int = 0
    agents: list[Agent] = field(default_factory=list)
    occluders: list[Occluder] = field(default_factory=list)
    # Detector blackouts: (agent index, first frame, last frame), inclusive.
    blackouts: list[tuple[int, int, int]] = field(default_factory=list)
    # Velocity changes: (agent index, frame, vx, vy); the agent moves with
    # the new velocity from the step after that frame onward.
    turns: list[tuple[int, int, float, float]] = field(default_factory=list)


def build_pinhole_camera(
    image_width: int,
    image_height: int,
    focal: float,
    height: float,
    tilt_deg: float,
) -> CalibratedCamera:
    """Camera at (0, 0, height) looking along +Y, pitched down by tilt_deg."""
    theta = math.radians(tilt_deg)
    # Axis swap: world X -> image x, world -Z -> image y, world Y -> optical axis.
    base = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    pitch = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, math.cos(theta), -math.sin(theta)],
            [0.0, math.sin(theta), math.cos(theta)],
        ]
    )
    rotation = pitch @ base
    center = np.array([0.0, 0.0, height])
    translation = -rotation @ center
    intrinsics = np.array(
        [
            [focal, 0.0, image_width / 2.0],
            [0.0, focal, image_height / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )
    projection = intrinsics @ np.hstack([rotation, translation[:, None]])
    return CalibratedCamera(projection)


def billboard_bbox(camera: CalibratedCamera, foot: tuple[float, float], width: float, height: float) -> BoundingBox:
    """Tight image box of a vertical billboard standing at ``foot``.

    Left/right come from the bottom corners, top from the head; the bottom
    edge's center therefore projects back exactly onto the foot.
    """
    x, y = foot
    bottom_left = camera.project(np.array([x - width / 2.0, y, 0.0]))
    bottom_right = camera.project(np.array([x + width / 2.0, y, 0.0]))
    head = camera.project(np.array([x, y, height]))
    left, right = bottom_left[0], bottom_right[0]
    bottom = bottom_left[1]
    top = head[1]
    return BoundingBox.from_ltwh(left, top, right - left, bottom - top)


@dataclass
class SyntheticSequence:
    scenario: Scenario
    camera: CalibratedCamera
    frames: list[np.ndarray]
    detections: dict[int, list[DetectionRecord]]
    ground_truth: dict[int, list[GroundTruthRecord]]


def _draw_box(image: np.ndarray, bbox: BoundingBox, color: tuple[int, int, int]) -> None:
    h, w = image.shape[:2]
    left = max(int(round(bbox.left)), 0)
    right = min(int(round(bbox.right)), w)
    top = max(int(round(bbox.top)), 0)
    bottom = min(int(round(bbox.bottom)), h)
    if right > left and bottom > top:
        image[top:bottom, left:right] = color


def _blacked_out(scenario: Scenario, agent_idx: int, frame: int) -> bool:
    return any(a == agent_idx and lo <= frame <= hi for a, lo, hi in scenario.blackouts)


def generate(scenario: Scenario, seed: int | None = None) -> SyntheticSequence:
    """Render a scenario: frames, noisy detections, exact ground truth."""
    camera = build_pinhole_camera(
        scenario.image_width,
        scenario.image_height,
        scenario.camera_focal,
        scenario.camera_height,
        scenario.camera_tilt_deg,
    )
    rng = np.random.default_rng(scenario.seed if seed is None else seed)

    # Integrate each agent's velocity schedule (turns switch the velocity
    # from the step after their frame), then overlay the wander walk.
    paths = []
    for idx, agent in enumerate(scenario.agents):
        turns = sorted((f, vx, vy) for a, f, vx, vy in scenario.turns if a == idx)
        pos = np.empty((scenario.frames, 2))
        pos[0] = agent.start
        v = np.asarray(agent.velocity, dtype=np.float64)
        ti = 0
        for frame in range(2, scenario.frames + 1):
            while ti < len(turns) and turns[ti][0] < frame:
                v = np.asarray(turns[ti][1:], dtype=np.float64)
                ti += 1
            pos[frame - 1] = pos[frame - 2] + v
        if scenario.wander > 0.0:
            pos += np.cumsum(rng.normal(0.0, scenario.wander, size=pos.shape), axis=0)
        paths.append(pos)

    def agent_foot(idx: int, frame: int) -> tuple[float, float]:
        x, y = paths[idx][frame - 1]
        return (float(x), float(y))

    frames: list[np.ndarray] = []
    detections: dict[int, list[DetectionRecord]] = {}
    ground_truth: dict[int, list[GroundTruthRecord]] = {}

    for frame in range(1, scenario.frames + 1):
        image = np.empty((scenario.image_height, scenario.image_width, 3), dtype=np.uint8)
        image[:, :] = scenario.background

        # Painter's algorithm: render far to near so occlusion is honest.
        drawables = []
        for idx, agent in enumerate(scenario.agents):
            foot = agent_foot(idx, frame)
            bbox = billboard_bbox(camera, foot, agent.width, agent.height)
            depth = float(np.linalg.norm(camera.center - np.array([foot[0], foot[1], 0.0])))
            drawables.append((depth, bbox, agent.color, idx, foot))
        for occ in scenario.occluders:
            bbox = billboard_bbox(camera, occ.position, occ.width, occ.height)
            depth = float(
                np.linalg.norm(camera.center - np.array([occ.position[0], occ.position[1], 0.0]))
            )
            drawables.append((depth, bbox, occ.color, None, occ.position))
        for depth, bbox, color, _, _ in sorted(drawables, key=lambda d: -d[0]):
            _draw_box(image, bbox, color)
        frames.append(image)

        detections[frame] = []
        ground_truth[frame] = []
        for idx, agent in enumerate(scenario.agents):
            foot = agent_foot(idx, frame)
            bbox = billboard_bbox(camera, foot, agent.width, agent.height)
            ground_truth[frame].append(
                GroundTruthRecord(frame=frame, identity=idx + 1, bbox=bbox, world=foot)
            )
            if _blacked_out(scenario, idx, frame):
                continue
            if scenario.dropout > 0.0 and rng.random() < scenario.dropout:
                continue
            if scenario.det_noise > 0.0:
                left, top, width, height = bbox.to_ltwh()
                jitter = rng.normal(0.0, scenario.det_noise, size=4)
                width = max(width + jitter[2], 2.0)
                height = max(height + jitter[3], 2.0)
                bbox = BoundingBox.from_ltwh(left + jitter[0], top + jitter[1], width, height)
            detections[frame].append(DetectionRecord(frame=frame, bbox=bbox, confidence=1.0))

    return SyntheticSequence(
        scenario=scenario, camera=camera, frames=frames, detections=detections, ground_truth=ground_truth
    )


# -- scenario text format ----------------------------------------------------


def parse_scenario(text: str) -> Scenario:
    """Parse the flat scenario format (``key = value`` plus agent lines)."""
    scenario = Scenario()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            _apply_scenario_key(scenario, key, value)
        except ParseError:
            raise
        except Exception as exc:
            raise ParseError(f"bad value for '{key}': {exc}", lineno) from exc
    if not scenario.agents:
        raise ParseError("scenario defines no agents")
    for a, lo, hi in scenario.blackouts:
        if not (0 <= a < len(scenario.agents)):
            raise ParseError(f"blackout references agent {a} which does not exist")
        if lo > hi:
            raise ParseError(f"blackout window {lo}..{hi} is reversed")
    for a, _, _, _ in scenario.turns:
        if not (0 <= a < len(scenario.agents)):
            raise ParseError(f"turn references agent {a} which does not exist")
    return scenario


def _apply_scenario_key(scenario: Scenario, key: str, value: str) -> None:
    floats = lambda: [float(p) for p in value.split(",")]
    if key == "frames":
        scenario.frames = int(value)
    elif key == "fps":
        scenario.fps = float(value)
    elif key == "image_width":
        scenario.image_width = int(value)
    elif key == "image_height":
        scenario.image_height = int(value)
    elif key == "background":
        r, g, b = (int(float(p)) for p in value.split(","))
        scenario.background = (r, g, b)
    elif key == "camera_height":
        scenario.camera_height = float(value)
    elif key == "camera_tilt_deg":
        scenario.camera_tilt_deg = float(value)
    elif key == "camera_focal":
        scenario.camera_focal = float(value)
    elif key == "det_noise":
        scenario.det_noise = float(value)
    elif key == "dropout":
        scenario.dropout = float(value)
    elif key == "wander":
        scenario.wander = float(value)
    elif key == "seed":
        scenario.seed = int(value)
    elif key == "agent":
        v = floats()
        if len(v) != 9:
            raise ParseError("agent needs 9 values: x,y,vx,vy,width,height,r,g,b")
        scenario.agents.append(
            Agent(
                start=(v[0], v[1]),
                velocity=(v[2], v[3]),
                width=v[4],
                height=v[5],
                color=(int(v[6]), int(v[7]), int(v[8])),
            )
        )
    elif key == "occluder":
        v = floats()
        if len(v) not in (4, 7):
            raise ParseError("occluder needs x,y,width,height[,r,g,b]")
        color = (int(v[4]), int(v[5]), int(v[6])) if len(v) == 7 else (70, 70, 70)
        scenario.occluders.append(Occluder(position=(v[0], v[1]), width=v[2], height=v[3], color=color))
    elif key == "blackout":
        a, lo, hi = (int(float(p)) for p in value.split(","))
        scenario.blackouts.append((a, lo, hi))
    elif key == "turn":
        v = floats()
        if len(v) != 4:
            raise ParseError("turn needs agent,frame,vx,vy")
        scenario.turns.append((int(v[0]), int(v[1]), v[2], v[3]))
    else:
        raise ParseError(f"unknown scenario key '{key}'")


# Two agents with distinct colors whose paths cross mid-sequence; detections
# are jittered and randomly dropped, so geometry alone is ambiguous near the
# crossing while appearance is not.
TWO_CROSS = """\
frames = 100
fps = 10
image_width = 640
image_height = 480
camera_height = 6.0
camera_tilt_deg = 35.0
camera_focal = 520.0
det_noise = 2.5
dropout = 0.2
wander = 0.005
# Two walkers approach head-on, meet at frame 50 while the detector loses
# both for a few frames, and turn back the way they came.  A motion-only
# tracker coasts straight through the meeting point and comes out holding
# the wrong target; their colors tell them apart at a glance.
agent = -2.45, 9.0, 0.05, 0.0, 0.55, 1.75, 210, 45, 45
agent = 2.45, 9.15, -0.05, 0.0, 0.55, 1.70, 45, 60, 210
turn = 0, 50, -0.05, 0.0
turn = 1, 50, 0.05, 0.0
blackout = 0, 48, 51
blackout = 1, 48, 51
"""

# A single agent that walks behind a static pillar and is undetectable for a
# full second (frames 46..55 at 10 fps).
OCCLUSION_REID = """\
frames = 100
fps = 10
image_width = 640
image_height = 480
camera_height = 6.0
camera_tilt_deg = 35.0
camera_focal = 520.0
det_noise = 0.5
dropout = 0.0
agent = -2.4, 9.0, 0.06, 0.0, 0.55, 1.75, 200, 160, 40
occluder = 0.3, 7.5, 1.1, 2.4
blackout = 0, 46, 55
"""

BUILTIN_SCENARIOS = {"two_cross": TWO_CROSS, "occlusion_reid": OCCLUSION_REID}


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Load a scenario file, or one of the built-in named scenarios."""
    path = Path(name_or_path)
    if path.exists():
        return parse_scenario(path.read_text())
    builtin = BUILTIN_SCENARIOS.get(str(name_or_path))
    if builtin is not None:
        return parse_scenario(builtin)
    raise ParseError(f"no scenario file or builtin named '{name_or_path}'")


def scenario_text(scenario: Scenario) -> str:
    """Serialize a scenario back to its flat text format."""
    lines = [
        f"frames = {scenario.frames}",
        f"fps = {scenario.fps}",
        f"image_width = {scenario.image_width}",
        f"image_height = {scenario.image_height}",
        "background = {},{},{}".format(*scenario.background),
        f"camera_height = {scenario.camera_height}",
        f"camera_tilt_deg = {scenario.camera_tilt_deg}",
        f"camera_focal = {scenario.camera_focal}",
        f"det_noise = {scenario.det_noise}",
        f"dropout = {scenario.dropout}",
        f"wander = {scenario.wander}",
        f"seed = {scenario.seed}",
    ]
    for a in scenario.agents:
        lines.append(
            "agent = {},{},{},{},{},{},{},{},{}".format(
                a.start[0], a.start[1], a.velocity[0], a.velocity[1], a.width, a.height, *a.color
            )
        )
    for o in scenario.occluders:
        lines.append(
            "occluder = {},{},{},{},{},{},{}".format(
                o.position[0], o.position[1], o.width, o.height, *o.color
            )
        )
    for idx, lo, hi in scenario.blackouts:
        lines.append(f"blackout = {idx},{lo},{hi}")
    for idx, frame, vx, vy in scenario.turns:
        lines.append(f"turn = {idx},{frame},{vx},{vy}")
    return "\n".join(lines) + "\n"


def write_sequence(sequence: SyntheticSequence, out_dir: str | Path) -> None:
    """Write a generated sequence to disk in the layout cmd_track consumes.

    out_dir/frames/%06d.png, det.txt, gt.txt, calib.txt, scenario.txt.
    """
    from PIL import Image

    out = Path(out_dir)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    for i, image in enumerate(sequence.frames, start=1):
        Image.fromarray(image, mode="RGB").save(frames_dir / f"{i:06d}.png")

    det_lines = []
    for frame in sorted(sequence.detections):
        for det in sequence.detections[frame]:
            left, top, width, height = det.bbox.to_ltwh()
            det_lines.append(
                f"{frame},-1,{left:.6f},{top:.6f},{width:.6f},{height:.6f},{det.confidence:.6f},-1,-1,-1"
            )
    (out / "det.txt").write_text("\n".join(det_lines) + ("\n" if det_lines else ""))

    gt_lines = []
    for frame in sorted(sequence.ground_truth):
        for rec in sequence.ground_truth[frame]:
            left, top, width, height = rec.bbox.to_ltwh()
            gt_lines.append(
                f"{frame},{rec.identity},{left:.6f},{top:.6f},{width:.6f},{height:.6f},1,"
                f"{rec.world[0]:.6f},{rec.world[1]:.6f},0"
            )
    (out / "gt.txt").write_text("\n".join(gt_lines) + ("\n" if gt_lines else ""))

    rows = sequence.camera.projection.reshape(-1)
    (out / "calib.txt").write_text(
        "\n".join(" ".join(f"{v:.12g}" for v in rows[r * 4 : (r + 1) * 4]) for r in range(3)) + "\n"
    )
    (out / "scenario.txt").write_text(scenario_text(sequence.scenario))
