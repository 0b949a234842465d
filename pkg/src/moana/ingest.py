"""File I/O: detections, ground truth, frames, calibration, and results.

All text formats are MOTChallenge-shaped CSV rows
``frame,id,left,top,width,height,conf,x,y,z``.  Boxes are converted to the
internal center+size convention on load and back to left-top+size on write.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, EmptyInput, IoError, ParseError
from .geometry import BoundingBox, CalibratedCamera

# World coordinates are optional in every format; absent values are the
# literal -1 by convention.
_MISSING = -1.0


@dataclass
class DetectionRecord:
    frame: int
    bbox: BoundingBox
    confidence: float


@dataclass
class GroundTruthRecord:
    """One annotated (or hypothesized) box: identity, box, optional world point."""

    frame: int
    identity: int
    bbox: BoundingBox
    world: tuple[float, float] | None = None


def _parse_row(raw: str, lineno: int) -> list[float] | None:
    line = raw.strip()
    if not line:
        return None
    parts = [p.strip() for p in line.split(",")]
    if len(parts) < 7:
        raise ParseError(f"expected at least 7 comma-separated fields, got {len(parts)}", lineno)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from exc


def _dense_frames(by_frame: dict) -> dict:
    """Fill in empty lists so frames 1..max are all present."""
    if not by_frame:
        return by_frame
    last = max(by_frame)
    return {f: by_frame.get(f, []) for f in range(1, last + 1)}


def load_detections(path: str | Path, min_confidence: float = 0.0) -> dict[int, list[DetectionRecord]]:
    """Read a detection file into frame-indexed lists.

    Rows below ``min_confidence`` or with non-positive extent are dropped
    (their frames stay present but empty).  A file with no parseable rows at
    all raises EmptyInput; malformed rows raise ParseError with the line
    number.
    """
    path = Path(path)
    if not path.exists():
        raise IoError(f"detection file not found: {path}")

    by_frame: dict[int, list[DetectionRecord]] = {}
    rows = 0
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        values = _parse_row(raw, lineno)
        if values is None:
            continue
        rows += 1
        frame = int(values[0])
        left, top, width, height = values[2:6]
        conf = values[6]
        by_frame.setdefault(frame, [])
        if conf < min_confidence or width <= 0.0 or height <= 0.0:
            continue
        by_frame[frame].append(
            DetectionRecord(frame=frame, bbox=BoundingBox.from_ltwh(left, top, width, height), confidence=conf)
        )
    if rows == 0:
        raise EmptyInput(f"no detection rows in {path}")
    return _dense_frames(by_frame)


def load_ground_truth(path: str | Path) -> dict[int, list[GroundTruthRecord]]:
    """Read annotations (or a result file) into frame-indexed record lists.

    Rows flagged with confidence 0 are ignored, as is conventional for
    benchmark annotation files.  World coordinates equal to the -1 sentinel
    become None.
    """
    path = Path(path)
    if not path.exists():
        raise IoError(f"ground-truth file not found: {path}")

    by_frame: dict[int, list[GroundTruthRecord]] = {}
    rows = 0
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        values = _parse_row(raw, lineno)
        if values is None:
            continue
        rows += 1
        frame = int(values[0])
        identity = int(values[1])
        left, top, width, height = values[2:6]
        conf = values[6]
        by_frame.setdefault(frame, [])
        if conf == 0.0 or width <= 0.0 or height <= 0.0:
            continue
        world = None
        if len(values) >= 9:
            x, y = values[7], values[8]
            if not (x == _MISSING and y == _MISSING):
                world = (x, y)
        by_frame[frame].append(
            GroundTruthRecord(frame=frame, identity=identity, bbox=BoundingBox.from_ltwh(left, top, width, height), world=world)
        )
    if rows == 0:
        raise EmptyInput(f"no rows in {path}")
    return _dense_frames(by_frame)


def load_frame(path: str | Path) -> np.ndarray:
    """Decode one image as an RGB uint8 array, promoting grayscale."""
    path = Path(path)
    if not path.exists():
        raise DecodeError(f"frame not found: {path}")
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            return np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"could not decode {path}: {exc}") from exc


def load_calibration(path: str | Path) -> CalibratedCamera:
    """Read a 3x4 projection matrix: 12 whitespace-separated numbers, row-major."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"calibration file not found: {path}")
    tokens = path.read_text().split()
    if len(tokens) != 12:
        raise ParseError(f"calibration needs exactly 12 numbers, got {len(tokens)}", 1)
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"calibration contains a non-numeric token: {exc}", 1) from exc
    return CalibratedCamera(np.array(values, dtype=np.float64).reshape(3, 4))


def write_tracks(
    path: str | Path,
    rows: list[tuple[int, int, BoundingBox, tuple[float, float] | None]],
) -> None:
    """Write result rows ``frame,id,left,top,w,h,1,X,Y,0`` sorted by (frame, id).

    Box fields and world coordinates use fixed 6-decimal formatting; unknown
    world coordinates are written as the literal -1.
    """
    seen: set[tuple[int, int]] = set()
    for frame, identity, _, _ in rows:
        if identity <= 0:
            raise ValueError(f"track identities must be positive, got {identity}")
        key = (frame, identity)
        if key in seen:
            raise ValueError(f"duplicate output row for frame {frame}, id {identity}")
        seen.add(key)

    lines = []
    for frame, identity, bbox, world in sorted(rows, key=lambda r: (r[0], r[1])):
        left, top, width, height = bbox.to_ltwh()
        if world is None:
            tail = "-1,-1"
        else:
            tail = f"{world[0]:.6f},{world[1]:.6f}"
        lines.append(f"{frame},{identity},{left:.6f},{top:.6f},{width:.6f},{height:.6f},1,{tail},0")

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise IoError(f"could not write {path}: {exc}") from exc
