"""Command-line surface: track, evaluate, render, synth.

The ``MOANA_THREADS`` environment variable caps numeric-library thread
pools; it is applied before the numeric stack is imported, which is why the
heavy imports sit below the cap.
"""

from __future__ import annotations

import os


def _cap_threads() -> None:
    value = os.environ.get("MOANA_THREADS")
    if not value:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ.setdefault(var, value)


_cap_threads()

import argparse  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

from . import __version__, synth  # noqa: E402
from .appearance import load_model, save_model  # noqa: E402
from .config import TrackerConfig, load_config  # noqa: E402
from .errors import EmptyInput, MoanaError  # noqa: E402
from .ingest import (  # noqa: E402
    load_calibration,
    load_detections,
    load_frame,
    load_ground_truth,
    write_tracks,
)
from .metrics import evaluate, format_report  # noqa: E402
from .pipeline import Tracker, tracks_to_rows  # noqa: E402
from .render import compose, draw_frame, model_panel  # noqa: E402

logger = logging.getLogger(__name__)


def _frame_files(seq_dir: Path) -> list[tuple[int, Path]]:
    """Enumerate sequence images as (frame_index, path), index from the stem."""
    for sub in ("frames", "img1", "."):
        candidates = sorted((seq_dir / sub).glob("*.png")) + sorted((seq_dir / sub).glob("*.jpg"))
        if candidates:
            break
    if not candidates:
        raise EmptyInput(f"no frame images under {seq_dir}")
    indexed = []
    for i, path in enumerate(candidates, start=1):
        try:
            indexed.append((int(path.stem), path))
        except ValueError:
            indexed.append((i, path))
    indexed.sort()
    return indexed


def cmd_track(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else TrackerConfig()
    if args.seed is not None:
        config.seed = args.seed
    camera = load_calibration(args.calib)
    detections = load_detections(args.det, config.min_confidence)

    tracker = Tracker(camera, config)
    frames = _frame_files(Path(args.seq))
    start = time.perf_counter()
    for frame_index, path in frames:
        image = load_frame(path)
        tracker.step(frame_index, image, detections.get(frame_index, []))
    elapsed = time.perf_counter() - start
    tracks = tracker.finalize()

    rows = tracks_to_rows(tracks)
    write_tracks(args.out, rows)
    rate = len(frames) / elapsed if elapsed > 0 else float("inf")

    if args.dump_models:
        dump_dir = Path(args.dump_models)
        dump_dir.mkdir(parents=True, exist_ok=True)
        for track in tracks:
            save_model(track.appearance, dump_dir / f"model_{track.identity:04d}.apm")

    manifest = {
        "command": "track",
        "config": config.to_dict(),
        "inputs": {
            "seq": str(args.seq),
            "det": str(args.det),
            "calib": str(args.calib),
            "config": str(args.config) if args.config else None,
        },
        "seed": config.seed,
        "version": __version__,
        "frames": len(frames),
        "tracks": len(tracks),
        "fps_achieved": round(rate, 3),
    }
    Path(str(args.out) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    print(f"tracked {len(frames)} frames -> {len(tracks)} tracks, {len(rows)} boxes, {rate:.1f} Hz")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    ground_truth = load_ground_truth(args.gt)
    try:
        hypotheses = load_ground_truth(args.res)
    except EmptyInput:
        hypotheses = {}
    report = evaluate(ground_truth, hypotheses, mode=args.mode, threshold=args.threshold)
    print(format_report(report))
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    try:
        results = load_ground_truth(args.res)
    except EmptyInput:
        results = {}
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    panel = None
    if args.models:
        models = {}
        for path in sorted(Path(args.models).glob("model_*.apm")):
            identity = int(path.stem.split("_")[1])
            models[identity] = load_model(path)
        panel = model_panel(models)

    trails: dict[int, list[tuple[float, float]]] = {}
    count = 0
    for frame_index, path in _frame_files(Path(args.seq)):
        image = load_frame(path)
        boxes = [(rec.identity, rec.bbox) for rec in results.get(frame_index, [])]
        for identity, bbox in boxes:
            trails.setdefault(identity, []).append(tuple(bbox.bottom_center))
        canvas = compose(draw_frame(image, boxes, trails), panel)
        canvas.save(out_dir / f"{frame_index:06d}.png")
        count += 1
    print(f"rendered {count} frames to {out_dir}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    scenario = synth.load_scenario(args.scenario)
    if args.det_noise is not None:
        scenario.det_noise = args.det_noise
    if args.dropout is not None:
        scenario.dropout = args.dropout
    if args.seed is not None:
        scenario.seed = args.seed
    sequence = synth.generate(scenario)
    synth.write_sequence(sequence, args.out)
    boxes = sum(len(v) for v in sequence.detections.values())
    print(
        f"wrote {len(sequence.frames)} frames, {len(scenario.agents)} agents, "
        f"{boxes} detections to {args.out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moana", description="3D multi-object tracker")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", help="run the tracker over a sequence")
    track.add_argument("--seq", required=True, help="sequence directory (frames/*.png)")
    track.add_argument("--det", required=True, help="detection file")
    track.add_argument("--calib", required=True, help="camera projection file (12 numbers)")
    track.add_argument("--config", default=None, help="tracker config file")
    track.add_argument("--out", required=True, help="output result file")
    track.add_argument("--seed", type=int, default=None, help="override the config seed")
    track.add_argument("--dump-models", default=None, help="directory for appearance-model dumps")
    track.set_defaults(func=cmd_track)

    ev = sub.add_parser("evaluate", help="CLEAR-MOT evaluation of a result file")
    ev.add_argument("--gt", required=True, help="ground-truth file")
    ev.add_argument("--res", required=True, help="result file")
    ev.add_argument("--mode", choices=("2d", "3d"), default="3d")
    ev.add_argument("--threshold", type=float, default=None, help="match threshold (meters or IoU)")
    ev.set_defaults(func=cmd_evaluate)

    render = sub.add_parser("render", help="draw result boxes over the frames")
    render.add_argument("--seq", required=True, help="sequence directory")
    render.add_argument("--res", required=True, help="result file")
    render.add_argument("--out", required=True, help="output image directory")
    render.add_argument("--models", default=None, help="appearance-model dump directory")
    render.set_defaults(func=cmd_render)

    sy = sub.add_parser("synth", help="generate a synthetic benchmark sequence")
    sy.add_argument("--scenario", required=True, help="scenario file or builtin name")
    sy.add_argument("--out", required=True, help="output sequence directory")
    sy.add_argument("--det-noise", type=float, default=None, help="override detection jitter sigma")
    sy.add_argument("--dropout", type=float, default=None, help="override detection dropout rate")
    sy.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sy.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (MoanaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
