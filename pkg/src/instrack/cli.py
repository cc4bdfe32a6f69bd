"""Command-line entry point: ``instrack {track,eval,simulate}``.

Exit codes: 0 success, 1 input error, 2 internal invariant failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import InputError, InvariantError, TrackerParams
from .io import (
    box_record,
    detections_to_records,
    load_config,
    load_frames,
    load_scenario,
    read_mot,
    records_to_detections,
    records_to_sequence,
    sequence_to_records,
    write_mot,
)
from .metrics import evaluate
from .scoring import PassthroughPruner, train_pruner
from .simulator import generate
from .tracker import TrackerEngine

log = logging.getLogger("instrack")

PRUNER_SEED_OFFSET = 7919
PRUNER_TRAIN_FRAMES = 30


def scenario_pruner(spec, seed: int, params: TrackerParams):
    """Pruner trained on a separate world drawn from the same scenario."""
    world = generate(spec, seed + PRUNER_SEED_OFFSET)
    frames = range(1, min(spec.frames, PRUNER_TRAIN_FRAMES) + 1)
    labeled = {f: [b for _, b in world.gt[f]] for f in frames}
    return train_pruner(labeled, world.source, params, np.random.default_rng(seed + PRUNER_SEED_OFFSET))


def _track(args) -> int:
    params = load_config(args.config) if args.config else TrackerParams()
    if args.scenario:
        spec = load_scenario(args.scenario)
        world = generate(spec, args.seed)
        source = world.source
        detections = world.detections
        pruner = scenario_pruner(spec, args.seed, params)
        frames = list(range(1, spec.frames + 1))
        if args.det:
            detections = records_to_detections(read_mot(args.det))
    else:
        if not args.det:
            raise InputError("--det is required with --frames")
        source = load_frames(args.frames)
        detections = records_to_detections(read_mot(args.det))
        frames = sorted(set(source.frames) | set(detections))
        pruner = PassthroughPruner()
    engine = TrackerEngine(params, pruner, source, seed=args.seed)
    records = []
    for frame in frames:
        out = engine.step(frame, detections.get(frame, []))
        records += [box_record(frame, r.track_id, r.box) for r in out.tracked()]
    Path(args.out).write_text(write_mot(records), encoding="utf-8")
    stages = ", ".join(f"{k} {v:.3f}s" for k, v in engine.timings.items())
    print(f"tracked {len(frames)} frames, {engine.next_id - 1} identities; {stages}", file=sys.stderr)
    return 0


def _eval(args) -> int:
    gt = records_to_sequence(read_mot(args.gt), skip_zero_conf=True)
    hyp = records_to_sequence(read_mot(args.res))
    report = evaluate(gt, hyp, args.iou)
    print(report.pretty())
    if args.csv:
        Path(args.csv).write_text(report.csv_header() + "\n" + report.csv_line() + "\n", encoding="utf-8")
    return 0


def _simulate(args) -> int:
    spec = load_scenario(args.spec)
    world = generate(spec, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gt.txt").write_text(write_mot(sequence_to_records(world.gt)), encoding="utf-8")
    (out / "det.txt").write_text(write_mot(detections_to_records(world.detections)), encoding="utf-8")
    oracle = world.source.oracle_params()
    oracle["occluded"] = {str(f): sorted(t) for f, t in sorted(world.occluded.items())}
    (out / "oracle.json").write_text(json.dumps(oracle, indent=1) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="instrack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run the tracker")
    p.add_argument("--det", help="detections in MOT format")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--frames", help="directory of PPM frames")
    src.add_argument("--scenario", help="scenario spec; uses simulated features and detections")
    p.add_argument("--config", help="key=value tracker configuration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="results file (MOT format)")
    p.set_defaults(func=_track)

    p = sub.add_parser("eval", help="CLEAR-MOT / IDF1 report")
    p.add_argument("--gt", required=True)
    p.add_argument("--res", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--csv", help="write the report as CSV")
    p.set_defaults(func=_eval)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
