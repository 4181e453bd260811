"""Command-line surface for the enrollment, identification, and retrieval
workflows, plus synthetic-scenario generation and report evaluation.

Every run describes itself in a small manifest (subcommand, resolved config,
paths, tool version, wall time): file-writing commands put it next to their
outputs, report-printing commands append it to the report. Reruns with the
same inputs produce byte-identical primary outputs; manifests differ only in
their timing fields.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .annotations import load_stream
from .alignment import DEFAULT_BORDER_MARGIN, DEFAULT_CONF_THRESHOLD
from .cattlog import Cattlog, enroll, load, save
from .cowfinder import (
    FinderConfig,
    evaluate_segments,
    find_cows,
    load_segments_csv,
    save_segments_csv,
)
from .errors import CowBarcodeError
from .pipeline import file_image_loader
from .recognizer import recognize_video
from .synthherd import (
    WalkSchedule,
    generate_scenario,
    parse_scenario_spec,
    write_scenario,
)


def _timestamp() -> str:
    """ISO UTC time; SOURCE_DATE_EPOCH pins it for reproducible runs."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        t = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        t = datetime.now(tz=timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class RunManifest:
    """What a run did: command, config, paths, version, and timing."""

    subcommand: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    config: dict[str, object] = field(default_factory=dict)
    started: float = field(default_factory=time.perf_counter)

    def to_text(self) -> str:
        lines = [
            f"subcommand: {self.subcommand}",
            f"tool: cowbarcode {__version__}",
            f"created_at: {_timestamp()}",
            f"wall_time_s: {time.perf_counter() - self.started:.3f}",
        ]
        for title, table in (("inputs", self.inputs),
                             ("outputs", self.outputs),
                             ("config", self.config)):
            if table:
                lines.append(f"{title}:")
                lines.extend(f"  {k}: {v}" for k, v in table.items())
        return "\n".join(lines) + "\n"

    def write_next_to(self, output_path) -> Path:
        path = Path(str(output_path) + ".manifest.txt")
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    def write_into(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.txt"
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    def print_inline(self) -> None:
        print("--- run manifest ---")
        print(self.to_text(), end="")


def cmd_enroll(args) -> int:
    manifest = RunManifest(
        "enroll",
        inputs={"stream": args.stream, "catalog": args.catalog},
        outputs={"catalog": args.catalog},
        config={
            "cow_id": args.cow_id,
            "conf_threshold": args.conf_threshold,
            "border_margin": args.border_margin,
            "fps": args.fps,
        },
    )
    catalog_path = Path(args.catalog)
    catalog = load(catalog_path) if catalog_path.exists() else Cattlog()
    stream = load_stream(args.stream, fps=args.fps)
    loader = file_image_loader(Path(args.stream).parent)
    enrolled_at = args.enrolled_at if args.enrolled_at else _timestamp()
    entry = enroll(stream, args.cow_id, catalog, loader,
                   source_ref=args.source_ref or str(args.stream),
                   enrolled_at=enrolled_at,
                   conf_threshold=args.conf_threshold,
                   border_margin=args.border_margin)
    save(catalog, catalog_path)
    manifest.write_next_to(catalog_path)
    print(f"enrolled {entry.cow_id} from {entry.frames_used} frames "
          f"(catalog now {len(catalog)} entries) -> {catalog_path}")
    return 0


def cmd_identify(args) -> int:
    manifest = RunManifest(
        "identify",
        inputs={"stream": args.stream, "catalog": args.catalog},
        config={"fps": args.fps},
    )
    catalog = load(args.catalog)
    stream = load_stream(args.stream, fps=args.fps)
    loader = file_image_loader(Path(args.stream).parent)
    pred = recognize_video(stream, catalog, loader)
    print(f"predicted_id: {pred.predicted_id}")
    print(f"best_distance: {pred.best_distance}")
    print(f"best_frame: {pred.best_frame_index}")
    print(f"frames_matched: {len(pred.frames)}")
    print(f"frames_skipped: {len(pred.skips)}")
    print("frame  time_s  top1_id  top1_distance")
    for m in pred.frames:
        print(f"{m.frame_index:>5}  {m.time_s:>6.2f}  {m.top1_id}  {m.top1_distance}")
    for s in pred.skips:
        print(f"{s.frame_index:>5}  {s.time_s:>6.2f}  (skipped: {s.reason})")
    manifest.print_inline()
    return 0


def cmd_find(args) -> int:
    cfg = FinderConfig(reject_threshold=args.threshold,
                       max_gap_frames=args.max_gap_frames,
                       merge_gap_s=args.merge_gap_s,
                       min_segment_frames=args.min_segment_frames)
    manifest = RunManifest(
        "find",
        inputs={"stream": args.stream, "catalog": args.catalog},
        outputs={"segments": args.out},
        config={
            "threshold": cfg.reject_threshold,
            "max_gap_frames": cfg.max_gap_frames,
            "merge_gap_s": cfg.merge_gap_s,
            "min_segment_frames": cfg.min_segment_frames,
            "fps": args.fps,
        },
    )
    catalog = load(args.catalog)
    stream = load_stream(args.stream, fps=args.fps)
    loader = file_image_loader(Path(args.stream).parent)
    segments = find_cows(stream, catalog, loader, cfg)
    save_segments_csv(segments, args.out)
    manifest.write_next_to(args.out)
    print(f"{len(segments)} segments -> {args.out}")
    for s in segments:
        print(f"  {s.cow_id}: {s.start_time_s:.2f}s-{s.end_time_s:.2f}s "
              f"(frames {s.start_frame}-{s.end_frame}, min {s.min_distance})")
    return 0


def cmd_synth(args) -> int:
    schedule, options = parse_scenario_spec(args.spec)
    if args.fps is not None:
        schedule = WalkSchedule(entries=schedule.entries, fps=args.fps)
    manifest = RunManifest(
        "synth",
        inputs={"spec": args.spec},
        outputs={"dir": args.out_dir},
        config={
            "fps": schedule.fps,
            "scenario_seed": options["scenario_seed"],
            "frame_size": f"{options['frame_size'][0]}x{options['frame_size'][1]}",
            "noise_sigma": options["noise_sigma"],
            "cows": len(schedule.entries),
        },
    )
    bundle = generate_scenario(schedule,
                               scenario_seed=options["scenario_seed"],
                               frame_size=options["frame_size"],
                               noise_sigma=options["noise_sigma"])
    paths = write_scenario(bundle, args.out_dir)
    manifest.write_into(args.out_dir)
    print(f"{len(bundle.stream.frames)} frames, {len(bundle.truth)} truth segments")
    for name, p in paths.items():
        print(f"  {name}: {p}")
    return 0


def cmd_evaluate(args) -> int:
    manifest = RunManifest(
        "evaluate",
        inputs={"predicted": args.predicted, "truth": args.truth},
    )
    predicted = load_segments_csv(args.predicted)
    truth = load_segments_csv(args.truth)
    result = evaluate_segments(predicted, truth)
    print(f"found: {result.found}")
    print(f"missed: {result.missed}")
    print(f"spurious: {result.spurious}")
    print(f"retrieval_rate: {result.retrieval_rate:.3f}")
    manifest.print_inline()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cowbarcode",
        description="Identify Holstein cattle from top-view video via "
                    "coat-pattern barcodes.",
    )
    parser.add_argument("--version", action="version",
                        version=f"cowbarcode {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("enroll", help="add one animal to a catalog from an "
                                      "annotated single-cow clip")
    p.add_argument("stream", help="annotation JSONL for the clip")
    p.add_argument("cow_id", help="identity to enroll")
    p.add_argument("catalog", help="catalog JSON (created if absent)")
    p.add_argument("--source-ref", default="",
                   help="provenance note stored in the entry (default: stream path)")
    p.add_argument("--enrolled-at", default="",
                   help="timestamp stored in the entry (default: now, or "
                        "SOURCE_DATE_EPOCH when set)")
    p.add_argument("--conf-threshold", type=float, default=DEFAULT_CONF_THRESHOLD,
                   help="minimum keypoint confidence for enrollable frames")
    p.add_argument("--border-margin", type=int, default=DEFAULT_BORDER_MARGIN,
                   help="minimum mask distance from image borders, px")
    p.add_argument("--fps", type=float, default=30.0,
                   help="nominal stream frame rate")
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("identify", help="identify the animal in a single-cow clip")
    p.add_argument("stream", help="annotation JSONL for the clip")
    p.add_argument("catalog", help="catalog JSON")
    p.add_argument("--fps", type=float, default=30.0,
                   help="nominal stream frame rate")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("find", help="retrieve per-cow segments from an "
                                    "annotated continuous stream")
    p.add_argument("stream", help="annotation JSONL for the stream")
    p.add_argument("catalog", help="catalog JSON")
    p.add_argument("--out", default="segments.csv",
                   help="segment report CSV to write")
    p.add_argument("--threshold", type=int,
                   default=FinderConfig.reject_threshold,
                   help="reject matches with Hamming distance above this")
    p.add_argument("--max-gap-frames", type=int,
                   default=FinderConfig.max_gap_frames,
                   help="largest frame gap inside one segment")
    p.add_argument("--merge-gap-s", type=float,
                   default=FinderConfig.merge_gap_s,
                   help="merge same-cow segments closer than this, seconds")
    p.add_argument("--min-segment-frames", type=int,
                   default=FinderConfig.min_segment_frames,
                   help="drop segments with fewer accepted detections")
    p.add_argument("--fps", type=float, default=30.0,
                   help="nominal stream frame rate")
    p.set_defaults(func=cmd_find)

    p = sub.add_parser("synth", help="render a synthetic annotated scenario "
                                     "with ground truth")
    p.add_argument("spec", help="scenario description JSON")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--fps", type=float, default=None,
                   help="override the spec frame rate")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", help="score a segment report against "
                                        "ground truth")
    p.add_argument("predicted", help="segment CSV from `find`")
    p.add_argument("truth", help="ground-truth segment CSV")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CowBarcodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
