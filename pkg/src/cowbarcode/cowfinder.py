"""Continuous-stream retrieval: who was in view, and when.

Per-frame matches are thresholded into detections, detections are clustered
in time into per-cow segments, and consecutive same-cow segments separated by
short gaps are merged. Segments carry frame and time bounds plus match
statistics, and can be scored against ground truth by containment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .alignment import DEFAULT_TEMPLATE, TemplateShape
from .annotations import AnnotationStream
from .cattlog import Cattlog
from .errors import CatalogError, ParseError, ValidationError
from .pipeline import ImageLoader
from .recognizer import FrameMatch, FrameSkipRecord, recognize_frame

SEGMENT_CSV_HEADER = ("cow_id,start_frame,end_frame,start_time_s,end_time_s,"
                      "n_frames,min_distance,mean_distance")


@dataclass(frozen=True)
class Detection:
    """A single frame whose top-1 match survived the rejection threshold."""

    frame_index: int
    time_s: float
    cow_id: str
    distance: int

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError("detection: negative frame index")
        if not 0 <= self.distance <= 2048:
            raise ValidationError("detection: distance outside [0, 2048]")


@dataclass(frozen=True)
class Segment:
    """One retrieved observation: a cow ID with start/stop bounds and evidence."""

    cow_id: str
    start_time_s: float
    end_time_s: float
    start_frame: int
    end_frame: int
    n_frames: int
    min_distance: int
    mean_distance: float

    def __post_init__(self):
        if not self.cow_id:
            raise ValidationError("segment: empty cow_id")
        if self.start_frame > self.end_frame:
            raise ValidationError("segment: start_frame > end_frame")
        if self.start_time_s > self.end_time_s:
            raise ValidationError("segment: start_time_s > end_time_s")
        if self.n_frames < 1:
            raise ValidationError("segment: n_frames < 1")
        if self.min_distance < 0 or self.mean_distance < 0:
            raise ValidationError("segment: negative distance")


@dataclass(frozen=True)
class FinderConfig:
    """Stream-retrieval tunables.

    reject_threshold is in bits out of 2048; gaps are in frames (clustering)
    and seconds (merging); segments with fewer accepted detections than
    min_segment_frames are dropped as noise.
    """

    reject_threshold: int = 512
    max_gap_frames: int = 30
    merge_gap_s: float = 2.0
    min_segment_frames: int = 5

    def __post_init__(self):
        if not 1 <= self.reject_threshold <= 2048:
            raise ValidationError("reject_threshold outside [1, 2048]")
        if self.max_gap_frames < 1:
            raise ValidationError("max_gap_frames must be positive")
        if self.merge_gap_s <= 0:
            raise ValidationError("merge_gap_s must be positive")
        if self.min_segment_frames < 1:
            raise ValidationError("min_segment_frames must be positive")


DEFAULT_CONFIG = FinderConfig()


def threshold_filter(match: FrameMatch,
                     cfg: FinderConfig = DEFAULT_CONFIG) -> Detection | None:
    """Accept the frame's top-1 hit iff its distance is <= reject_threshold."""
    cow_id, distance = match.top3[0]
    if distance > cfg.reject_threshold:
        return None
    return Detection(frame_index=match.frame_index, time_s=match.time_s,
                     cow_id=cow_id, distance=distance)


def _segment_from_run(run: list[Detection]) -> Segment:
    distances = [d.distance for d in run]
    return Segment(
        cow_id=run[0].cow_id,
        start_time_s=run[0].time_s,
        end_time_s=run[-1].time_s,
        start_frame=run[0].frame_index,
        end_frame=run[-1].frame_index,
        n_frames=len(run),
        min_distance=min(distances),
        mean_distance=sum(distances) / len(distances),
    )


def cluster_detections(detections: list[Detection],
                       cfg: FinderConfig = DEFAULT_CONFIG) -> list[Segment]:
    """Group frame-ordered detections into per-cow segments.

    A run breaks when the cow ID changes or consecutive detections are more
    than max_gap_frames apart; runs with fewer than min_segment_frames
    detections are dropped.
    """
    for a, b in zip(detections, detections[1:]):
        if b.frame_index <= a.frame_index:
            raise ValidationError("detections not in increasing frame order")
    segments: list[Segment] = []
    run: list[Detection] = []
    for d in detections:
        if run and (d.cow_id != run[-1].cow_id
                    or d.frame_index - run[-1].frame_index > cfg.max_gap_frames):
            if len(run) >= cfg.min_segment_frames:
                segments.append(_segment_from_run(run))
            run = []
        run.append(d)
    if len(run) >= cfg.min_segment_frames:
        segments.append(_segment_from_run(run))
    return segments


def _merge_pair(a: Segment, b: Segment) -> Segment:
    n = a.n_frames + b.n_frames
    return Segment(
        cow_id=a.cow_id,
        start_time_s=a.start_time_s,
        end_time_s=max(a.end_time_s, b.end_time_s),
        start_frame=a.start_frame,
        end_frame=max(a.end_frame, b.end_frame),
        n_frames=n,
        min_distance=min(a.min_distance, b.min_distance),
        mean_distance=(a.mean_distance * a.n_frames
                       + b.mean_distance * b.n_frames) / n,
    )


def merge_consecutive(segments: list[Segment],
                      cfg: FinderConfig = DEFAULT_CONFIG) -> list[Segment]:
    """Merge adjacent same-cow segments whose gap is at most merge_gap_s.

    Only list-adjacent segments merge: a different cow between two sightings
    keeps them separate. Idempotent.
    """
    for a, b in zip(segments, segments[1:]):
        if b.start_time_s < a.start_time_s:
            raise ValidationError("segments not sorted by start time")
    merged: list[Segment] = []
    for seg in segments:
        prev = merged[-1] if merged else None
        if (prev is not None and prev.cow_id == seg.cow_id
                and seg.start_time_s - prev.end_time_s <= cfg.merge_gap_s):
            merged[-1] = _merge_pair(prev, seg)
        else:
            merged.append(seg)
    return merged


def find_cows(stream: AnnotationStream, catalog: Cattlog,
              image_loader: ImageLoader,
              cfg: FinderConfig = DEFAULT_CONFIG,
              template: TemplateShape = DEFAULT_TEMPLATE) -> list[Segment]:
    """Retrieve time-stamped per-cow segments from an annotated stream.

    Composition: per-frame recognition, threshold rejection, temporal
    clustering, and consecutive-segment merging. Skipped frames contribute
    nothing; the result is sorted by start time.
    """
    if not catalog.entries:
        raise CatalogError("cannot search an empty catalog")
    detections: list[Detection] = []
    for f in stream.frames:
        result = recognize_frame(f, image_loader(f), catalog, template)
        if isinstance(result, FrameSkipRecord):
            continue
        det = threshold_filter(result, cfg)
        if det is not None:
            detections.append(det)
    return merge_consecutive(cluster_detections(detections, cfg), cfg)


@dataclass(frozen=True)
class EvaluationResult:
    """Containment-scored retrieval metrics for one scenario."""

    found: int
    missed: int
    spurious: int
    retrieval_rate: float


def _contained(pred: Segment, truth: Segment) -> bool:
    return (pred.cow_id == truth.cow_id
            and truth.start_time_s <= pred.start_time_s
            and pred.end_time_s <= truth.end_time_s)


def evaluate_segments(predicted: list[Segment],
                      truth: list[Segment]) -> EvaluationResult:
    """Score predictions against ground truth by strict containment.

    A truth segment is found iff some prediction with the same cow ID starts
    and ends within it; predictions contained in no truth segment are
    spurious. With no truth segments the retrieval rate is 1.0.
    """
    matched_pred = [False] * len(predicted)
    found = 0
    for t in truth:
        hit = False
        for i, p in enumerate(predicted):
            if _contained(p, t):
                matched_pred[i] = True
                hit = True
        if hit:
            found += 1
    missed = len(truth) - found
    spurious = matched_pred.count(False)
    rate = 1.0 if not truth else found / len(truth)
    return EvaluationResult(found=found, missed=missed, spurious=spurious,
                            retrieval_rate=rate)


def save_segments_csv(segments: list[Segment], path) -> None:
    """Write a segment report; column order matches SEGMENT_CSV_HEADER."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SEGMENT_CSV_HEADER.split(","))
        for s in segments:
            writer.writerow([s.cow_id, s.start_frame, s.end_frame,
                             s.start_time_s, s.end_time_s, s.n_frames,
                             s.min_distance, s.mean_distance])


def load_segments_csv(path) -> list[Segment]:
    """Read a segment report written by save_segments_csv."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows or rows[0] != SEGMENT_CSV_HEADER.split(","):
        raise ParseError(f"{path}: missing or wrong segment header")
    segments = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 8:
            raise ParseError(f"{path}:{lineno}: expected 8 columns, got {len(row)}")
        try:
            segments.append(Segment(
                cow_id=row[0],
                start_frame=int(row[1]),
                end_frame=int(row[2]),
                start_time_s=float(row[3]),
                end_time_s=float(row[4]),
                n_frames=int(row[5]),
                min_distance=int(row[6]),
                mean_distance=float(row[7]),
            ))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from None
    return segments
