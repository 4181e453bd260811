"""Per-frame matching and the whole-clip identification decision.

Each frame of a single-cow clip is turned into a barcode and matched against
the catalog; the clip-level identity is the top-1 hit with the smallest
Hamming distance across all frames. Frames that cannot produce a barcode are
recorded as skips with a reason instead of aborting the clip.
"""

from __future__ import annotations

from dataclasses import dataclass

from .alignment import DEFAULT_TEMPLATE, TemplateShape
from .annotations import AnnotationStream, FrameAnnotation
from .barcode import Barcode
from .cattlog import Cattlog
from .errors import CatalogError, NoEvidenceError, ValidationError
from .pipeline import FrameSkip, ImageLoader, frame_barcode


@dataclass(frozen=True)
class FrameMatch:
    """One frame's barcode and its top-3 catalog hits, ascending by distance."""

    frame_index: int
    time_s: float
    barcode: Barcode
    top3: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not 1 <= len(self.top3) <= 3:
            raise ValidationError(
                f"top3: expected 1..3 hits, got {len(self.top3)}"
            )
        dists = [d for _, d in self.top3]
        if any(not 0 <= d <= 2048 for d in dists):
            raise ValidationError("top3: distance outside [0, 2048]")
        if dists != sorted(dists):
            raise ValidationError("top3: distances not ascending")

    @property
    def top1_id(self) -> str:
        return self.top3[0][0]

    @property
    def top1_distance(self) -> int:
        return self.top3[0][1]


@dataclass(frozen=True)
class FrameSkipRecord:
    """A frame that produced no barcode, with the reason it was skipped."""

    frame_index: int
    time_s: float
    reason: str


@dataclass(frozen=True)
class VideoPrediction:
    """Clip-level decision: the cow whose catalog entry got closest in any frame."""

    predicted_id: str
    best_distance: int
    best_frame_index: int
    frames: tuple[FrameMatch, ...]
    skips: tuple[FrameSkipRecord, ...]

    def __post_init__(self):
        if not self.frames:
            raise ValidationError("prediction requires at least one match")
        best = min(m.top1_distance for m in self.frames)
        if self.best_distance != best:
            raise ValidationError(
                f"best_distance {self.best_distance} != frame minimum {best}"
            )


def recognize_frame(f: FrameAnnotation, image, catalog: Cattlog,
                    template: TemplateShape = DEFAULT_TEMPLATE,
                    ) -> FrameMatch | FrameSkipRecord:
    """Match one frame against the catalog; a failed frame becomes a skip record.

    Skips cover unrectifiable keypoints, degenerate warp geometry, and empty
    aligned masks. An empty catalog is an error, not a skip.
    """
    if not catalog.entries:
        raise CatalogError("cannot recognize against an empty catalog")
    try:
        code = frame_barcode(f, image, template)
    except FrameSkip as skip:
        return FrameSkipRecord(frame_index=f.frame_index, time_s=f.time_s,
                               reason=skip.reason)
    hits = catalog.match_top_k(code, k=3)
    return FrameMatch(frame_index=f.frame_index, time_s=f.time_s,
                      barcode=code, top3=tuple(hits))


def recognize_video(stream: AnnotationStream, catalog: Cattlog,
                    image_loader: ImageLoader,
                    template: TemplateShape = DEFAULT_TEMPLATE,
                    ) -> VideoPrediction:
    """Identify a single-cow clip by the smallest top-1 distance over its frames.

    Equal distances resolve to the earliest frame. Raises NoEvidenceError when
    the stream is empty or every frame was skipped.
    """
    if not catalog.entries:
        raise CatalogError("cannot recognize against an empty catalog")
    matches: list[FrameMatch] = []
    skips: list[FrameSkipRecord] = []
    for f in stream.frames:
        result = recognize_frame(f, image_loader(f), catalog, template)
        if isinstance(result, FrameSkipRecord):
            skips.append(result)
        else:
            matches.append(result)
    if not matches:
        raise NoEvidenceError(
            f"no frame produced a barcode ({len(skips)} skipped)"
        )
    best = matches[0]
    for m in matches[1:]:
        # Strict comparison keeps the earliest frame on ties.
        if m.top1_distance < best.top1_distance:
            best = m
    return VideoPrediction(predicted_id=best.top1_id,
                           best_distance=best.top1_distance,
                           best_frame_index=best.frame_index,
                           frames=tuple(matches), skips=tuple(skips))
