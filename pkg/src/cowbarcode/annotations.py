"""Detector-output data model: keypoints, masks, per-frame annotations.

Everything downstream of this module is independent of whichever detector
produced the annotations. Records travel as JSONL, one frame per line:

    {"frame": int, "t": float, "image": "path", "width": int, "height": int,
     "mask_rle": [ints], "keypoints": [{"name", "x", "y", "conf"} x 10]}

Masks are run-length encoded column-major, alternating background/foreground
counts and starting with a background run (a leading 0 means the raster
starts with foreground).
"""

from __future__ import annotations

import json
import math
import operator
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import ParseError, StreamOrderError, ValidationError

LANDMARK_NAMES: tuple[str, ...] = (
    "poll",
    "withers",
    "spine_mid",
    "tail_head",
    "left_shoulder",
    "right_shoulder",
    "left_flank",
    "right_flank",
    "left_hip",
    "right_hip",
)

SPINE_NAMES: tuple[str, ...] = ("poll", "withers", "spine_mid", "tail_head")

BILATERAL_PAIRS: tuple[tuple[str, str], ...] = (
    ("left_shoulder", "right_shoulder"),
    ("left_flank", "right_flank"),
    ("left_hip", "right_hip"),
)

_LANDMARK_INDEX = {name: i for i, name in enumerate(LANDMARK_NAMES)}


class KeypointSet:
    """The ten named top-view landmarks, stored in canonical order."""

    __slots__ = ("xy", "conf")

    def __init__(self, xy: np.ndarray, conf: np.ndarray):
        # copy so freezing below never locks a caller's array
        xy = np.array(xy, dtype=np.float64)
        conf = np.array(conf, dtype=np.float64)
        if xy.shape != (10, 2):
            raise ValidationError(f"keypoints: expected 10 entries, got shape {xy.shape}")
        if conf.shape != (10,):
            raise ValidationError(f"keypoints: expected 10 confidences, got shape {conf.shape}")
        if not np.all(np.isfinite(xy)):
            raise ValidationError("keypoints: coordinates must be finite")
        if not np.all((conf >= 0.0) & (conf <= 1.0)):
            raise ValidationError("keypoints: conf must lie in [0, 1]")
        self.xy = xy
        self.conf = conf
        self.xy.setflags(write=False)
        self.conf.setflags(write=False)

    @classmethod
    def from_entries(cls, entries: Iterable[dict]) -> "KeypointSet":
        entries = list(entries)
        if len(entries) != 10:
            raise ValidationError(f"keypoints: expected 10, got {len(entries)}")
        xy = np.zeros((10, 2))
        conf = np.zeros(10)
        seen: set[str] = set()
        for e in entries:
            name = e.get("name")
            if name not in _LANDMARK_INDEX:
                raise ValidationError(f"keypoints: unknown landmark {name!r}")
            if name in seen:
                raise ValidationError(f"keypoints: duplicate landmark {name!r}")
            seen.add(name)
            i = _LANDMARK_INDEX[name]
            try:
                xy[i] = (float(e["x"]), float(e["y"]))
                conf[i] = float(e["conf"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"keypoints[{name}]: bad or missing x/y/conf") from exc
        return cls(xy, conf)

    @classmethod
    def from_named(cls, coords: dict[str, tuple[float, float]], conf: float | dict[str, float] = 1.0) -> "KeypointSet":
        xy = np.zeros((10, 2))
        c = np.zeros(10)
        for name, i in _LANDMARK_INDEX.items():
            xy[i] = coords[name]
            c[i] = conf[name] if isinstance(conf, dict) else conf
        return cls(xy, c)

    def to_entries(self) -> list[dict]:
        return [
            {"name": name, "x": float(self.xy[i, 0]), "y": float(self.xy[i, 1]), "conf": float(self.conf[i])}
            for i, name in enumerate(LANDMARK_NAMES)
        ]

    def point(self, name: str) -> np.ndarray:
        return self.xy[_LANDMARK_INDEX[name]]

    def index(self, name: str) -> int:
        return _LANDMARK_INDEX[name]

    def replace(self, coords: dict[str, tuple[float, float]] | None = None,
                conf: dict[str, float] | None = None) -> "KeypointSet":
        """Copy with some coordinates/confidences substituted (test helper)."""
        xy = self.xy.copy()
        c = self.conf.copy()
        for name, p in (coords or {}).items():
            xy[_LANDMARK_INDEX[name]] = p
        for name, v in (conf or {}).items():
            c[_LANDMARK_INDEX[name]] = v
        return KeypointSet(xy, c)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return np.array_equal(self.xy, other.xy) and np.array_equal(self.conf, other.conf)

    def __repr__(self) -> str:
        return f"KeypointSet(xy={self.xy.tolist()}, conf={self.conf.tolist()})"


@dataclass(frozen=True)
class MaskRaster:
    """Binary body mask, run-length encoded column-major."""

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("mask: width and height must be positive")
        try:
            runs = tuple(operator.index(r) for r in self.runs)
        except TypeError as exc:
            raise ValidationError("mask: runs must be integers") from exc
        if any(r < 0 for r in runs):
            raise ValidationError("mask: runs must be non-negative")
        object.__setattr__(self, "runs", runs)
        if sum(runs) != self.width * self.height:
            raise ValidationError(
                f"mask: run-length mismatch (runs sum {sum(runs)}, "
                f"expected {self.width * self.height})"
            )

    @classmethod
    def from_array(cls, mask: np.ndarray) -> "MaskRaster":
        mask = np.asarray(mask)
        if mask.ndim != 2:
            raise ValidationError("mask: expected a 2-D raster")
        h, w = mask.shape
        flat = (mask != 0).flatten(order="F").astype(np.int8)
        # boundaries between runs of equal value
        changes = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate(([0], changes))
        ends = np.concatenate((changes, [flat.size]))
        runs = (ends - starts).tolist()
        if flat[0] != 0:
            runs = [0] + runs
        return cls(width=w, height=h, runs=tuple(int(r) for r in runs))

    def decode(self) -> np.ndarray:
        """Expand to a (height, width) boolean raster."""
        values = np.zeros(len(self.runs), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, self.runs)
        return flat.reshape((self.height, self.width), order="F")

    def foreground_count(self) -> int:
        return int(sum(self.runs[1::2]))

    def bbox(self) -> tuple[int, int, int, int] | None:
        """Foreground bounding box as (row0, col0, row1, col1) inclusive, or None."""
        m = self.decode()
        rows = np.flatnonzero(m.any(axis=1))
        cols = np.flatnonzero(m.any(axis=0))
        if rows.size == 0:
            return None
        return int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1])


@dataclass
class FrameAnnotation:
    """One frame's detector output: mask + keypoints + timing + image reference."""

    frame_index: int
    time_s: float
    image_ref: str
    mask: MaskRaster
    keypoints: KeypointSet

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValidationError("frame: must be >= 0")
        if not math.isfinite(self.time_s) or self.time_s < 0:
            raise ValidationError("t: must be finite and >= 0")


@dataclass
class AnnotationStream:
    """Ordered per-frame annotations for one video, with its nominal fps."""

    frames: list[FrameAnnotation] = field(default_factory=list)
    fps: float = 30.0

    def __post_init__(self):
        last_idx = -1
        last_t = -math.inf
        for f in self.frames:
            if f.frame_index <= last_idx:
                raise StreamOrderError(
                    f"frame index {f.frame_index} not greater than {last_idx}"
                )
            if f.time_s <= last_t:
                raise StreamOrderError(
                    f"time {f.time_s} at frame {f.frame_index} not increasing"
                )
            last_idx = f.frame_index
            last_t = f.time_s

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[FrameAnnotation]:
        return iter(self.frames)


def parse_annotation_line(text: str) -> FrameAnnotation:
    """Parse one JSONL record into a validated FrameAnnotation."""
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"record: invalid JSON ({exc.msg})") from exc
    if not isinstance(rec, dict):
        raise ParseError("record: expected a JSON object")

    def require(key: str, kinds: tuple[type, ...]):
        if key not in rec:
            raise ParseError(f"{key}: missing")
        v = rec[key]
        if isinstance(v, bool) or not isinstance(v, kinds):
            raise ParseError(f"{key}: expected {kinds[0].__name__}")
        return v

    frame = require("frame", (int,))
    t = float(require("t", (int, float)))
    image = require("image", (str,))
    width = require("width", (int,))
    height = require("height", (int,))
    mask_rle = require("mask_rle", (list,))
    kp_list = require("keypoints", (list,))

    for r in mask_rle:
        if isinstance(r, bool) or not isinstance(r, int):
            raise ParseError("mask_rle: expected a list of integers")
    if len(kp_list) != 10:
        raise ValidationError(f"keypoints: expected 10, got {len(kp_list)}")

    mask = MaskRaster(width=width, height=height, runs=tuple(mask_rle))
    keypoints = KeypointSet.from_entries(kp_list)
    return FrameAnnotation(frame_index=frame, time_s=t, image_ref=image,
                           mask=mask, keypoints=keypoints)


def serialize_annotation(f: FrameAnnotation) -> str:
    """Canonical one-line JSON for a FrameAnnotation (round-trips exactly)."""
    rec = {
        "frame": f.frame_index,
        "t": f.time_s,
        "image": f.image_ref,
        "width": f.mask.width,
        "height": f.mask.height,
        "mask_rle": list(f.mask.runs),
        "keypoints": f.keypoints.to_entries(),
    }
    return json.dumps(rec, separators=(",", ":"))


def load_stream(path, fps: float = 30.0) -> AnnotationStream:
    """Read a JSONL annotation file; report the first bad line by number."""
    frames: list[FrameAnnotation] = []
    last_idx = -1
    last_t = -math.inf
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                f = parse_annotation_line(line)
            except (ParseError, ValidationError) as exc:
                raise type(exc)(f"line {lineno}: {exc}") from exc
            if f.frame_index <= last_idx:
                raise StreamOrderError(
                    f"line {lineno}: frame index {f.frame_index} "
                    f"not greater than {last_idx}"
                )
            if f.time_s <= last_t:
                raise StreamOrderError(
                    f"line {lineno}: time {f.time_s} not increasing"
                )
            last_idx = f.frame_index
            last_t = f.time_s
            frames.append(f)
    return AnnotationStream(frames=frames, fps=fps)


def save_stream(stream: AnnotationStream, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in stream:
            fh.write(serialize_annotation(f) + "\n")
