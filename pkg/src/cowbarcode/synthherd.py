"""Deterministic synthetic herd: coats, rendered annotated frames, scenarios.

Stands in for barn footage at desk scale. Coats are thresholded smoothed
Gaussian fields (piebald patches); the body is a fixed ellipse silhouette in
template coordinates carrying the canonical landmarks, so a frame rendered at
the identity pose on a template-sized canvas reproduces the canonical
geometry exactly. Everything is a pure function of explicit seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .alignment import CANONICAL_LANDMARKS, CANVAS_HEIGHT, CANVAS_WIDTH
from .annotations import (
    AnnotationStream,
    FrameAnnotation,
    KeypointSet,
    LANDMARK_NAMES,
    MaskRaster,
)
from .cowfinder import Segment
from .errors import RenderError, ScheduleError, ValidationError

# body silhouette in template coordinates
BODY_CENTER = (256.0, 128.0)
BODY_SEMI_X = 248.0
BODY_SEMI_Y = 118.0

# rendering intensities (uint8 scale)
COAT_LIGHT = 215
COAT_DARK = 40
BACKGROUND_LEVEL = 96

COAT_BLOB_SIGMA = 14.0
_SEED_MASK = (1 << 64) - 1


def cow_id_for_seed(seed: int) -> str:
    """Canonical id for a synthetic animal."""
    return f"cow{seed:04d}"


@dataclass(frozen=True)
class CoatPattern:
    """Binary coat raster (white=1 / black=0) at template resolution."""

    seed: int
    pattern: np.ndarray

    def __post_init__(self):
        if self.pattern.shape != (CANVAS_HEIGHT, CANVAS_WIDTH) or self.pattern.dtype != bool:
            raise ValidationError("coat pattern must be a bool raster at template resolution")
        frac = float(self.pattern.mean())
        if not 0.1 <= frac <= 0.9:
            raise ValidationError(f"coat foreground fraction {frac:.3f} outside [0.1, 0.9]")
        self.pattern.setflags(write=False)


def generate_coat(seed: int) -> CoatPattern:
    """Deterministic Holstein-like piebald pattern for a seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed & _SEED_MASK]))
    fld = gaussian_filter(rng.standard_normal((CANVAS_HEIGHT, CANVAS_WIDTH)),
                          sigma=COAT_BLOB_SIGMA)
    white_frac = 0.42 + 0.16 * rng.random()
    thr = np.quantile(fld, 1.0 - white_frac)
    return CoatPattern(seed=seed, pattern=fld >= thr)


@dataclass(frozen=True)
class Pose:
    """Similarity placement of the canonical body in a frame, plus noise.

    The body center lands at frame center + translation; rotation is about
    the body center. `allow_clipping` permits the silhouette to cross the
    frame border (otherwise that is a render error).
    """

    translation: tuple[float, float] = (0.0, 0.0)
    rotation_deg: float = 0.0
    scale: float = 1.0
    noise_sigma: float = 0.0
    allow_clipping: bool = False


IDENTITY_POSE = Pose()


def _pose_matrix(pose: Pose, frame_size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Forward map p_frame = R @ (p_template - body_center) + offset."""
    th = math.radians(pose.rotation_deg)
    c, s = math.cos(th), math.sin(th)
    r = pose.scale * np.array([[c, -s], [s, c]])
    center = np.array([frame_size[0] / 2.0, frame_size[1] / 2.0])
    offset = center + np.asarray(pose.translation, dtype=np.float64)
    return r, offset


def transform_points(points: np.ndarray, pose: Pose,
                     frame_size: tuple[int, int]) -> np.ndarray:
    """Apply a pose to template-space points (the keypoint ground truth)."""
    r, offset = _pose_matrix(pose, frame_size)
    rel = np.asarray(points, dtype=np.float64) - np.array(BODY_CENTER)
    return rel @ r.T + offset


def _inverse_grid(pose: Pose, frame_size: tuple[int, int],
                  box: tuple[int, int, int, int] | None = None,
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Template-space coordinates of frame pixel centers (whole frame or box)."""
    w, h = frame_size
    x0, x1, y0, y1 = (0, w, 0, h) if box is None else box
    r, offset = _pose_matrix(pose, frame_size)
    r_inv = np.linalg.inv(r)
    xs, ys = np.meshgrid(np.arange(x0, x1, dtype=np.float64),
                         np.arange(y0, y1, dtype=np.float64))
    dx = xs - offset[0]
    dy = ys - offset[1]
    u = r_inv[0, 0] * dx + r_inv[0, 1] * dy + BODY_CENTER[0]
    v = r_inv[1, 0] * dx + r_inv[1, 1] * dy + BODY_CENTER[1]
    return u, v


def _inside_body(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Strict: pixels exactly on the rim stay out, keeping the identity-pose
    # body bbox a full border margin away from the template canvas edges.
    return (((u - BODY_CENTER[0]) / BODY_SEMI_X) ** 2
            + ((v - BODY_CENTER[1]) / BODY_SEMI_Y) ** 2) < 1.0


def _sample_coat(coat: CoatPattern, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear sample of the coat raster in [0, 1] (soft patch edges)."""
    pat = coat.pattern.astype(np.float64)
    h, w = pat.shape
    uc = np.clip(u, 0, w - 1)
    vc = np.clip(v, 0, h - 1)
    x0 = np.floor(uc).astype(np.intp)
    y0 = np.floor(vc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = uc - x0
    fy = vc - y0
    return (pat[y0, x0] * (1 - fx) * (1 - fy) + pat[y0, x1] * fx * (1 - fy)
            + pat[y1, x0] * (1 - fx) * fy + pat[y1, x1] * fx * fy)


def canonical_keypoints(conf: float = 1.0) -> KeypointSet:
    return KeypointSet.from_named(CANONICAL_LANDMARKS, conf)


def canonical_body_mask() -> np.ndarray:
    """Template-space silhouette raster."""
    xs, ys = np.meshgrid(np.arange(CANVAS_WIDTH, dtype=np.float64),
                         np.arange(CANVAS_HEIGHT, dtype=np.float64))
    return _inside_body(xs, ys)


def render_canonical(coat: CoatPattern) -> np.ndarray:
    """Body intensities straight in template space, background already 0.

    Independent reference for what an aligned frame of this coat should look
    like (no pose, no warp machinery involved).
    """
    xs, ys = np.meshgrid(np.arange(CANVAS_WIDTH, dtype=np.float64),
                         np.arange(CANVAS_HEIGHT, dtype=np.float64))
    inside = _inside_body(xs, ys)
    val = _sample_coat(coat, xs, ys)
    img = np.where(inside, COAT_DARK + val * (COAT_LIGHT - COAT_DARK), 0.0)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def render_frame(coat: CoatPattern, pose: Pose, *,
                 frame_size: tuple[int, int] = (CANVAS_WIDTH, CANVAS_HEIGHT),
                 frame_index: int = 0, time_s: float = 0.0, image_ref: str = "",
                 conf: float = 1.0,
                 noise_seed: int | None = None) -> tuple[np.ndarray, FrameAnnotation]:
    """Render one annotated frame of a coat under a pose.

    The returned keypoints and mask are the exact transforms of the canonical
    landmarks and silhouette; additive noise touches the image only.
    """
    if not 0.5 <= pose.scale <= 2.0:
        raise RenderError(f"scale {pose.scale} outside [0.5, 2.0]")
    w, h = frame_size

    kp_xy = transform_points(np.array([CANONICAL_LANDMARKS[n] for n in LANDMARK_NAMES]),
                             pose, frame_size)
    on_frame = ((kp_xy[:, 0] >= 0) & (kp_xy[:, 0] <= w - 1)
                & (kp_xy[:, 1] >= 0) & (kp_xy[:, 1] <= h - 1))
    if not on_frame.any():
        raise RenderError("pose places every keypoint outside the frame")

    # Frame-space body extent: exact bbox of the ellipse under the pose map.
    r, offset = _pose_matrix(pose, frame_size)
    half_w = math.hypot(r[0, 0] * BODY_SEMI_X, r[0, 1] * BODY_SEMI_Y)
    half_h = math.hypot(r[1, 0] * BODY_SEMI_X, r[1, 1] * BODY_SEMI_Y)
    if not pose.allow_clipping and (offset[0] - half_w <= 0
                                    or offset[0] + half_w >= w - 1
                                    or offset[1] - half_h <= 0
                                    or offset[1] + half_h >= h - 1):
        raise RenderError("body crosses the frame border (pose does not allow clipping)")
    x0 = max(int(math.floor(offset[0] - half_w)), 0)
    x1 = min(int(math.ceil(offset[0] + half_w)) + 1, w)
    y0 = max(int(math.floor(offset[1] - half_h)), 0)
    y1 = min(int(math.ceil(offset[1] + half_h)) + 1, h)
    if x0 >= x1 or y0 >= y1:
        raise RenderError("pose places the body entirely outside the frame")

    u, v = _inverse_grid(pose, frame_size, (x0, x1, y0, y1))
    box_inside = _inside_body(u, v)
    if not box_inside.any():
        raise RenderError("pose places the body entirely outside the frame")
    inside = np.zeros((h, w), dtype=bool)
    inside[y0:y1, x0:x1] = box_inside

    val = _sample_coat(coat, u[box_inside], v[box_inside])
    img = np.full((h, w), float(BACKGROUND_LEVEL))
    img[inside] = COAT_DARK + val * (COAT_LIGHT - COAT_DARK)
    if pose.noise_sigma > 0:
        entropy = [coat.seed & _SEED_MASK] if noise_seed is None \
            else [noise_seed & _SEED_MASK, coat.seed & _SEED_MASK]
        rng = np.random.default_rng(np.random.SeedSequence(entropy))
        img = img + rng.normal(0.0, pose.noise_sigma, size=img.shape)
    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    ann = FrameAnnotation(
        frame_index=frame_index,
        time_s=time_s,
        image_ref=image_ref,
        mask=MaskRaster.from_array(inside),
        keypoints=KeypointSet(kp_xy, np.full(10, float(conf))),
    )
    return image, ann


@dataclass(frozen=True)
class WalkEntry:
    cow_seed: int
    enter_time_s: float
    exit_time_s: float


@dataclass
class WalkSchedule:
    """Single-file walk plan: sorted, non-overlapping presence intervals."""

    entries: list[WalkEntry]
    fps: float = 30.0

    def __post_init__(self):
        if self.fps <= 0:
            raise ScheduleError("fps must be positive")
        prev_exit = -math.inf
        prev_enter = -math.inf
        for e in self.entries:
            if not e.enter_time_s < e.exit_time_s:
                raise ScheduleError(
                    f"entry for seed {e.cow_seed}: enter {e.enter_time_s} "
                    f"not before exit {e.exit_time_s}"
                )
            if e.enter_time_s < prev_enter:
                raise ScheduleError("entries not sorted by enter time")
            if e.enter_time_s < prev_exit:
                raise ScheduleError(
                    f"entry for seed {e.cow_seed} overlaps the previous cow "
                    f"(enters {e.enter_time_s} before exit {prev_exit})"
                )
            prev_enter = e.enter_time_s
            prev_exit = e.exit_time_s


def _frame_range(enter_s: float, exit_s: float, fps: float) -> range:
    """Frame indices i with enter <= i/fps < exit (half-open)."""
    first = math.ceil(enter_s * fps - 1e-9)
    stop = math.ceil(exit_s * fps - 1e-9)
    return range(first, stop)


@dataclass
class ScenarioBundle:
    """A generated scenario: annotation stream, ground truth, lazy images."""

    stream: AnnotationStream
    truth: list[Segment]
    frame_size: tuple[int, int]
    _recipe: dict[int, tuple[int, Pose, int]] = field(default_factory=dict, repr=False)
    _coats: dict[int, CoatPattern] = field(default_factory=dict, repr=False)

    def render_image(self, frame_index: int) -> np.ndarray:
        seed, pose, noise_seed = self._recipe[frame_index]
        image, _ = render_frame(self._coats[seed], pose, frame_size=self.frame_size,
                                noise_seed=noise_seed)
        return image

    def image_loader(self, f: FrameAnnotation) -> np.ndarray:
        return self.render_image(f.frame_index)

    def iter_images(self):
        for f in self.stream:
            yield f, self.render_image(f.frame_index)


def _walk_pose(rng_phase: np.ndarray, k: int, n: int, noise_sigma: float) -> Pose:
    t = k / max(n - 1, 1)
    tx = -28.0 + 56.0 * t
    ty = 12.0 * math.sin(2 * math.pi * k / 45.0 + rng_phase[0])
    rot = 7.0 * math.sin(2 * math.pi * k / 60.0 + rng_phase[1])
    return Pose(translation=(tx, ty), rotation_deg=rot, scale=1.0,
                noise_sigma=noise_sigma)


def generate_scenario(schedule: WalkSchedule, *, scenario_seed: int = 0,
                      frame_size: tuple[int, int] = (800, 480),
                      noise_sigma: float = 0.0, conf: float = 1.0,
                      image_ref_pattern: str = "frames/f{:06d}.png") -> ScenarioBundle:
    """Expand a walk schedule into an annotated stream plus ground truth.

    Frames between cows carry no annotation record. Fully deterministic for
    a given (schedule, scenario_seed).
    """
    fps = schedule.fps
    frames: list[FrameAnnotation] = []
    truth: list[Segment] = []
    recipe: dict[int, tuple[int, Pose, int]] = {}
    coats: dict[int, CoatPattern] = {}

    for e in schedule.entries:
        seed = e.cow_seed
        if seed not in coats:
            coats[seed] = generate_coat(seed)
        idx = _frame_range(e.enter_time_s, e.exit_time_s, fps)
        if len(idx) == 0:
            raise ScheduleError(
                f"entry for seed {seed}: interval shorter than one frame"
            )
        phase_rng = np.random.default_rng(np.random.SeedSequence(
            [scenario_seed & _SEED_MASK, seed & _SEED_MASK]))
        phases = phase_rng.uniform(0, 2 * math.pi, size=2)
        for k, i in enumerate(idx):
            pose = _walk_pose(phases, k, len(idx), noise_sigma)
            noise_seed = (scenario_seed * 1_000_003 + i) & _SEED_MASK
            ref = image_ref_pattern.format(i)
            ann = _annotate_only(coats[seed], pose, frame_size, i, i / fps,
                                 ref, conf)
            frames.append(ann)
            recipe[i] = (seed, pose, noise_seed)
        truth.append(Segment(
            cow_id=cow_id_for_seed(seed),
            start_time_s=e.enter_time_s,
            end_time_s=e.exit_time_s,
            start_frame=idx[0],
            end_frame=idx[-1],
            n_frames=len(idx),
            min_distance=0,
            mean_distance=0.0,
        ))

    stream = AnnotationStream(frames=frames, fps=fps)
    return ScenarioBundle(stream=stream, truth=truth, frame_size=frame_size,
                          _recipe=recipe, _coats=coats)


def _annotate_only(coat: CoatPattern, pose: Pose, frame_size: tuple[int, int],
                   frame_index: int, time_s: float, image_ref: str,
                   conf: float) -> FrameAnnotation:
    """Build the annotation without touching pixel intensities."""
    w, h = frame_size
    kp_xy = transform_points(np.array([CANONICAL_LANDMARKS[n] for n in LANDMARK_NAMES]),
                             pose, frame_size)
    u, v = _inverse_grid(pose, frame_size)
    inside = _inside_body(u, v)
    if not pose.allow_clipping:
        if not inside.any() or inside[0, :].any() or inside[-1, :].any() \
                or inside[:, 0].any() or inside[:, -1].any():
            raise RenderError("body crosses the frame border (pose does not allow clipping)")
    ann = FrameAnnotation(
        frame_index=frame_index,
        time_s=time_s,
        image_ref=image_ref,
        mask=MaskRaster.from_array(inside),
        keypoints=KeypointSet(kp_xy, np.full(10, float(conf))),
    )
    return ann


def generate_clip(cow_seed: int, *, n_frames: int = 30, fps: float = 30.0,
                  clip_seed: int = 0,
                  frame_size: tuple[int, int] = (800, 480),
                  max_translation: float = 25.0,
                  max_rotation_deg: float = 8.0,
                  scale_range: tuple[float, float] = (0.95, 1.05),
                  noise_sigma: float = 0.0, conf: float = 1.0,
                  image_ref_pattern: str = "frames/f{:06d}.png") -> ScenarioBundle:
    """Single-cow clip with independently sampled poses (enrollment/probe)."""
    if n_frames < 1:
        raise ScheduleError("a clip needs at least one frame")
    coat = generate_coat(cow_seed)
    rng = np.random.default_rng(np.random.SeedSequence(
        [clip_seed & _SEED_MASK, cow_seed & _SEED_MASK, 0xC11F]))
    frames: list[FrameAnnotation] = []
    recipe: dict[int, tuple[int, Pose, int]] = {}
    for i in range(n_frames):
        pose = Pose(
            translation=tuple(rng.uniform(-max_translation, max_translation, size=2)),
            rotation_deg=float(rng.uniform(-max_rotation_deg, max_rotation_deg)),
            scale=float(rng.uniform(*scale_range)),
            noise_sigma=noise_sigma,
        )
        noise_seed = (clip_seed * 1_000_003 + i) & _SEED_MASK
        ref = image_ref_pattern.format(i)
        ann = _annotate_only(coat, pose, frame_size, i, i / fps, ref, conf)
        frames.append(ann)
        recipe[i] = (cow_seed, pose, noise_seed)
    stream = AnnotationStream(frames=frames, fps=fps)
    truth = [Segment(cow_id=cow_id_for_seed(cow_seed), start_time_s=0.0,
                     end_time_s=n_frames / fps, start_frame=0,
                     end_frame=n_frames - 1, n_frames=n_frames,
                     min_distance=0, mean_distance=0.0)]
    return ScenarioBundle(stream=stream, truth=truth, frame_size=frame_size,
                          _recipe=recipe, _coats={cow_seed: coat})


def parse_scenario_spec(path) -> tuple[WalkSchedule, dict]:
    """Read the JSON scenario description consumed by the `synth` command.

    Shape: {"fps": 30, "frame_width": 800, "frame_height": 480,
            "scenario_seed": 0, "noise_sigma": 0.0,
            "cows": [{"seed": 3, "enter_s": 0.0, "exit_s": 3.0}, ...]}
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScheduleError(f"scenario spec: invalid JSON ({exc.msg})") from exc
    if not isinstance(spec, dict) or not isinstance(spec.get("cows"), list):
        raise ScheduleError("scenario spec: expected an object with a 'cows' list")
    try:
        entries = [WalkEntry(cow_seed=int(c["seed"]),
                             enter_time_s=float(c["enter_s"]),
                             exit_time_s=float(c["exit_s"]))
                   for c in spec["cows"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ScheduleError(f"scenario spec: bad cow entry ({exc})") from exc
    schedule = WalkSchedule(entries=entries, fps=float(spec.get("fps", 30.0)))
    options = {
        "scenario_seed": int(spec.get("scenario_seed", 0)),
        "frame_size": (int(spec.get("frame_width", 800)),
                       int(spec.get("frame_height", 480))),
        "noise_sigma": float(spec.get("noise_sigma", 0.0)),
    }
    return schedule, options


def write_scenario(bundle: ScenarioBundle, out_dir) -> dict[str, Path]:
    """Write JSONL stream, frame PNGs, and truth CSV under out_dir."""
    from PIL import Image

    from .annotations import save_stream
    from .cowfinder import save_segments_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream_path = out / "stream.jsonl"
    truth_path = out / "truth.csv"
    save_stream(bundle.stream, stream_path)
    save_segments_csv(bundle.truth, truth_path)
    for ann, image in bundle.iter_images():
        img_path = out / ann.image_ref
        img_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(image, mode="L").save(img_path)
    return {"stream": stream_path, "truth": truth_path, "frames": out / "frames"}
