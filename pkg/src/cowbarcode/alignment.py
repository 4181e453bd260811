"""Keypoint checking/rectification and piecewise-affine template alignment.

All images are normalized onto a fixed 512x256 canvas before encoding. The
canvas, the ten canonical landmark coordinates, and the triangulation over
landmarks plus canvas corners are frozen constants; their identity string is
embedded in catalog files so barcodes are only ever compared within one
template version.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annotations import (
    BILATERAL_PAIRS,
    LANDMARK_NAMES,
    SPINE_NAMES,
    FrameAnnotation,
    KeypointSet,
    MaskRaster,
)
from .errors import AlignmentError, ValidationError

TEMPLATE_ID = "topdown-v1"
CANVAS_WIDTH = 512
CANVAS_HEIGHT = 256

# Canonical landmark coordinates on the canvas. Spine landmarks sit on the
# horizontal midline; bilateral landmarks sit just inside the body outline,
# "left" meaning image-up for a cow heading in +x.
CANONICAL_LANDMARKS: dict[str, tuple[float, float]] = {
    "poll": (8.0, 128.0),
    "withers": (152.0, 128.0),
    "spine_mid": (282.0, 128.0),
    "tail_head": (504.0, 128.0),
    "left_shoulder": (131.0, 27.0),
    "right_shoulder": (131.0, 229.0),
    "left_flank": (282.0, 11.0),
    "right_flank": (282.0, 245.0),
    "left_hip": (403.0, 34.0),
    "right_hip": (403.0, 222.0),
}

# Triangulation over the 10 landmarks (indices 0-9, canonical order) plus the
# 4 canvas corners (10 = top-left, 11 = top-right, 12 = bottom-right,
# 13 = bottom-left). Covers the canvas exactly, no overlapping interiors.
TEMPLATE_TRIANGLES: tuple[tuple[int, int, int], ...] = (
    (0, 1, 4), (0, 1, 5), (0, 4, 10), (0, 5, 13), (0, 10, 13),
    (1, 2, 6), (1, 2, 7), (1, 4, 6), (1, 5, 7),
    (2, 6, 8), (2, 7, 9), (2, 8, 9),
    (3, 8, 9), (3, 8, 11), (3, 9, 12), (3, 11, 12),
    (4, 6, 10), (5, 7, 13),
    (6, 8, 11), (6, 10, 11), (7, 9, 12), (7, 12, 13),
)

DEFAULT_CONF_THRESHOLD = 0.5
DEFAULT_BORDER_MARGIN = 8

# Checker rule identifiers
RULE_SPINE_ORDER = "spine-order"
RULE_BILATERAL_SIDE = "bilateral-side"
RULE_DISTANCE_RANGE = "distance-range"
RULE_LOW_CONFIDENCE = "low-confidence"

_DISTANCE_RANGE = (0.05, 1.5)  # x body length (poll -> tail_head)


@dataclass(frozen=True)
class TemplateShape:
    """Fixed alignment target: canvas size, landmark coordinates, triangles."""

    template_id: str = TEMPLATE_ID
    width: int = CANVAS_WIDTH
    height: int = CANVAS_HEIGHT
    landmarks: tuple[tuple[float, float], ...] = tuple(
        CANONICAL_LANDMARKS[name] for name in LANDMARK_NAMES
    )
    triangles: tuple[tuple[int, int, int], ...] = TEMPLATE_TRIANGLES

    def landmark_xy(self) -> np.ndarray:
        return np.array(self.landmarks, dtype=np.float64)

    def corner_xy(self) -> np.ndarray:
        w, h = self.width - 1, self.height - 1
        return np.array([(0, 0), (w, 0), (w, h), (0, h)], dtype=np.float64)

    def control_points(self) -> np.ndarray:
        """All 14 warp control points: landmarks then corners."""
        return np.vstack([self.landmark_xy(), self.corner_xy()])

    def keypoint_set(self, conf: float = 1.0) -> KeypointSet:
        return KeypointSet.from_named(CANONICAL_LANDMARKS, conf)


DEFAULT_TEMPLATE = TemplateShape()


class _TemplateGeometry:
    """Per-template precomputation shared by every warp: inverse vertex
    matrices for the affine solves plus the pixel-to-triangle assignment."""

    def __init__(self, t: TemplateShape):
        pts = t.control_points()
        self.n_tri = len(t.triangles)
        self.vertex_idx = np.array(t.triangles, dtype=np.intp)
        # rows [x, y, 1] of each destination triangle, inverted once
        self.m_inv = np.empty((self.n_tri, 3, 3))
        for i, (a, b, c) in enumerate(t.triangles):
            m = np.array([
                [pts[a, 0], pts[a, 1], 1.0],
                [pts[b, 0], pts[b, 1], 1.0],
                [pts[c, 0], pts[c, 1], 1.0],
            ])
            self.m_inv[i] = np.linalg.inv(m)

        xs, ys = np.meshgrid(np.arange(t.width, dtype=np.float64),
                             np.arange(t.height, dtype=np.float64))
        self.dest_x = xs.ravel()
        self.dest_y = ys.ravel()
        tri_map = np.full(t.width * t.height, -1, dtype=np.int32)
        for i, (a, b, c) in enumerate(t.triangles):
            pa, pb, pc = pts[a], pts[b], pts[c]
            unassigned = tri_map < 0
            px = self.dest_x[unassigned]
            py = self.dest_y[unassigned]
            den = (pb[1] - pc[1]) * (pa[0] - pc[0]) + (pc[0] - pb[0]) * (pa[1] - pc[1])
            w0 = ((pb[1] - pc[1]) * (px - pc[0]) + (pc[0] - pb[0]) * (py - pc[1])) / den
            w1 = ((pc[1] - pa[1]) * (px - pc[0]) + (pa[0] - pc[0]) * (py - pc[1])) / den
            w2 = 1.0 - w0 - w1
            eps = -1e-9
            inside = (w0 >= eps) & (w1 >= eps) & (w2 >= eps)
            target = np.flatnonzero(unassigned)[inside]
            tri_map[target] = i
        if (tri_map < 0).any():
            raise AlignmentError("template triangulation does not cover the canvas")
        self.pixel_lists = [np.flatnonzero(tri_map == i) for i in range(self.n_tri)]
        self.tri_map = tri_map

        # one incident triangle per landmark, for forward keypoint mapping
        self.incident_tri = np.empty(10, dtype=np.intp)
        for lm in range(10):
            hits = np.nonzero((self.vertex_idx == lm).any(axis=1))[0]
            self.incident_tri[lm] = hits[0]


_GEOMETRY_CACHE: dict[str, _TemplateGeometry] = {}


def _geometry(t: TemplateShape) -> _TemplateGeometry:
    geo = _GEOMETRY_CACHE.get(t.template_id)
    if geo is None:
        geo = _TemplateGeometry(t)
        _GEOMETRY_CACHE[t.template_id] = geo
    return geo


@dataclass(frozen=True)
class CheckReport:
    """Outcome of the keypoint checker; failure is data, not an error."""

    violations: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def _spine_axis(k: KeypointSet) -> tuple[np.ndarray, np.ndarray, float]:
    poll = k.point("poll")
    tail = k.point("tail_head")
    d = tail - poll
    return poll, d, float(np.hypot(d[0], d[1]))


def _cross_with_axis(k: KeypointSet, name: str, poll: np.ndarray, d: np.ndarray) -> float:
    p = k.point(name)
    return float(d[0] * (p[1] - poll[1]) - d[1] * (p[0] - poll[0]))


def check_keypoints(k: KeypointSet) -> CheckReport:
    """Run every checker rule independently and list all violations."""
    violations: list[str] = []
    poll, d, body_len = _spine_axis(k)

    # spine landmarks strictly ordered by projection onto the poll->tail axis
    spine_ok = body_len > 0.0
    if spine_ok:
        proj = [float(np.dot(k.point(n) - poll, d)) / (body_len ** 2) for n in SPINE_NAMES]
        spine_ok = all(a < b for a, b in zip(proj, proj[1:]))
    if not spine_ok:
        violations.append(RULE_SPINE_ORDER)

    # each left_* strictly left of the axis, each right_* strictly right
    side_ok = True
    for left, right in BILATERAL_PAIRS:
        if _cross_with_axis(k, left, poll, d) >= 0.0:
            side_ok = False
        if _cross_with_axis(k, right, poll, d) <= 0.0:
            side_ok = False
    if not side_ok:
        violations.append(RULE_BILATERAL_SIDE)

    # every inter-landmark distance within a sane multiple of body length
    lo, hi = _DISTANCE_RANGE
    dists = np.linalg.norm(k.xy[:, None, :] - k.xy[None, :, :], axis=-1)
    iu = np.triu_indices(10, k=1)
    pair_d = dists[iu]
    if body_len <= 0.0 or pair_d.min() < lo * body_len or pair_d.max() > hi * body_len:
        violations.append(RULE_DISTANCE_RANGE)

    if k.conf.min() < DEFAULT_CONF_THRESHOLD:
        violations.append(RULE_LOW_CONFIDENCE)

    return CheckReport(violations=tuple(violations))


def rectify_keypoints(k: KeypointSet) -> KeypointSet | None:
    """Single-pass repair: reorder the spine by axis projection, swap
    side-flipped bilateral pairs, re-check. Returns None when the set still
    fails afterwards. Idempotent: a passing set is returned unchanged."""
    if check_keypoints(k).passed:
        return k

    xy = k.xy.copy()
    conf = k.conf.copy()
    spine_idx = [k.index(n) for n in SPINE_NAMES]
    poll, d, body_len = _spine_axis(k)
    if body_len > 0.0:
        proj = [float(np.dot(xy[i] - poll, d)) for i in spine_idx]
        order = sorted(range(4), key=lambda j: proj[j])
        xy[spine_idx] = xy[[spine_idx[j] for j in order]]
        conf[spine_idx] = conf[[spine_idx[j] for j in order]]

    fixed = KeypointSet(xy, conf)
    poll, d, _ = _spine_axis(fixed)
    for left, right in BILATERAL_PAIRS:
        cl = _cross_with_axis(fixed, left, poll, d)
        cr = _cross_with_axis(fixed, right, poll, d)
        if cl > 0.0 and cr < 0.0:
            li, ri = k.index(left), k.index(right)
            xy[[li, ri]] = xy[[ri, li]]
            conf[[li, ri]] = conf[[ri, li]]

    fixed = KeypointSet(xy, conf)
    if check_keypoints(fixed).passed:
        return fixed
    return None


def remove_background(image: np.ndarray, mask: MaskRaster | np.ndarray) -> np.ndarray:
    """Zero every pixel outside the body mask; in-mask pixels unchanged."""
    raster = mask.decode() if isinstance(mask, MaskRaster) else np.asarray(mask) != 0
    image = np.asarray(image)
    if image.shape[:2] != raster.shape:
        raise ValidationError(
            f"image/mask dimension mismatch: image {image.shape[:2]}, "
            f"mask {raster.shape}"
        )
    out = image.copy()
    out[~raster] = 0
    return out


class TemplateWarp:
    """Piecewise-affine warp mapping one frame onto the template canvas.

    The warp is defined by the 14 control-point correspondences (10 detected
    keypoints to their canonical coordinates, source image corners to canvas
    corners). Sampling is by inverse mapping with bilinear interpolation;
    samples falling outside the source image produce 0.
    """

    def __init__(self, keypoints: KeypointSet, template: TemplateShape,
                 source_size: tuple[int, int]):
        self.template = template
        self.source_width, self.source_height = source_size
        geo = _geometry(template)
        self._geo = geo

        w, h = self.source_width - 1, self.source_height - 1
        src_pts = np.vstack([
            keypoints.xy,
            np.array([(0, 0), (w, 0), (w, h), (0, h)], dtype=np.float64),
        ])

        tri_src = src_pts[geo.vertex_idx]  # (T, 3, 2)
        e1 = tri_src[:, 1] - tri_src[:, 0]
        e2 = tri_src[:, 2] - tri_src[:, 0]
        areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if (areas < 1e-9).any():
            bad = int(np.argmin(areas))
            raise AlignmentError(f"degenerate source triangle {bad} (zero area)")

        # affine per triangle: [sx, sy] = coeff.T @ [x, y, 1] in dest coords
        self._coeff = geo.m_inv @ tri_src  # (T, 3, 2)
        self._taps = None

    def _tap_coords(self):
        """Bilinear tap positions and weights for every canvas pixel.

        They depend only on the control points, so one computation serves
        every apply_image/apply_mask call on this warp.
        """
        if self._taps is not None:
            return self._taps
        geo = self._geo
        h, w = self.source_height, self.source_width
        n = self.template.width * self.template.height
        # Pixels claimed by no triangle (none with the frozen template) fall
        # outside the source range and sample as 0.
        sx = np.full(n, -1.0, dtype=np.float64)
        sy = np.full(n, -1.0, dtype=np.float64)
        for i, idx in enumerate(geo.pixel_lists):
            if idx.size == 0:
                continue
            cf = self._coeff[i]
            xs = geo.dest_x[idx]
            ys = geo.dest_y[idx]
            sx[idx] = cf[0, 0] * xs + cf[1, 0] * ys + cf[2, 0]
            sy[idx] = cf[0, 1] * xs + cf[1, 1] * ys + cf[2, 1]
        # tolerance keeps border pixels valid despite affine-solve roundoff
        eps = 1e-6
        valid = (sx >= -eps) & (sx <= w - 1 + eps) & (sy >= -eps) & (sy <= h - 1 + eps)
        sx = np.clip(sx, 0, w - 1)
        sy = np.clip(sy, 0, h - 1)
        x0 = np.floor(sx).astype(np.intp)
        y0 = np.floor(sy).astype(np.intp)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = sx - x0
        fy = sy - y0
        flat00 = y0 * w + x0
        flat01 = y0 * w + x1
        flat10 = y1 * w + x0
        flat11 = y1 * w + x1
        w00 = (1 - fx) * (1 - fy)
        w01 = fx * (1 - fy)
        w10 = (1 - fx) * fy
        w11 = fx * fy
        self._taps = (valid, flat00, flat01, flat10, flat11, w00, w01, w10, w11)
        return self._taps

    def _sample(self, source: np.ndarray) -> np.ndarray:
        t = self.template
        src = np.asarray(source, dtype=np.float64).ravel()
        valid, f00, f01, f10, f11, w00, w01, w10, w11 = self._tap_coords()
        v = src[f00] * w00 + src[f01] * w01 + src[f10] * w10 + src[f11] * w11
        out = np.where(valid, v, 0.0)
        return out.reshape(t.height, t.width)

    def apply_image(self, image: np.ndarray) -> np.ndarray:
        """Warp a grayscale frame onto the canvas; returns uint8 (H, W)."""
        image = np.asarray(image)
        if image.ndim != 2:
            raise ValidationError("alignment expects a single-channel image")
        if image.shape != (self.source_height, self.source_width):
            raise ValidationError(
                f"image size {image.shape} does not match warp source size "
                f"({self.source_height}, {self.source_width})"
            )
        sampled = self._sample(image)
        return np.clip(np.rint(sampled), 0, 255).astype(np.uint8)

    def apply_mask(self, mask: np.ndarray) -> np.ndarray:
        """Warp a binary mask onto the canvas; returns bool (H, W)."""
        mask = np.asarray(mask) != 0
        if mask.shape != (self.source_height, self.source_width):
            raise ValidationError(
                f"mask size {mask.shape} does not match warp source size "
                f"({self.source_height}, {self.source_width})"
            )
        return self._sample(mask.astype(np.float64)) >= 0.5

    def forward_map_keypoints(self, keypoints: KeypointSet) -> np.ndarray:
        """Map each source keypoint into template coordinates (the warp's
        forward direction), via the inverse affine of an incident triangle."""
        out = np.empty((10, 2))
        for lm in range(10):
            tri = self._geo.incident_tri[lm]
            cf = self._coeff[tri]  # dest -> src, columns for sx, sy
            a = np.array([[cf[0, 0], cf[1, 0]], [cf[0, 1], cf[1, 1]]])
            b = cf[2]
            out[lm] = np.linalg.solve(a, keypoints.xy[lm] - b)
        return out


def align_to_template(image: np.ndarray, k: KeypointSet,
                      t: TemplateShape = DEFAULT_TEMPLATE) -> np.ndarray:
    """Warp a frame onto the template canvas using its (checked) keypoints."""
    image = np.asarray(image)
    warp = TemplateWarp(k, t, (image.shape[1], image.shape[0]))
    return warp.apply_image(image)


def is_enrollable(f: FrameAnnotation, *,
                  conf_threshold: float = DEFAULT_CONF_THRESHOLD,
                  border_margin: int = DEFAULT_BORDER_MARGIN) -> bool:
    """A frame clearly shows the full back: keypoints repairable, confident
    detections, and the body mask clear of every image border."""
    if rectify_keypoints(f.keypoints) is None:
        return False
    if float(f.keypoints.conf.min()) < conf_threshold:
        return False
    box = f.mask.bbox()
    if box is None:
        return False
    r0, c0, r1, c1 = box
    return (r0 >= border_margin and c0 >= border_margin
            and r1 <= f.mask.height - 1 - border_margin
            and c1 <= f.mask.width - 1 - border_margin)
