"""Shared per-frame processing: rectify, strip background, align, encode.

Both enrollment and recognition run frames through exactly this chain; a
frame that cannot produce a barcode raises FrameSkip with a reason rather
than aborting the surrounding clip.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

import numpy as np

from .alignment import (
    DEFAULT_TEMPLATE,
    TemplateShape,
    TemplateWarp,
    rectify_keypoints,
    remove_background,
)
from .annotations import FrameAnnotation
from .barcode import Barcode, encode
from .errors import AlignmentError, EncodeError

SKIP_UNRECTIFIABLE = "unrectifiable-keypoints"
SKIP_DEGENERATE = "degenerate-triangle"
SKIP_EMPTY_MASK = "empty-aligned-mask"

ImageLoader = Callable[[FrameAnnotation], np.ndarray]


class FrameSkip(Exception):
    """A frame cannot contribute a barcode; carries the reason."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def frame_barcode(f: FrameAnnotation, image: np.ndarray,
                  template: TemplateShape = DEFAULT_TEMPLATE) -> Barcode:
    """Barcode for one annotated frame, or FrameSkip."""
    rectified = rectify_keypoints(f.keypoints)
    if rectified is None:
        raise FrameSkip(SKIP_UNRECTIFIABLE)
    mask = f.mask.decode()
    cleaned = remove_background(image, mask)
    try:
        warp = TemplateWarp(rectified, template,
                            (f.mask.width, f.mask.height))
    except AlignmentError as exc:
        raise FrameSkip(SKIP_DEGENERATE) from exc
    aligned = warp.apply_image(cleaned)
    aligned_mask = warp.apply_mask(mask)
    try:
        return encode(aligned, aligned_mask)
    except EncodeError as exc:
        raise FrameSkip(SKIP_EMPTY_MASK) from exc


def load_image(path) -> np.ndarray:
    """Read an image file as a grayscale uint8 array."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def file_image_loader(base_dir=None) -> ImageLoader:
    """Loader resolving each frame's image_ref, relative to base_dir."""
    base = Path(base_dir) if base_dir is not None else None

    def loader(f: FrameAnnotation) -> np.ndarray:
        p = Path(f.image_ref)
        if base is not None and not p.is_absolute():
            p = base / p
        return load_image(p)

    return loader
