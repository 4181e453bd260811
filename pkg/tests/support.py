"""Shared oracles and builders for the test suite.

The oracles here recompute results through deliberately different code
paths (per-bit Python loops, counting) so kernel tests have an
independent reference.
"""

from __future__ import annotations

import numpy as np

from cowbarcode.annotations import FrameAnnotation, KeypointSet, MaskRaster
from cowbarcode.barcode import BITS, Barcode


def random_bit_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=(n, BITS), dtype=np.uint8).astype(bool)


def barcode_from_row(row: np.ndarray) -> Barcode:
    return Barcode.from_bits(row)


def random_barcodes(n: int, seed: int) -> list[Barcode]:
    rng = np.random.default_rng(seed)
    return [barcode_from_row(r) for r in random_bit_matrix(n, rng)]


def naive_hamming(a: Barcode, b: Barcode) -> int:
    """Per-bit loop over unpacked bits; no packing, no popcount."""
    abits = a.bits.tolist()
    bbits = b.bits.tolist()
    return sum(1 for x, y in zip(abits, bbits) if x != y)


def naive_mode(codes: list[Barcode]) -> Barcode:
    """Per-bit counting; even ties resolve to 0."""
    n = len(codes)
    columns = zip(*(c.bits.tolist() for c in codes))
    bits = [1 if 2 * sum(col) > n else 0 for col in columns]
    return Barcode.from_bits(bits)


def simple_keypoints(conf: float = 1.0) -> KeypointSet:
    """A geometrically valid keypoint layout for data-model tests."""
    coords = {
        "poll": (10.0, 50.0),
        "withers": (40.0, 50.0),
        "spine_mid": (70.0, 50.0),
        "tail_head": (110.0, 50.0),
        "left_shoulder": (38.0, 30.0),
        "right_shoulder": (38.0, 70.0),
        "left_flank": (70.0, 25.0),
        "right_flank": (70.0, 75.0),
        "left_hip": (95.0, 32.0),
        "right_hip": (95.0, 68.0),
    }
    return KeypointSet.from_named(coords, conf)


def small_annotation(frame_index: int = 0, time_s: float = 0.0,
                     image_ref: str = "frames/f000000.png") -> FrameAnnotation:
    mask = np.zeros((120, 160), dtype=bool)
    mask[20:90, 10:140] = True
    return FrameAnnotation(
        frame_index=frame_index,
        time_s=time_s,
        image_ref=image_ref,
        mask=MaskRaster.from_array(mask),
        keypoints=simple_keypoints(),
    )
