"""2048-bit coat barcodes: encoding, Hamming distance, bitwise mode.

A barcode covers the aligned 512x256 canvas with a 32-row x 64-column grid
of 8x8-pixel cells, bit 0 at the top-left, row-major. Encoding binarizes
per-cell mean intensity against an Otsu threshold computed over the body
pixels; cells barely covered by the body stay 0 so background never
contributes pattern bits.

Distance kernels run on the compiled extension when it is available and on
a numpy fallback otherwise; `matching_backend()` reports which one loaded.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import EncodeError, ParseError

try:  # compiled popcount kernels (optional)
    from . import _kernels as _impl
except ImportError:  # pragma: no cover - depends on build environment
    from . import _kernels_py as _impl

GRID_ROWS = 32
GRID_COLS = 64
BITS = GRID_ROWS * GRID_COLS
CELL_HEIGHT = 8
CELL_WIDTH = 8
CANVAS_HEIGHT = GRID_ROWS * CELL_HEIGHT
CANVAS_WIDTH = GRID_COLS * CELL_WIDTH
N_BYTES = BITS // 8
HEX_LENGTH = BITS // 4

DEFAULT_MASK_COVERAGE = 0.25
UNIFORM_WHITE_CUTOFF = 128


def matching_backend() -> str:
    """Name of the active distance kernel: 'compiled' or 'numpy'."""
    return _impl.BACKEND


class Barcode:
    """Immutable 2048-bit coat fingerprint."""

    __slots__ = ("_packed", "_words")

    def __init__(self, packed: bytes):
        if len(packed) != N_BYTES:
            raise ValueError(f"barcode needs {N_BYTES} bytes, got {len(packed)}")
        self._packed = bytes(packed)
        words = np.frombuffer(self._packed, dtype=np.uint64)
        words.setflags(write=False)
        self._words = words

    @classmethod
    def from_bits(cls, bits: np.ndarray | Sequence[int]) -> "Barcode":
        arr = np.asarray(bits)
        if arr.shape != (BITS,) and arr.shape != (GRID_ROWS, GRID_COLS):
            raise ValueError(f"expected {BITS} bits, got shape {arr.shape}")
        return cls(np.packbits(arr.ravel().astype(bool)).tobytes())

    @classmethod
    def from_hex(cls, s: str) -> "Barcode":
        if len(s) != HEX_LENGTH:
            raise ParseError(f"barcode hex: expected {HEX_LENGTH} characters, got {len(s)}")
        try:
            packed = bytes.fromhex(s)
        except ValueError as exc:
            raise ParseError("barcode hex: non-hex character") from exc
        return cls(packed)

    def to_hex(self) -> str:
        return self._packed.hex()

    @property
    def bits(self) -> np.ndarray:
        """Unpacked bit vector, length 2048, bit 0 first."""
        return np.unpackbits(np.frombuffer(self._packed, dtype=np.uint8))

    @property
    def words(self) -> np.ndarray:
        """Read-only view as 32 uint64 words (kernel layout)."""
        return self._words

    def grid(self) -> np.ndarray:
        """Bits reshaped to the (rows, cols) cell grid."""
        return self.bits.reshape(GRID_ROWS, GRID_COLS)

    def complement(self) -> "Barcode":
        return Barcode(bytes(b ^ 0xFF for b in self._packed))

    def popcount(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Barcode):
            return NotImplemented
        return self._packed == other._packed

    def __hash__(self) -> int:
        return hash(self._packed)

    def __repr__(self) -> str:
        return f"Barcode({self.to_hex()[:16]}...)"


def encode(aligned_image: np.ndarray, aligned_mask: np.ndarray, *,
           mask_coverage: float = DEFAULT_MASK_COVERAGE) -> Barcode:
    """Pixelate and binarize an aligned frame into a barcode.

    A cell's bit is 1 iff at least `mask_coverage` of the cell lies inside
    the body mask and the cell's mean in-mask intensity exceeds the Otsu
    threshold of all in-mask pixels. A perfectly uniform body falls back to
    a midscale cutoff since Otsu is undefined there.
    """
    img = np.asarray(aligned_image)
    mask = np.asarray(aligned_mask) != 0
    if img.shape != (CANVAS_HEIGHT, CANVAS_WIDTH):
        raise ValueError(f"aligned image must be {CANVAS_HEIGHT}x{CANVAS_WIDTH}, got {img.shape}")
    if mask.shape != img.shape:
        raise ValueError("aligned mask shape differs from aligned image")
    if not mask.any():
        raise EncodeError("empty mask: no body pixels to encode")
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img.astype(np.float64)), 0, 255).astype(np.uint8)

    cells_mask = mask.reshape(GRID_ROWS, CELL_HEIGHT, GRID_COLS, CELL_WIDTH)
    cells_img = img.reshape(GRID_ROWS, CELL_HEIGHT, GRID_COLS, CELL_WIDTH)
    in_mask_count = cells_mask.sum(axis=(1, 3), dtype=np.int64)
    coverage = in_mask_count / (CELL_HEIGHT * CELL_WIDTH)
    covered = coverage >= mask_coverage

    body_pixels = img[mask]
    in_mask_sum = np.where(cells_mask, cells_img, 0).sum(axis=(1, 3), dtype=np.int64)
    cell_mean = in_mask_sum / np.maximum(in_mask_count, 1)

    lo, hi = int(body_pixels.min()), int(body_pixels.max())
    if lo == hi:
        bright = np.full_like(covered, lo >= UNIFORM_WHITE_CUTOFF)
    else:
        thr = otsu_threshold(body_pixels)
        bright = cell_mean > thr

    return Barcode.from_bits(covered & bright)


def otsu_threshold(values: np.ndarray) -> int:
    """Otsu's threshold over uint8 values; binarize as `value > t`.

    Ties resolve to the lowest maximizing threshold. Raises on uniform input.
    """
    hist = np.bincount(values.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    m0 = np.cumsum(hist * levels)
    total_mean = m0[-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        raise EncodeError("otsu threshold undefined for uniform input")
    mu0 = np.where(valid, m0 / np.maximum(w0, 1e-12), 0.0)
    mu1 = np.where(valid, (total_mean - m0) / np.maximum(w1, 1e-12), 0.0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1.0)
    return int(np.argmax(between))


def hamming(a: Barcode, b: Barcode) -> int:
    """Number of differing bit positions, in [0, 2048]."""
    return int(_impl.hamming_pair(a.words, b.words))


def pack_catalog(codes: Iterable[Barcode]) -> np.ndarray:
    """Stack barcodes into the (N, 32) uint64 matrix the scan kernel takes."""
    rows = [c.words for c in codes]
    if not rows:
        return np.empty((0, BITS // 64), dtype=np.uint64)
    return np.vstack(rows)

def hamming_scan(query: Barcode, packed: np.ndarray) -> np.ndarray:
    """Distances from one barcode to every row of a packed catalog matrix."""
    return np.asarray(_impl.hamming_scan(query.words, packed))


def bitwise_mode(codes: Sequence[Barcode]) -> Barcode:
    """Per-bit majority across barcodes; exact ties resolve to 0."""
    if len(codes) == 0:
        raise ValueError("bitwise_mode of an empty list")
    stacked = np.frombuffer(b"".join(c._packed for c in codes), dtype=np.uint8)
    bits = np.unpackbits(stacked.reshape(len(codes), N_BYTES), axis=1)
    counts = bits.sum(axis=0, dtype=np.int64)
    return Barcode.from_bits(2 * counts > len(codes))
