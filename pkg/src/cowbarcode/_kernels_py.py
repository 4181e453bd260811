"""Pure-numpy matching kernels, used when the compiled extension is absent.

Same surface as the Cython module: word arrays in, distances out. Uses
numpy's native popcount when available, otherwise a byte lookup table.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"

_HAS_BITWISE_COUNT = hasattr(np, "bitwise_count")
_BYTE_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


def _popcount_words(words: np.ndarray) -> np.ndarray:
    """Per-element popcount of a uint64 array, summed over the last axis."""
    if _HAS_BITWISE_COUNT:
        return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)
    as_bytes = words.view(np.uint8)
    return _BYTE_POPCOUNT[as_bytes].sum(axis=-1, dtype=np.int64)


def hamming_pair(a: np.ndarray, b: np.ndarray) -> int:
    if a.shape != b.shape:
        raise ValueError("word arrays differ in length")
    return int(_popcount_words(np.bitwise_xor(a, b)))


def hamming_scan(query: np.ndarray, catalog: np.ndarray) -> np.ndarray:
    if catalog.shape[1] != query.shape[0]:
        raise ValueError("query width does not match catalog")
    return _popcount_words(np.bitwise_xor(catalog, query[None, :])).astype(np.uint32)
