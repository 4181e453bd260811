# cython: boundscheck=False, wraparound=False, language_level=3
"""Compiled matching kernels: XOR + popcount over 64-bit words.

Codes are handed in as contiguous uint64 arrays (32 words per 2048-bit code).
A numpy fallback with the same surface lives in _kernels_py; barcode.py picks
whichever imports.
"""

from libc.stdint cimport uint32_t, uint64_t

import numpy as np

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #define CB_POPCOUNT64(x) __builtin_popcountll(x)
    #else
    static inline int CB_POPCOUNT64(unsigned long long v) {
        v = v - ((v >> 1) & 0x5555555555555555ULL);
        v = (v & 0x3333333333333333ULL) + ((v >> 2) & 0x3333333333333333ULL);
        v = (v + (v >> 4)) & 0x0f0f0f0f0f0f0f0fULL;
        return (int)((v * 0x0101010101010101ULL) >> 56);
    }
    #endif
    """
    int CB_POPCOUNT64(uint64_t v) nogil

BACKEND = "compiled"


def hamming_pair(const uint64_t[::1] a, const uint64_t[::1] b):
    """Hamming distance between two word arrays of equal length."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef long total = 0
    if b.shape[0] != n:
        raise ValueError("word arrays differ in length")
    with nogil:
        for i in range(n):
            total += CB_POPCOUNT64(a[i] ^ b[i])
    return total


def hamming_scan(const uint64_t[::1] query, const uint64_t[:, ::1] catalog):
    """Distances from one query to every row of a packed catalog matrix."""
    cdef Py_ssize_t r, i
    cdef Py_ssize_t n = catalog.shape[0]
    cdef Py_ssize_t w = catalog.shape[1]
    cdef long acc
    if query.shape[0] != w:
        raise ValueError("query width does not match catalog")
    out = np.empty(n, dtype=np.uint32)
    cdef uint32_t[::1] ov = out
    with nogil:
        for r in range(n):
            acc = 0
            for i in range(w):
                acc += CB_POPCOUNT64(query[i] ^ catalog[r, i])
            ov[r] = <uint32_t>acc
    return out
