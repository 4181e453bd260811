"""Benchmark the Hamming-matching kernels: compiled extension vs numpy.

Times single-pair distances and full catalog scans at several catalog sizes,
and checks both backends agree bit-for-bit before timing.

Usage: python benchmarks/bench_matching.py [--entries N] [--repeats R]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from cowbarcode.barcode import Barcode, pack_catalog

BACKENDS = []
try:
    from cowbarcode import _kernels
    BACKENDS.append(_kernels)
except ImportError:
    pass
from cowbarcode import _kernels_py

BACKENDS.append(_kernels_py)


def _time_median(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--entries", type=int, default=1000,
                        help="largest catalog size to scan")
    parser.add_argument("--repeats", type=int, default=200,
                        help="timing repetitions per measurement")
    args = parser.parse_args()

    rng = np.random.default_rng(12345)
    codes = [Barcode.from_bits(rng.integers(0, 2, 2048).astype(bool))
             for _ in range(max(args.entries, 2))]
    packed = pack_catalog(codes)
    query = codes[0].words
    other = codes[1].words

    for mod in BACKENDS[1:]:
        ref = BACKENDS[0]
        if not np.array_equal(ref.hamming_scan(query, packed),
                              mod.hamming_scan(query, packed)):
            raise SystemExit("backend disagreement: scan results differ")
        if ref.hamming_pair(query, other) != mod.hamming_pair(query, other):
            raise SystemExit("backend disagreement: pair results differ")
    print(f"backends agree on {len(codes)} entries")
    print()
    print(f"{'backend':<10} {'operation':<22} {'median':>12}")

    sizes = sorted({min(100, args.entries), args.entries})
    for mod in BACKENDS:
        name = mod.BACKEND
        t = _time_median(lambda: mod.hamming_pair(query, other), args.repeats)
        print(f"{name:<10} {'pair':<22} {t * 1e6:>10.2f} us")
        for n in sizes:
            sub = packed[:n]
            t = _time_median(lambda: mod.hamming_scan(query, sub), args.repeats)
            print(f"{name:<10} {f'scan x{n}':<22} {t * 1e6:>10.2f} us")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
