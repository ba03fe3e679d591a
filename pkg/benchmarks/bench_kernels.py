#!/usr/bin/env python3
"""Benchmark the compiled edit-distance kernel against the pure-Python fallback.

Run after `pip install -e . --no-build-isolation` (which builds the extension);
without the extension the script still runs and reports the fallback only.
"""

from __future__ import annotations

import time

import numpy as np

from contredit import kernels
from contredit.kernels import _pylev

try:
    from contredit.kernels import _clev
except ImportError:
    _clev = None

SIZES = (10, 50, 100, 200, 400)
REPEATS = {10: 2000, 50: 400, 100: 100, 200: 30, 400: 8}


def bench(fn, pairs):
    start = time.perf_counter()
    for a, b in pairs:
        fn(a, b)
    return time.perf_counter() - start


def main() -> None:
    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'n':>5} {'calls':>6} {'python (s)':>12} {'cython (s)':>12} {'speedup':>8}")
    for n in SIZES:
        pairs = [(list(rng.integers(0, 50, size=n)), list(rng.integers(0, 50, size=n)))
                 for _ in range(REPEATS[n])]
        t_py = bench(_pylev.distance_ids, pairs) + bench(_pylev.align_ops_ids, pairs)
        if _clev is None:
            print(f"{n:>5} {2 * len(pairs):>6} {t_py:>12.3f} {'n/a':>12} {'n/a':>8}")
            continue
        t_cy = bench(_clev.distance_ids, pairs) + bench(_clev.align_ops_ids, pairs)
        print(f"{n:>5} {2 * len(pairs):>6} {t_py:>12.3f} {t_cy:>12.3f} "
              f"{t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
