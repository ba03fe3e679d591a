from __future__ import annotations

import numpy as np
import pytest

from contredit import kernels
from contredit.kernels import _pylev


def _random_pairs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        la, lb = rng.integers(0, 25, size=2)
        yield (list(rng.integers(0, 5, size=la)), list(rng.integers(0, 5, size=lb)))


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernel not built")
def test_backends_agree_on_distance_and_alignment():
    from contredit.kernels import _clev

    for a, b in _random_pairs():
        assert _clev.distance_ids(a, b) == _pylev.distance_ids(a, b)
        assert _clev.align_ops_ids(a, b) == _pylev.align_ops_ids(a, b)


def test_alignment_is_minimal_and_consistent():
    for a, b in _random_pairs(seed=1):
        ops = kernels.align_ops_ids(a, b)
        dist = kernels.distance_ids(a, b)
        assert sum(1 for op in ops if op != "=") == dist
        # cursors must consume exactly both sequences
        assert sum(1 for op in ops if op in "=sd") == len(a)
        assert sum(1 for op in ops if op in "=si") == len(b)
        # matches really match
        i = j = 0
        for op in ops:
            if op == "=":
                assert a[i] == b[j]
            if op in "=sd":
                i += 1
            if op in "=si":
                j += 1
