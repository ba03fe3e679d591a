"""Pure-Python edit-distance kernels (fallback when the compiled module is absent).

Both backends must produce bit-identical results: unit-cost Levenshtein
distance and a canonical minimal alignment with substitution-preferring,
deterministic backtrace (diagonal before deletion before insertion).
"""

from __future__ import annotations

from collections.abc import Sequence


def distance_ids(a: Sequence[int], b: Sequence[int]) -> int:
    """Unit-cost Levenshtein distance between two id sequences."""
    a = list(a)
    b = list(b)
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    cur = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            cost = 0 if ai == b[j - 1] else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev, cur = cur, prev
    return prev[len(b)]


def align_ops_ids(a: Sequence[int], b: Sequence[int]) -> str:
    """Canonical minimal alignment of a -> b as an op string over '=', 's', 'd', 'i'."""
    a = list(a)
    b = list(b)
    n, m = len(a), len(b)
    width = m + 1
    dist = [0] * ((n + 1) * width)
    for j in range(1, m + 1):
        dist[j] = j
    for i in range(1, n + 1):
        row = i * width
        prow = row - width
        dist[row] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            dist[row + j] = min(dist[prow + j] + 1,
                                dist[row + j - 1] + 1,
                                dist[prow + j - 1] + cost)
    ops: list[str] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i * width + j]
        if i > 0 and j > 0 and a[i - 1] == b[j - 1] and here == dist[(i - 1) * width + j - 1]:
            ops.append("=")
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and here == dist[(i - 1) * width + j - 1] + 1:
            ops.append("s")
            i -= 1
            j -= 1
        elif i > 0 and here == dist[(i - 1) * width + j] + 1:
            ops.append("d")
            i -= 1
        else:
            ops.append("i")
            j -= 1
    ops.reverse()
    return "".join(ops)
