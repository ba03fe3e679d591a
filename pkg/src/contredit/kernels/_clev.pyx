# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled edit-distance kernels; mirrors _pylev exactly."""

from libc.stdlib cimport free, malloc


def distance_ids(a, b):
    """Unit-cost Levenshtein distance between two id sequences."""
    cdef list la = list(a)
    cdef list lb = list(b)
    if len(la) < len(lb):
        la, lb = lb, la
    cdef Py_ssize_t n = len(la), m = len(lb)
    if m == 0:
        return n
    cdef long *buf_a = <long *> malloc(n * sizeof(long))
    cdef long *buf_b = <long *> malloc(m * sizeof(long))
    cdef long *prev = <long *> malloc((m + 1) * sizeof(long))
    cdef long *cur = <long *> malloc((m + 1) * sizeof(long))
    if buf_a == NULL or buf_b == NULL or prev == NULL or cur == NULL:
        free(buf_a); free(buf_b); free(prev); free(cur)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef long ai, cost, best, tmp_v
    cdef long *tmp
    try:
        for i in range(n):
            buf_a[i] = la[i]
        for j in range(m):
            buf_b[j] = lb[j]
        for j in range(m + 1):
            prev[j] = j
        for i in range(1, n + 1):
            cur[0] = i
            ai = buf_a[i - 1]
            for j in range(1, m + 1):
                cost = 0 if ai == buf_b[j - 1] else 1
                best = prev[j] + 1
                tmp_v = cur[j - 1] + 1
                if tmp_v < best:
                    best = tmp_v
                tmp_v = prev[j - 1] + cost
                if tmp_v < best:
                    best = tmp_v
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]
    finally:
        free(buf_a); free(buf_b); free(prev); free(cur)


def align_ops_ids(a, b):
    """Canonical minimal alignment of a -> b as an op string over '=', 's', 'd', 'i'."""
    cdef list la = list(a)
    cdef list lb = list(b)
    cdef Py_ssize_t n = len(la), m = len(lb)
    cdef Py_ssize_t width = m + 1
    cdef long *buf_a = <long *> malloc((n if n else 1) * sizeof(long))
    cdef long *buf_b = <long *> malloc((m if m else 1) * sizeof(long))
    cdef long *dist = <long *> malloc((n + 1) * width * sizeof(long))
    if buf_a == NULL or buf_b == NULL or dist == NULL:
        free(buf_a); free(buf_b); free(dist)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef long ai, cost, best, tmp_v, here
    cdef list ops = []
    try:
        for i in range(n):
            buf_a[i] = la[i]
        for j in range(m):
            buf_b[j] = lb[j]
        for j in range(width):
            dist[j] = j
        for i in range(1, n + 1):
            dist[i * width] = i
            ai = buf_a[i - 1]
            for j in range(1, m + 1):
                cost = 0 if ai == buf_b[j - 1] else 1
                best = dist[(i - 1) * width + j] + 1
                tmp_v = dist[i * width + j - 1] + 1
                if tmp_v < best:
                    best = tmp_v
                tmp_v = dist[(i - 1) * width + j - 1] + cost
                if tmp_v < best:
                    best = tmp_v
                dist[i * width + j] = best
        i = n
        j = m
        while i > 0 or j > 0:
            here = dist[i * width + j]
            if i > 0 and j > 0 and buf_a[i - 1] == buf_b[j - 1] \
                    and here == dist[(i - 1) * width + j - 1]:
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
    finally:
        free(buf_a); free(buf_b); free(dist)
