# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: scanline even-odd fill and window correlation sums.

Must stay bit-identical to the numpy fallback in ``pure.py``: identical
float64 expressions for edge intersections, integer accumulation for scores.
"""
from libc.math cimport ceil
from libc.stdint cimport int64_t
from libc.stdlib cimport free, malloc

import numpy as np


def fill_mask(const double[::1] xs, const double[::1] ys, int width, int height):
    """Even-odd rasterization of a closed ring onto pixel centers.

    Same boundary convention as the fallback: an edge crossing counts iff
    min(y1, y2) <= yc < max(y1, y2) and xc < intersection.
    """
    out = np.zeros((height, width), dtype=np.uint8)
    cdef unsigned char[:, ::1] mask = out
    cdef Py_ssize_t n = xs.shape[0]
    cdef double* cross = <double*> malloc(n * sizeof(double))
    if cross == NULL:
        raise MemoryError()
    cdef Py_ssize_t e, j, k, p, start, stop
    cdef double x1, y1, x2, y2, y, v, lo, hi
    cdef double ymin = ys[0], ymax = ys[0]
    for e in range(1, n):
        if ys[e] < ymin:
            ymin = ys[e]
        if ys[e] > ymax:
            ymax = ys[e]
    # clamp in double space before integer casts; coordinates may be huge
    lo = ceil(ymin - 0.5)
    hi = ceil(ymax - 0.5)
    cdef Py_ssize_t j0 = 0 if lo < 0.0 else (height if lo > height else <Py_ssize_t>lo)
    cdef Py_ssize_t j1 = 0 if hi < 0.0 else (height if hi > height else <Py_ssize_t>hi)
    try:
        for j in range(j0, j1):
            y = j + 0.5
            k = 0
            for e in range(n):
                x1 = xs[e]
                y1 = ys[e]
                if e + 1 < n:
                    x2 = xs[e + 1]
                    y2 = ys[e + 1]
                else:
                    x2 = xs[0]
                    y2 = ys[0]
                if (y1 > y) != (y2 > y):
                    cross[k] = x1 + ((y - y1) * (x2 - x1)) / (y2 - y1)
                    k += 1
            # insertion sort; crossing counts are tiny
            for e in range(1, k):
                v = cross[e]
                p = e - 1
                while p >= 0 and cross[p] > v:
                    cross[p + 1] = cross[p]
                    p -= 1
                cross[p + 1] = v
            e = 0
            while e + 1 < k:
                lo = ceil(cross[e] - 0.5)
                hi = ceil(cross[e + 1] - 0.5)
                start = 0 if lo < 0.0 else (width if lo > width else <Py_ssize_t>lo)
                stop = 0 if hi < 0.0 else (width if hi > width else <Py_ssize_t>hi)
                for p in range(start, stop):
                    mask[j, p] = 1
                e += 2
    finally:
        free(cross)
    return out


def window_scores(const unsigned char[:, ::1] channel,
                  const int64_t[::1] rows, const int64_t[::1] cols, int radius):
    """Integer overlap sums of a pixel stencil over all shifts in a square window."""
    cdef int side = 2 * radius + 1
    out = np.zeros((side, side), dtype=np.int64)
    cdef int64_t[:, ::1] sc = out
    cdef Py_ssize_t h = channel.shape[0], w = channel.shape[1], n = rows.shape[0]
    cdef Py_ssize_t a, b, p, rr, cc
    cdef int dv, du
    cdef int64_t s
    for a in range(side):
        dv = a - radius
        for b in range(side):
            du = b - radius
            s = 0
            for p in range(n):
                rr = rows[p] + dv
                cc = cols[p] + du
                if 0 <= rr < h and 0 <= cc < w:
                    s += channel[rr, cc]
            sc[a, b] = s
    return out
