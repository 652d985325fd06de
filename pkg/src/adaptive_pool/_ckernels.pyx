# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels mirroring ``_pykernels``.

Border probes only recompute the two cell strips next to the probed
border; every other pooled value is unchanged by construction.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

BACKEND = "cython"

cdef enum:
    MAX_PARTIALS = 128


cdef inline double _cell_sum(const double[:, :, ::1] x, Py_ssize_t r0, Py_ssize_t r1,
                             Py_ssize_t c0, Py_ssize_t c1, Py_ssize_t ch) noexcept nogil:
    # same order as the fallback: per-column band sums, then across columns
    cdef Py_ssize_t r, c
    cdef double s = 0.0, band
    for c in range(c0, c1):
        band = x[r0, c, ch]
        for r in range(r0 + 1, r1):
            band += x[r, c, ch]
        s += band
    return s


cdef double _exact_sum(double* terms, Py_ssize_t n) noexcept nogil:
    # Shewchuk partials with a correctly rounded final step (as math.fsum)
    cdef double partials[MAX_PARTIALS]
    cdef Py_ssize_t i, k, idx, m = 0
    cdef double x, y, t, hi, lo, yr
    for k in range(n):
        x = terms[k]
        i = 0
        for idx in range(m):
            y = partials[idx]
            if fabs(x) < fabs(y):
                t = x
                x = y
                y = t
            hi = x + y
            lo = y - (hi - x)
            if lo != 0.0:
                partials[i] = lo
                i += 1
            x = hi
        m = i
        if x != 0.0:
            partials[m] = x
            m += 1
    hi = 0.0
    lo = 0.0
    if m > 0:
        m -= 1
        hi = partials[m]
        while m > 0:
            x = hi
            m -= 1
            y = partials[m]
            hi = x + y
            yr = hi - x
            lo = y - yr
            if lo != 0.0:
                break
        if m > 0 and ((lo < 0.0 and partials[m - 1] < 0.0) or (lo > 0.0 and partials[m - 1] > 0.0)):
            y = lo * 2.0
            x = hi + y
            yr = x - hi
            if y == yr:
                hi = x
    return hi


cdef void _pool_into(const double[:, :, ::1] x, const Py_ssize_t[::1] re,
                     const Py_ssize_t[::1] ce, double[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, ch
    cdef Py_ssize_t kr = re.shape[0] - 1, kc = ce.shape[0] - 1, nch = x.shape[2]
    cdef double area
    for i in range(kr):
        for j in range(kc):
            area = <double>((re[i + 1] - re[i]) * (ce[j + 1] - ce[j]))
            for ch in range(nch):
                out[i, j, ch] = _cell_sum(x, re[i], re[i + 1], ce[j], ce[j + 1], ch) / area


def pool_mean(const double[:, :, ::1] x, row_edges, col_edges):
    cdef const Py_ssize_t[::1] re = np.ascontiguousarray(row_edges, dtype=np.intp)
    cdef const Py_ssize_t[::1] ce = np.ascontiguousarray(col_edges, dtype=np.intp)
    out = np.empty((re.shape[0] - 1, ce.shape[0] - 1, x.shape[2]), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    with nogil:
        _pool_into(x, re, ce, ov)
    return out


def overpasses(row_edges, col_edges, int axis, Py_ssize_t j, Py_ssize_t h):
    edges = col_edges if axis == 0 else row_edges
    return edges[j] + h >= edges[j + 1]


cdef void _diff_into(const double[:, :, ::1] x, const Py_ssize_t[::1] re,
                     const Py_ssize_t[::1] ce, const double[:, :, ::1] y, int axis,
                     Py_ssize_t j, Py_ssize_t h, double[:, :, ::1] out) noexcept nogil:
    # fills only the two strips adjacent to border j; caller zeroes the rest
    cdef Py_ssize_t i, ch, a0, a1, b0, b1
    cdef Py_ssize_t kr = re.shape[0] - 1, kc = ce.shape[0] - 1, nch = x.shape[2]
    cdef Py_ssize_t moved
    cdef double hd = <double>h, area
    if axis == 0:
        moved = ce[j] + h
        for i in range(kr):
            a0 = re[i]
            a1 = re[i + 1]
            for ch in range(nch):
                area = <double>((a1 - a0) * (moved - ce[j - 1]))
                out[i, j - 1, ch] = (_cell_sum(x, a0, a1, ce[j - 1], moved, ch) / area - y[i, j - 1, ch]) / hd
                area = <double>((a1 - a0) * (ce[j + 1] - moved))
                out[i, j, ch] = (_cell_sum(x, a0, a1, moved, ce[j + 1], ch) / area - y[i, j, ch]) / hd
    else:
        moved = re[j] + h
        for i in range(kc):
            b0 = ce[i]
            b1 = ce[i + 1]
            for ch in range(nch):
                area = <double>((moved - re[j - 1]) * (b1 - b0))
                out[j - 1, i, ch] = (_cell_sum(x, re[j - 1], moved, b0, b1, ch) / area - y[j - 1, i, ch]) / hd
                area = <double>((re[j + 1] - moved) * (b1 - b0))
                out[j, i, ch] = (_cell_sum(x, moved, re[j + 1], b0, b1, ch) / area - y[j, i, ch]) / hd


def border_diff(const double[:, :, ::1] x, row_edges, col_edges, const double[:, :, ::1] y,
                int axis, Py_ssize_t j, Py_ssize_t h):
    cdef const Py_ssize_t[::1] re = np.ascontiguousarray(row_edges, dtype=np.intp)
    cdef const Py_ssize_t[::1] ce = np.ascontiguousarray(col_edges, dtype=np.intp)
    out = np.zeros((y.shape[0], y.shape[1], y.shape[2]), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    edges = ce if axis == 0 else re
    if edges[j] + h >= edges[j + 1]:
        return out
    with nogil:
        _diff_into(x, re, ce, y, axis, j, h, ov)
    return out


def chain(const double[:, :, ::1] x, row_edges, col_edges, const double[:, :, ::1] y,
          const double[:, :, ::1] upstream, Py_ssize_t h):
    cdef const Py_ssize_t[::1] re = np.ascontiguousarray(row_edges, dtype=np.intp)
    cdef const Py_ssize_t[::1] ce = np.ascontiguousarray(col_edges, dtype=np.intp)
    cdef Py_ssize_t kr = re.shape[0] - 1, kc = ce.shape[0] - 1, nch = x.shape[2]
    gc = np.zeros(max(kc - 1, 0), dtype=np.float64)
    gr = np.zeros(max(kr - 1, 0), dtype=np.float64)
    cdef double[::1] gcv = gc, grv = gr
    scratch = np.zeros((kr, kc, nch), dtype=np.float64)
    cdef double[:, :, ::1] d = scratch
    terms_arr = np.empty(2 * max(kr, kc) * nch, dtype=np.float64)
    cdef double[::1] terms = terms_arr
    cdef Py_ssize_t j, i, ch, n
    with nogil:
        for j in range(1, kc):
            if ce[j] + h >= ce[j + 1]:
                continue
            _diff_into(x, re, ce, y, 0, j, h, d)
            n = 0
            for i in range(kr):
                for ch in range(nch):
                    terms[n] = upstream[i, j - 1, ch] * d[i, j - 1, ch]
                    terms[n + 1] = upstream[i, j, ch] * d[i, j, ch]
                    n += 2
            gcv[j - 1] = _exact_sum(&terms[0], n)
        for j in range(1, kr):
            if re[j] + h >= re[j + 1]:
                continue
            _diff_into(x, re, ce, y, 1, j, h, d)
            n = 0
            for i in range(kc):
                for ch in range(nch):
                    terms[n] = upstream[j - 1, i, ch] * d[j - 1, i, ch]
                    terms[n + 1] = upstream[j, i, ch] * d[j, i, ch]
                    n += 2
            grv[j - 1] = _exact_sum(&terms[0], n)
    return gc, gr


def exact_sum(const double[::1] values):
    """Correctly rounded sum; exposed so tests can compare against math.fsum."""
    if values.shape[0] == 0:
        return 0.0
    return _exact_sum(<double*>&values[0], values.shape[0])
