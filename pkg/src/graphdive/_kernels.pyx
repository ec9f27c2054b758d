# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter/gather kernels for message passing.

Accumulation runs in edge order, matching ``numpy.add.at`` so both backends
produce bit-identical sums.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def segment_sum(const double[:, ::1] values, const cnp.intp_t[::1] index, Py_ssize_t n):
    cdef Py_ssize_t rows = values.shape[0]
    cdef Py_ssize_t cols = values.shape[1]
    cdef Py_ssize_t e, j, i
    out = np.zeros((n, cols), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for e in range(rows):
            i = index[e]
            for j in range(cols):
                o[i, j] += values[e, j]
    return out


def gather_rows(const double[:, ::1] values, const cnp.intp_t[::1] index):
    cdef Py_ssize_t rows = index.shape[0]
    cdef Py_ssize_t cols = values.shape[1]
    cdef Py_ssize_t e, j, i
    out = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for e in range(rows):
            i = index[e]
            for j in range(cols):
                o[e, j] = values[i, j]
    return out
