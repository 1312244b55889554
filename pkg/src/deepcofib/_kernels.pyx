# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled block-matching and overlap-accumulation kernels.

Must stay bit-compatible with ``_fallback.py``: squared distances are summed
pixel by pixel in row-major order, and ties go to the earlier candidate in
row-major scan order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


def match_patches(const double[:, :, ::1] field, const Py_ssize_t[:, ::1] refs,
                  Py_ssize_t half, Py_ssize_t d):
    cdef Py_ssize_t prows = field.shape[0], pcols = field.shape[1], L = field.shape[2]
    cdef Py_ssize_t nref = refs.shape[0]
    cdef Py_ssize_t k = d - 1
    idx_arr = np.empty((nref, d), dtype=np.intp)
    dist_arr = np.zeros((nref, d), dtype=np.float64)
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    cdef double[:, ::1] dist = dist_arr
    best_d_arr = np.empty(max(k, 1), dtype=np.float64)
    best_sq_arr = np.empty(max(k, 1), dtype=np.float64)
    cdef double[::1] best_sq = best_sq_arr
    best_i_arr = np.empty(max(k, 1), dtype=np.intp)
    cdef double[::1] best_d = best_d_arr
    cdef Py_ssize_t[::1] best_i = best_i_arr
    cdef Py_ssize_t q, r, c, r0, r1, c0, c1, rr, cc, p, j, found, pad
    cdef double acc, diff, worst, dst
    with nogil:
        for q in range(nref):
            r = refs[q, 0]
            c = refs[q, 1]
            r0 = r - half if r > half else 0
            c0 = c - half if c > half else 0
            r1 = r + half + 1 if r + half + 1 < prows else prows
            c1 = c + half + 1 if c + half + 1 < pcols else pcols
            found = 0
            for rr in range(r0, r1):
                for cc in range(c0, c1):
                    if (rr == r and cc == c) or k == 0:
                        continue
                    # partial sums only grow, so acc >= worst_sq already rules the candidate out
                    worst = best_sq[k - 1] if found == k else INFINITY
                    acc = 0.0
                    for p in range(L):
                        diff = field[rr, cc, p] - field[r, c, p]
                        acc = acc + diff * diff
                        if acc >= worst:
                            break
                    if acc >= worst:
                        continue
                    dst = sqrt(acc)
                    if found == k and dst >= best_d[k - 1]:
                        continue
                    # insertion after any equal entries keeps scan order on ties
                    j = found if found < k else k - 1
                    while j > 0 and best_d[j - 1] > dst:
                        best_d[j] = best_d[j - 1]
                        best_sq[j] = best_sq[j - 1]
                        best_i[j] = best_i[j - 1]
                        j -= 1
                    best_d[j] = dst
                    best_sq[j] = acc
                    best_i[j] = rr * pcols + cc
                    if found < k:
                        found += 1
            pad = k - found
            for j in range(pad + 1):
                idx[q, j] = r * pcols + c
            for j in range(found):
                idx[q, pad + 1 + j] = best_i[j]
                dist[q, pad + 1 + j] = best_d[j]
    return idx_arr, dist_arr


def accumulate(const double[:, ::1] values, const Py_ssize_t[:, ::1] coords,
               Py_ssize_t n, Py_ssize_t height, Py_ssize_t width):
    sums_arr = np.zeros((height, width), dtype=np.float64)
    counts_arr = np.zeros((height, width), dtype=np.int64)
    cdef double[:, ::1] sums = sums_arr
    cdef long long[:, ::1] counts = counts_arr
    cdef Py_ssize_t q, i, j, r, c
    with nogil:
        for q in range(values.shape[0]):
            r = coords[q, 0]
            c = coords[q, 1]
            for i in range(n):
                for j in range(n):
                    sums[r + i, c + j] = sums[r + i, c + j] + values[q, i * n + j]
                    counts[r + i, c + j] += 1
    return sums_arr, counts_arr
