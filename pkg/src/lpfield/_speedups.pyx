# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_purepy``."""

import numpy as np

NAME = "cython"


def peetre_sup(absu, weight):
    absu = np.ascontiguousarray(absu, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    if absu.ndim == 1:
        return _peetre_1d(absu, weight)
    return _peetre_2d(absu, weight)


cdef _peetre_1d(double[::1] u, double[::1] w):
    cdef Py_ssize_t n = u.shape[0], x, y, k
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef long[::1] order = np.argsort(-np.asarray(w), kind="stable").astype(np.int64)
    cdef double top = np.asarray(u).max(), wy, v, lowest = 0.0
    for k in range(n):
        y = order[k]
        wy = w[y]
        if wy * top <= lowest:
            break
        lowest = 1e308
        for x in range(n):
            v = u[(x + y) % n] * wy
            if v > o[x]:
                o[x] = v
            if o[x] < lowest:
                lowest = o[x]
    return out


cdef _peetre_2d(double[:, ::1] u, double[:, ::1] w):
    cdef Py_ssize_t n = u.shape[0], x0, x1, y0, y1, k
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    cdef long[::1] order = np.argsort(-np.asarray(w), axis=None, kind="stable").astype(np.int64)
    cdef double top = np.asarray(u).max(), wy, v, lowest = 0.0
    for k in range(n * n):
        y0 = order[k] // n
        y1 = order[k] % n
        wy = w[y0, y1]
        if wy * top <= lowest:
            break
        lowest = 1e308
        for x0 in range(n):
            for x1 in range(n):
                v = u[(x0 + y0) % n, (x1 + y1) % n] * wy
                if v > o[x0, x1]:
                    o[x0, x1] = v
                if o[x0, x1] < lowest:
                    lowest = o[x0, x1]
    return out


def box_max(vals):
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if vals.ndim == 1:
        return _box_max_1d(vals)
    return _box_max_2d(vals)


cdef _box_max_1d(double[::1] v):
    cdef Py_ssize_t n = v.shape[0], x, j, i
    cs = np.zeros(3 * n + 1)
    cdef double[::1] c = cs
    for i in range(3 * n):
        c[i + 1] = c[i] + v[i % n]
    out = np.asarray(v).copy()
    cdef double[::1] o = out
    cdef double m
    for j in range(1, n // 2):
        for x in range(n):
            # cube [x - j, x + j] in the tripled array starts at n + x - j
            m = (c[n + x + j + 1] - c[n + x - j]) / (2 * j + 1)
            if m > o[x]:
                o[x] = m
    return out


cdef _box_max_2d(double[:, ::1] v):
    cdef Py_ssize_t n = v.shape[0], x0, x1, j, i0, i1
    cdef Py_ssize_t m3 = 3 * n
    cs = np.zeros((m3 + 1, m3 + 1))
    cdef double[:, ::1] c = cs
    for i0 in range(m3):
        for i1 in range(m3):
            c[i0 + 1, i1 + 1] = (v[i0 % n, i1 % n] + c[i0, i1 + 1]
                                 + c[i0 + 1, i1] - c[i0, i1])
    out = np.asarray(v).copy()
    cdef double[:, ::1] o = out
    cdef double m, area
    cdef Py_ssize_t a0, b0, a1, b1
    for j in range(1, n // 2):
        area = (2.0 * j + 1) * (2.0 * j + 1)
        for x0 in range(n):
            a0 = n + x0 - j
            b0 = n + x0 + j + 1
            for x1 in range(n):
                a1 = n + x1 - j
                b1 = n + x1 + j + 1
                m = (c[b0, b1] - c[a0, b1] - c[b0, a1] + c[a0, a1]) / area
                if m > o[x0, x1]:
                    o[x0, x1] = m
    return out


def gather_diag(C, R, G):
    C = np.ascontiguousarray(C, dtype=np.complex128)
    R = np.ascontiguousarray(R, dtype=np.int64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    return _gather_diag(C, R, G)


cdef _gather_diag(double complex[:, ::1] C, long[:, ::1] R, double[:, ::1] G):
    cdef Py_ssize_t m = R.shape[0], k = R.shape[1], i, j
    out = np.zeros(m, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef double complex acc
    for i in range(m):
        acc = 0
        for j in range(k):
            acc = acc + G[i, j] * C[R[i, j], j]
        o[i] = acc
    return out
