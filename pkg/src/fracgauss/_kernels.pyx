# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: chaos-game chains and the min-plus cover DP step.

Mirrors _kernels_py exactly; see backend.py for the import-time switch.
"""
from libc.stdlib cimport free, malloc


def chaos_chain(double[:, :, ::1] mats, double[:, ::1] shifts,
                long long[::1] idx, double[::1] x0, Py_ssize_t burn_in,
                double[:, ::1] out):
    cdef Py_ssize_t steps = idx.shape[0]
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t k, r, c
    cdef long long i
    cdef double acc
    cdef double *x = <double *> malloc(n * sizeof(double))
    cdef double *y = <double *> malloc(n * sizeof(double))
    cdef double *tmp
    if x == NULL or y == NULL:
        free(x)
        free(y)
        raise MemoryError()
    try:
        for c in range(n):
            x[c] = x0[c]
        for k in range(steps):
            i = idx[k]
            for r in range(n):
                acc = 0.0
                for c in range(n):
                    acc += mats[i, r, c] * x[c]
                y[r] = acc + shifts[i, r]
            tmp = x
            x = y
            y = tmp
            if k >= burn_in:
                for c in range(n):
                    out[k - burn_in, c] = x[c]
    finally:
        free(x)
        free(y)
    return out


def min_plus_step(double[::1] prev, double[:, ::1] cost, double[::1] out):
    cdef Py_ssize_t a = cost.shape[0]
    cdef Py_ssize_t i, j
    cdef double best, v
    out[0] = prev[0]
    for j in range(1, a + 1):
        best = prev[j]
        for i in range(j):
            v = prev[i] + cost[i, j - 1]
            if v < best:
                best = v
        out[j] = best
    return out
