# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot kernels (see ``_kernels_py`` for the reference)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, expm1, log1p

cnp.import_array()


def power_avg(double q, bounds, s):
    cdef const double[::1] b = np.ascontiguousarray(bounds, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(np.atleast_1d(s), dtype=np.float64)
    cdef Py_ssize_t G = b.shape[0] - 1, M = sv.shape[0], m, i
    out_arr = np.zeros((M, G))
    cdef double[:, ::1] out = out_arr
    cdef double q1 = q + 1.0, si, plo, phi
    for m in range(M):
        si = sv[m]
        if si <= b[0]:
            continue
        plo = pow(si - b[0], q1)
        for i in range(G):
            if b[i + 1] < si:
                phi = pow(si - b[i + 1], q1)
            else:
                phi = 0.0
            out[m, i] = (plo - phi) / (q1 * (b[i + 1] - b[i]))
            if phi == 0.0:
                break
            plo = phi
    return out_arr


cdef inline double _jump(double q1, double x, double s0, double s1) nogil:
    cdef double r
    if x < s0:
        r = s0 - x
        return pow(r, q1) * expm1(q1 * log1p((s1 - s0) / r))
    if x < s1:
        return pow(s1 - x, q1)
    return 0.0


def power_incr_avg(double q, bounds, s0, s1):
    cdef const double[::1] b = np.ascontiguousarray(bounds, dtype=np.float64)
    cdef const double[::1] a0 = np.ascontiguousarray(np.atleast_1d(s0), dtype=np.float64)
    cdef const double[::1] a1 = np.ascontiguousarray(np.atleast_1d(s1), dtype=np.float64)
    cdef Py_ssize_t G = b.shape[0] - 1, M = a0.shape[0], m, i
    out_arr = np.zeros((M, G))
    cdef double[:, ::1] out = out_arr
    cdef double q1 = q + 1.0, jlo, jhi, top
    for m in range(M):
        top = a0[m] if a0[m] > a1[m] else a1[m]
        jlo = _jump(q1, b[0], a0[m], a1[m])
        for i in range(G):
            if b[i] >= top:
                break
            jhi = _jump(q1, b[i + 1], a0[m], a1[m])
            out[m, i] = (jlo - jhi) / (q1 * (b[i + 1] - b[i]))
            jlo = jhi
    return out_arr


def hermite_table(int nmax, double sigma2, x):
    xa = np.asarray(x, dtype=np.float64)
    shape = xa.shape
    cdef const double[::1] xv = np.ascontiguousarray(xa.ravel())
    cdef Py_ssize_t K = xv.shape[0], k
    cdef int n
    out_arr = np.empty((nmax + 1, K))
    cdef double[:, ::1] out = out_arr
    for k in range(K):
        out[0, k] = 1.0
        if nmax >= 1:
            out[1, k] = xv[k]
        for n in range(1, nmax):
            out[n + 1, k] = xv[k] * out[n, k] - sigma2 * n * out[n - 1, k]
    return out_arr.reshape((nmax + 1,) + shape)
