# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled transfer-matrix growth kernel.

Per-step modified Gram-Schmidt renormalization of the propagated frame,
accumulating ln |R_kk| for every direction.  Matches the contract of
``qpkam._kernels.pyloops.qr_growth`` (with chunk=1).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

IMPL = "cython"

DEF TINY = 1e-300


def qr_growth(cnp.ndarray[cnp.complex128_t, ndim=3] mats_in, chunk=None):
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] mats = np.ascontiguousarray(
        mats_in, dtype=np.complex128)
    cdef Py_ssize_t n = mats.shape[0]
    cdef Py_ssize_t m = mats.shape[1]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] Q = np.eye(m, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] B = np.empty((m, m), dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logs = np.zeros(m)
    cdef double complex[:, :, ::1] a = mats
    cdef double complex[:, ::1] q = Q
    cdef double complex[:, ::1] b = B
    cdef double[::1] lg = logs
    cdef Py_ssize_t i, r, c, t, p, rep
    cdef double complex s, ip
    cdef double nrm

    for i in range(n):
        for r in range(m):
            for c in range(m):
                s = 0
                for t in range(m):
                    s = s + a[i, r, t] * q[t, c]
                b[r, c] = s
        for c in range(m):
            # two MGS passes keep the frame orthonormal over long runs
            for rep in range(2):
                for p in range(c):
                    ip = 0
                    for r in range(m):
                        ip = ip + q[r, p].conjugate() * b[r, c]
                    for r in range(m):
                        b[r, c] = b[r, c] - ip * q[r, p]
            nrm = 0.0
            for r in range(m):
                nrm += b[r, c].real * b[r, c].real + b[r, c].imag * b[r, c].imag
            nrm = sqrt(nrm)
            if nrm < TINY:
                nrm = TINY
            lg[c] += log(nrm)
            for r in range(m):
                q[r, c] = b[r, c] / nrm

    return logs, Q
