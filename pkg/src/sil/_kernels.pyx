# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-step kernels.

Each gradient (and the operator apply) walks the data matrix in ~2 MB row
blocks: a BLAS matvec produces the projections for the block, the activation
weights are evaluated in C, and a second BLAS matvec accumulates the output
while the block is still cache-resident.  This keeps BLAS streaming speed
while reading the matrix once per call.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs
from scipy.linalg.cython_blas cimport dgemv

BACKEND = "cython"

cdef inline double _phi_smooth(double u, double M) nogil:
    cdef double v = (fabs(u) - M) / M
    cdef double g, g1
    if v <= 0.0:
        return 1.0
    if v >= 1.0:
        return 0.0
    g = exp(-1.0 / v)
    g1 = exp(-1.0 / (1.0 - v))
    return 1.0 - g / (g + g1)

cdef inline double _phi(double z2, int kind, double M) nogil:
    if kind == 0:
        return 1.0
    if kind == 1:
        return 1.0 if z2 <= M else 0.0
    return _phi_smooth(z2, M)

cdef inline double _sigma(double z2, int kind, double M,
                          const double[::1] band, double band_step, double mbar) nogil:
    cdef double t, s, s2, s3, m0, m1
    cdef Py_ssize_t k, last
    if kind == 0 or z2 <= M:
        return z2
    if kind == 1:
        return M
    if z2 >= 2.0 * M:
        return mbar
    last = band.shape[0] - 2
    t = (z2 - M) / band_step
    k = <Py_ssize_t> t
    if k > last:
        k = last
    s = t - k
    s2 = s * s
    s3 = s2 * s
    m0 = _phi_smooth(M + k * band_step, M) * band_step
    m1 = _phi_smooth(M + (k + 1) * band_step, M) * band_step
    return ((2.0*s3 - 3.0*s2 + 1.0)*band[k] + (s3 - 2.0*s2 + s)*m0
            + (-2.0*s3 + 3.0*s2)*band[k+1] + (s3 - s2)*m1)

def corr_gradient(const double[:, ::1] X, const double[::1] y,
                  const double[::1] theta, int kind, double M,
                  const double[::1] band, double band_step, double mbar):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t block = 262144 // max(d, 1)  # ~2 MB of rows per block
    if block < 16:
        block = 16
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(d)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zbuf = np.empty(block)
    cdef double[::1] g = out
    cdef double[::1] z = zbuf
    cdef double loss = 0.0, zi, c
    cdef Py_ssize_t i0, nb, i
    cdef int mm, nn, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char tN = b'N', tT = b'T'
    for i0 in range(0, n, block):
        nb = min(block, n - i0)
        mm = <int> d
        nn = <int> nb
        # z = X[i0:i0+nb] @ theta  (row-major block == col-major transpose)
        dgemv(&tT, &mm, &nn, &one, <double*> &X[i0, 0], &mm,
              <double*> &theta[0], &inc, &zero, &z[0], &inc)
        with nogil:
            for i in range(nb):
                zi = z[i]
                loss += y[i0 + i] * _sigma(zi * zi, kind, M, band, band_step, mbar)
                z[i] = y[i0 + i] * _phi(zi * zi, kind, M) * zi
        # g += X[i0:i0+nb]^T @ z
        dgemv(&tN, &mm, &nn, &one, <double*> &X[i0, 0], &mm,
              &z[0], &inc, &one, &g[0], &inc)
    for i in range(d):
        g[i] *= 2.0 / n
    return out, -loss / n

def squared_gradient(const double[:, ::1] X, const double[::1] y,
                     const double[::1] theta, int kind, double M,
                     const double[::1] band, double band_step, double mbar):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t block = 262144 // max(d, 1)
    if block < 16:
        block = 16
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(d)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zbuf = np.empty(block)
    cdef double[::1] g = out
    cdef double[::1] z = zbuf
    cdef double loss = 0.0, zi, resid
    cdef Py_ssize_t i0, nb, i
    cdef int mm, nn, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char tN = b'N', tT = b'T'
    for i0 in range(0, n, block):
        nb = min(block, n - i0)
        mm = <int> d
        nn = <int> nb
        dgemv(&tT, &mm, &nn, &one, <double*> &X[i0, 0], &mm,
              <double*> &theta[0], &inc, &zero, &z[0], &inc)
        with nogil:
            for i in range(nb):
                zi = z[i]
                resid = _sigma(zi * zi, kind, M, band, band_step, mbar) - y[i0 + i]
                loss += resid * resid
                z[i] = resid * 2.0 * zi * _phi(zi * zi, kind, M)
        dgemv(&tN, &mm, &nn, &one, <double*> &X[i0, 0], &mm,
              &z[0], &inc, &one, &g[0], &inc)
    for i in range(d):
        g[i] /= n
    return out, 0.5 * loss / n

def weighted_apply(const double[:, ::1] X, const double[::1] w,
                   const double[::1] v):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t block = 262144 // max(d, 1)
    if block < 16:
        block = 16
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = np.zeros(d)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zbuf = np.empty(block)
    cdef double[::1] outv = res
    cdef double[::1] z = zbuf
    cdef Py_ssize_t i0, nb, i
    cdef int mm, nn, inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char tN = b'N', tT = b'T'
    for i0 in range(0, n, block):
        nb = min(block, n - i0)
        mm = <int> d
        nn = <int> nb
        dgemv(&tT, &mm, &nn, &one, <double*> &X[i0, 0], &mm,
              <double*> &v[0], &inc, &zero, &z[0], &inc)
        with nogil:
            for i in range(nb):
                z[i] *= w[i0 + i]
        dgemv(&tN, &mm, &nn, &one, <double*> &X[i0, 0], &mm,
              &z[0], &inc, &one, &outv[0], &inc)
    for i in range(d):
        outv[i] /= n
    return res
