# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-sample kernels.  Same contract as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, log1p, fabs

cnp.import_array()

STATUS_OK = 0
STATUS_INCONSISTENT = 1
STATUS_ZERO_COLUMN = 2


cdef inline void _reconstruct(const double[::1, :] W, const double[::1, :] H, Py_ssize_t j,
                              double eps, double* x) noexcept nogil:
    cdef Py_ssize_t F = W.shape[0], K = W.shape[1], f, k
    cdef double hk
    for f in range(F):
        x[f] = eps
    for k in range(K):
        hk = H[k, j]
        if hk != 0.0:
            for f in range(F):
                x[f] += W[f, k] * hk


cdef enum:
    TILE = 4


cdef inline void _solve_one(const double[::1, :] V, const double[::1, :] W, double[::1, :] H,
                            Py_ssize_t j, int iters, double eps,
                            double* x, double* r1, double* r2, double* g) noexcept nogil:
    cdef Py_ssize_t F = W.shape[0], K = W.shape[1], f, k
    cdef int it
    cdef double w, hk, num, den
    for it in range(iters):
        for f in range(F):
            x[f] = eps
        for k in range(K):
            hk = H[k, j]
            for f in range(F):
                x[f] = x[f] + W[f, k] * hk
        for f in range(F):
            r2[f] = 1.0 / x[f]
            r1[f] = (eps + V[f, j]) * r2[f] * r2[f]
        for k in range(K):
            num = 0.0
            den = 0.0
            for f in range(F):
                w = W[f, k]
                num = num + w * r1[f]
                den = den + w * r2[f]
            g[k] = sqrt(num / den)
        for k in range(K):
            H[k, j] = H[k, j] * g[k]


cdef inline void _solve_tile(const double[::1, :] V, const double[::1, :] W, double[::1, :] H,
                             Py_ssize_t j, int iters, double eps,
                             double* x, double* r1, double* r2, double* g) noexcept nogil:
    # TILE frames at once: every W entry loaded feeds all of them.  Each
    # frame sees exactly the operations of _solve_one in the same order, so
    # results do not depend on how frames are grouped into tiles.
    cdef Py_ssize_t F = W.shape[0], K = W.shape[1], f, k, t
    cdef int it
    cdef double w, h0, h1, h2, h3, n0, n1, n2, n3, d0, d1, d2, d3
    cdef double* x0 = x
    cdef double* x1 = x + F
    cdef double* x2 = x + 2 * F
    cdef double* x3 = x + 3 * F
    cdef double* a0 = r1
    cdef double* a1 = r1 + F
    cdef double* a2 = r1 + 2 * F
    cdef double* a3 = r1 + 3 * F
    cdef double* b0 = r2
    cdef double* b1 = r2 + F
    cdef double* b2 = r2 + 2 * F
    cdef double* b3 = r2 + 3 * F
    for it in range(iters):
        for f in range(TILE * F):
            x[f] = eps
        for k in range(K):
            h0 = H[k, j]
            h1 = H[k, j + 1]
            h2 = H[k, j + 2]
            h3 = H[k, j + 3]
            for f in range(F):
                w = W[f, k]
                x0[f] = x0[f] + w * h0
                x1[f] = x1[f] + w * h1
                x2[f] = x2[f] + w * h2
                x3[f] = x3[f] + w * h3
        for t in range(TILE):
            for f in range(F):
                r2[t * F + f] = 1.0 / x[t * F + f]
                r1[t * F + f] = (eps + V[f, j + t]) * r2[t * F + f] * r2[t * F + f]
        for k in range(K):
            n0 = 0.0
            n1 = 0.0
            n2 = 0.0
            n3 = 0.0
            d0 = 0.0
            d1 = 0.0
            d2 = 0.0
            d3 = 0.0
            for f in range(F):
                w = W[f, k]
                n0 = n0 + w * a0[f]
                n1 = n1 + w * a1[f]
                n2 = n2 + w * a2[f]
                n3 = n3 + w * a3[f]
                d0 = d0 + w * b0[f]
                d1 = d1 + w * b1[f]
                d2 = d2 + w * b2[f]
                d3 = d3 + w * b3[f]
            g[TILE * k] = sqrt(n0 / d0)
            g[TILE * k + 1] = sqrt(n1 / d1)
            g[TILE * k + 2] = sqrt(n2 / d2)
            g[TILE * k + 3] = sqrt(n3 / d3)
        for k in range(K):
            for t in range(TILE):
                H[k, j + t] = H[k, j + t] * g[TILE * k + t]


def fit_block(const double[::1, :] V, const double[::1, :] W, double[::1, :] H,
              int iters, double eps,
              double[::1, :] pa=None, double[::1, :] pb=None, double[::1] div=None):
    cdef Py_ssize_t F = W.shape[0], K = W.shape[1], m = V.shape[1]
    cdef Py_ssize_t j, f, k
    cdef double hk, y, q, acc, wf
    cdef double[::1] x = np.empty(TILE * F)
    cdef double[::1] r1 = np.empty(TILE * F)
    cdef double[::1] r2 = np.empty(TILE * F)
    cdef double[::1] g = np.empty(TILE * K)
    cdef bint want_stats = pa is not None
    cdef bint want_div = div is not None
    with nogil:
        j = 0
        while j + TILE <= m:
            _solve_tile(V, W, H, j, iters, eps, &x[0], &r1[0], &r2[0], &g[0])
            j += TILE
        while j < m:
            _solve_one(V, W, H, j, iters, eps, &x[0], &r1[0], &r2[0], &g[0])
            j += 1
        for j in range(m):
            if not (want_stats or want_div):
                break
            _reconstruct(W, H, j, eps, &x[0])
            if want_div:
                acc = 0.0
                for f in range(F):
                    y = eps + V[f, j]
                    q = (y - x[f]) / x[f]
                    if fabs(q) < 0.5:
                        acc = acc + (q - log1p(q))
                    else:
                        acc = acc + (q - log(y / x[f]))
                div[j] = acc
            if want_stats:
                for f in range(F):
                    r2[f] = 1.0 / x[f]
                    r1[f] = (eps + V[f, j]) * r2[f] * r2[f]
                for k in range(K):
                    hk = H[k, j]
                    if hk != 0.0:
                        for f in range(F):
                            wf = W[f, k]
                            pa[f, k] = pa[f, k] + r1[f] * hk * (wf * wf)
                            pb[f, k] = pb[f, k] + hk * r2[f]


def commit(double[::1, :] W, double[::1, :] A, double[::1, :] B,
           double[::1, :] pa, double[::1, :] pb, double rho, double[::1] scales):
    cdef Py_ssize_t F = W.shape[0], K = W.shape[1], f, k
    cdef double a, b, wn, s, delta = 0.0, d
    cdef int status = 0
    with nogil:
        for k in range(K):
            s = 0.0
            for f in range(F):
                a = rho * A[f, k] + pa[f, k]
                b = rho * B[f, k] + pb[f, k]
                A[f, k] = a
                B[f, k] = b
                pa[f, k] = 0.0
                pb[f, k] = 0.0
                if b > 0.0:
                    s = s + sqrt(a / b)
                elif a > 0.0:
                    status = 1
                else:
                    s = s + W[f, k]
            scales[k] = s
            if s <= 0.0 and status == 0:
                status = 2
        if status == 0:
            for k in range(K):
                s = scales[k]
                for f in range(F):
                    a = A[f, k]
                    b = B[f, k]
                    if b > 0.0:
                        wn = sqrt(a / b) / s
                    else:
                        wn = W[f, k] / s
                    d = wn - W[f, k]
                    delta = delta + d * d
                    W[f, k] = wn
                    A[f, k] = a / s
                    B[f, k] = b * s
    return sqrt(delta), status
