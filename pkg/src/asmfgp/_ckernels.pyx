# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel primitives; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()

cdef double SQRT5 = sqrt(5.0)


cdef inline double _k1(double u, double t, int family) noexcept nogil:
    cdef double r
    if family == 0:
        r = SQRT5 * fabs(u) / t
        return (1.0 + r + r * r / 3.0) * exp(-r)
    return exp(-(u / t) * (u / t))


cdef inline double _dt_ratio(double u, double t, int family) noexcept nogil:
    cdef double r
    if family == 0:
        r = SQRT5 * fabs(u) / t
        return r * r * (1.0 + r) / (3.0 * t * (1.0 + r + r * r / 3.0))
    return 2.0 * u * u / (t * t * t)


cdef inline double _dx_ratio(double u, double t, int family) noexcept nogil:
    cdef double r
    if family == 0:
        r = SQRT5 * fabs(u) / t
        return -(5.0 / (3.0 * t * t)) * u * (1.0 + r) / (1.0 + r + r * r / 3.0)
    return -2.0 * u / (t * t)


def product_kernel(double[:, ::1] X1, double[:, ::1] X2, double[::1] theta, int family):
    cdef Py_ssize_t n = X1.shape[0], m = X2.shape[0], d = X1.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double v
    out = np.empty((n, m))
    cdef double[:, ::1] K = out
    with nogil:
        for i in range(n):
            for j in range(m):
                v = 1.0
                for l in range(d):
                    v *= _k1(X1[i, l] - X2[j, l], theta[l], family)
                K[i, j] = v
    return out


def product_kernel_grad(double[:, ::1] X, double[::1] theta, int family):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double v, u
    Kout = np.empty((n, n))
    dKout = np.empty((d, n, n))
    cdef double[:, ::1] K = Kout
    cdef double[:, :, ::1] dK = dKout
    with nogil:
        for i in range(n):
            for j in range(i + 1):
                v = 1.0
                for l in range(d):
                    v *= _k1(X[i, l] - X[j, l], theta[l], family)
                K[i, j] = v
                K[j, i] = v
                for l in range(d):
                    u = X[i, l] - X[j, l]
                    dK[l, i, j] = v * _dt_ratio(u, theta[l], family)
                    dK[l, j, i] = dK[l, i, j]
    return Kout, dKout


def additive_kernel(double[:, ::1] X1, double[:, ::1] X2, double[::1] theta, int family):
    cdef Py_ssize_t n = X1.shape[0], m = X2.shape[0], d = X1.shape[1]
    cdef Py_ssize_t i, j, l
    out = np.empty((d, n, m))
    cdef double[:, :, ::1] C = out
    with nogil:
        for l in range(d):
            for i in range(n):
                for j in range(m):
                    C[l, i, j] = _k1(X1[i, l] - X2[j, l], theta[l], family)
    return out


def additive_kernel_grad(double[:, ::1] X, double[::1] theta, int family):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double u, k
    cout = np.empty((d, n, n))
    dout = np.empty((d, n, n))
    cdef double[:, :, ::1] C = cout
    cdef double[:, :, ::1] D = dout
    with nogil:
        for l in range(d):
            for i in range(n):
                for j in range(i + 1):
                    u = X[i, l] - X[j, l]
                    k = _k1(u, theta[l], family)
                    C[l, i, j] = k
                    C[l, j, i] = k
                    D[l, i, j] = k * _dt_ratio(u, theta[l], family)
                    D[l, j, i] = D[l, i, j]
    return cout, dout


def product_kernel_xgrad(double[:, ::1] Xs, double[:, ::1] X, double[::1] theta, int family):
    cdef Py_ssize_t m = Xs.shape[0], n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double v
    Kout = np.empty((m, n))
    Gout = np.empty((m, n, d))
    cdef double[:, ::1] K = Kout
    cdef double[:, :, ::1] G = Gout
    with nogil:
        for i in range(m):
            for j in range(n):
                v = 1.0
                for l in range(d):
                    v *= _k1(Xs[i, l] - X[j, l], theta[l], family)
                K[i, j] = v
                for l in range(d):
                    G[i, j, l] = v * _dx_ratio(Xs[i, l] - X[j, l], theta[l], family)
    return Kout, Gout


def additive_kernel_xgrad(double[:, ::1] Xs, double[:, ::1] X, double[::1] theta, int family):
    cdef Py_ssize_t m = Xs.shape[0], n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double u
    Gout = np.empty((m, n, d))
    cdef double[:, :, ::1] G = Gout
    with nogil:
        for i in range(m):
            for j in range(n):
                for l in range(d):
                    u = Xs[i, l] - X[j, l]
                    G[i, j, l] = _k1(u, theta[l], family) * _dx_ratio(u, theta[l], family)
    return Gout
