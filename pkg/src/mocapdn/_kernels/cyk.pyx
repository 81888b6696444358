# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Fused single-pass loops over C-contiguous float64 buffers; sequential
row-major reduction order. Selected automatically at import when built
(see mocapdn._kernels).
"""

import numpy as np

from libc.math cimport exp, sqrt

BACKEND = "cython"


def softmax_rows(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double mx, s
    with nogil:
        for i in range(n):
            mx = x[i, 0]
            for j in range(1, d):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(d):
                out[i, j] = exp(x[i, j] - mx)
                s += out[i, j]
            for j in range(d):
                out[i, j] /= s
    return out_arr


def softmax_rows_grad(double[:, ::1] y, double[:, ::1] gy):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1]
    gx_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef Py_ssize_t i, j
    cdef double dot
    with nogil:
        for i in range(n):
            dot = 0.0
            for j in range(d):
                dot += gy[i, j] * y[i, j]
            for j in range(d):
                gx[i, j] = y[i, j] * (gy[i, j] - dot)
    return gx_arr


def layer_norm_rows(double[:, ::1] x, double[::1] gamma, double[::1] beta,
                    double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    y_arr = np.empty((n, d), dtype=np.float64)
    xhat_arr = np.empty((n, d), dtype=np.float64)
    rstd_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    cdef Py_ssize_t i, j
    cdef double mean, var, c, r
    with nogil:
        for i in range(n):
            mean = 0.0
            for j in range(d):
                mean += x[i, j]
            mean /= d
            var = 0.0
            for j in range(d):
                c = x[i, j] - mean
                var += c * c
            var /= d
            r = 1.0 / sqrt(var + eps)
            rstd[i] = r
            for j in range(d):
                xhat[i, j] = (x[i, j] - mean) * r
                y[i, j] = gamma[j] * xhat[i, j] + beta[j]
    return y_arr, xhat_arr, rstd_arr


def layer_norm_rows_grad(double[:, ::1] xhat, double[::1] rstd,
                         double[::1] gamma, double[:, ::1] gy):
    cdef Py_ssize_t n = xhat.shape[0], d = xhat.shape[1]
    gx_arr = np.empty((n, d), dtype=np.float64)
    ggamma_arr = np.zeros(d, dtype=np.float64)
    gbeta_arr = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] ggamma = ggamma_arr
    cdef double[::1] gbeta = gbeta_arr
    cdef Py_ssize_t i, j
    cdef double m1, m2, g
    with nogil:
        for i in range(n):
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                g = gy[i, j] * gamma[j]
                m1 += g
                m2 += g * xhat[i, j]
            m1 /= d
            m2 /= d
            for j in range(d):
                g = gy[i, j] * gamma[j]
                gx[i, j] = rstd[i] * (g - m1 - xhat[i, j] * m2)
                ggamma[j] += gy[i, j] * xhat[i, j]
                gbeta[j] += gy[i, j]
    return gx_arr, ggamma_arr, gbeta_arr


def adam_update(double[::1] param, double[::1] grad, double[::1] m,
                double[::1] v, long t, double lr, double beta1,
                double beta2, double eps):
    cdef Py_ssize_t n = param.shape[0]
    cdef double bc1 = 1.0 - beta1**t
    cdef double bc2 = 1.0 - beta2**t
    cdef Py_ssize_t i
    cdef double mhat, vhat
    with nogil:
        for i in range(n):
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i]
            mhat = m[i] / bc1
            vhat = v[i] / bc2
            param[i] -= lr * mhat / sqrt(vhat + eps)
