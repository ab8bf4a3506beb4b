# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs, pow, INFINITY, M_PI, expm1

cnp.import_array()


cdef inline double _logaddexp(double a, double b) nogil:
    cdef double hi, lo
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        hi = a
        lo = b
    else:
        hi = b
        lo = a
    return hi + log1p(exp(lo - hi))


cdef inline double _softplus(double x) nogil:
    if x > 0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


def mixture_density(points, shifts, weights, double sigma, int family, rates, bounds):
    cdef const double[:, ::1] X = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] M = np.ascontiguousarray(shifts, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], m = M.shape[0]
    cdef const double[::1] lam, bnd
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double norm, acc, r2, y, s, inv = 1.0 / sigma
    cdef bint inside
    if family == 0:
        norm = pow(2.0 * M_PI, -0.5 * d) * pow(sigma, -d)
        with nogil:
            for i in range(n):
                acc = 0.0
                for j in range(m):
                    r2 = 0.0
                    for k in range(d):
                        y = (X[i, k] - M[j, k]) * inv
                        r2 += y * y
                    acc += w[j] * exp(-0.5 * r2)
                out[i] = norm * acc
    elif family == 1:
        lam = np.ascontiguousarray(rates, dtype=np.float64)
        bnd = np.ascontiguousarray(bounds, dtype=np.float64)
        norm = pow(sigma, -d)
        for k in range(d):
            norm *= lam[k] / -expm1(-lam[k] * bnd[k])
        with nogil:
            for i in range(n):
                acc = 0.0
                for j in range(m):
                    s = 0.0
                    inside = True
                    for k in range(d):
                        y = (X[i, k] - M[j, k]) * inv
                        if y < 0.0 or y > bnd[k]:
                            inside = False
                            break
                        s += lam[k] * y
                    if inside:
                        acc += w[j] * exp(-s)
                out[i] = norm * acc
    else:
        raise ValueError(f"unknown family code {family}")
    return out_arr


def log_esf(r):
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef Py_ssize_t m = rv.shape[0], i, t
    e_arr = np.full(m + 1, -np.inf)
    cdef double[::1] e = e_arr
    e[0] = 0.0
    with nogil:
        for i in range(m):
            for t in range(i + 1, 0, -1):
                e[t] = _logaddexp(e[t], e[t - 1] + rv[i])
    return e_arr


def visible_log_weights(weights, visible_bias, hidden_bias):
    cdef const double[:, ::1] W = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(visible_bias, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(hidden_bias, dtype=np.float64)
    cdef Py_ssize_t m = W.shape[0], n = W.shape[1], i, j
    cdef Py_ssize_t total = (<Py_ssize_t> 1) << m, s
    out_arr = np.empty(total)
    cdef double[::1] out = out_arr
    cdef double[::1] pre = np.empty(n)
    cdef double acc
    with nogil:
        for s in range(total):
            acc = 0.0
            for j in range(n):
                pre[j] = -c[j]
            for i in range(m):
                if (s >> i) & 1:
                    acc -= b[i]
                    for j in range(n):
                        pre[j] -= W[i, j]
            for j in range(n):
                acc += _softplus(pre[j])
            out[s] = acc
    return out_arr
