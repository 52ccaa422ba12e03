# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: rigid-body RK4 stepping and monomial dictionary evaluation.

Every function here has a pure-Python twin in ``_kernels_py`` with the same
signature; ``koopinv.kernels`` picks one at import time.
"""

import numpy as np
from libc.math cimport isfinite, sqrt

ctypedef double f64
ctypedef long long i64


cdef inline f64 _ipow(f64 x, i64 e) nogil:
    cdef f64 r = 1.0
    while e > 0:
        r *= x
        e -= 1
    return r


cdef inline void _euler_rhs(f64 y0, f64 y1, f64 y2, const f64[::1] c,
                            f64 b0, f64 b1, f64 b2, f64* out) nogil:
    out[0] = c[0] * y1 * y2 + b0
    out[1] = c[1] * y2 * y0 + b1
    out[2] = c[2] * y0 * y1 + b2


def rk4_rigid_body(x0, coef, bu, double h, Py_ssize_t nsteps, double guard):
    """Fixed-step RK4 for the forced Euler equations.

    ``bu`` holds the actuation term B @ tau sampled on the half-step grid,
    shape (2*nsteps + 1, 3), or a single row (1, 3) held constant.
    Returns ``(states, fail_step)`` with ``fail_step == -1`` on success.
    """
    cdef const f64[::1] x = np.ascontiguousarray(x0, dtype=np.float64)
    cdef const f64[::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef const f64[:, ::1] b = np.ascontiguousarray(bu, dtype=np.float64)
    out_arr = np.empty((nsteps + 1, 3), dtype=np.float64)
    cdef f64[:, ::1] out = out_arr
    cdef bint hold = b.shape[0] == 1
    if not hold and b.shape[0] != 2 * nsteps + 1:
        raise ValueError("bu must have 1 or 2*nsteps+1 rows")
    cdef f64 y0 = x[0], y1 = x[1], y2 = x[2]
    cdef f64 k1[3]
    cdef f64 k2[3]
    cdef f64 k3[3]
    cdef f64 k4[3]
    cdef f64 hh = 0.5 * h, h6 = h / 6.0, nrm
    cdef Py_ssize_t s, r0, r1, r2
    cdef Py_ssize_t fail = -1
    out[0, 0] = y0
    out[0, 1] = y1
    out[0, 2] = y2
    with nogil:
        for s in range(nsteps):
            if hold:
                r0 = 0
                r1 = 0
                r2 = 0
            else:
                r0 = 2 * s
                r1 = 2 * s + 1
                r2 = 2 * s + 2
            _euler_rhs(y0, y1, y2, c, b[r0, 0], b[r0, 1], b[r0, 2], k1)
            _euler_rhs(y0 + hh * k1[0], y1 + hh * k1[1], y2 + hh * k1[2], c,
                       b[r1, 0], b[r1, 1], b[r1, 2], k2)
            _euler_rhs(y0 + hh * k2[0], y1 + hh * k2[1], y2 + hh * k2[2], c,
                       b[r1, 0], b[r1, 1], b[r1, 2], k3)
            _euler_rhs(y0 + h * k3[0], y1 + h * k3[1], y2 + h * k3[2], c,
                       b[r2, 0], b[r2, 1], b[r2, 2], k4)
            y0 = y0 + h6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            y1 = y1 + h6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            y2 = y2 + h6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            out[s + 1, 0] = y0
            out[s + 1, 1] = y1
            out[s + 1, 2] = y2
            nrm = sqrt(y0 * y0 + y1 * y1 + y2 * y2)
            if not isfinite(nrm) or nrm > guard:
                fail = s + 1
                break
    return out_arr, fail


def monomial_values(X, exps):
    """Entry (i, k) is prod_j X[i, j] ** exps[k, j]."""
    cdef const f64[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const i64[:, ::1] e = np.ascontiguousarray(exps, dtype=np.int64)
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], p = e.shape[0]
    out_arr = np.empty((m, p), dtype=np.float64)
    cdef f64[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, j
    cdef f64 v
    with nogil:
        for i in range(m):
            for k in range(p):
                v = 1.0
                for j in range(n):
                    v *= _ipow(x[i, j], e[k, j])
                out[i, k] = v
    return out_arr


def monomial_gradients(X, exps):
    """Entry (i, k, j) is the partial of monomial k along x_j at sample i."""
    cdef const f64[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const i64[:, ::1] e = np.ascontiguousarray(exps, dtype=np.int64)
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], p = e.shape[0]
    out_arr = np.zeros((m, p, n), dtype=np.float64)
    cdef f64[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, k, j, l
    cdef f64 v
    with nogil:
        for i in range(m):
            for k in range(p):
                for j in range(n):
                    if e[k, j] == 0:
                        continue
                    v = <f64> e[k, j] * _ipow(x[i, j], e[k, j] - 1)
                    for l in range(n):
                        if l != j:
                            v *= _ipow(x[i, l], e[k, l])
                    out[i, k, j] = v
    return out_arr


def monomial_directional(X, Xdot, exps):
    """Entry (i, k) is grad(monomial k)(X[i]) . Xdot[i]."""
    cdef const f64[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const f64[:, ::1] xd = np.ascontiguousarray(Xdot, dtype=np.float64)
    cdef const i64[:, ::1] e = np.ascontiguousarray(exps, dtype=np.int64)
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], p = e.shape[0]
    out_arr = np.empty((m, p), dtype=np.float64)
    cdef f64[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, j, l
    cdef f64 v, acc
    with nogil:
        for i in range(m):
            for k in range(p):
                acc = 0.0
                for j in range(n):
                    if e[k, j] == 0:
                        continue
                    v = <f64> e[k, j] * _ipow(x[i, j], e[k, j] - 1) * xd[i, j]
                    for l in range(n):
                        if l != j:
                            v *= _ipow(x[i, l], e[k, l])
                    acc += v
                out[i, k] = acc
    return out_arr
