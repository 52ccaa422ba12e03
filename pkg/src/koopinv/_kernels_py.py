"""Pure-Python/NumPy twins of the compiled kernels in ``_kernels.pyx``."""

import math

import numpy as np


def _rhs(y0, y1, y2, c0, c1, c2, b):
    return (c0 * y1 * y2 + b[0], c1 * y2 * y0 + b[1], c2 * y0 * y1 + b[2])


def rk4_rigid_body(x0, coef, bu, h, nsteps, guard):
    bu = np.asarray(bu, dtype=float)
    hold = bu.shape[0] == 1
    if not hold and bu.shape[0] != 2 * nsteps + 1:
        raise ValueError("bu must have 1 or 2*nsteps+1 rows")
    rows = [tuple(r) for r in bu.tolist()]
    c0, c1, c2 = (float(v) for v in coef)
    y0, y1, y2 = (float(v) for v in x0)
    hh = 0.5 * h
    h6 = h / 6.0
    out = np.empty((nsteps + 1, 3))
    out[0] = (y0, y1, y2)
    fail = -1
    for s in range(nsteps):
        if hold:
            ba = bm = bb = rows[0]
        else:
            ba, bm, bb = rows[2 * s], rows[2 * s + 1], rows[2 * s + 2]
        k1 = _rhs(y0, y1, y2, c0, c1, c2, ba)
        k2 = _rhs(y0 + hh * k1[0], y1 + hh * k1[1], y2 + hh * k1[2], c0, c1, c2, bm)
        k3 = _rhs(y0 + hh * k2[0], y1 + hh * k2[1], y2 + hh * k2[2], c0, c1, c2, bm)
        k4 = _rhs(y0 + h * k3[0], y1 + h * k3[1], y2 + h * k3[2], c0, c1, c2, bb)
        y0 = y0 + h6 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y1 = y1 + h6 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        y2 = y2 + h6 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        out[s + 1] = (y0, y1, y2)
        nrm = math.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
        if not math.isfinite(nrm) or nrm > guard:
            fail = s + 1
            break
    return out, fail


def _powers(X, exps):
    # (m, P, n) table of X[i, j] ** exps[k, j]
    X = np.asarray(X, dtype=float)
    exps = np.asarray(exps, dtype=np.int64)
    return X[:, None, :] ** exps[None, :, :]


def monomial_values(X, exps):
    return _powers(X, exps).prod(axis=2)


def monomial_gradients(X, exps):
    X = np.asarray(X, dtype=float)
    exps = np.asarray(exps, dtype=np.int64)
    m, n = X.shape
    out = np.zeros((m, exps.shape[0], n))
    for j in range(n):
        active = exps[:, j] > 0
        if not active.any():
            continue
        lowered = exps[active].copy()
        lowered[:, j] -= 1
        out[:, active, j] = exps[active, j] * _powers(X, lowered).prod(axis=2)
    return out


def monomial_directional(X, Xdot, exps):
    grads = monomial_gradients(X, exps)
    return np.einsum("ikj,ij->ik", grads, np.asarray(Xdot, dtype=float))
