# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused float64 kernels for the memory-bound inner loops.

Each function mirrors the numpy fallback in _kernels_py.py: one pass (or two)
over contiguous buffers instead of a chain of temporaries. Matrix products are
not reimplemented here; BLAS via numpy already owns those.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def relu_fwd(cnp.ndarray x):
    cdef cnp.ndarray out = np.empty_like(x)
    cdef double[::1] xv = x.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    for i in range(n):
        ov[i] = xv[i] if xv[i] > 0.0 else 0.0
    return out


def relu_bwd(cnp.ndarray x, cnp.ndarray grad):
    cdef cnp.ndarray out = np.empty_like(x)
    cdef double[::1] xv = x.ravel()
    cdef double[::1] gv = grad.ravel()
    cdef double[::1] ov = out.ravel()
    cdef Py_ssize_t i, n = xv.shape[0]
    for i in range(n):
        ov[i] = gv[i] if xv[i] > 0.0 else 0.0
    return out


def softmax_rows_fwd(cnp.ndarray x):
    cdef cnp.ndarray out = np.empty_like(x)
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, rows = xv.shape[0], cols = xv.shape[1]
    cdef double rmax, total
    for i in range(rows):
        rmax = xv[i, 0]
        for j in range(1, cols):
            if xv[i, j] > rmax:
                rmax = xv[i, j]
        total = 0.0
        for j in range(cols):
            ov[i, j] = exp(xv[i, j] - rmax)
            total += ov[i, j]
        for j in range(cols):
            ov[i, j] /= total
    return out


def softmax_rows_bwd(cnp.ndarray y, cnp.ndarray grad):
    cdef cnp.ndarray out = np.empty_like(y)
    cdef double[:, ::1] yv = y
    cdef double[:, ::1] gv = grad
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, rows = yv.shape[0], cols = yv.shape[1]
    cdef double dot
    for i in range(rows):
        dot = 0.0
        for j in range(cols):
            dot += yv[i, j] * gv[i, j]
        for j in range(cols):
            ov[i, j] = yv[i, j] * (gv[i, j] - dot)
    return out


def layer_norm_fwd(cnp.ndarray x, cnp.ndarray gain, cnp.ndarray bias, double eps):
    cdef cnp.ndarray out = np.empty_like(x)
    cdef cnp.ndarray xhat = np.empty_like(x)
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1]
    cdef cnp.ndarray inv_std = np.empty(rows, dtype=np.float64)
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] ov = out
    cdef double[:, ::1] hv = xhat
    cdef double[::1] sv = inv_std
    cdef double[::1] gv = gain
    cdef double[::1] bv = bias
    cdef Py_ssize_t i, j
    cdef double mean, var, d, s
    for i in range(rows):
        mean = 0.0
        for j in range(cols):
            mean += xv[i, j]
        mean /= cols
        var = 0.0
        for j in range(cols):
            d = xv[i, j] - mean
            var += d * d
        var /= cols
        s = 1.0 / sqrt(var + eps)
        sv[i] = s
        for j in range(cols):
            hv[i, j] = (xv[i, j] - mean) * s
            ov[i, j] = hv[i, j] * gv[j] + bv[j]
    return out, xhat, inv_std


def layer_norm_bwd(cnp.ndarray grad, cnp.ndarray xhat, cnp.ndarray inv_std,
                   cnp.ndarray gain):
    cdef Py_ssize_t rows = grad.shape[0], cols = grad.shape[1]
    cdef cnp.ndarray dx = np.empty_like(grad)
    cdef cnp.ndarray dgain = np.zeros(cols, dtype=np.float64)
    cdef cnp.ndarray dbias = np.zeros(cols, dtype=np.float64)
    cdef double[:, ::1] gv = grad
    cdef double[:, ::1] hv = xhat
    cdef double[::1] sv = inv_std
    cdef double[::1] wv = gain
    cdef double[:, ::1] dxv = dx
    cdef double[::1] dgv = dgain
    cdef double[::1] dbv = dbias
    cdef Py_ssize_t i, j
    cdef double m1, m2, dh
    for i in range(rows):
        m1 = 0.0
        m2 = 0.0
        for j in range(cols):
            dgv[j] += gv[i, j] * hv[i, j]
            dbv[j] += gv[i, j]
            dh = gv[i, j] * wv[j]
            m1 += dh
            m2 += dh * hv[i, j]
        m1 /= cols
        m2 /= cols
        for j in range(cols):
            dxv[i, j] = sv[i] * (gv[i, j] * wv[j] - m1 - hv[i, j] * m2)
    return dx, dgain, dbias


def adam_update(cnp.ndarray param, cnp.ndarray grad, cnp.ndarray m,
                cnp.ndarray v, long step, double lr, double beta1,
                double beta2, double eps):
    cdef double[::1] pv = param.ravel()
    cdef double[::1] gv = grad.ravel()
    cdef double[::1] mv = m.ravel()
    cdef double[::1] vv = v.ravel()
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef double c1 = 1.0 - beta1 ** step
    cdef double c2 = 1.0 - beta2 ** step
    cdef double g
    for i in range(n):
        g = gv[i]
        mv[i] = beta1 * mv[i] + (1.0 - beta1) * g
        vv[i] = beta2 * vv[i] + (1.0 - beta2) * g * g
        pv[i] -= lr * (mv[i] / c1) / (sqrt(vv[i] / c2) + eps)
