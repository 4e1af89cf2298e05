# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel core: same surface as py_backend, typed inner loops.

Loops are written for the small-matrix regime this package lives in
(d_model <= a few hundred), where per-call overhead matters more than
cache blocking.
"""

import numpy as np

cimport cython
from libc.math cimport exp, sqrt

ctypedef fused floating:
    float
    double

NAME = "compiled"


def _dtype_of(arr):
    return arr.dtype


def matmul(floating[:, ::1] a, floating[:, ::1] b):
    """(m,k) @ (k,n) -> (m,n)."""
    cdef Py_ssize_t m = a.shape[0], k = a.shape[1], n = b.shape[1]
    if floating is float:
        out_np = np.zeros((m, n), dtype=np.float32)
    else:
        out_np = np.zeros((m, n), dtype=np.float64)
    cdef floating[:, ::1] out = out_np
    cdef Py_ssize_t i, j, p
    cdef floating aip
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            if aip == 0:
                continue
            for j in range(n):
                out[i, j] += aip * b[p, j]
    return out_np


def softmax_fwd(floating[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    if floating is float:
        out_np = np.empty((m, n), dtype=np.float32)
    else:
        out_np = np.empty((m, n), dtype=np.float64)
    cdef floating[:, ::1] out = out_np
    cdef Py_ssize_t i, j
    cdef floating mx, s
    for i in range(m):
        mx = x[i, 0]
        for j in range(1, n):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0
        for j in range(n):
            out[i, j] = <floating>exp(x[i, j] - mx)
            s += out[i, j]
        for j in range(n):
            out[i, j] /= s
    return out_np


def softmax_bwd(floating[:, ::1] dy, floating[:, ::1] y):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1]
    if floating is float:
        out_np = np.empty((m, n), dtype=np.float32)
    else:
        out_np = np.empty((m, n), dtype=np.float64)
    cdef floating[:, ::1] out = out_np
    cdef Py_ssize_t i, j
    cdef floating inner
    for i in range(m):
        inner = 0
        for j in range(n):
            inner += dy[i, j] * y[i, j]
        for j in range(n):
            out[i, j] = y[i, j] * (dy[i, j] - inner)
    return out_np


def layernorm_fwd(floating[:, ::1] x, floating[::1] gain, floating[::1] bias, double eps):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    if floating is float:
        y_np = np.empty((m, n), dtype=np.float32)
        mean_np = np.empty(m, dtype=np.float32)
        rstd_np = np.empty(m, dtype=np.float32)
    else:
        y_np = np.empty((m, n), dtype=np.float64)
        mean_np = np.empty(m, dtype=np.float64)
        rstd_np = np.empty(m, dtype=np.float64)
    cdef floating[:, ::1] y = y_np
    cdef floating[::1] mean = mean_np
    cdef floating[::1] rstd = rstd_np
    cdef Py_ssize_t i, j
    cdef floating mu, var, c
    for i in range(m):
        mu = 0
        for j in range(n):
            mu += x[i, j]
        mu /= n
        var = 0
        for j in range(n):
            c = x[i, j] - mu
            var += c * c
        var /= n
        mean[i] = mu
        rstd[i] = <floating>(1.0 / sqrt(var + eps))
        for j in range(n):
            y[i, j] = (x[i, j] - mu) * rstd[i] * gain[j] + bias[j]
    return y_np, mean_np, rstd_np


def layernorm_bwd(floating[:, ::1] dy, floating[:, ::1] x, floating[::1] gain,
                  floating[::1] mean, floating[::1] rstd):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1]
    if floating is float:
        dx_np = np.empty((m, n), dtype=np.float32)
        dgain_np = np.zeros(n, dtype=np.float32)
        dbias_np = np.zeros(n, dtype=np.float32)
    else:
        dx_np = np.empty((m, n), dtype=np.float64)
        dgain_np = np.zeros(n, dtype=np.float64)
        dbias_np = np.zeros(n, dtype=np.float64)
    cdef floating[:, ::1] dx = dx_np
    cdef floating[::1] dgain = dgain_np
    cdef floating[::1] dbias = dbias_np
    cdef Py_ssize_t i, j
    cdef floating xhat, dxh, m1, m2
    for i in range(m):
        m1 = 0
        m2 = 0
        for j in range(n):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dxh = dy[i, j] * gain[j]
            dgain[j] += dy[i, j] * xhat
            dbias[j] += dy[i, j]
            m1 += dxh
            m2 += dxh * xhat
        m1 /= n
        m2 /= n
        for j in range(n):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dxh = dy[i, j] * gain[j]
            dx[i, j] = rstd[i] * (dxh - m1 - xhat * m2)
    return dx_np, dgain_np, dbias_np


def mha_fwd(floating[:, ::1] q, floating[:, ::1] k, floating[:, ::1] v,
            floating[:, ::1] bias, Py_ssize_t n_heads):
    cdef Py_ssize_t m = q.shape[0], n = k.shape[0], d = q.shape[1]
    cdef Py_ssize_t dh = d // n_heads
    cdef double scale = 1.0 / sqrt(<double>dh)
    if floating is float:
        out_np = np.zeros((m, d), dtype=np.float32)
        attn_np = np.empty((n_heads, m, n), dtype=np.float32)
    else:
        out_np = np.zeros((m, d), dtype=np.float64)
        attn_np = np.empty((n_heads, m, n), dtype=np.float64)
    cdef floating[:, ::1] out = out_np
    cdef floating[:, :, ::1] attn = attn_np
    cdef Py_ssize_t h, i, j, p, off
    cdef floating s, mx, tot
    for h in range(n_heads):
        off = h * dh
        for i in range(m):
            mx = 0
            for j in range(n):
                s = 0
                for p in range(dh):
                    s += q[i, off + p] * k[j, off + p]
                s = <floating>(s * scale) + bias[i, j]
                attn[h, i, j] = s
                if j == 0 or s > mx:
                    mx = s
            tot = 0
            for j in range(n):
                attn[h, i, j] = <floating>exp(attn[h, i, j] - mx)
                tot += attn[h, i, j]
            for j in range(n):
                attn[h, i, j] /= tot
            for j in range(n):
                s = attn[h, i, j]
                if s == 0:
                    continue
                for p in range(dh):
                    out[i, off + p] += s * v[j, off + p]
    return out_np, attn_np


def mha_bwd(floating[:, ::1] d_out, floating[:, ::1] q, floating[:, ::1] k,
            floating[:, ::1] v, floating[:, :, ::1] attn, Py_ssize_t n_heads):
    cdef Py_ssize_t m = q.shape[0], n = k.shape[0], d = q.shape[1]
    cdef Py_ssize_t dh = d // n_heads
    cdef double scale = 1.0 / sqrt(<double>dh)
    if floating is float:
        dq_np = np.zeros((m, d), dtype=np.float32)
        dk_np = np.zeros((n, d), dtype=np.float32)
        dv_np = np.zeros((n, d), dtype=np.float32)
        drow_np = np.empty(n, dtype=np.float32)
    else:
        dq_np = np.zeros((m, d), dtype=np.float64)
        dk_np = np.zeros((n, d), dtype=np.float64)
        dv_np = np.zeros((n, d), dtype=np.float64)
        drow_np = np.empty(n, dtype=np.float64)
    cdef floating[:, ::1] dq = dq_np
    cdef floating[:, ::1] dk = dk_np
    cdef floating[:, ::1] dv = dv_np
    cdef floating[::1] drow = drow_np
    cdef Py_ssize_t h, i, j, p, off
    cdef floating da, inner, ds
    for h in range(n_heads):
        off = h * dh
        for i in range(m):
            inner = 0
            for j in range(n):
                da = 0
                for p in range(dh):
                    da += d_out[i, off + p] * v[j, off + p]
                drow[j] = da
                inner += da * attn[h, i, j]
            for j in range(n):
                ds = attn[h, i, j] * (drow[j] - inner)
                if ds == 0:
                    continue
                for p in range(dh):
                    dq[i, off + p] += <floating>(ds * scale) * k[j, off + p]
                    dk[j, off + p] += <floating>(ds * scale) * q[i, off + p]
            for j in range(n):
                da = attn[h, i, j]
                if da == 0:
                    continue
                for p in range(dh):
                    dv[j, off + p] += da * d_out[i, off + p]
    return dq_np, dk_np, dv_np


def kmeans_assign(floating[:, ::1] points, floating[:, ::1] centroids):
    cdef Py_ssize_t n = points.shape[0], d = points.shape[1], kk = centroids.shape[0]
    labels_np = np.empty(n, dtype=np.int64)
    if floating is float:
        sqd_np = np.empty(n, dtype=np.float32)
    else:
        sqd_np = np.empty(n, dtype=np.float64)
    cdef long long[::1] labels = labels_np
    cdef floating[::1] sqd = sqd_np
    cdef Py_ssize_t i, j, p
    cdef floating best, cur, diff
    cdef Py_ssize_t best_j
    for i in range(n):
        best = 0
        best_j = 0
        for j in range(kk):
            cur = 0
            for p in range(d):
                diff = points[i, p] - centroids[j, p]
                cur += diff * diff
            if j == 0 or cur < best:
                best = cur
                best_j = j
        labels[i] = best_j
        sqd[i] = best
    return labels_np, sqd_np


def scatter_add_rows(floating[:, ::1] out, long long[::1] ids, floating[:, ::1] grad):
    cdef Py_ssize_t m = ids.shape[0], d = out.shape[1]
    cdef Py_ssize_t i, p, r
    for i in range(m):
        r = ids[i]
        for p in range(d):
            out[r, p] += grad[i, p]
    return np.asarray(out)
