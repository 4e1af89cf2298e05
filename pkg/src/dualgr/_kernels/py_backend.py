"""Numpy implementations of the hot kernels.

This is the fallback backend; `dualgr._kernels` prefers the compiled
extension when it is importable. Both backends expose the same functions
with identical semantics (up to floating-point association order) and
preserve the input dtype (float32 or float64).

Shapes are explicit everywhere; no broadcasting.
"""

import numpy as np

NAME = "python"


def matmul(a, b):
    """(m,k) @ (k,n) -> (m,n)."""
    return np.matmul(a, b)


def softmax_fwd(x):
    """Row softmax of a 2-d array."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(dy, y):
    """Backward of row softmax given saved output y."""
    inner = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - inner)


def layernorm_fwd(x, gain, bias, eps):
    """Row layer norm of a 2-d array. Returns (y, mean, rstd)."""
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    y = centered * rstd * gain + bias
    return y, mean[:, 0], rstd[:, 0]


def layernorm_bwd(dy, x, gain, mean, rstd):
    """Backward of row layer norm. Returns (dx, dgain, dbias)."""
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    # dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    return dx.astype(x.dtype, copy=False), dgain, dbias


def _split_heads(x, n_heads):
    m, d = x.shape
    dh = d // n_heads
    return x.reshape(m, n_heads, dh).transpose(1, 0, 2)  # (h, m, dh)


def _merge_heads(x):
    h, m, dh = x.shape
    return x.transpose(1, 0, 2).reshape(m, h * dh)


def mha_fwd(q, k, v, bias, n_heads):
    """Multi-head attention forward.

    q: (m,d), k/v: (n,d), bias: (m,n) additive (shared across heads).
    Returns (out (m,d), attn (h,m,n)) with attn saved for backward.
    """
    dh = q.shape[1] // n_heads
    scale = 1.0 / np.sqrt(dh)
    qh = _split_heads(q, n_heads)
    kh = _split_heads(k, n_heads)
    vh = _split_heads(v, n_heads)
    scores = np.matmul(qh, kh.transpose(0, 2, 1)) * scale + bias[None, :, :]
    scores = scores - scores.max(axis=2, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=2, keepdims=True)
    out = np.matmul(attn, vh)
    return _merge_heads(out).astype(q.dtype, copy=False), attn.astype(q.dtype, copy=False)


def mha_bwd(d_out, q, k, v, attn, n_heads):
    """Backward of mha_fwd. Returns (dq, dk, dv)."""
    dh = q.shape[1] // n_heads
    scale = 1.0 / np.sqrt(dh)
    qh = _split_heads(q, n_heads)
    kh = _split_heads(k, n_heads)
    vh = _split_heads(v, n_heads)
    doh = _split_heads(d_out, n_heads)
    dv = np.matmul(attn.transpose(0, 2, 1), doh)
    dattn = np.matmul(doh, vh.transpose(0, 2, 1))
    inner = (dattn * attn).sum(axis=2, keepdims=True)
    dscores = attn * (dattn - inner)
    dq = np.matmul(dscores, kh) * scale
    dk = np.matmul(dscores.transpose(0, 2, 1), qh) * scale
    return (
        _merge_heads(dq).astype(q.dtype, copy=False),
        _merge_heads(dk).astype(q.dtype, copy=False),
        _merge_heads(dv).astype(q.dtype, copy=False),
    )


def kmeans_assign(points, centroids):
    """Nearest centroid per point (ties -> lowest index).

    points: (n,d), centroids: (k,d). Returns (labels int64 (n,), sqdist (n,)).
    """
    # ||p - c||^2 computed directly for numerical robustness near ties
    diff = points[:, None, :] - centroids[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels.astype(np.int64), d2[np.arange(points.shape[0]), labels]


def scatter_add_rows(out, ids, grad):
    """out[ids[i]] += grad[i] for each row i (in place)."""
    np.add.at(out, ids, grad)
    return out
