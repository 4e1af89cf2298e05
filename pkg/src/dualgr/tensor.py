"""Dense reverse-mode autodiff, just large enough to train the decoder.

Design rules:
  * explicit shapes only — there is no broadcasting; ops that need a
    second shape (bias rows, scalars) are their own primitives
  * eager evaluation over numpy arrays, backward via a recorded tape
  * one build-wide float dtype (float32 by default; gradient checking is
    done in float64 because central differences are unreliable in 32-bit)
  * every op output is finiteness-checked (NaN/Inf raises) unless the
    check is explicitly disabled, e.g. for benchmarking

The hot kernels (matmul, softmax, layer norm, attention, scatter-add)
dispatch through `dualgr._kernels`, which selects the compiled core or
the numpy fallback at import time.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K

DEFAULT_DTYPE = np.float32
FINITE_CHECKS = True

_uid_counter = itertools.count()


class ShapeError(ValueError):
    """Raised when an op receives arguments of incompatible shapes."""


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


def set_default_dtype(dtype) -> None:
    global DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError("dtype must be float32 or float64")
    DEFAULT_DTYPE = dtype


@contextmanager
def finite_checks(enabled: bool):
    global FINITE_CHECKS
    prev = FINITE_CHECKS
    FINITE_CHECKS = enabled
    try:
        yield
    finally:
        FINITE_CHECKS = prev


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a)


class Tensor:
    """A node of the computation tape."""

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "uid", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, op="leaf", _parents=(), _backward=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        # ascontiguousarray would promote 0-d scalars to 1-d; keep rank
        self.data = arr if arr.ndim == 0 else np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = op
        self.uid = next(_uid_counter)
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], None] | None = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = self.name or self.op
        return f"Tensor(uid={self.uid}, op={tag!r}, shape={self.shape})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)


def parameter(data, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name, op="param")


def constant(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name, op="const")


def _result(data: np.ndarray, op: str, parents: tuple[Tensor, ...], backward) -> Tensor:
    if FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"op {op!r} (inputs {[p.uid for p in parents]}) produced non-finite values")
    needs = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=needs,
        op=op,
        _parents=parents if needs else (),
        _backward=backward if needs else None,
    )


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros(t.data.shape, dtype=t.data.dtype)
    t.grad += g


def _check_2d(op: str, *ts: Tensor) -> None:
    for t in ts:
        if t.data.ndim != 2:
            raise ShapeError(f"{op}: expected 2-d tensor, got shape {t.shape} (node {t.uid})")


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape} (nodes {a.uid}, {b.uid})")
    out = K.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, K.matmul(_c(g), _c(b.data.T)))
        if b.requires_grad:
            _accum(b, K.matmul(_c(a.data.T), _c(g)))

    return _result(out, "matmul", (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape} (nodes {a.uid}, {b.uid})")

    def backward(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g)

    return _result(a.data + b.data, "add", (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: {a.shape} vs {b.shape} (nodes {a.uid}, {b.uid})")

    def backward(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -g)

    return _result(a.data - b.data, "sub", (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape} (nodes {a.uid}, {b.uid})")

    def backward(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return _result(a.data * b.data, "mul", (a, b), backward)


def affine(a: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """Elementwise scale*a + shift with python-float constants."""
    s = a.data.dtype.type(scale)

    def backward(g):
        if a.requires_grad:
            _accum(a, g * s)

    return _result(a.data * s + a.data.dtype.type(shift), "affine", (a,), backward)


def neg(a: Tensor) -> Tensor:
    return affine(a, -1.0)


def scale(a: Tensor, c: float) -> Tensor:
    return affine(a, c)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """(m,n) + (n,) per row."""
    _check_2d("add_bias", x)
    if b.data.ndim != 1 or b.shape[0] != x.shape[1]:
        raise ShapeError(f"add_bias: {x.shape} + {b.shape} (nodes {x.uid}, {b.uid})")

    def backward(g):
        if x.requires_grad:
            _accum(x, g)
        if b.requires_grad:
            _accum(b, g.sum(axis=0))

    return _result(x.data + b.data[None, :], "add_bias", (x, b), backward)


def transpose(x: Tensor) -> Tensor:
    _check_2d("transpose", x)

    def backward(g):
        if x.requires_grad:
            _accum(x, _c(g.T))

    return _result(_c(x.data.T), "transpose", (x,), backward)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat_rows: empty part list")
    _check_2d("concat_rows", *parts)
    width = parts[0].shape[1]
    for p in parts:
        if p.shape[1] != width:
            raise ShapeError(f"concat_rows: width mismatch {p.shape} vs {width} (node {p.uid})")
    out = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g):
        for p, i0, i1 in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _accum(p, _c(g[i0:i1]))

    return _result(out, "concat_rows", tuple(parts), backward)


def slice_rows(x: Tensor, i0: int, i1: int) -> Tensor:
    _check_2d("slice_rows", x)
    if not (0 <= i0 <= i1 <= x.shape[0]):
        raise ShapeError(f"slice_rows: [{i0}:{i1}] of {x.shape} (node {x.uid})")

    def backward(g):
        if x.requires_grad:
            full = np.zeros(x.shape, dtype=x.data.dtype)
            full[i0:i1] = g
            _accum(x, full)

    return _result(_c(x.data[i0:i1]), "slice_rows", (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    _check_2d("layer_norm", x)
    if gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(f"layer_norm: x {x.shape}, gain {gain.shape}, bias {bias.shape}")
    y, mean, rstd = K.layernorm_fwd(x.data, gain.data, bias.data, eps)

    def backward(g):
        dx, dgain, dbias = K.layernorm_bwd(_c(g), x.data, gain.data, mean, rstd)
        if x.requires_grad:
            _accum(x, dx)
        if gain.requires_grad:
            _accum(gain, dgain)
        if bias.requires_grad:
            _accum(bias, dbias)

    return _result(y, "layer_norm", (x, gain, bias), backward)


def softmax(x: Tensor) -> Tensor:
    """Row softmax of a 2-d tensor."""
    _check_2d("softmax", x)
    y = K.softmax_fwd(x.data)

    def backward(g):
        if x.requires_grad:
            _accum(x, K.softmax_bwd(_c(g), y))

    return _result(y, "softmax", (x,), backward)


def masked_attention(q: Tensor, k: Tensor, v: Tensor, bias: np.ndarray, n_heads: int) -> Tensor:
    """Multi-head scaled dot-product attention with an additive bias mask.

    q: (m,d); k, v: (n,d); bias: constant (m,n) array added to every
    head's scores before softmax (use -1e9 entries to mask).
    """
    _check_2d("masked_attention", q, k, v)
    m, d = q.shape
    n = k.shape[0]
    if k.shape != (n, d) or v.shape != (n, d):
        raise ShapeError(f"masked_attention: q {q.shape}, k {k.shape}, v {v.shape}")
    if bias.shape != (m, n):
        raise ShapeError(f"masked_attention: bias {bias.shape}, expected {(m, n)}")
    if d % n_heads != 0:
        raise ShapeError(f"masked_attention: d={d} not divisible by n_heads={n_heads}")
    bias = np.ascontiguousarray(bias, dtype=q.data.dtype)
    out, attn = K.mha_fwd(q.data, k.data, v.data, bias, n_heads)

    def backward(g):
        dq, dk, dv = K.mha_bwd(_c(g), q.data, k.data, v.data, attn, n_heads)
        if q.requires_grad:
            _accum(q, dq)
        if k.requires_grad:
            _accum(k, dk)
        if v.requires_grad:
            _accum(v, dv)

    return _result(out, "masked_attention", (q, k, v), backward)


def embedding(table: Tensor, ids) -> Tensor:
    """Row gather: table (V,d), ids int (m,) -> (m,d)."""
    _check_2d("embedding", table)
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"embedding: ids must be 1-d, got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding: id out of range [0, {table.shape[0]}) (node {table.uid})")

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros(table.shape, dtype=table.data.dtype)
            K.scatter_add_rows(table.grad, idx, _c(g))

    return _result(_c(table.data[idx]), "embedding", (table,), backward)


def segment_sum(x: Tensor, seg_ids, n_segments: int) -> Tensor:
    """Sum rows of x (m,d) into (n_segments,d) buckets given per-row ids."""
    _check_2d("segment_sum", x)
    idx = np.asarray(seg_ids, dtype=np.int64)
    if idx.shape != (x.shape[0],):
        raise ShapeError(f"segment_sum: ids {idx.shape} vs rows {x.shape[0]}")
    if idx.size and (idx.min() < 0 or idx.max() >= n_segments):
        raise ShapeError(f"segment_sum: id out of range [0, {n_segments})")
    out = np.zeros((n_segments, x.shape[1]), dtype=x.data.dtype)
    K.scatter_add_rows(out, idx, x.data)

    def backward(g):
        if x.requires_grad:
            _accum(x, _c(g[idx]))

    return _result(out, "segment_sum", (x,), backward)


def gather_rows(x: Tensor, idx) -> Tensor:
    """Pick x[i, idx[i]] per row: (m,n), (m,) -> (m,)."""
    _check_2d("gather_rows", x)
    ii = np.asarray(idx, dtype=np.int64)
    if ii.shape != (x.shape[0],):
        raise ShapeError(f"gather_rows: idx {ii.shape} vs rows {x.shape[0]}")
    if ii.size and (ii.min() < 0 or ii.max() >= x.shape[1]):
        raise ShapeError(f"gather_rows: index out of range [0, {x.shape[1]})")
    rows = np.arange(x.shape[0])

    def backward(g):
        if x.requires_grad:
            full = np.zeros(x.shape, dtype=x.data.dtype)
            full[rows, ii] = g
            _accum(x, full)

    return _result(x.data[rows, ii].copy(), "gather_rows", (x,), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        if x.requires_grad:
            _accum(x, g * mask)

    return _result(x.data * mask, "relu", (x,), backward)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NonFiniteError(f"log: non-positive input (node {x.uid})")

    def backward(g):
        if x.requires_grad:
            _accum(x, g / x.data)

    return _result(np.log(x.data), "log", (x,), backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only through the interior."""
    inside = (x.data > lo) & (x.data < hi)

    def backward(g):
        if x.requires_grad:
            _accum(x, g * inside)

    return _result(np.clip(x.data, lo, hi), "clip", (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        if x.requires_grad:
            _accum(x, np.full(x.shape, g, dtype=x.data.dtype))

    return _result(x.data.sum(), "sum_all", (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def backward(g):
        if x.requires_grad:
            _accum(x, np.full(x.shape, g / n, dtype=x.data.dtype))

    return _result(x.data.mean(), "mean_all", (x,), backward)


# ---------------------------------------------------------------------------
# backward pass


def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.uid in seen:
            continue
        seen.add(node.uid)
        stack.append((node, True))
        for p in node._parents:
            if p.uid not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; accumulates into .grad."""
    if loss.shape != ():
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape} (node {loss.uid})")
    order = _topo(loss)
    for t in order:
        t.grad = None
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for t in reversed(order):
        if t._backward is not None and t.grad is not None:
            t._backward(t.grad)


def gradients(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss for every named parameter.

    Parameters not reachable from the loss get exact-zero gradients of
    matching shape.
    """
    for p in params.values():
        p.grad = None
    backward(loss)
    out = {}
    for name, p in params.items():
        if p.grad is None:
            out[name] = np.zeros(p.shape, dtype=p.data.dtype)
        else:
            out[name] = p.grad
    return out


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_error={self.max_rel_error:.3e} tolerance={self.tolerance:.1e}"


MAX_CHECKED_PARAMS = 10_000


def check_gradients(
    build_loss: Callable[[], Tensor],
    params: dict[str, Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-3,
    param_names: Iterable[str] | None = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients against central finite differences.

    `build_loss` must rebuild the full forward pass from the current
    parameter values on every call. Run this in float64; see module
    docstring. Relative error uses denominator max(|a|, |b|, 1).
    """
    names = list(param_names) if param_names is not None else list(params)
    total = sum(params[n].data.size for n in names)
    if total > MAX_CHECKED_PARAMS:
        raise ValueError(f"check_gradients: {total} parameters exceeds limit {MAX_CHECKED_PARAMS}")

    loss = build_loss()
    grads = gradients(loss, {n: params[n] for n in names})

    report = GradCheckReport(tolerance=tolerance, step=step)
    for name in names:
        p = params[name]
        flat = p.data.reshape(-1)
        gflat = grads[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = build_loss().item()
            flat[i] = orig - step
            f_minus = build_loss().item()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            a = float(gflat[i])
            err = abs(a - fd) / max(abs(a), abs(fd), 1.0)
            if err > worst:
                worst = err
        report.per_param[name] = worst
    return report
