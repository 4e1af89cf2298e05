"""Kernel backend selection.

Prefers the compiled Cython core when it has been built; otherwise falls
back to the numpy implementation. Override with DUALGR_BACKEND=python or
DUALGR_BACKEND=compiled (the latter raises if the extension is missing).

Numerical results of the two backends agree to floating-point rounding
but are not bit-identical (summation order differs); all determinism
guarantees in this package are scoped to a single installed backend.
"""

import os

_requested = os.environ.get("DUALGR_BACKEND", "").strip().lower()
if _requested not in ("", "python", "compiled"):
    raise ImportError(f"DUALGR_BACKEND must be 'python' or 'compiled', got {_requested!r}")

_impl = None
if _requested != "python":
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "compiled":
            raise ImportError("DUALGR_BACKEND=compiled but the extension is not built")
        _impl = None
if _impl is None:
    from . import py_backend as _impl

BACKEND = _impl.NAME

matmul = _impl.matmul
softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
mha_fwd = _impl.mha_fwd
mha_bwd = _impl.mha_bwd
kmeans_assign = _impl.kmeans_assign
scatter_add_rows = _impl.scatter_add_rows
