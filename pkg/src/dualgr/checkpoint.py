"""Named-tensor container used for checkpoints, codebooks and vectors.

Layout (all integers little-endian uint32):

    magic "DGR1" | version | tensor count
    per tensor: name length | name bytes (utf-8) | rank | dims... | raw values

Values are little-endian floats in the file's build precision: version 1
stores float32, version 2 stores float64. One file holds one precision
(precision is a build-wide choice). Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DGR1"
_VERSION_BY_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_DTYPE_BY_VERSION = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


def save_tensors(path, named: dict[str, np.ndarray]) -> None:
    """Write a dict of float arrays; all must share one dtype."""
    arrays = {name: np.asarray(a) for name, a in named.items()}
    dtypes = {a.dtype for a in arrays.values()}
    if len(dtypes) > 1:
        raise CheckpointError(f"mixed dtypes in one container: {sorted(map(str, dtypes))}")
    dtype = dtypes.pop() if dtypes else np.dtype(np.float32)
    if dtype not in _VERSION_BY_DTYPE:
        raise CheckpointError(f"unsupported dtype {dtype}")
    version = _VERSION_BY_DTYPE[dtype]
    le = _DTYPE_BY_VERSION[version]

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", version, len(arrays)))
        for name, arr in arrays.items():
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype(le, copy=False).tobytes(order="C"))


def load_tensors(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version not in _DTYPE_BY_VERSION:
        raise CheckpointError(f"{path}: unknown version {version}")
    dtype = _DTYPE_BY_VERSION[version]
    off = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", data, off) if rank else ()
        off += 4 * rank
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = n_values * dtype.itemsize
        arr = np.frombuffer(data, dtype=dtype, count=n_values, offset=off).reshape(dims)
        off += nbytes
        out[name] = arr.astype(dtype.newbyteorder("="), copy=True)
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return out
