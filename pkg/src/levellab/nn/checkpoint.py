"""Single-file named tensor archive.

Layout (all integers little-endian, arrays C-order little-endian):

    magic   4 bytes  b"LLTA"
    version u32      currently 1
    count   u32      number of tensors
    then per tensor:
        name_len u16, name utf-8
        dtype    u8   0=float32 1=float64 2=int64 3=int32
        ndim     u8
        shape    ndim x u32
        data     raw bytes

The format is byte-order explicit so archives written on any host load
identically everywhere.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LLTA"
VERSION = 1

_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8", 3: "<i4"}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1,
          np.dtype(np.int64): 2, np.dtype(np.int32): 3}


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _CODES:
            raise TypeError(f"unsupported dtype {arr.dtype} for {name!r}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a tensor archive (bad magic)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported archive version {version}")
    out: dict[str, np.ndarray] = {}
    off = 12
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        code, ndim = struct.unpack_from("<BB", raw, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        dtype = np.dtype(_DTYPES[code])
        n_elems = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(raw, dtype=dtype, count=n_elems, offset=off)
        off += n_elems * dtype.itemsize
        out[name] = arr.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
    return out
