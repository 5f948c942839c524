"""Bit-exact binary checkpoint format for named tensors.

Layout: magic "DFSG", format version u16, tensor count u32, then per tensor:
name length u16 + UTF-8 name, rank u8, extents as u32, values as little-endian
float64. Everything little-endian, so files diff byte-for-byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import IOError_

MAGIC = b"DFSG"
VERSION = 1


def save_checkpoint(path, named_arrays) -> None:
    """named_arrays: ordered iterable of (name, ndarray)."""
    items = [(name, np.asarray(arr, dtype=np.float64)) for name, arr in named_arrays]
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(items))]
    for name, arr in items:
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as e:
        raise IOError_(f"cannot write checkpoint {path}: {e}") from e


def load_checkpoint(path):
    """Returns an ordered dict-like list preserved as dict (py3.7+ ordered)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IOError_(f"cannot read checkpoint {path}: {e}") from e
    if raw[:4] != MAGIC:
        raise IOError_(f"{path}: bad checkpoint magic")
    version, count = struct.unpack_from("<HI", raw, 4)
    if version != VERSION:
        raise IOError_(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        shape = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape)
        pos += 8 * n
        out[name] = arr.astype(np.float64)
    return out


def load_into_params(path, named_params) -> None:
    """Overwrite each (name, Tensor) param with the checkpointed array."""
    stored = load_checkpoint(path)
    for name, param in named_params:
        if name not in stored:
            raise IOError_(f"{path}: missing tensor '{name}'")
        if stored[name].shape != param.data.shape:
            raise IOError_(f"{path}: shape mismatch for '{name}'")
        param.data = stored[name].copy()
