"""Binary checkpoint container for named tensors.

Layout (all integers little-endian):

    magic "TCVE" | version u32 | tensor_count u32
    per tensor: name_len u32 | name utf-8 | dtype u32 (0=f32, 1=f64)
                | rank u32 | dims u64 each | raw values little-endian
    crc32 u32 over all preceding bytes

Tensors keep their insertion order, so save -> load -> save is
byte-identical; truncation and corruption are detected via the checksum.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"TCVE"
FORMAT_VERSION = 1

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def checkpoint_bytes(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)  # tobytes handles layout; keep rank-0 shapes
        if arr.dtype not in _DTYPE_CODES:
            raise ValueError(
                f"checkpoint tensor {name} has unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<II", _DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def parse_checkpoint(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 16:
        raise ValueError("checkpoint truncated: shorter than any valid file")
    body, (stored_crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ValueError("checkpoint checksum mismatch (corrupt or truncated file)")
    if body[:4] != MAGIC:
        raise ValueError(f"checkpoint magic mismatch: {body[:4]!r}")
    version, count = struct.unpack("<II", body[4:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(body):
            raise ValueError("checkpoint truncated inside a tensor record")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        code, rank = struct.unpack("<II", take(8))
        if code not in _CODE_DTYPES:
            raise ValueError(f"checkpoint tensor {name} has unknown dtype code {code}")
        dims = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        dtype = _CODE_DTYPES[code]
        n_items = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw = take(n_items * dtype.itemsize)
        arr = np.frombuffer(raw, dtype=dtype).reshape(dims)
        # astype copies into an owned C-contiguous native-order array and,
        # unlike ascontiguousarray, keeps rank-0 shapes intact
        out[name] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    if pos != len(body):
        raise ValueError(f"checkpoint has {len(body) - pos} trailing bytes")
    return out


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(checkpoint_bytes(tensors))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    return parse_checkpoint(Path(path).read_bytes())
