"""Versioned named-tensor checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"NTC1"
    version u32      currently 1
    meta    u32 length + UTF-8 JSON blob (model-level metadata)
    count   u32      number of tensors
    entry   u16 name length + UTF-8 name
            u8 ndim, then u32 per dimension
            float32 little-endian payload, C order

Tensors are stored as 32-bit floats regardless of in-memory dtype.
"""

import json
import struct

import numpy as np

MAGIC = b"NTC1"
VERSION = 1


def save_tensors(path, tensors: dict, meta: dict | None = None) -> None:
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            encoded = name.encode("utf-8")
            arr = np.asarray(arr, dtype="<f4")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.tobytes())


def load_tensors(path) -> tuple[dict, dict]:
    """Returns (name -> float32 array, metadata dict)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a tensor checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(4 * size), dtype="<f4").reshape(shape)
            tensors[name] = data.copy()
    return tensors, meta
