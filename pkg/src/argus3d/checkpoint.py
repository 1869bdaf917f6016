"""Shared binary container for named float32 tensors.

Layout (little-endian): magic b"A3DC", format version u32, then repeated
entries of (name length u32, name bytes utf-8, rank u32, dims u32 x rank,
float32 payload) until end of file. Readers reject unknown versions.

JSON metadata rides along as an ordinary entry named "__config_json__"
whose payload is the utf-8 bytes widened to one float per byte, keeping
the wire format free of special cases.
"""

from __future__ import annotations

import json
import os
import struct
from typing import Any

import numpy as np

MAGIC = b"A3DC"
VERSION = 1
CONFIG_KEY = "__config_json__"


class CheckpointError(ValueError):
    """Malformed or unsupported container."""


def write_tensors(path: str | os.PathLike, tensors: dict[str, np.ndarray],
                  config: dict[str, Any] | None = None) -> None:
    """Write atomically: fully build the temp file, then rename over path."""
    items = dict(tensors)
    if config is not None:
        payload = np.frombuffer(
            json.dumps(config, sort_keys=True).encode("utf-8"), dtype=np.uint8
        )
        items[CONFIG_KEY] = payload.astype(np.float32)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name in sorted(items):
            arr = np.ascontiguousarray(items[name], dtype=np.float32)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def read_tensors(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict[str, Any] | None]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    pos = 8
    tensors: dict[str, np.ndarray] = {}
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise CheckpointError(f"{path}: truncated entry header")
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        end = pos + 4 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated payload for '{name}'")
        tensors[name] = np.frombuffer(blob[pos:end], dtype="<f4").reshape(dims).copy()
        pos = end
    config = None
    if CONFIG_KEY in tensors:
        raw = tensors.pop(CONFIG_KEY)
        config = json.loads(raw.astype(np.uint8).tobytes().decode("utf-8"))
    return tensors, config
