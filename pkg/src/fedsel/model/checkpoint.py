"""Single-file checkpoint container.

Layout (all header integers big-endian)::

    magic  b"FSCK"    4 bytes
    version           1 byte
    header_len        u32
    header            UTF-8 JSON: {"manifest": [...], "meta": {...}}
    count             u32, number of float32 values
    values            count * float32 little-endian
    crc32             u32 over every preceding byte

The same container backs bandit estimator snapshots.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .weights import ModelWeights, TensorSpec, flatten_weights, load_flat_weights, manifest_size

MAGIC = b"FSCK"
VERSION = 1


class CheckpointError(IOError):
    """Missing, truncated or corrupted checkpoint file."""


def encode_container(manifest: Sequence[TensorSpec], flat: np.ndarray, meta: Dict[str, Any]) -> bytes:
    header = json.dumps(
        {"manifest": [s.to_dict() for s in manifest], "meta": meta}, sort_keys=True
    ).encode("utf-8")
    values = np.asarray(flat, dtype="<f4")
    body = b"".join(
        [
            MAGIC,
            struct.pack(">B", VERSION),
            struct.pack(">I", len(header)),
            header,
            struct.pack(">I", values.size),
            values.tobytes(),
        ]
    )
    return body + struct.pack(">I", zlib.crc32(body))


def decode_container(data: bytes) -> Tuple[List[TensorSpec], np.ndarray, Dict[str, Any]]:
    if len(data) < 4 + 1 + 4 + 4 + 4:
        raise CheckpointError("checkpoint truncated")
    body, (crc,) = data[:-4], struct.unpack(">I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch (partial or corrupted file)")
    if body[:4] != MAGIC:
        raise CheckpointError("bad checkpoint magic")
    if body[4] != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {body[4]}")
    (hlen,) = struct.unpack(">I", body[5:9])
    header = json.loads(body[9 : 9 + hlen].decode("utf-8"))
    pos = 9 + hlen
    (count,) = struct.unpack(">I", body[pos : pos + 4])
    raw = body[pos + 4 :]
    if len(raw) != 4 * count:
        raise CheckpointError(f"expected {count} values, found {len(raw) // 4}")
    manifest = [TensorSpec.from_dict(d) for d in header["manifest"]]
    if manifest and manifest_size(manifest) != count:
        raise CheckpointError("manifest size does not match stored values")
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float32)
    return manifest, flat, header.get("meta", {})


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path: str | os.PathLike, weights: ModelWeights, round_index: int = 0) -> None:
    """Overwrite the client's single checkpoint file in place."""
    manifest = weights.manifest
    atomic_write(path, encode_container(manifest, flatten_weights(weights, manifest), {"round_index": int(round_index)}))


def load_checkpoint(path: str | os.PathLike) -> Tuple[ModelWeights, int]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    manifest, flat, meta = decode_container(path.read_bytes())
    return load_flat_weights(flat, manifest), int(meta.get("round_index", 0))
