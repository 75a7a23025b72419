"""RADW weight checkpoints.

Layout::

    b"RADW" | version (1 byte) | manifest length (uint32 LE) | manifest JSON (utf-8)
    | raw little-endian float32 buffers

The manifest is ``{"tensors": [{"name", "shape", "offset", "nbytes"}, ...],
"meta": {...}}`` with offsets relative to the start of the buffer section.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RADW"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_weights(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)),
                        "offset": offset, "nbytes": len(buf)})
        blobs.append(buf)
        offset += len(buf)
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_weights(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a RADW checkpoint")
    if raw[4] != VERSION:
        raise CheckpointError(f"{path}: unsupported RADW version {raw[4]}")
    (mlen,) = struct.unpack("<I", raw[5:9])
    try:
        manifest = json.loads(raw[9:9 + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest") from exc
    body = raw[9 + mlen:]
    out = {}
    for e in manifest["tensors"]:
        chunk = body[e["offset"]:e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated buffer for {e['name']}")
        out[e["name"]] = np.frombuffer(chunk, dtype="<f4").astype(np.float32).reshape(e["shape"])
    return out, manifest.get("meta", {})
