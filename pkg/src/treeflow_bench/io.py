"""Binary array container: magic, JSON manifest, little-endian float64 payload.

The manifest records every array's name, shape and byte offset plus a
SHA-256 of the payload, which is verified on read.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TFBENCH1"


class ContainerError(ValueError):
    pass


def write_container(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    chunks, tensors, offset = [], [], 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        tensors.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    manifest = {
        "dtype": "<f8",
        "tensors": tensors,
        "meta": meta or {},
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(manifest, sort_keys=True).encode()
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(payload)


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    blob = Path(path).read_bytes()
    if not blob.startswith(MAGIC):
        raise ContainerError(f"{path}: not a treeflow-bench container")
    (n,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    manifest = json.loads(blob[start:start + n])
    payload = blob[start + n:]
    if hashlib.sha256(payload).hexdigest() != manifest["checksum"]:
        raise ContainerError(f"{path}: checksum mismatch, file is corrupt")
    arrays = {}
    for t in manifest["tensors"]:
        count = int(np.prod(t["shape"])) if t["shape"] else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=t["offset"])
        arrays[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)
    return arrays, manifest["meta"]
