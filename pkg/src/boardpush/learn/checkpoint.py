"""Checkpoint container: magic "BPCK", u32 schema, JSON header naming the
flat little-endian float32 arrays that follow."""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"BPCK"
SCHEMA = 1


class CheckpointError(RuntimeError):
    pass


def write_checkpoint(path, named_arrays, meta: dict):
    """named_arrays: ordered (name, array) pairs; arrays stored as f32."""
    header = {
        "arrays": [{"name": n, "shape": list(np.asarray(a).shape)}
                   for n, a in named_arrays],
        "meta": meta,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", SCHEMA, len(hbytes)))
        fh.write(hbytes)
        for _, a in named_arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_checkpoint(path):
    """Returns (dict name -> float64 array, meta)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    schema, hlen = struct.unpack("<II", blob[4:12])
    if schema != SCHEMA:
        raise CheckpointError(f"{path}: unsupported schema {schema}")
    header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    out = {}
    off = 12 + hlen
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off)
        out[spec["name"]] = arr.reshape(shape).astype(float)
        off += 4 * n
    return out, header["meta"]
