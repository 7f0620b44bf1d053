"""Self-describing checkpoint container.

Layout: an 8-byte magic, an 8-byte little-endian header length, a JSON
header (format version, model dimensions, tokenizer tables, and a tensor
index with offsets), then the raw float64 little-endian tensor bytes in
index order. Writing the same model twice produces identical bytes, so
checkpoints of identical runs can be compared directly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from amrforge.model import ModelSpec
from amrforge.tokenizer import Tokenizer

MAGIC = b"AMRFORGE"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, spec: ModelSpec, tokenizer: Tokenizer, params, extra=None):
    names = sorted(params)
    index = []
    offset = 0
    blobs = []
    for name in names:
        tensor = np.ascontiguousarray(params[name], dtype=np.float64)
        raw = tensor.astype("<f8").tobytes()
        index.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "spec": spec.to_dict(),
        "tokenizer": tokenizer.to_dict(),
        "tensors": index,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<Q", len(header_bytes)))
        handle.write(header_bytes)
        for raw in blobs:
            handle.write(raw)


def load_checkpoint(path):
    """Returns (spec, tokenizer, params dict, extra dict)."""
    with open(path, "rb") as handle:
        magic = handle.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<Q", handle.read(8))
        header = json.loads(handle.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported format version {header.get('format_version')}"
            )
        body = handle.read()
    spec = ModelSpec.from_dict(header["spec"])
    tokenizer = Tokenizer.from_dict(header["tokenizer"])
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        tensor = np.frombuffer(body, dtype="<f8", count=count, offset=start)
        params[entry["name"]] = tensor.reshape(shape).astype(np.float64)
    return spec, tokenizer, params, header.get("extra", {})
