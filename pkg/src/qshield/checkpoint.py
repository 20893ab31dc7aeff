"""Deterministic binary checkpoint container.

Layout: an 8-byte magic, a length-prefixed JSON header (sorted keys, fixed
separators), then the raw C-order bytes of every array in header order.
Nothing time- or path-dependent is written, so identical contents produce
identical files byte for byte; zip-based containers were rejected because
they embed timestamps.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"QSHCKPT1"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray],
                    meta: dict[str, Any]) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        blob = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str,
                        "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"arrays": entries, "meta": meta},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len))
        body = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        raw = body[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, header["meta"]


def rng_state(rng: np.random.Generator) -> dict[str, Any]:
    return rng.bit_generator.state


def restore_rng(state: dict[str, Any]) -> np.random.Generator:
    rng = np.random.default_rng(0)
    if state["bit_generator"] != rng.bit_generator.state["bit_generator"]:
        raise CheckpointError("checkpoint used a different random generator")
    rng.bit_generator.state = state
    return rng
