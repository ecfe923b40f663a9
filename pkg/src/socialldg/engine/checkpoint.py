"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    bytes 0..7    magic  b"SLDGCKPT"
    bytes 8..11   uint32 format version (currently 1)
    bytes 12..19  uint64 header length H
    next H bytes  UTF-8 JSON header
    remainder     payload: concatenated little-endian float64 arrays

The header holds ``{"metadata": {...}, "optimizer": {...} | null,
"tensors": [{"name", "group", "shape", "offset", "count"}, ...]}`` where
``offset`` is a byte offset into the payload and ``group`` is ``"param"``,
``"adam_m"`` or ``"adam_v"``.  Readers must reject unknown versions.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"SLDGCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)
    optimizer: dict | None = None


def save_checkpoint(path, params: dict[str, np.ndarray], metadata: dict | None = None, optimizer: dict | None = None) -> Path:
    path = Path(path)
    entries = []
    chunks = []
    offset = 0

    def add(name, group, arr):
        nonlocal offset
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "group": group, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.nbytes

    for name, arr in params.items():
        add(name, "param", arr)
    opt_header = None
    if optimizer is not None:
        opt_header = {k: v for k, v in optimizer.items() if k not in ("m", "v")}
        for name, arr in optimizer.get("m", {}).items():
            add(name, "adam_m", arr)
        for name, arr in optimizer.get("v", {}).items():
            add(name, "adam_v", arr)
    header = json.dumps(
        {"metadata": metadata or {}, "optimizer": opt_header, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)
    return path


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", raw[8:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack("<Q", raw[12:20])
    header = json.loads(raw[20 : 20 + hlen].decode("utf-8"))
    payload = memoryview(raw)[20 + hlen :]
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
    for e in header["tensors"]:
        arr = np.frombuffer(payload, dtype="<f8", count=e["count"], offset=e["offset"])
        groups[e["group"]][e["name"]] = arr.astype(np.float64).reshape(e["shape"])
    optimizer = None
    if header.get("optimizer") is not None:
        optimizer = dict(header["optimizer"])
        optimizer["m"] = groups["adam_m"]
        optimizer["v"] = groups["adam_v"]
    return Checkpoint(params=groups["param"], metadata=header.get("metadata", {}), optimizer=optimizer)
