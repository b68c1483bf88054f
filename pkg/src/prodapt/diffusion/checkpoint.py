"""Checkpoint container: JSON header + named raw little-endian float32 arrays."""

from __future__ import annotations

import json
import struct
import subprocess
from pathlib import Path

import numpy as np

from .model import DenoiserModel, ModelDescriptor

MAGIC = b"PRODAPT1"


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def save_checkpoint(path, model: DenoiserModel, *, n_diff: int, norm_stats: dict,
                    train_config: dict | None = None, extra: dict | None = None) -> None:
    arrays = model.state_arrays()
    table = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f4")
        table.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = {
        "format": "prodapt-checkpoint-v1",
        "descriptor": model.desc.to_dict(),
        "schedule": {"kind": "squared_cosine", "n_diff": n_diff},
        "norm_stats": norm_stats,
        "train_config": train_config or {},
        "git_describe": _git_describe(),
        "arrays": table,
    }
    if extra:
        header.update(extra)
    hbytes = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(hbytes)))
        f.write(hbytes)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> tuple[DenoiserModel, dict]:
    """Load a checkpoint; returns (model, header)."""
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode())
        data = f.read()
    desc = ModelDescriptor.from_dict(header["descriptor"])
    model = DenoiserModel(desc, np.random.default_rng(0))
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        a = np.frombuffer(data, dtype="<f4", count=count, offset=start)
        arrays[entry["name"]] = a.reshape(shape)
    model.load_state_arrays(arrays)
    return model, header
