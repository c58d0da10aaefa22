"""Checkpoint format: a JSON header (architecture tag, tensor shapes,
normalization statistics, training configuration) followed by one
little-endian float32 blob per parameter tensor, in header order."""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"BRDFESTCKPT1"


@dataclass
class Checkpoint:
    architecture: str
    params: dict  # name -> float32 ndarray
    norm_stats: dict  # {"mean": [...], "std": [...], "parameterization": ...}
    config: dict
    header_bytes: int
    file_bytes: int

    @property
    def n_parameters(self):
        return int(sum(v.size for v in self.params.values()))

    @property
    def blob_bytes(self):
        return 4 * self.n_parameters


def save_checkpoint(path, architecture, params, norm_stats, config):
    """params may hold Tensors or arrays; stored as float32 blobs."""
    arrays = {}
    for name, value in params.items():
        data = value.data if hasattr(value, "data") else value
        arrays[name] = np.ascontiguousarray(np.asarray(data), dtype="<f4")
    header = {
        "format_version": 1,
        "architecture": architecture,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
        "norm_stats": norm_stats,
        "config": config,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for value in arrays.values():
            fh.write(value.tobytes())
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    offset = len(MAGIC)
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    try:
        header = json.loads(raw[offset : offset + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}") from exc
    offset += header_len
    params = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        blob = raw[offset : offset + 4 * count]
        if len(blob) != 4 * count:
            raise CheckpointError(f"truncated blob for {entry['name']} in {path}")
        params[entry["name"]] = np.frombuffer(blob, dtype="<f4").reshape(shape).copy()
        offset += 4 * count
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes in {path}")
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise CheckpointError(f"non-finite values in tensor {name} of {path}")
    return Checkpoint(
        architecture=header["architecture"],
        params=params,
        norm_stats=header["norm_stats"],
        config=header["config"],
        header_bytes=len(MAGIC) + 8 + header_len,
        file_bytes=len(raw),
    )
