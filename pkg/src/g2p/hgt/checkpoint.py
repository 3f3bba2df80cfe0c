"""Single-file model checkpoints.

Layout: ``b"G2P1"``, a little-endian u32 header length, a UTF-8 JSON header,
then every tensor as contiguous little-endian float32 in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .model import ModelConfig, param_shapes

MAGIC = b"G2P1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: dict, cfg: ModelConfig, path, vocab: Optional[dict] = None,
                    train_ids=(), extra: Optional[dict] = None) -> None:
    shapes = param_shapes(cfg)
    if set(shapes) != set(params):
        raise CheckpointError("parameter names do not match the config")
    tensors = []
    for name, shape in shapes.items():
        if tuple(params[name].shape) != shape:
            raise CheckpointError(f"{name}: shape {params[name].shape} != {shape}")
        tensors.append([name, list(shape)])
    header = {
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(),
        "tensors": tensors,
        # vocabulary as a list indexed by token id
        "vocab": sorted(vocab, key=vocab.get) if vocab else None,
        "train_ids": sorted(train_ids),
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in shapes:
            fh.write(np.ascontiguousarray(params[name], dtype="<f4").tobytes())


def read_header(path) -> dict:
    return _read(path)[0]


def _read(path):
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a {MAGIC.decode()} checkpoint (bad magic)")
    (n,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + n:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[8:8 + n])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")
    return header, data, 8 + n


def load_checkpoint(path):
    """Return (params, config, header)."""
    header, data, pos = _read(path)
    try:
        cfg = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad config in header: {exc}") from exc
    expected = param_shapes(cfg)
    listed = {name: tuple(shape) for name, shape in header["tensors"]}
    if listed != expected:
        raise CheckpointError(f"{path}: tensor list does not match config shapes")
    params = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape))
        end = pos + 4 * count
        if end > len(data):
            raise CheckpointError(f"{path}: truncated at tensor {name}")
        params[name] = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(np.float64).reshape(shape)
        pos = end
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return params, cfg, header


def vocab_from_header(header: dict) -> Optional[dict]:
    tokens = header.get("vocab")
    return None if tokens is None else {t: i for i, t in enumerate(tokens)}


def check_compatible(cfg: ModelConfig, graphs) -> None:
    """Raise if any graph refers to ids outside the model's embedding tables."""
    for g in graphs:
        if g.n_nodes and int(np.max(g.token_ids)) >= cfg.vocab_size:
            raise CheckpointError(
                f"graph {g.id} uses token id {int(np.max(g.token_ids))} but the model vocabulary "
                f"has {cfg.vocab_size} entries")
