"""Versioned binary model checkpoints.

Layout (all integers little-endian unsigned 32-bit unless noted):

    magic "MSAM" | format version | sha256 config digest (32 bytes)
    | config JSON length | config JSON (UTF-8)
    | tensor count | records

Each record: name length | name (UTF-8) | rank | dims... | float32 payload.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .model import model_from_config

MAGIC = b"MSAM"
FORMAT_VERSION = 1


def _write_u32(fh, value: int):
    fh.write(struct.pack("<I", value))


def _read_u32(fh) -> int:
    data = fh.read(4)
    if len(data) != 4:
        raise FormatError("truncated checkpoint: expected 4-byte integer")
    return struct.unpack("<I", data)[0]


def save_checkpoint(path, model):
    """Write the model's config and all parameter tensors as float32."""
    config_json = json.dumps(model.to_config(), sort_keys=True).encode("utf-8")
    params = model.params()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        _write_u32(fh, FORMAT_VERSION)
        fh.write(hashlib.sha256(config_json).digest())
        _write_u32(fh, len(config_json))
        fh.write(config_json)
        _write_u32(fh, len(params))
        for name, tensor in params.items():
            encoded = name.encode("utf-8")
            _write_u32(fh, len(encoded))
            fh.write(encoded)
            _write_u32(fh, tensor.ndim)
            for dim in tensor.shape:
                _write_u32(fh, dim)
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return Path(path)


def load_checkpoint(path):
    """Rebuild a model from a checkpoint; parameters are bit-exact float32."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"magic: expected {MAGIC!r}, got {magic!r}")
        version = _read_u32(fh)
        if version != FORMAT_VERSION:
            raise FormatError(f"format_version: unsupported version {version}")
        digest = fh.read(32)
        config_json = fh.read(_read_u32(fh))
        if hashlib.sha256(config_json).digest() != digest:
            raise FormatError("config_digest: config JSON does not match its digest")
        config = json.loads(config_json.decode("utf-8"))
        tensors = {}
        for _ in range(_read_u32(fh)):
            name = fh.read(_read_u32(fh)).decode("utf-8")
            rank = _read_u32(fh)
            dims = tuple(_read_u32(fh) for _ in range(rank))
            count = int(np.prod(dims)) if dims else 1
            payload = fh.read(4 * count)
            if len(payload) != 4 * count:
                raise FormatError(f"tensor {name}: truncated payload")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    model = model_from_config(config)
    params = model.params()
    if set(params) != set(tensors):
        missing = set(params) ^ set(tensors)
        raise FormatError(f"tensors: parameter set mismatch ({sorted(missing)})")
    for name, value in tensors.items():
        if params[name].shape != value.shape:
            raise FormatError(
                f"tensor {name}: shape {value.shape} != expected {params[name].shape}"
            )
        params[name][...] = value
    return model
