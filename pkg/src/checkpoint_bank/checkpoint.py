"""Versioned binary checkpoint files.

Layout (little-endian)::

    magic      8 bytes   b"GBXCKPT\\0"
    version    u32
    header_len u32
    header     JSON (network, method, iteration, epoch, run_id, loss, manifest)
    payload    float32 arrays in manifest order
    checksum   u64       BLAKE2b-64 of header + payload
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from src.nn_engine import LayerParams, NetworkSpec, Parameters, ShapeMismatchError, UnknownNetworkError, get_spec

MAGIC = b"GBXCKPT\x00"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")
_CHECKSUM = struct.Struct("<Q")
_FLOAT = np.dtype("<f4")


class CheckpointError(ValueError):
    """A checkpoint file failed validation; ``field`` names what failed."""

    def __init__(self, path: str | os.PathLike[str], field: str, message: str) -> None:
        super().__init__(f"{path}: {field}: {message}")
        self.path = str(path)
        self.field = field


class MethodTag(str, Enum):
    NORMAL = "normal"
    AT_FGSM = "at-fgsm"
    AT_FGSM_LL = "at-fgsmll"
    AT_FGSM_RAND = "at-fgsmrand"
    EAT = "eat"
    GAT = "gat"


@dataclass
class Checkpoint:
    network: str
    params: Parameters
    iteration: int
    epoch: int
    method: MethodTag
    run_id: str
    loss: float | None = None
    format_version: int = FORMAT_VERSION


def _checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    manifest = []
    arrays = []
    for index, layer in ckpt.params.items():
        for name in ("weight", "bias"):
            tensor = getattr(layer, name)
            manifest.append({"layer": index, "name": name, "shape": list(tensor.shape)})
            arrays.append(np.ascontiguousarray(tensor, dtype=_FLOAT).tobytes())
    header: dict[str, Any] = {
        "network": ckpt.network,
        "method": MethodTag(ckpt.method).value,
        "iteration": ckpt.iteration,
        "epoch": ckpt.epoch,
        "run_id": ckpt.run_id,
        "loss": None if ckpt.loss is None else float(ckpt.loss),
        "manifest": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = header_bytes + b"".join(arrays)
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)) + body + _CHECKSUM.pack(_checksum(body))


def decode_checkpoint(
    data: bytes, path: str | os.PathLike[str] = "<bytes>", *, spec: NetworkSpec | None = None
) -> Checkpoint:
    if len(data) < _PREFIX.size + _CHECKSUM.size:
        raise CheckpointError(path, "length", f"{len(data)} bytes is too short for a checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(path, "magic", f"unexpected magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CheckpointError(path, "format_version", f"expected {FORMAT_VERSION}, found {version}")
    body = data[_PREFIX.size : -_CHECKSUM.size]
    (stored,) = _CHECKSUM.unpack(data[-_CHECKSUM.size :])
    if stored != _checksum(body):
        raise CheckpointError(path, "checksum", "payload does not match its checksum")
    if header_len > len(body):
        raise CheckpointError(path, "header", f"header length {header_len} exceeds file body")
    try:
        header = json.loads(body[:header_len])
        method = MethodTag(header["method"])
    except (ValueError, KeyError) as exc:
        raise CheckpointError(path, "header", f"unreadable metadata: {exc}") from exc

    params = Parameters()
    offset = header_len
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * _FLOAT.itemsize
        if offset + nbytes > len(body):
            raise CheckpointError(path, "payload", f"layer {entry['layer']} {entry['name']} is truncated")
        tensor = np.frombuffer(body, dtype=_FLOAT, count=nbytes // _FLOAT.itemsize, offset=offset)
        offset += nbytes
        layer = params.layers.setdefault(entry["layer"], LayerParams(np.empty(0, _FLOAT), np.empty(0, _FLOAT)))
        setattr(layer, entry["name"], tensor.reshape(shape).astype(np.float32))
    if offset != len(body):
        raise CheckpointError(path, "payload", f"{len(body) - offset} trailing bytes")

    if spec is None:
        try:
            spec = get_spec(header["network"])
        except UnknownNetworkError as exc:
            raise CheckpointError(path, "network", str(exc)) from exc
    elif spec.name != header["network"]:
        raise CheckpointError(path, "network", f"file holds {header['network']!r}, expected {spec.name!r}")
    try:
        params.check_congruent(spec)
    except ShapeMismatchError as exc:
        raise CheckpointError(path, "parameters", str(exc)) from exc
    return Checkpoint(
        network=header["network"],
        params=params,
        iteration=int(header["iteration"]),
        epoch=int(header["epoch"]),
        method=method,
        run_id=header["run_id"],
        loss=header.get("loss"),
        format_version=version,
    )


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike[str]) -> Path:
    """Write atomically: the file either holds the whole checkpoint or is absent."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".part")
    partial.write_bytes(encode_checkpoint(ckpt))
    partial.replace(path)
    return path


def load_checkpoint(path: str | os.PathLike[str], *, spec: NetworkSpec | None = None) -> Checkpoint:
    """Read and validate a checkpoint; ``spec`` overrides the built-in lookup by name."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(path, "file", str(exc)) from exc
    return decode_checkpoint(data, path, spec=spec)
