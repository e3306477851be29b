"""Versioned binary container for :class:`ModelParams`.

Layout::

    8 bytes   magic  b"PPXMODEL"
    u32 LE    format version
    u64 LE    manifest length in bytes
    manifest  UTF-8 JSON: hyper, input dims, tensor table, payload sha256
    payload   float64 little-endian tensors, in manifest order
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict

import numpy as np

from ..errors import ValidationError
from .model import HyperConfig, ModelParams, param_shapes

MAGIC = b"PPXMODEL"
FORMAT_VERSION = 1


def dumps(params: ModelParams) -> bytes:
    table = []
    chunks = []
    offset = 0
    for name in sorted(params.tensors):
        arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
        raw = arr.tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "hyper": asdict(params.hyper),
        "input_dims": dict(sorted(params.input_dims.items())),
        "tensors": table,
        "loss_curve": [float(x) for x in params.loss_curve],
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(mbytes)) + mbytes + payload


def loads(blob: bytes) -> ModelParams:
    head = len(MAGIC) + struct.calcsize("<IQ")
    if len(blob) < head or blob[: len(MAGIC)] != MAGIC:
        raise ValidationError("not a parameter container (bad magic)")
    version, mlen = struct.unpack("<IQ", blob[len(MAGIC) : head])
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported container version {version}")
    try:
        manifest = json.loads(blob[head : head + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"corrupt manifest: {exc}") from None
    payload = blob[head + mlen :]
    if hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise ValidationError("payload checksum mismatch")
    hyper = HyperConfig(**manifest["hyper"])
    dims = {k: int(v) for k, v in manifest["input_dims"].items()}
    expected = param_shapes(dims, hyper)
    tensors = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        if expected.get(entry["name"]) != shape:
            raise ValidationError(f"tensor {entry['name']} has shape {shape}, expected {expected.get(entry['name'])}")
        raw = payload[entry["offset"] : entry["offset"] + entry["nbytes"]]
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if set(tensors) != set(expected):
        raise ValidationError("tensor inventory does not match the configuration")
    return ModelParams(hyper, dims, tensors, list(manifest.get("loss_curve", [])))


def save_params(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(params))


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        return loads(fh.read())
