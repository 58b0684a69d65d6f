"""Binary checkpoint format.

Layout::

    8 bytes   magic  b"T2SCKPT\\n"
    4 bytes   format version, little-endian uint32
    8 bytes   manifest length in bytes, little-endian uint64
    manifest  UTF-8 JSON: config, vocabularies, array directory
    payload   every array as contiguous little-endian float64, in directory order
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .autodiff import parameter
from .io_utils import atomic_open
from .model import Model, ModelConfig
from .table_data import Vocabulary

MAGIC = b"T2SCKPT\n"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<IQ")


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    """Not a checkpoint file (bad magic or unreadable manifest)."""


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    """Array directory disagrees with the shapes implied by config and vocabularies."""


def save_checkpoint(path, model: Model, extra: dict | None = None) -> None:
    directory = []
    offset = 0
    chunks = []
    for name, tensor in model.params.items():
        arr = np.ascontiguousarray(tensor.value, dtype="<f8")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += arr.size
        chunks.append(arr.tobytes())
    manifest = {
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "vocab": model.vocab.to_dict(),
        "attr_vocab": model.attr_vocab.to_dict(),
        "arrays": directory,
        "payload_bytes": offset * 8,
        "extra": extra or {},
    }
    blob = json.dumps(manifest, ensure_ascii=False).encode("utf-8")
    with atomic_open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for chunk in chunks:
            fh.write(chunk)


def read_manifest(path) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic bytes)")
    head_end = len(MAGIC) + _HEADER.size
    if len(data) < head_end:
        raise CheckpointTruncatedError(f"{path}: truncated header")
    version, mlen = _HEADER.unpack(data[len(MAGIC) : head_end])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    if len(data) < head_end + mlen:
        raise CheckpointTruncatedError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[head_end : head_end + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable manifest: {exc}") from exc
    payload = data[head_end + mlen :]
    if len(payload) != manifest.get("payload_bytes", -1):
        raise CheckpointTruncatedError(
            f"{path}: payload has {len(payload)} bytes, manifest declares {manifest.get('payload_bytes')}"
        )
    return manifest, payload


def load_checkpoint(path) -> tuple[Model, dict]:
    """Returns the model and the manifest's ``extra`` dictionary."""
    manifest, payload = read_manifest(path)
    values = np.frombuffer(payload, dtype="<f8")
    params = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count, offset = entry["count"], entry["offset"]
        if int(np.prod(shape)) != count or offset + count > values.size:
            raise CheckpointShapeError(f"{path}: array {entry['name']} directory entry is inconsistent")
        params[entry["name"]] = parameter(values[offset : offset + count].reshape(shape).astype(np.float64))
    config = ModelConfig.from_dict(manifest["config"])
    try:
        model = Model(
            config,
            Vocabulary.from_dict(manifest["vocab"]),
            Vocabulary.from_dict(manifest["attr_vocab"]),
            params,
        )
    except ValueError as exc:
        raise CheckpointShapeError(f"{path}: {exc}") from exc
    return model, manifest.get("extra", {})
