"""Versioned model container shared by every model family.

Layout::

    magic (8 bytes) | version (1 byte) | type tag (4 bytes) |
    header length (uint32 LE) | JSON header | array payload | sha256 (32 bytes)

The header lists each array's name, dtype, shape and payload offset. The
checksum covers everything before it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any

import numpy as np

from detector._shared.errors import CorruptModel, IoError, ModelNotFound, VersionMismatch
from detector.nn.graph import ModelGraph

logger = logging.getLogger("detector.nn")

MAGIC = b"EDETMODL"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sB4sI")
_DIGEST_SIZE = 32


def _tag_bytes(tag: str) -> bytes:
    return tag.encode("ascii").ljust(4)[:4]


def save_container(path: str | Path, tag: str, header: dict[str, Any], arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    entries = []
    payload = bytearray()
    for name, array in arrays.items():
        data = np.ascontiguousarray(array)
        entries.append({"name": name, "dtype": data.dtype.str, "shape": list(data.shape), "offset": len(payload)})
        payload += data.tobytes()
    header_bytes = json.dumps({**header, "arrays": entries}, sort_keys=True).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, _tag_bytes(tag), len(header_bytes)) + header_bytes + bytes(payload)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "wb") as handle:
            handle.write(body + hashlib.sha256(body).digest())
    except OSError as exc:
        raise IoError(f"Cannot write model file {path}: {exc.strerror}.", path=str(path)) from exc
    logger.info("nn model_saved path=%s tag=%s bytes=%s", path, tag, len(body) + _DIGEST_SIZE)


def load_container(path: str | Path, expected_tag: str | None = None) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise ModelNotFound(f"Model file {path} does not exist.", path=str(path)) from None
    except OSError as exc:
        raise IoError(f"Cannot read model file {path}: {exc.strerror}.", path=str(path)) from exc
    if len(blob) < _PREFIX.size + _DIGEST_SIZE or blob[:8] != MAGIC:
        raise CorruptModel(f"{path} is not a model file.", path=str(path))
    magic, version, tag_raw, header_length = _PREFIX.unpack_from(blob)
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path} has format version {version}; this build reads version {FORMAT_VERSION}.",
            path=str(path),
            version=version,
        )
    body, digest = blob[:-_DIGEST_SIZE], blob[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptModel(f"{path} failed its checksum; the file is truncated or modified.", path=str(path))
    tag = tag_raw.decode("ascii").strip()
    if expected_tag is not None and tag != expected_tag:
        raise CorruptModel(f"{path} holds a {tag} model, expected {expected_tag}.", path=str(path), tag=tag)
    start = _PREFIX.size
    try:
        header = json.loads(body[start : start + header_length].decode("utf-8"))
        payload = body[start + header_length :]
        arrays = {}
        for entry in header.pop("arrays"):
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"], dtype=np.int64))
            array = np.frombuffer(payload, dtype=dtype, count=count, offset=entry["offset"])
            arrays[entry["name"]] = array.reshape(entry["shape"]).copy()
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path} has a malformed header ({exc}).", path=str(path)) from exc
    return tag, header, arrays


def peek_tag(path: str | Path) -> str:
    return load_container(path)[0]


def save_model(graph: ModelGraph, path: str | Path) -> None:
    header = {
        "layers": [spec.model_dump(mode="json") for spec in graph.specs],
        "input_length": graph.input_length,
        "input_channels": graph.input_channels,
        "seed": graph.seed,
        "dtype": graph.dtype,
        "metadata": graph.metadata,
    }
    arrays = {f"{i}.{name}": array for i, params in enumerate(graph.weights) for name, array in params.items()}
    save_container(path, "cnn", header, arrays)


def load_model(path: str | Path) -> ModelGraph:
    _, header, arrays = load_container(path, expected_tag="cnn")
    try:
        graph = ModelGraph(
            header["layers"],
            input_length=header["input_length"],
            input_channels=header["input_channels"],
            seed=header["seed"],
            dtype=header["dtype"],
            metadata=header.get("metadata", {}),
        )
        weights = [{name: arrays[f"{i}.{name}"] for name in params} for i, params in enumerate(graph.weights)]
    except KeyError as exc:
        raise CorruptModel(f"{path} is missing {exc}.", path=str(path)) from exc
    graph.set_weights(weights)
    return graph
