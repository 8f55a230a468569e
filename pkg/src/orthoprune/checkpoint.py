"""Binary checkpoint container for networks and datasets.

Layout: 4-byte magic, 1 version byte (0x01), u32 little-endian header
length, UTF-8 JSON header, then concatenated raw little-endian float32
buffers in layer order. Saving is deterministic, so save -> load -> save
reproduces files byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import LayerSpec, Network, build_network

__all__ = [
    "CheckpointError",
    "NETWORK_MAGIC",
    "DATASET_MAGIC",
    "VERSION",
    "load_network",
    "save_network",
    "load_dataset_container",
    "save_dataset_container",
]

NETWORK_MAGIC = b"OKPF"
DATASET_MAGIC = b"OKDS"
VERSION = 1


class CheckpointError(Exception):
    """A checkpoint file failed validation (format, version, or payload)."""


def _encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_container(path, magic: bytes, header: dict, buffers: list[bytes]) -> None:
    blob = _encode_header(header)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for buf in buffers:
            fh.write(buf)


def _read_container(path, magic: bytes) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < 9 or raw[:4] != magic:
        raise CheckpointError(
            f"{path}: bad magic {raw[:4]!r}, expected {magic!r}"
        )
    if raw[4] != VERSION:
        raise CheckpointError(f"{path}: unsupported version {raw[4]}, expected {VERSION}")
    (header_len,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[9:9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: invalid header JSON ({exc})") from exc
    payload = raw[9 + header_len:]
    declared = header.get("buffers")
    if not isinstance(declared, list) or not all(isinstance(v, int) for v in declared):
        raise CheckpointError(f"{path}: header missing buffer length list")
    total = sum(declared)
    if len(payload) < total:
        raise CheckpointError(
            f"{path}: truncated payload ({len(payload)} bytes, header declares {total})"
        )
    if len(payload) > total:
        raise CheckpointError(
            f"{path}: {len(payload) - total} trailing bytes beyond declared payload"
        )
    return header, payload


def _split_payload(payload: bytes, lengths: list[int]) -> list[bytes]:
    out = []
    offset = 0
    for length in lengths:
        out.append(payload[offset:offset + length])
        offset += length
    return out


def save_network(net: Network, path, metadata: dict | None = None) -> None:
    """Write a network checkpoint. ``metadata`` must be JSON-serializable."""
    buffers: list[bytes] = []
    for param in net.parameters():
        buffers.append(np.ascontiguousarray(param.value, dtype="<f4").tobytes())
    header = {
        "kind": "network",
        "arch": [s.to_dict() for s in net.specs],
        "input_shape": [int(v) for v in net.input_shape],
        "class_count": int(net.class_count),
        "metadata": metadata if metadata is not None else {},
        "buffers": [len(b) for b in buffers],
    }
    _write_container(path, NETWORK_MAGIC, header, buffers)


def load_network(path) -> tuple[Network, dict]:
    """Read a network checkpoint; returns (network, metadata)."""
    header, payload = _read_container(path, NETWORK_MAGIC)
    try:
        specs = [LayerSpec.from_dict(d) for d in header["arch"]]
        input_shape = tuple(int(v) for v in header["input_shape"])
        class_count = int(header["class_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed architecture header ({exc})") from exc
    net = build_network(specs, input_shape, class_count, seed=0)
    params = net.parameters()
    chunks = _split_payload(payload, header["buffers"])
    if len(chunks) != len(params):
        raise CheckpointError(
            f"{path}: header declares {len(chunks)} buffers, architecture "
            f"requires {len(params)}"
        )
    for i, (param, chunk) in enumerate(zip(params, chunks)):
        expected = param.value.size * 4
        if len(chunk) != expected:
            raise CheckpointError(
                f"{path}: buffer {i} is {len(chunk)} bytes, architecture "
                f"requires {expected}"
            )
        param.value[...] = np.frombuffer(chunk, dtype="<f4").reshape(param.value.shape)
    return net, header.get("metadata", {})


def save_dataset_container(images: np.ndarray, labels: np.ndarray, class_count: int,
                           path) -> None:
    """Dump a dataset as one image buffer plus labels in the header."""
    buf = np.ascontiguousarray(images, dtype="<f4").tobytes()
    header = {
        "kind": "dataset",
        "class_count": int(class_count),
        "image_shape": [int(v) for v in images.shape],
        "labels": [int(v) for v in labels],
        "buffers": [len(buf)],
    }
    _write_container(path, DATASET_MAGIC, header, [buf])


def load_dataset_container(path) -> tuple[np.ndarray, np.ndarray, int]:
    """Read a dataset dump; returns (images, labels, class_count)."""
    header, payload = _read_container(path, DATASET_MAGIC)
    try:
        shape = tuple(int(v) for v in header["image_shape"])
        labels = np.asarray(header["labels"], dtype=np.int64)
        class_count = int(header["class_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed dataset header ({exc})") from exc
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: image buffer is {len(payload)} bytes, shape requires {expected}"
        )
    images = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return images, labels, class_count
