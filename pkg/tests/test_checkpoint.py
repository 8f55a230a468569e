"""Checkpoint container: bit-exact round trips and malformed-file rejection."""

import json
import struct

import numpy as np
import pytest

from orthoprune.checkpoint import (
    CheckpointError,
    DATASET_MAGIC,
    NETWORK_MAGIC,
    load_dataset_container,
    load_network,
    save_dataset_container,
    save_network,
)
from orthoprune.data import synth_dataset
from orthoprune.network import build_network, desk_architecture


@pytest.fixture
def net():
    return build_network(desk_architecture(4), (1, 28, 28), 4, seed=11)


def test_round_trip_bit_exact(tmp_path, net, rng):
    path = tmp_path / "model.okpf"
    save_network(net, path, metadata={"seed": 11, "epochs": 10, "lambda_ortho": 0.01})
    loaded, metadata = load_network(path)
    assert metadata == {"seed": 11, "epochs": 10, "lambda_ortho": 0.01}
    for pa, pb in zip(net.parameters(), loaded.parameters()):
        assert pa.value.tobytes() == pb.value.tobytes()
    x = rng.uniform(size=(2, 1, 28, 28)).astype(np.float32)
    a, _ = net.forward(x)
    b, _ = loaded.forward(x)
    assert np.array_equal(a, b)


def test_save_load_save_byte_identical(tmp_path, net):
    first = tmp_path / "a.okpf"
    second = tmp_path / "b.okpf"
    save_network(net, first, metadata={"seed": 11})
    loaded, metadata = load_network(first)
    save_network(loaded, second, metadata=metadata)
    assert first.read_bytes() == second.read_bytes()


def test_magic_and_version(tmp_path, net):
    path = tmp_path / "model.okpf"
    save_network(net, path)
    raw = bytearray(path.read_bytes())
    assert raw[:4] == NETWORK_MAGIC
    assert raw[4] == 1

    bad = tmp_path / "bad.okpf"
    corrupted = bytearray(raw)
    corrupted[0] = ord("X")
    bad.write_bytes(bytes(corrupted))
    with pytest.raises(CheckpointError, match="bad magic"):
        load_network(bad)

    corrupted = bytearray(raw)
    corrupted[4] = 2
    bad.write_bytes(bytes(corrupted))
    with pytest.raises(CheckpointError, match="unsupported version"):
        load_network(bad)


def test_truncated_and_trailing_payload(tmp_path, net):
    path = tmp_path / "model.okpf"
    save_network(net, path)
    raw = path.read_bytes()

    short = tmp_path / "short.okpf"
    short.write_bytes(raw[:-5])
    with pytest.raises(CheckpointError, match="truncated payload"):
        load_network(short)

    longer = tmp_path / "long.okpf"
    longer.write_bytes(raw + b"\x00\x00")
    with pytest.raises(CheckpointError, match="trailing bytes"):
        load_network(longer)


def test_truncated_header(tmp_path, net):
    path = tmp_path / "model.okpf"
    save_network(net, path)
    raw = path.read_bytes()
    bad = tmp_path / "bad.okpf"
    bad.write_bytes(raw[:9 + 4])
    with pytest.raises(CheckpointError, match="truncated header"):
        load_network(bad)


def test_header_buffer_disagreement(tmp_path, net):
    # Rewrite the header's declared buffer length so it disagrees with the
    # architecture-required size while keeping total payload consistent.
    path = tmp_path / "model.okpf"
    save_network(net, path)
    raw = path.read_bytes()
    (header_len,) = struct.unpack("<I", raw[5:9])
    header = json.loads(raw[9:9 + header_len].decode("utf-8"))
    header["buffers"][0] -= 4
    header["buffers"][1] += 4
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    bad = tmp_path / "bad.okpf"
    bad.write_bytes(raw[:5] + struct.pack("<I", len(blob)) + blob + raw[9 + header_len:])
    with pytest.raises(CheckpointError, match="buffer 0 is .* architecture"):
        load_network(bad)


def test_invalid_header_json(tmp_path):
    bad = tmp_path / "bad.okpf"
    blob = b"not json"
    bad.write_bytes(NETWORK_MAGIC + bytes([1]) + struct.pack("<I", len(blob)) + blob)
    with pytest.raises(CheckpointError, match="invalid header JSON"):
        load_network(bad)


def test_dataset_container_round_trip(tmp_path):
    ds = synth_dataset(seed=3, class_count=3, per_class=4, side=8)
    path = tmp_path / "data.okds"
    save_dataset_container(ds.images, ds.labels, ds.class_count, path)
    assert path.read_bytes()[:4] == DATASET_MAGIC
    images, labels, class_count = load_dataset_container(path)
    assert np.array_equal(images, ds.images)
    assert np.array_equal(labels, ds.labels)
    assert class_count == 3


def test_dataset_container_wrong_magic(tmp_path, net):
    path = tmp_path / "model.okpf"
    save_network(net, path)
    with pytest.raises(CheckpointError, match="bad magic"):
        load_dataset_container(path)
