"""Attention stack format: round trips, validation, error naming."""

import json
import struct

import numpy as np
import pytest

from diffseg import (
    AttentionStack,
    LayerTensor,
    StackFormatError,
    StackValidationError,
    read_stack,
    validate_stack,
    write_stack,
)
from diffseg.attn_store import MAGIC

from conftest import random_stack, stack_from_arrays


def test_round_trip_is_bit_exact(tmp_path):
    stack = random_stack((4, 2), seed=11, image_size=32, time_step=300,
                         source_id="round-trip")
    write_stack(stack, tmp_path / "stack")
    loaded = read_stack(tmp_path / "stack")
    assert loaded.image_height == 32
    assert loaded.image_width == 32
    assert loaded.time_step == 300
    assert loaded.source_id == "round-trip"
    assert loaded.resolutions == (4, 2)
    for original, read in zip(stack.layers, loaded.layers):
        assert read.data.dtype == np.float32
        assert np.array_equal(original.data, read.data)


def test_double_round_trip_stable(tmp_path):
    stack = random_stack((4,), seed=7)
    write_stack(stack, tmp_path / "a")
    first = read_stack(tmp_path / "a")
    write_stack(first, tmp_path / "b")
    second = read_stack(tmp_path / "b")
    assert np.array_equal(first.layers[0].data, second.layers[0].data)
    assert (tmp_path / "a" / "layer_00.attn").read_bytes() == (
        tmp_path / "b" / "layer_00.attn"
    ).read_bytes()


def test_loaded_arrays_are_read_only(tmp_path):
    write_stack(random_stack((2,)), tmp_path / "s")
    loaded = read_stack(tmp_path / "s")
    with pytest.raises(ValueError):
        loaded.layers[0].data[0, 0, 0, 0] = 1.0


def test_slightly_off_sums_accepted_and_renormalized(tmp_path):
    # 1e-5 exceeds the exact-renorm skip band but is within tolerance
    data = np.full((2, 2, 2, 2), 0.25, dtype=np.float32)
    data *= 1.0 + 1e-5
    stack = stack_from_arrays([data])
    write_stack(stack, tmp_path / "s")
    loaded = read_stack(tmp_path / "s")
    sums = loaded.layers[0].data.sum(axis=(2, 3), dtype=np.float64)
    assert np.all(np.abs(sums - 1.0) < 1e-6)


def test_sums_beyond_tolerance_rejected(tmp_path):
    good = np.full((2, 2, 2, 2), 0.25, dtype=np.float32)
    stack = stack_from_arrays([good])
    write_stack(stack, tmp_path / "s")
    # corrupt one map on disk to sum to 0.5
    layer_path = tmp_path / "s" / "layer_00.attn"
    raw = bytearray(layer_path.read_bytes())
    halved = np.full(4, 0.125, dtype="<f4").tobytes()
    offset = len(MAGIC) + 4
    raw[offset : offset + 16] = halved
    layer_path.write_bytes(bytes(raw))
    with pytest.raises(StackValidationError) as excinfo:
        read_stack(tmp_path / "s")
    assert "sums to 0.5" in str(excinfo.value)
    assert "(i=0, j=0)" in str(excinfo.value)


def test_validate_names_negative_entry_layer():
    layers = [np.full((2, 2, 2, 2), 0.25, dtype=np.float32) for _ in range(4)]
    layers[3][1, 0, 1, 1] = -0.25
    layers[3][1, 0, 0, 0] = 0.75
    stack = stack_from_arrays(layers)
    violations = validate_stack(stack)
    assert len(violations) == 1
    assert "layer 3" in violations[0]
    assert "negative" in violations[0]
    assert "(i=1, j=0" in violations[0]


def test_validate_rejects_non_dividing_resolution():
    maps12 = np.full((12, 12, 12, 12), 1.0 / 144.0, dtype=np.float32)
    maps64 = np.full((64, 64, 64, 64), 1.0 / 4096.0, dtype=np.float32)
    stack = stack_from_arrays([maps64, maps12])
    violations = validate_stack(stack)
    assert any("does not divide w_max=64" in v for v in violations)


def test_validate_rejects_half_sum_layer():
    half = np.full((2, 2, 2, 2), 0.125, dtype=np.float32)
    violations = validate_stack(stack_from_arrays([half]))
    assert len(violations) == 1
    assert "sums to 0.5" in violations[0]


def test_write_refuses_invalid_stack(tmp_path):
    half = np.full((2, 2, 2, 2), 0.125, dtype=np.float32)
    with pytest.raises(StackValidationError):
        write_stack(stack_from_arrays([half]), tmp_path / "bad")
    assert not (tmp_path / "bad" / "manifest.json").exists()


def test_missing_manifest(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(StackFormatError) as excinfo:
        read_stack(empty)
    assert "manifest" in str(excinfo.value)
    assert str(empty) in str(excinfo.value)


def test_manifest_file_shape_mismatch(tmp_path):
    # manifest promises resolution 2 but the payload holds 4**4 floats
    stack4 = random_stack((4,), seed=1)
    write_stack(stack4, tmp_path / "s")
    manifest_path = tmp_path / "s" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["layers"][0]["resolution"] = 2
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(StackFormatError) as excinfo:
        read_stack(tmp_path / "s")
    assert "does not match manifest" in str(excinfo.value)


def test_payload_length_mismatch(tmp_path):
    # header and manifest agree on resolution 2 but the payload holds
    # 4**4 floats, so the byte count gives the shape away
    write_stack(random_stack((2,), seed=2), tmp_path / "s")
    layer_path = tmp_path / "s" / "layer_00.attn"
    header = MAGIC + struct.pack("<I", 2)
    payload = np.full(4**4, 1.0 / 16.0, dtype="<f4").tobytes()
    layer_path.write_bytes(header + payload)
    with pytest.raises(StackFormatError) as excinfo:
        read_stack(tmp_path / "s")
    assert "2**4 float32 values" in str(excinfo.value)


def test_bad_magic(tmp_path):
    write_stack(random_stack((2,), seed=3), tmp_path / "s")
    layer_path = tmp_path / "s" / "layer_00.attn"
    raw = bytearray(layer_path.read_bytes())
    raw[0] = 0x58
    layer_path.write_bytes(bytes(raw))
    with pytest.raises(StackFormatError) as excinfo:
        read_stack(tmp_path / "s")
    assert "magic" in str(excinfo.value)


def test_unsupported_format_version(tmp_path):
    write_stack(random_stack((2,), seed=4), tmp_path / "s")
    manifest_path = tmp_path / "s" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["format_version"] = 99
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(StackFormatError) as excinfo:
        read_stack(tmp_path / "s")
    assert "format_version" in str(excinfo.value)


def test_layer_order_follows_manifest_not_filenames(tmp_path):
    stack = random_stack((4, 2), seed=5)
    write_stack(stack, tmp_path / "s")
    manifest_path = tmp_path / "s" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["layers"] = manifest["layers"][::-1]
    manifest_path.write_text(json.dumps(manifest))
    loaded = read_stack(tmp_path / "s")
    assert loaded.resolutions == (2, 4)
    assert np.array_equal(loaded.layers[0].data, stack.layers[1].data)
    assert np.array_equal(loaded.layers[1].data, stack.layers[0].data)


def test_w_max_property():
    stack = random_stack((8, 4, 8, 2), seed=6)
    assert stack.w_max == 8


def test_validate_rejects_float64_payloads():
    data = np.full((2, 2, 2, 2), 0.25, dtype=np.float64)
    stack = AttentionStack(
        layers=(LayerTensor(resolution=2, data=data),),
        image_height=16,
        image_width=16,
        time_step=0,
        source_id="dtype",
    )
    violations = validate_stack(stack)
    assert any("float32" in v for v in violations)
