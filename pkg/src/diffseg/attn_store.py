"""On-disk store for self-attention stacks.

A stack is a directory holding one ``manifest.json`` plus one binary file
per attention layer. The manifest records image geometry, the denoising
time step the tensors were captured at, a free-form source id, and the
ordered layer list::

    {
      "format_version": 1,
      "image_height": 512,
      "image_width": 512,
      "time_step": 300,
      "source_id": "example",
      "layers": [{"resolution": 64, "file": "layer_00.attn"}, ...]
    }

Each layer file is little-endian: an 8-byte magic ``ATTN4D\\x00\\x01``, a
uint32 resolution ``w``, then ``w**4`` float32 values in C order indexed
``[i, j, y, x]``. The slice ``[i, j, :, :]`` is the attention distribution
of query cell (i, j) over all cells, so it is non-negative and sums to 1.

Layer order is defined by the manifest, never by directory listing order.
Readers accept per-map sums within ``SUM_TOLERANCE`` of 1 and renormalize;
maps already within ``RENORM_SKIP`` are left bit-identical so that a
write/read cycle of a well-formed stack is exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "LayerTensor",
    "AttentionStack",
    "StackError",
    "StackFormatError",
    "StackValidationError",
    "validate_stack",
    "write_stack",
    "read_stack",
]

MAGIC = b"ATTN4D\x00\x01"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

# Accept per-map sums in [1 - SUM_TOLERANCE, 1 + SUM_TOLERANCE] on read,
# then renormalize. Maps within RENORM_SKIP of 1 are already as normalized
# as float32 quantization allows; leaving them untouched keeps round trips
# bit-exact.
SUM_TOLERANCE = 1e-4
RENORM_SKIP = 1e-6


class StackError(Exception):
    """Base class for attention-stack errors."""


class StackFormatError(StackError):
    """Malformed directory, manifest, or layer file."""


class StackValidationError(StackError):
    """Structurally readable stack whose contents violate the contract."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class LayerTensor:
    """One self-attention layer: a (w, w, w, w) float32 tensor."""

    resolution: int
    data: np.ndarray


@dataclass(frozen=True)
class AttentionStack:
    """An ordered set of attention layers captured from one image."""

    layers: tuple[LayerTensor, ...]
    image_height: int
    image_width: int
    time_step: int
    source_id: str

    @property
    def w_max(self) -> int:
        return max(layer.resolution for layer in self.layers)

    @property
    def resolutions(self) -> tuple[int, ...]:
        return tuple(layer.resolution for layer in self.layers)


def validate_stack(stack: AttentionStack) -> list[str]:
    """Check every stack invariant; return one message per violation.

    An empty list means the stack is valid. Messages name the offending
    layer and, for per-map violations, the worst (i, j) query cell.
    """
    violations: list[str] = []
    if not stack.layers:
        return ["stack has no layers"]
    if stack.image_height < 1 or stack.image_width < 1:
        violations.append(
            f"image size must be positive, got "
            f"{stack.image_height}x{stack.image_width}"
        )
    if stack.time_step < 0:
        violations.append(f"time_step must be >= 0, got {stack.time_step}")

    w_max = max(layer.resolution for layer in stack.layers)
    for k, layer in enumerate(stack.layers):
        w = layer.resolution
        name = f"layer {k} (resolution {w})"
        if w < 1:
            violations.append(f"{name}: resolution must be positive")
            continue
        data = layer.data
        if not isinstance(data, np.ndarray) or data.dtype != np.float32:
            violations.append(f"{name}: data must be a float32 array")
            continue
        if data.shape != (w, w, w, w):
            violations.append(
                f"{name}: expected shape {(w, w, w, w)}, got {data.shape}"
            )
            continue
        if w_max % w != 0:
            violations.append(
                f"{name}: resolution does not divide w_max={w_max}"
            )
        if data.size and np.min(data) < 0:
            i, j, y, x = np.unravel_index(int(np.argmin(data)), data.shape)
            violations.append(
                f"{name}: negative entry {data[i, j, y, x]!r} at "
                f"(i={i}, j={j}, y={y}, x={x})"
            )
            continue
        sums = data.sum(axis=(2, 3), dtype=np.float64)
        err = np.abs(sums - 1.0)
        worst = np.unravel_index(int(np.argmax(err)), err.shape)
        if err[worst] > SUM_TOLERANCE:
            violations.append(
                f"{name}: map (i={worst[0]}, j={worst[1]}) sums to "
                f"{sums[worst]:.6g}, outside 1 +/- {SUM_TOLERANCE:g}"
            )
    return violations


def _layer_filename(index: int) -> str:
    return f"layer_{index:02d}.attn"


def write_stack(stack: AttentionStack, path: str | Path) -> None:
    """Write a stack directory; refuses stacks that fail validation."""
    violations = validate_stack(stack)
    if violations:
        raise StackValidationError(violations)
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, layer in enumerate(stack.layers):
        fname = _layer_filename(k)
        payload = np.ascontiguousarray(layer.data, dtype="<f4")
        with open(root / fname, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", layer.resolution))
            fh.write(payload.tobytes(order="C"))
        entries.append({"resolution": layer.resolution, "file": fname})
    manifest = {
        "format_version": FORMAT_VERSION,
        "image_height": stack.image_height,
        "image_width": stack.image_width,
        "time_step": stack.time_step,
        "source_id": stack.source_id,
        "layers": entries,
    }
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _read_layer_file(path: Path, resolution: int) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise StackFormatError(f"{path}: truncated layer file")
    if raw[: len(MAGIC)] != MAGIC:
        raise StackFormatError(f"{path}: bad magic, not an attention layer file")
    (w,) = struct.unpack_from("<I", raw, len(MAGIC))
    if w != resolution:
        raise StackFormatError(
            f"{path}: header resolution {w} does not match manifest "
            f"resolution {resolution}"
        )
    expected = len(MAGIC) + 4 + 4 * w**4
    if len(raw) != expected:
        raise StackFormatError(
            f"{path}: expected {w}**4 float32 values ({expected} bytes), "
            f"file has {len(raw)} bytes"
        )
    flat = np.frombuffer(raw, dtype="<f4", offset=len(MAGIC) + 4)
    return flat.reshape(w, w, w, w).copy()


def read_stack(path: str | Path) -> AttentionStack:
    """Read and validate a stack directory.

    Per-map sums are checked against ``SUM_TOLERANCE`` and the maps are
    renormalized to sum to 1. Arrays in the returned stack are marked
    read-only; a stack is treated as immutable once constructed.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise StackFormatError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StackFormatError(f"{manifest_path}: invalid JSON ({exc})") from exc

    for key in ("format_version", "image_height", "image_width",
                "time_step", "source_id", "layers"):
        if key not in manifest:
            raise StackFormatError(f"{manifest_path}: missing key {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise StackFormatError(
            f"{manifest_path}: unsupported format_version "
            f"{manifest['format_version']!r}"
        )
    if not isinstance(manifest["layers"], list) or not manifest["layers"]:
        raise StackFormatError(f"{manifest_path}: layers must be a non-empty list")

    layers = []
    for k, entry in enumerate(manifest["layers"]):
        if "resolution" not in entry or "file" not in entry:
            raise StackFormatError(
                f"{manifest_path}: layer {k} needs 'resolution' and 'file'"
            )
        resolution = int(entry["resolution"])
        fpath = root / entry["file"]
        if not fpath.is_file():
            raise StackFormatError(f"layer {k}: missing file {fpath}")
        data = _read_layer_file(fpath, resolution)

        sums = data.sum(axis=(2, 3), dtype=np.float64)
        err = np.abs(sums - 1.0)
        worst = np.unravel_index(int(np.argmax(err)), err.shape)
        if err[worst] > SUM_TOLERANCE:
            raise StackValidationError([
                f"layer {k} (resolution {resolution}): map (i={worst[0]}, "
                f"j={worst[1]}) sums to {sums[worst]:.6g}, outside "
                f"1 +/- {SUM_TOLERANCE:g}"
            ])
        scale = np.where(err > RENORM_SKIP, sums, 1.0)
        if np.any(scale != 1.0):
            np.divide(data, scale[:, :, None, None], out=data, casting="unsafe")
        data.setflags(write=False)
        layers.append(LayerTensor(resolution=resolution, data=data))

    stack = AttentionStack(
        layers=tuple(layers),
        image_height=int(manifest["image_height"]),
        image_width=int(manifest["image_width"]),
        time_step=int(manifest["time_step"]),
        source_id=str(manifest["source_id"]),
    )
    violations = validate_stack(stack)
    if violations:
        raise StackValidationError(violations)
    return stack
