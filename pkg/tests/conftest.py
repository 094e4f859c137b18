"""Shared helpers for building small attention stacks in tests."""

from __future__ import annotations

import numpy as np

from diffseg import AttentionStack, LayerTensor


def random_stack(
    resolutions: tuple[int, ...],
    seed: int = 0,
    image_size: int | None = None,
    time_step: int = 0,
    source_id: str = "test",
) -> AttentionStack:
    """Stack of random, properly normalized float32 layers."""
    rng = np.random.default_rng(seed)
    layers = []
    for res in resolutions:
        raw = rng.random((res, res, res, res), dtype=np.float64) + 0.05
        raw /= raw.sum(axis=(2, 3), keepdims=True)
        layers.append(LayerTensor(resolution=res, data=raw.astype(np.float32)))
    w_max = max(resolutions)
    size = image_size if image_size is not None else 8 * w_max
    return AttentionStack(
        layers=tuple(layers),
        image_height=size,
        image_width=size,
        time_step=time_step,
        source_id=source_id,
    )


def stack_from_arrays(
    arrays: list[np.ndarray],
    image_size: int | None = None,
    time_step: int = 0,
    source_id: str = "test",
) -> AttentionStack:
    """Stack from explicit (w, w, w, w) arrays; casts to float32."""
    layers = tuple(
        LayerTensor(resolution=a.shape[0], data=np.asarray(a, dtype=np.float32))
        for a in arrays
    )
    w_max = max(layer.resolution for layer in layers)
    size = image_size if image_size is not None else 8 * w_max
    return AttentionStack(
        layers=layers,
        image_height=size,
        image_width=size,
        time_step=time_step,
        source_id=source_id,
    )
