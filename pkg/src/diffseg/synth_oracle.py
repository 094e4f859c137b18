"""Synthetic attention stacks with known ground-truth segmentations.

Given a base-resolution label map, every query cell of a segment gets the
same ideal attention map: a mixture of uniform-over-the-segment with
uniform-over-everything,

    map = (1 - epsilon) * U_segment + epsilon * U_all.

Coarser layers use the label map majority-downsampled to their grid (ties
going to the smallest label), so all layers describe one consistent
partition. Optional multiplicative jitter perturbs every entry by a
seeded uniform factor before per-map renormalization.

Such stacks make exact round-trip checks possible: aggregation yields one
distinct map per segment, within-segment distances are zero, and
``min_cross_distance`` gives the gap below which merging must keep
segments apart, so any threshold inside (0, gap) recovers the label map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attn_store import AttentionStack, LayerTensor, validate_stack, StackValidationError
from .aggregator import (
    Proportional,
    WeightScheme,
    upsample_map,
    weights_for_resolutions,
)
from .merger import kl_distance

__all__ = [
    "SynthSpec",
    "random_label_map",
    "downsample_labels",
    "generate_stack",
    "min_cross_distance",
]

# Recorded image size per base-resolution cell; matches the 8x downscale
# between images and the attention grids they produce.
_PIXELS_PER_CELL = 8


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic stack.

    ``label_map`` is a (base, base) integer array with consecutive
    segment ids starting at 0, where base is the largest requested
    resolution. ``noise`` is the relative amplitude of multiplicative
    jitter in [0, 1).
    """

    label_map: np.ndarray
    resolutions: tuple[int, ...] = (64, 32, 16, 8)
    epsilon: float = 0.05
    seed: int = 0
    noise: float = 0.0


def _check_spec(spec: SynthSpec) -> tuple[int, int]:
    """Validate a spec; returns (base_resolution, num_segments)."""
    labels = np.asarray(spec.label_map)
    if labels.ndim != 2 or labels.shape[0] != labels.shape[1]:
        raise ValueError(f"label map must be square, got {labels.shape}")
    if not spec.resolutions:
        raise ValueError("at least one resolution is required")
    base = max(spec.resolutions)
    if labels.shape[0] != base:
        raise ValueError(
            f"label map size {labels.shape[0]} must equal the largest "
            f"resolution {base}"
        )
    for res in spec.resolutions:
        if res < 1 or base % res != 0:
            raise ValueError(f"resolution {res} does not divide base {base}")
    ids = np.unique(labels)
    if not np.array_equal(ids, np.arange(len(ids))):
        raise ValueError("segment ids must be consecutive integers from 0")
    if spec.epsilon < 0 or spec.epsilon > 1:
        raise ValueError(f"epsilon must be in [0, 1], got {spec.epsilon}")
    if not 0 <= spec.noise < 1:
        raise ValueError(f"noise must be in [0, 1), got {spec.noise}")
    return base, len(ids)


def downsample_labels(label_map: np.ndarray, resolution: int) -> np.ndarray:
    """Majority-vote downsample of a label map; ties pick the smallest id.

    The source side must be a positive multiple of ``resolution``.
    """
    labels = np.asarray(label_map)
    size = labels.shape[0]
    if labels.ndim != 2 or labels.shape[1] != size:
        raise ValueError(f"label map must be square, got {labels.shape}")
    if resolution < 1 or size % resolution != 0:
        raise ValueError(
            f"resolution {resolution} does not divide label map size {size}"
        )
    factor = size // resolution
    if factor == 1:
        return labels.copy()
    blocks = labels.reshape(resolution, factor, resolution, factor)
    num_ids = int(labels.max()) + 1
    votes = np.zeros((num_ids, resolution, resolution), dtype=np.int64)
    for s in range(num_ids):
        votes[s] = (blocks == s).sum(axis=(1, 3))
    # argmax returns the first maximum, i.e. the smallest label on ties
    return votes.argmax(axis=0)


def _segment_maps(
    seg: np.ndarray, num_segments: int, epsilon: float
) -> np.ndarray:
    """Ideal per-segment maps at one resolution, stacked (K, r, r).

    Segments absent from ``seg`` (majority-voted away) get a pure
    background map; no cell references them.
    """
    res = seg.shape[0]
    counts = np.bincount(seg.ravel(), minlength=num_segments)
    maps = np.full(
        (num_segments, res, res), epsilon / (res * res), dtype=np.float64
    )
    for s in range(num_segments):
        if counts[s] > 0:
            maps[s][seg == s] += (1.0 - epsilon) / counts[s]
    return maps


def generate_stack(spec: SynthSpec) -> AttentionStack:
    """Materialize a spec into a validated attention stack."""
    base, num_segments = _check_spec(spec)
    rng = np.random.default_rng(spec.seed)
    layers = []
    for res in spec.resolutions:
        seg = downsample_labels(np.asarray(spec.label_map), res)
        maps = _segment_maps(seg, num_segments, spec.epsilon)
        tensor = maps[seg]  # (res, res, res, res) float64
        if spec.noise > 0:
            jitter = 1.0 + spec.noise * rng.uniform(-1.0, 1.0, tensor.shape)
            tensor = tensor * jitter
            tensor /= tensor.sum(axis=(2, 3), keepdims=True)
        # noise == 0: maps are normalized by construction
        data = tensor.astype(np.float32)
        data.setflags(write=False)
        layers.append(LayerTensor(resolution=res, data=data))
    stack = AttentionStack(
        layers=tuple(layers),
        image_height=base * _PIXELS_PER_CELL,
        image_width=base * _PIXELS_PER_CELL,
        time_step=0,
        source_id=f"synth-seed{spec.seed}-k{num_segments}",
    )
    violations = validate_stack(stack)
    if violations:  # pragma: no cover - the construction keeps maps valid
        raise StackValidationError(violations)
    return stack


def random_label_map(
    num_segments: int,
    seed: int,
    base_resolution: int = 64,
    block_grid: int = 8,
    max_size_spread: int = 2,
) -> np.ndarray:
    """Random partition of the grid into connected, near-equal segments.

    Segments are grown on a coarse ``block_grid`` x ``block_grid`` lattice
    from random seed cells, always extending the currently smallest
    segment, then expanded to ``base_resolution``. Block alignment keeps
    the partition exactly representable at every resolution that is a
    multiple of the block size. Growth retries with fresh seeds until the
    largest and smallest segment differ by at most ``max_size_spread``
    blocks, falling back to the most balanced attempt.
    """
    if num_segments < 1 or num_segments > block_grid * block_grid:
        raise ValueError(
            f"num_segments must be in [1, {block_grid * block_grid}], "
            f"got {num_segments}"
        )
    if base_resolution % block_grid != 0:
        raise ValueError(
            f"block grid {block_grid} does not divide base resolution "
            f"{base_resolution}"
        )
    rng = np.random.default_rng(seed)
    best_blocks: np.ndarray | None = None
    best_spread = np.inf
    for _ in range(100):
        blocks = _grow_partition(num_segments, block_grid, rng)
        sizes = np.bincount(blocks.ravel(), minlength=num_segments)
        spread = int(sizes.max() - sizes.min())
        if spread < best_spread:
            best_spread = spread
            best_blocks = blocks
        if spread <= max_size_spread:
            break
    assert best_blocks is not None
    factor = base_resolution // block_grid
    return np.kron(best_blocks, np.ones((factor, factor), dtype=np.int64))


def _grow_partition(
    num_segments: int, block_grid: int, rng: np.random.Generator
) -> np.ndarray:
    """One multi-source region growth over the block lattice."""
    n = block_grid
    blocks = np.full((n, n), -1, dtype=np.int64)
    seeds = rng.choice(n * n, size=num_segments, replace=False)
    for s, flat in enumerate(seeds):
        blocks[flat // n, flat % n] = s

    remaining = n * n - num_segments
    sizes = [1] * num_segments
    while remaining > 0:
        # Smallest segment with room to grow goes first; id breaks ties.
        order = sorted(range(num_segments), key=lambda s: (sizes[s], s))
        grew = False
        for s in order:
            frontier = _frontier_cells(blocks, s)
            if not frontier:
                continue
            pick = frontier[int(rng.integers(len(frontier)))]
            blocks[pick] = s
            sizes[s] += 1
            remaining -= 1
            grew = True
            break
        assert grew  # the lattice is connected, someone can always grow
    return blocks


def _frontier_cells(
    blocks: np.ndarray, segment: int
) -> list[tuple[int, int]]:
    """Unassigned cells 4-adjacent to ``segment``, in scan order."""
    n = blocks.shape[0]
    member = blocks == segment
    frontier = []
    for i in range(n):
        for j in range(n):
            if blocks[i, j] != -1:
                continue
            if (
                (i > 0 and member[i - 1, j])
                or (i + 1 < n and member[i + 1, j])
                or (j > 0 and member[i, j - 1])
                or (j + 1 < n and member[i, j + 1])
            ):
                frontier.append((i, j))
    return frontier


def min_cross_distance(
    spec: SynthSpec, scheme: WeightScheme = Proportional()
) -> float:
    """Smallest pairwise distance between segment maps after aggregation.

    Computed on the noiseless field: one representative query cell per
    segment, its aggregated map assembled layer by layer, then the
    minimum symmetrized KL over all segment pairs. Requires epsilon > 0
    and at least two segments; with epsilon = 0 cross distances are
    clamp artifacts rather than a meaningful gap.
    """
    base, num_segments = _check_spec(spec)
    if spec.epsilon <= 0:
        raise ValueError("min_cross_distance requires epsilon > 0")
    if num_segments < 2:
        raise ValueError("need at least two segments for a cross distance")

    labels = np.asarray(spec.label_map)
    weights = weights_for_resolutions(spec.resolutions, scheme)

    # One representative base cell per segment; in the noiseless field all
    # cells of a segment share the same aggregated map, assembled here
    # layer by layer (float32 layer maps, exactly as a generated stack
    # stores them).
    flat = labels.ravel()
    rep_cells = [int(np.argmax(flat == s)) for s in range(num_segments)]

    per_res: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for res in set(spec.resolutions):
        seg = downsample_labels(labels, res)
        maps32 = _segment_maps(seg, num_segments, spec.epsilon).astype(np.float32)
        per_res[res] = (seg, maps32)

    seg_maps = []
    for cell in rep_cells:
        i, j = divmod(cell, base)
        acc = np.zeros((base, base), dtype=np.float64)
        for res, weight in zip(spec.resolutions, weights):
            if weight == 0.0:
                continue
            delta = base // res
            seg, maps32 = per_res[res]
            coarse = maps32[seg[i // delta, j // delta]]
            acc += weight * upsample_map(coarse, base)
        seg_maps.append(acc)

    best = np.inf
    for a in range(num_segments):
        for b in range(a + 1, num_segments):
            best = min(best, kl_distance(seg_maps[a], seg_maps[b]))
    return float(best)
