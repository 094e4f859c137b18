"""Iterative merging of attention maps into segment proposals.

Similarity between probability maps is the symmetrized KL divergence

    D(p, q) = (KL(p || q) + KL(q || p)) / 2
            = sum((p - q) * (log p~ - log q~)) / 2

where ``p~`` clamps entries below ``KL_LOG_FLOOR`` before the log. The
difference form makes D(p, p) exactly zero and D symmetric bit for bit.

Merging starts from an anchor grid: the maps of M x M evenly spaced query
cells. ``first_merge`` replaces each anchor map by the mean of every field
map within ``tau`` of it (the anchor's own map always qualifies), yielding
exactly M**2 proposals. ``merge_iteration`` then scans the proposal list
in order; each unconsumed proposal absorbs all later proposals within
``tau`` and emits their mean, so the count never increases. A run does
one ``first_merge`` plus ``iterations - 1`` such passes.

Batched distance matrices use float32 matrix products; thresholding
against ``tau`` tolerates that precision and it keeps large fields fast.
Proposal means and the public ``kl_distance`` stay in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregator import AggregatedTensor

__all__ = [
    "KL_LOG_FLOOR",
    "AnchorGrid",
    "ProposalList",
    "MergeConfig",
    "generate_anchor_grid",
    "kl_distance",
    "first_merge",
    "merge_iteration",
    "run_merging",
]

# Probabilities are clamped to this floor before logarithms, which caps
# the contribution of zero entries instead of producing infinities.
KL_LOG_FLOOR = 1e-12

_GEMM_DTYPE = np.float32


@dataclass(frozen=True)
class AnchorGrid:
    """Evenly spaced query cells seeding the merge."""

    side: int
    points: tuple[tuple[int, int], ...]  # (row, col), row-major


@dataclass
class ProposalList:
    """Ordered list of candidate segment maps, stacked as (n, w, w)."""

    maps: np.ndarray

    def __post_init__(self) -> None:
        if self.maps.ndim != 3:
            raise ValueError(f"expected (n, w, w) maps, got {self.maps.shape}")

    def __len__(self) -> int:
        return self.maps.shape[0]

    def __getitem__(self, index: int) -> np.ndarray:
        return self.maps[index]

    @property
    def flat(self) -> np.ndarray:
        n, h, w = self.maps.shape
        return self.maps.reshape(n, h * w)


@dataclass(frozen=True)
class MergeConfig:
    """Merge hyperparameters: distance threshold and iteration count."""

    tau: float = 1.0
    iterations: int = 3

    def __post_init__(self) -> None:
        if math.isnan(self.tau) or self.tau <= 0:
            raise ValueError(f"tau must be positive (or inf), got {self.tau}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


def generate_anchor_grid(side: int, w_max: int) -> AnchorGrid:
    """Place side x side anchor cells at evenly spaced grid positions.

    Coordinate r of the grid maps to cell floor((r + 0.5) * w_max / side),
    the half-pixel center of the r-th of ``side`` equal strips.
    """
    if not 1 <= side <= w_max:
        raise ValueError(f"grid side must be in [1, {w_max}], got {side}")
    coords = [int((r + 0.5) * w_max / side) for r in range(side)]
    points = tuple((i, j) for i in coords for j in coords)
    return AnchorGrid(side=side, points=points)


def kl_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Symmetrized KL divergence between two probability maps.

    Equal inputs give exactly 0.0 and the value is symmetric in its
    arguments. Inputs of different shapes are rejected.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    log_p = np.log(np.maximum(p, KL_LOG_FLOOR))
    log_q = np.log(np.maximum(q, KL_LOG_FLOOR))
    return 0.5 * float(np.sum((p - q) * (log_p - log_q)))


def _distance_matrix(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Pairwise symmetrized KL between flattened map sets.

    rows: (m, d), cols: (n, d); returns (m, n) float32 with tiny negative
    rounding residues clipped to 0.
    """
    p = rows.astype(_GEMM_DTYPE, copy=False)
    q = cols.astype(_GEMM_DTYPE, copy=False)
    log_p = np.log(np.maximum(p, _GEMM_DTYPE(KL_LOG_FLOOR)))
    log_q = np.log(np.maximum(q, _GEMM_DTYPE(KL_LOG_FLOOR)))
    h_p = np.einsum("ij,ij->i", p, log_p)
    h_q = np.einsum("ij,ij->i", q, log_q)
    cross_pq = p @ log_q.T
    cross_qp = q @ log_p.T
    dist = 0.5 * (h_p[:, None] + h_q[None, :] - cross_pq - cross_qp.T)
    return np.maximum(dist, 0.0, out=dist)


def _row_means(weights_mask: np.ndarray, flat_maps: np.ndarray) -> np.ndarray:
    """Mean of the selected maps per mask row, renormalized to sum 1."""
    counts = weights_mask.sum(axis=1)
    coeffs = weights_mask.astype(np.float64) / counts[:, None]
    means = coeffs @ flat_maps
    means /= means.sum(axis=1, keepdims=True)
    return means


def first_merge(
    anchors: ProposalList, field: AggregatedTensor, config: MergeConfig
) -> ProposalList:
    """Average each anchor with every field map within ``tau`` of it.

    Always returns exactly ``len(anchors)`` proposals: each anchor's
    nearest field map qualifies unconditionally (for anchors drawn from
    the field, that is the anchor itself at distance 0).
    """
    flat_field = field.maps.astype(np.float64, copy=False)
    flat_anchors = anchors.flat.astype(np.float64, copy=False)
    dist = _distance_matrix(flat_anchors, flat_field)
    member = dist < config.tau
    member[np.arange(len(anchors)), np.argmin(dist, axis=1)] = True
    means = _row_means(member, flat_field)
    w = field.w_max
    return ProposalList(means.reshape(-1, w, w))


def merge_iteration(proposals: ProposalList, config: MergeConfig) -> ProposalList:
    """One without-replacement merge pass over the proposal list.

    Scanning in order, each proposal not yet consumed absorbs every
    remaining proposal within ``tau`` (itself always included) and emits
    the renormalized mean. Output count never exceeds the input count,
    and a list whose pairwise distances all reach ``tau`` passes through
    unchanged.
    """
    flat = proposals.flat.astype(np.float64, copy=False)
    n = flat.shape[0]
    dist = _distance_matrix(flat, flat)
    alive = np.ones(n, dtype=bool)
    merged: list[np.ndarray] = []
    for v in range(n):
        if not alive[v]:
            continue
        member = alive & (dist[v] < config.tau)
        member[v] = True
        group = flat[member]
        mean = group.mean(axis=0)
        mean /= mean.sum()
        merged.append(mean)
        alive &= ~member
    _, h, w = proposals.maps.shape
    return ProposalList(np.stack(merged).reshape(-1, h, w))


def run_merging(
    field: AggregatedTensor, grid: AnchorGrid, config: MergeConfig
) -> ProposalList:
    """Full merge schedule: first_merge, then iterations - 1 list passes."""
    w = field.w_max
    cells = np.array([i * w + j for i, j in grid.points], dtype=np.intp)
    if cells.size and (cells.max() >= w * w or cells.min() < 0):
        raise ValueError("anchor grid lies outside the field")
    anchors = ProposalList(field.maps[cells].reshape(-1, w, w).copy())
    proposals = first_merge(anchors, field, config)
    for _ in range(config.iterations - 1):
        proposals = merge_iteration(proposals, config)
    return proposals
