"""Clustering baseline over aggregated attention maps.

Treats every query cell's aggregated map as a point in R^(w_max**2) and
runs Lloyd's k-means with k-means++ seeding and Euclidean distance. The
cluster ids on the w_max grid become the segmentation labels and are
resized to the output size with nearest-neighbor sampling.

All randomness flows through one ``numpy.random.default_rng(seed)``, so
a given (field, config) pair always produces the same mask. Restarts
reuse the same generator sequentially and the restart with the lowest
within-cluster sum of squares wins, earliest winner on ties.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .aggregator import AggregatedTensor
from .resample import nearest_resize
from .segmenter import SegmentationMask

__all__ = ["KMeansConfig", "kmeans_lloyd", "kmeans_segment"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KMeansConfig:
    """Baseline hyperparameters."""

    num_clusters: int
    seed: int = 0
    max_iters: int = 300
    restarts: int = 1

    def __post_init__(self) -> None:
        if self.num_clusters < 1:
            raise ValueError(f"num_clusters must be >= 1, got {self.num_clusters}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, clipped against rounding."""
    sq = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * (points @ centers.T)
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(sq, 0.0, out=sq)


def _kmeanspp_init(
    points: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """k-means++ seeding: spread initial centers by squared distance."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest = _squared_distances(points, centers[:1])[:, 0]
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            probs = closest / total
            idx = int(rng.choice(n, p=probs))
        else:
            # All points coincide with chosen centers; any point works.
            idx = int(rng.integers(n))
        centers[c] = points[idx]
        np.minimum(
            closest, _squared_distances(points, centers[c : c + 1])[:, 0],
            out=closest,
        )
    return centers


def kmeans_lloyd(
    points: np.ndarray, k: int, rng: np.random.Generator, max_iters: int = 300
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm; returns (labels, centers, wcss_history).

    The recorded within-cluster sum of squares is non-increasing across
    iterations. Clusters that lose all their points keep their previous
    center.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"expected (n, d) points, got shape {points.shape}")
    n = points.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points {n}")

    centers = _kmeanspp_init(points, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    wcss_history: list[float] = []
    for _ in range(max_iters):
        sq = _squared_distances(points, centers)
        new_labels = sq.argmin(axis=1)
        wcss_history.append(float(sq[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            member = labels == c
            if member.any():
                centers[c] = points[member].mean(axis=0)
    return labels, centers, wcss_history


def kmeans_segment(
    field: AggregatedTensor,
    config: KMeansConfig,
    out_h: int | None = None,
    out_w: int | None = None,
) -> SegmentationMask:
    """Cluster the field's maps and return a label mask.

    When ``num_clusters`` exceeds the number of distinct maps, it falls
    back to the distinct count. The output size defaults to the field
    resolution.
    """
    w = field.w_max
    points = field.maps.astype(np.float64, copy=False)
    k = config.num_clusters
    distinct = len({row.tobytes() for row in points})
    if k > distinct:
        logger.warning(
            "requested %d clusters but the field has only %d distinct "
            "maps; using %d", k, distinct, distinct,
        )
        k = distinct

    rng = np.random.default_rng(config.seed)
    best: tuple[float, np.ndarray] | None = None
    for _ in range(config.restarts):
        labels, _, history = kmeans_lloyd(points, k, rng, config.max_iters)
        wcss = history[-1]
        if best is None or wcss < best[0]:
            best = (wcss, labels)
    assert best is not None

    grid = best[1].reshape(w, w)
    out_h = w if out_h is None else out_h
    out_w = w if out_w is None else out_w
    if (out_h, out_w) != (w, w):
        grid = nearest_resize(grid, out_h, out_w)

    # Compact cluster ids by first appearance, matching the pipeline's
    # labeling convention.
    raw_ids, first_pos = np.unique(grid, return_index=True)
    order = np.argsort(first_pos, kind="stable")
    remap = np.empty(int(raw_ids.max()) + 1, dtype=np.int32)
    remap[raw_ids[order]] = np.arange(len(raw_ids), dtype=np.int32)
    labels2d = remap[grid]
    return SegmentationMask(
        labels=labels2d.astype(np.int32),
        num_labels=len(raw_ids),
        proposal_index=raw_ids[order].astype(np.int64),
    )
