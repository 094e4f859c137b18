"""Bilinear and nearest-neighbor resampling on regular grids.

Both samplers use the half-pixel-center convention: output pixel ``i``
reads the source at ``(i + 0.5) * src / dst - 0.5``, with coordinates
clamped to the source extent. This matches the common ``align_corners=False``
behavior of image libraries, so maps resized here line up with masks and
overlays produced elsewhere in the pipeline.

Bilinear interpolation is separable, so a resize is two small matrix
products. Weight matrices are built once per (src, dst) pair inside the
call; callers resizing many maps should pass them as a single batch.
"""

from __future__ import annotations

import numpy as np

__all__ = ["bilinear_weights", "bilinear_resize", "nearest_indices", "nearest_resize"]


def bilinear_weights(src: int, dst: int) -> np.ndarray:
    """Return the (dst, src) interpolation matrix for one axis.

    Every row holds the source weights of one output coordinate: two
    adjacent entries summing to 1, or a single 1 where the sample point
    clamps to the border.
    """
    if src < 1 or dst < 1:
        raise ValueError(f"axis sizes must be positive, got src={src} dst={dst}")
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    i0 = np.clip(lo, 0, src - 1).astype(np.intp)
    i1 = np.clip(lo + 1, 0, src - 1).astype(np.intp)
    weights = np.zeros((dst, src), dtype=np.float64)
    rows = np.arange(dst)
    # += rather than = so the clamped case (i0 == i1) accumulates to 1
    np.add.at(weights, (rows, i0), 1.0 - frac)
    np.add.at(weights, (rows, i1), frac)
    return weights


def bilinear_resize(maps: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (..., h, w) arrays to (..., out_h, out_w) in float64."""
    maps = np.asarray(maps)
    if maps.ndim < 2:
        raise ValueError(f"expected at least 2 dims, got shape {maps.shape}")
    h, w = maps.shape[-2], maps.shape[-1]
    wr = bilinear_weights(h, out_h)
    wc = bilinear_weights(w, out_w)
    flat = maps.reshape(-1, h, w).astype(np.float64, copy=False)
    tmp = flat @ wc.T  # (n, h, out_w)
    out = np.einsum("ah,nhb->nab", wr, tmp)
    return out.reshape(*maps.shape[:-2], out_h, out_w)


def nearest_indices(src: int, dst: int) -> np.ndarray:
    """Source index for each output coordinate under half-pixel centers."""
    if src < 1 or dst < 1:
        raise ValueError(f"axis sizes must be positive, got src={src} dst={dst}")
    idx = np.floor((np.arange(dst) + 0.5) * (src / dst)).astype(np.intp)
    return np.clip(idx, 0, src - 1)


def nearest_resize(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a (h, w) array; dtype is preserved."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2D array, got shape {grid.shape}")
    rows = nearest_indices(grid.shape[0], out_h)
    cols = nearest_indices(grid.shape[1], out_w)
    return grid[np.ix_(rows, cols)]
