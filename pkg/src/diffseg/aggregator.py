"""Aggregation of multi-resolution attention layers into one field.

Every layer is lifted to the finest resolution ``w_max`` and the stack is
reduced to a single (w_max, w_max, w_max, w_max) tensor: the aggregated
attention field. For a query cell (i, j) at w_max, layer k contributes its
map at the floor-divided cell (i // d, j // d) with d = w_max / w_k, the
map itself bilinearly upsampled over its last two axes and renormalized to
sum to 1 before weighting.

Layer weights are a WeightScheme:

* ``Proportional()``    weight each layer by its resolution,
* ``OnlyResolution(w)`` uniform weight over layers at resolution w,
* ``CustomWeights({w: value})`` explicit per-resolution weights.

Realized per-layer weights are normalized to sum to 1, so the field is a
convex combination of probability maps and each of its maps sums to 1 up
to float64 rounding. Accumulation runs in float64 in manifest layer order,
which keeps results reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .attn_store import AttentionStack
from .resample import bilinear_resize

__all__ = [
    "Proportional",
    "OnlyResolution",
    "CustomWeights",
    "WeightScheme",
    "AggregatedTensor",
    "compute_weights",
    "weights_for_resolutions",
    "upsample_map",
    "aggregate",
]


@dataclass(frozen=True)
class Proportional:
    """Weight each layer proportionally to its resolution."""


@dataclass(frozen=True)
class OnlyResolution:
    """Use only the layers at one resolution, weighted uniformly."""

    resolution: int


@dataclass(frozen=True)
class CustomWeights:
    """Explicit per-resolution weights; normalized over layers."""

    weights: Mapping[int, float]


WeightScheme = Union[Proportional, OnlyResolution, CustomWeights]


@dataclass
class AggregatedTensor:
    """Aggregated attention field at the stack's finest resolution."""

    data: np.ndarray  # (w_max, w_max, w_max, w_max) float64
    w_max: int

    @property
    def maps(self) -> np.ndarray:
        """View of the field as (w_max**2, w_max**2) row-per-query maps."""
        n = self.w_max
        return self.data.reshape(n * n, n * n)


def compute_weights(stack: AttentionStack, scheme: WeightScheme) -> np.ndarray:
    """Per-layer weights for ``scheme``, aligned with stack layer order.

    The returned float64 vector is non-negative and sums to 1.
    """
    return weights_for_resolutions(stack.resolutions, scheme)


def weights_for_resolutions(
    layer_resolutions: tuple[int, ...], scheme: WeightScheme
) -> np.ndarray:
    """Weight vector for an explicit per-layer resolution list."""
    resolutions = np.array(layer_resolutions, dtype=np.float64)
    if isinstance(scheme, Proportional):
        raw = resolutions.copy()
    elif isinstance(scheme, OnlyResolution):
        raw = (resolutions == scheme.resolution).astype(np.float64)
        if raw.sum() == 0:
            raise ValueError(
                f"no layer with resolution {scheme.resolution}; stack has "
                f"{sorted(set(int(r) for r in layer_resolutions))}"
            )
    elif isinstance(scheme, CustomWeights):
        present = set(int(r) for r in layer_resolutions)
        for res, value in scheme.weights.items():
            if res not in present:
                raise ValueError(
                    f"custom weight given for resolution {res}, which is "
                    f"absent from the stack {sorted(present)}"
                )
            if value < 0:
                raise ValueError(f"negative weight {value} for resolution {res}")
        raw = np.array(
            [scheme.weights.get(int(r), 0.0) for r in resolutions],
            dtype=np.float64,
        )
        if raw.sum() <= 0:
            raise ValueError("custom weights select no layer")
    else:
        raise TypeError(f"unknown weight scheme: {scheme!r}")
    return raw / raw.sum()


def upsample_map(map2d: np.ndarray, target: int) -> np.ndarray:
    """Bilinearly upsample one 2D map to (target, target) and renormalize.

    The source side must not exceed ``target``. The result is float64 and
    sums to 1; an equal-size input passes through the same normalization
    unchanged in value.
    """
    map2d = np.asarray(map2d)
    if map2d.ndim != 2 or map2d.shape[0] != map2d.shape[1]:
        raise ValueError(f"expected a square 2D map, got shape {map2d.shape}")
    src = map2d.shape[0]
    if src > target:
        raise ValueError(f"source resolution {src} exceeds target {target}")
    if src == target:
        out = map2d.astype(np.float64, copy=True)
    else:
        out = bilinear_resize(map2d, target, target)
    total = out.sum(dtype=np.float64)
    if not total > 0:
        raise ValueError("map has non-positive total mass")
    out /= total
    return out


def _weighted_sum(stack: AttentionStack, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of upsampled, renormalized layers (linear in weights)."""
    w_max = stack.w_max
    acc: np.ndarray | None = None
    for layer, weight in zip(stack.layers, weights):
        if weight == 0.0:
            continue
        res = layer.resolution
        delta = w_max // res
        maps = layer.data.reshape(res * res, res, res)
        if res == w_max:
            lifted = maps.astype(np.float64)
            sums = lifted.sum(axis=(1, 2))
            lifted /= sums[:, None, None]
            np.multiply(lifted, weight, out=lifted)
            block = lifted.reshape(w_max, w_max, w_max, w_max)
            if acc is None:
                acc = block
            else:
                np.add(acc, block, out=acc)
        else:
            lifted = bilinear_resize(maps, w_max, w_max)
            sums = lifted.sum(axis=(1, 2))
            lifted /= sums[:, None, None]
            np.multiply(lifted, weight, out=lifted)
            if acc is None:
                acc = np.zeros((w_max, w_max, w_max, w_max), dtype=np.float64)
            # Query cell (i, j) reads the coarse map at (i // delta,
            # j // delta); a strided view broadcasts each coarse map over
            # its delta x delta block of query cells without copying.
            view = acc.reshape(res, delta, res, delta, w_max, w_max)
            view += lifted.reshape(res, 1, res, 1, w_max, w_max)
    assert acc is not None  # weights sum to 1, so at least one layer ran
    return acc


def aggregate(
    stack: AttentionStack, scheme: WeightScheme = Proportional()
) -> AggregatedTensor:
    """Aggregate a stack into a single attention field at w_max.

    Each map of the result is a convex combination of unit-sum maps, so
    it sums to 1 within float64 accumulation error.
    """
    weights = compute_weights(stack, scheme)
    data = _weighted_sum(stack, weights)
    return AggregatedTensor(data=data, w_max=stack.w_max)
