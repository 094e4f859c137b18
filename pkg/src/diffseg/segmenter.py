"""End-to-end segmentation: aggregate, merge, assign pixels.

``segment`` runs the full pipeline on an attention stack: aggregate the
layers into one field, merge anchor maps into segment proposals, then
assign every output pixel to the proposal with the highest upsampled
attention value (non-maximum suppression across proposals). Raw label
ids are compacted in order of first appearance in reading order, so two
runs over the same inputs yield identical masks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .attn_store import AttentionStack, StackValidationError
from .aggregator import Proportional, WeightScheme, aggregate
from .merger import MergeConfig, ProposalList, generate_anchor_grid, run_merging
from .resample import bilinear_resize

__all__ = ["PipelineParams", "SegmentationMask", "nms_assign", "segment"]

# Proposals are upsampled to the output size in slabs of this many maps,
# bounding peak memory at large output sizes.
_NMS_CHUNK = 32


@dataclass
class PipelineParams:
    """Knobs for one segmentation run."""

    weight_scheme: WeightScheme = dataclass_field(default_factory=Proportional)
    anchor_grid_side: int = 16
    merge_iterations: int = 3
    tau: float = 1.0
    output_size: tuple[int, int] | None = None  # None: the stack's image size
    expected_time_step: int | None = None


@dataclass
class SegmentationMask:
    """Dense label assignment produced by the pipeline.

    ``labels`` holds compact ids ``0 .. num_labels - 1``; entry ``l`` of
    ``proposal_index`` is the raw index of the proposal behind label
    ``l``. ``proposals`` keeps the merged maps so the same segmentation
    can be re-rendered at another output size.
    """

    labels: np.ndarray  # (h, w) int32
    num_labels: int
    proposal_index: np.ndarray
    proposals: ProposalList | None = None
    timings: dict[str, float] | None = None


def nms_assign(
    proposals: ProposalList, out_h: int, out_w: int
) -> tuple[np.ndarray, np.ndarray]:
    """Label each output pixel with the argmax proposal.

    Proposal maps are bilinearly resized to (out_h, out_w) without
    renormalization and compete per pixel; ties go to the lowest proposal
    index. Returns (labels, proposal_index) with labels compacted in
    order of first appearance.
    """
    n = len(proposals)
    if n == 0:
        raise ValueError("cannot assign labels from an empty proposal list")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")

    best_value = np.full((out_h, out_w), -np.inf, dtype=np.float64)
    best_index = np.zeros((out_h, out_w), dtype=np.int32)
    for start in range(0, n, _NMS_CHUNK):
        chunk = proposals.maps[start : start + _NMS_CHUNK]
        lifted = bilinear_resize(chunk, out_h, out_w)
        chunk_best = lifted.argmax(axis=0)  # first max wins within the chunk
        chunk_value = np.take_along_axis(
            lifted, chunk_best[None, :, :], axis=0
        )[0]
        better = chunk_value > best_value  # strict: earlier chunks keep ties
        best_value[better] = chunk_value[better]
        best_index[better] = chunk_best[better].astype(np.int32) + start

    raw_ids, first_pos = np.unique(best_index, return_index=True)
    order = np.argsort(first_pos, kind="stable")
    proposal_index = raw_ids[order].astype(np.int64)
    remap = np.empty(int(raw_ids.max()) + 1, dtype=np.int32)
    remap[proposal_index] = np.arange(len(proposal_index), dtype=np.int32)
    labels = remap[best_index]
    return labels, proposal_index


def segment(
    stack: AttentionStack, params: PipelineParams | None = None
) -> SegmentationMask:
    """Segment an attention stack into a dense label mask.

    The output size defaults to the stack's recorded image size. When
    ``params.expected_time_step`` is set, a stack captured at any other
    time step is rejected.
    """
    if params is None:
        params = PipelineParams()
    if (
        params.expected_time_step is not None
        and stack.time_step != params.expected_time_step
    ):
        raise StackValidationError([
            f"stack was captured at time step {stack.time_step}, "
            f"expected {params.expected_time_step}"
        ])
    out_h, out_w = params.output_size or (stack.image_height, stack.image_width)

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    field = aggregate(stack, params.weight_scheme)
    t1 = time.perf_counter()
    grid = generate_anchor_grid(params.anchor_grid_side, field.w_max)
    config = MergeConfig(tau=params.tau, iterations=params.merge_iterations)
    proposals = run_merging(field, grid, config)
    t2 = time.perf_counter()
    labels, proposal_index = nms_assign(proposals, out_h, out_w)
    t3 = time.perf_counter()
    timings["aggregate_s"] = t1 - t0
    timings["merge_s"] = t2 - t1
    timings["assign_s"] = t3 - t2

    return SegmentationMask(
        labels=labels,
        num_labels=len(proposal_index),
        proposal_index=proposal_index,
        proposals=proposals,
        timings=timings,
    )
