"""Unsupervised zero-shot segmentation from diffusion self-attention.

The pipeline turns a stack of multi-resolution self-attention tensors
into a dense segmentation mask without labels, prompts, or training:
aggregate the layers into one attention field, iteratively merge similar
maps into segment proposals, then assign each pixel to its argmax
proposal. See the subcommands of the ``diffseg`` CLI for the file-level
workflow.
"""

from .attn_store import (
    AttentionStack,
    LayerTensor,
    StackError,
    StackFormatError,
    StackValidationError,
    read_stack,
    validate_stack,
    write_stack,
)
from .aggregator import (
    AggregatedTensor,
    CustomWeights,
    OnlyResolution,
    Proportional,
    WeightScheme,
    aggregate,
    compute_weights,
    upsample_map,
)
from .merger import (
    AnchorGrid,
    MergeConfig,
    ProposalList,
    first_merge,
    generate_anchor_grid,
    kl_distance,
    merge_iteration,
    run_merging,
)
from .segmenter import PipelineParams, SegmentationMask, nms_assign, segment
from .evaluator import (
    IGNORE_LABEL,
    EvalReport,
    ImageScore,
    confusion,
    evaluate_dataset,
    hungarian_match,
    score,
)
from .baselines import KMeansConfig, kmeans_lloyd, kmeans_segment
from .synth_oracle import (
    SynthSpec,
    downsample_labels,
    generate_stack,
    min_cross_distance,
    random_label_map,
)
from .render import (
    label_palette,
    load_image_rgb,
    load_label_png,
    render_overlay,
    save_mask_png,
)
from .report import render_metrics_figure, write_metrics_csv

__version__ = "0.1.0"

__all__ = [
    "AttentionStack",
    "LayerTensor",
    "StackError",
    "StackFormatError",
    "StackValidationError",
    "read_stack",
    "validate_stack",
    "write_stack",
    "AggregatedTensor",
    "Proportional",
    "OnlyResolution",
    "CustomWeights",
    "WeightScheme",
    "aggregate",
    "compute_weights",
    "upsample_map",
    "AnchorGrid",
    "MergeConfig",
    "ProposalList",
    "generate_anchor_grid",
    "kl_distance",
    "first_merge",
    "merge_iteration",
    "run_merging",
    "PipelineParams",
    "SegmentationMask",
    "nms_assign",
    "segment",
    "IGNORE_LABEL",
    "EvalReport",
    "ImageScore",
    "confusion",
    "hungarian_match",
    "score",
    "evaluate_dataset",
    "KMeansConfig",
    "kmeans_lloyd",
    "kmeans_segment",
    "SynthSpec",
    "random_label_map",
    "downsample_labels",
    "generate_stack",
    "min_cross_distance",
    "label_palette",
    "save_mask_png",
    "load_label_png",
    "load_image_rgb",
    "render_overlay",
    "write_metrics_csv",
    "render_metrics_figure",
    "__version__",
]
