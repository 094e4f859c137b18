"""Command-line interface.

Four subcommands:

* ``segment``  attention stack directory -> mask PNG, optional overlay,
  and a JSON sidecar with parameters, label bookkeeping, and timings.
* ``eval``     directories of predicted and ground-truth mask PNGs ->
  JSON report plus a CSV table and a rendered metrics chart.
* ``synth``    label PNG -> synthetic attention stack with that ground
  truth, for end-to-end checks without a diffusion model.
* ``kmeans``   clustering baseline over the aggregated field.

Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 bad flags.
Set ``DIFFSEG_LOG`` to a level name (DEBUG, INFO, ...) for diagnostics.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .aggregator import (
    CustomWeights,
    OnlyResolution,
    Proportional,
    WeightScheme,
    aggregate,
)
from .attn_store import StackError, read_stack, write_stack
from .baselines import KMeansConfig, kmeans_segment
from .evaluator import IGNORE_LABEL, evaluate_dataset
from .render import load_image_rgb, load_label_png, render_overlay, save_mask_png
from .report import render_metrics_figure, write_metrics_csv
from .segmenter import PipelineParams, segment
from .synth_oracle import SynthSpec, downsample_labels, generate_stack

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_USAGE = 3

_PRESET_TAU = {"coco": 1.1, "cityscapes": 0.9}

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with code 3."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configure_logging() -> None:
    level_name = os.environ.get("DIFFSEG_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s"
    )


def _parse_weight_scheme(text: str) -> WeightScheme:
    if text == "propto":
        return Proportional()
    if text.startswith("only:"):
        try:
            return OnlyResolution(int(text.split(":", 1)[1]))
        except ValueError:
            raise ValueError(f"bad resolution in weight scheme {text!r}")
    if text.startswith("custom:"):
        path = Path(text.split(":", 1)[1])
        table = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(table, dict):
            raise ValueError(f"{path}: custom weights must be a JSON object")
        return CustomWeights({int(k): float(v) for k, v in table.items()})
    raise ValueError(
        f"unknown weight scheme {text!r}; use propto, only:<res>, or "
        f"custom:<file.json>"
    )


def _parse_tau(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"tau must be a number or 'inf', got {text!r}")
    return value


def _tau_for_json(tau: float) -> float | str:
    return tau if math.isfinite(tau) else "inf"


def build_parser() -> _Parser:
    parser = _Parser(
        prog="diffseg",
        description="Unsupervised segmentation from diffusion self-attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_seg = sub.add_parser("segment", help="segment attention stacks")
    p_seg.add_argument("attn_dirs", nargs="+", metavar="ATTN_DIR",
                       help="attention stack directories")
    p_seg.add_argument("--out-prefix", required=True,
                       help="output path prefix; per-input suffixes are "
                            "appended when multiple stacks are given")
    p_seg.add_argument("--weights", default="propto",
                       help="layer weighting: propto, only:<res>, or "
                            "custom:<file.json> (default propto)")
    p_seg.add_argument("--anchors", type=int, default=16, metavar="M",
                       help="anchor grid side; M*M anchors (default 16)")
    p_seg.add_argument("--iterations", type=int, default=3, metavar="N",
                       help="total merge iterations (default 3)")
    tau_group = p_seg.add_mutually_exclusive_group()
    tau_group.add_argument("--tau", default=None,
                           help="merge distance threshold; accepts 'inf' "
                                "(default 1.0)")
    tau_group.add_argument("--preset", choices=sorted(_PRESET_TAU),
                           help="named tau preset: "
                                + ", ".join(f"{k} ({v})"
                                            for k, v in sorted(_PRESET_TAU.items())))
    p_seg.add_argument("--size", type=int, default=None, metavar="S",
                       help="square output size (default: the stack's "
                            "recorded image size)")
    p_seg.add_argument("--image", default=None,
                       help="source image for an overlay PNG (single stack only)")
    p_seg.add_argument("--expect-time-step", type=int, default=None,
                       help="reject stacks captured at any other time step")
    p_seg.add_argument("--jobs", type=int, default=1,
                       help="parallel workers across stacks (default 1)")
    p_seg.set_defaults(func=cmd_segment)

    p_eval = sub.add_parser("eval", help="score masks against ground truth")
    p_eval.add_argument("--pred", required=True, help="directory of predicted masks")
    p_eval.add_argument("--gt", required=True, help="directory of ground-truth masks")
    p_eval.add_argument("--report", required=True,
                        help="output JSON path; a CSV table and a metrics "
                             "chart are written beside it")
    p_eval.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="build a synthetic attention stack")
    p_synth.add_argument("--labels", required=True,
                         help="label PNG defining the ground-truth segments")
    p_synth.add_argument("--out", required=True, help="output stack directory")
    p_synth.add_argument("--epsilon", type=float, default=0.05,
                         help="uniform background mass in each map (default 0.05)")
    p_synth.add_argument("--resolutions", default="64,32,16,8",
                         help="comma-separated layer resolutions "
                              "(default 64,32,16,8)")
    p_synth.add_argument("--seed", type=int, default=0,
                         help="jitter seed (default 0)")
    p_synth.add_argument("--noise", type=float, default=0.0,
                         help="multiplicative jitter amplitude in [0, 1) "
                              "(default 0)")
    p_synth.set_defaults(func=cmd_synth)

    p_km = sub.add_parser("kmeans", help="k-means clustering baseline")
    p_km.add_argument("attn_dir", metavar="ATTN_DIR",
                      help="attention stack directory")
    p_km.add_argument("--out-prefix", required=True, help="output path prefix")
    k_group = p_km.add_mutually_exclusive_group(required=True)
    k_group.add_argument("--clusters", type=int, default=None,
                         help="number of clusters")
    k_group.add_argument("--clusters-from-gt", default=None, metavar="GT_PNG",
                         help="take the cluster count from a ground-truth "
                              "mask's class count")
    p_km.add_argument("--weights", default="propto",
                      help="layer weighting (default propto)")
    p_km.add_argument("--seed", type=int, default=0,
                      help="clustering seed (default 0)")
    p_km.add_argument("--size", type=int, default=None, metavar="S",
                      help="square output size (default: the stack's "
                           "recorded image size)")
    p_km.add_argument("--image", default=None,
                      help="source image for an overlay PNG")
    p_km.set_defaults(func=cmd_kmeans)

    return parser


def _segment_one(
    attn_dir: Path, prefix: Path, args: argparse.Namespace, tau: float
) -> dict:
    stack = read_stack(attn_dir)
    params = PipelineParams(
        weight_scheme=_parse_weight_scheme(args.weights),
        anchor_grid_side=args.anchors,
        merge_iterations=args.iterations,
        tau=tau,
        output_size=(args.size, args.size) if args.size else None,
        expected_time_step=args.expect_time_step,
    )
    mask = segment(stack, params)

    prefix.parent.mkdir(parents=True, exist_ok=True)
    mask_path = Path(f"{prefix}_mask.png")
    save_mask_png(mask.labels, mask_path)
    overlay_path = None
    if args.image:
        image = load_image_rgb(args.image)
        overlay_path = Path(f"{prefix}_overlay.png")
        overlay = render_overlay(image, mask.labels)
        from PIL import Image

        Image.fromarray(overlay).save(overlay_path, format="PNG")

    out_h, out_w = mask.labels.shape
    meta = {
        "source_id": stack.source_id,
        "time_step": stack.time_step,
        "image_size": [stack.image_height, stack.image_width],
        "params": {
            "weights": args.weights,
            "anchors": args.anchors,
            "iterations": args.iterations,
            "tau": _tau_for_json(tau),
            "output_size": [out_h, out_w],
        },
        "num_proposals": len(mask.proposals) if mask.proposals else None,
        "num_labels": mask.num_labels,
        "proposal_index": mask.proposal_index.tolist(),
        "timings_s": {k: round(v, 4) for k, v in (mask.timings or {}).items()},
        "outputs": {
            "mask": mask_path.name,
            "overlay": overlay_path.name if overlay_path else None,
        },
    }
    meta_path = Path(f"{prefix}_meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    logger.info("%s: %d labels -> %s", attn_dir, mask.num_labels, mask_path)
    return meta


def cmd_segment(args: argparse.Namespace) -> int:
    if args.tau is not None:
        tau = _parse_tau(args.tau)
    elif args.preset:
        tau = _PRESET_TAU[args.preset]
    else:
        tau = 1.0

    dirs = [Path(d) for d in args.attn_dirs]
    if args.image and len(dirs) > 1:
        raise ValueError("--image works with a single stack only")
    if args.jobs < 1:
        raise ValueError(f"--jobs must be >= 1, got {args.jobs}")

    if len(dirs) == 1:
        prefixes = [Path(args.out_prefix)]
    else:
        prefixes = [Path(f"{args.out_prefix}_{d.name}") for d in dirs]
        if len(set(prefixes)) != len(prefixes):
            raise ValueError(
                "stack directory names collide; cannot derive distinct "
                "output prefixes"
            )

    if args.jobs == 1 or len(dirs) == 1:
        for d, prefix in zip(dirs, prefixes):
            _segment_one(d, prefix, args, tau)
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_segment_one, d, prefix, args, tau)
                for d, prefix in zip(dirs, prefixes)
            ]
            for future in futures:
                future.result()
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    if not pred_dir.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_dir}")
    if not gt_dir.is_dir():
        raise FileNotFoundError(f"ground-truth directory not found: {gt_dir}")

    gt_files = sorted(gt_dir.glob("*.png"))
    pairs = []
    ids = []
    skipped_files = []
    for gt_path in gt_files:
        pred_path = pred_dir / gt_path.name
        if not pred_path.is_file():
            skipped_files.append(gt_path.name)
            continue
        pairs.append((load_label_png(pred_path), load_label_png(gt_path)))
        ids.append(gt_path.stem)
    for name in skipped_files:
        logger.warning("no prediction for %s; skipping", name)
    pred_only = sorted(
        p.name for p in pred_dir.glob("*.png")
        if not (gt_dir / p.name).is_file()
    )
    for name in pred_only:
        logger.warning("no ground truth for %s; skipping", name)
    skipped_files.extend(pred_only)
    if not pairs:
        raise ValueError(
            f"no filenames shared between {pred_dir} and {gt_dir}"
        )

    report = evaluate_dataset(pairs, ids=ids)
    payload = report.to_dict()
    payload["skipped_files"] = skipped_files

    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    csv_path = report_path.with_suffix(".csv")
    write_metrics_csv(report, csv_path)
    figure_path = report_path.with_name(report_path.stem + "_metrics.png")
    render_metrics_figure(report, figure_path)

    print(f"acc={report.acc:.4f} miou={report.miou:.4f} "
          f"images={report.images_scored}")
    print(f"report: {report_path}\ncsv: {csv_path}\nfigure: {figure_path}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if args.epsilon <= 0:
        raise ValueError(
            "epsilon must be > 0; zero-background maps make map distances "
            "degenerate"
        )
    try:
        resolutions = tuple(
            int(r) for r in args.resolutions.split(",") if r.strip()
        )
    except ValueError:
        raise ValueError(f"bad --resolutions value {args.resolutions!r}")
    if not resolutions:
        raise ValueError("at least one resolution is required")

    raw = load_label_png(args.labels)
    base = max(resolutions)
    if raw.shape[0] != raw.shape[1]:
        raise ValueError(f"label PNG must be square, got {raw.shape}")
    # Remap arbitrary pixel values to consecutive segment ids.
    values, labels = np.unique(raw, return_inverse=True)
    labels = labels.reshape(raw.shape).astype(np.int64)
    if raw.shape[0] != base:
        if raw.shape[0] % base != 0:
            raise ValueError(
                f"label PNG size {raw.shape[0]} is not a multiple of the "
                f"base resolution {base}"
            )
        labels = downsample_labels(labels, base)

    spec = SynthSpec(
        label_map=labels,
        resolutions=resolutions,
        epsilon=args.epsilon,
        seed=args.seed,
        noise=args.noise,
    )
    stack = generate_stack(spec)
    out_dir = Path(args.out)
    write_stack(stack, out_dir)
    save_mask_png(labels, out_dir / "label_map.png")
    print(f"wrote {len(stack.layers)}-layer stack "
          f"({len(values)} segments) to {out_dir}")
    return EXIT_OK


def cmd_kmeans(args: argparse.Namespace) -> int:
    if args.clusters is not None:
        k = args.clusters
    else:
        gt = load_label_png(args.clusters_from_gt)
        classes = np.unique(gt[gt != IGNORE_LABEL])
        if len(classes) == 0:
            raise ValueError(
                f"{args.clusters_from_gt}: every pixel is ignore-labeled"
            )
        k = len(classes)

    stack = read_stack(args.attn_dir)
    field = aggregate(stack, _parse_weight_scheme(args.weights))
    size = args.size or stack.image_height
    out_w = args.size or stack.image_width
    config = KMeansConfig(num_clusters=k, seed=args.seed)
    mask = kmeans_segment(field, config, out_h=size, out_w=out_w)

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    mask_path = Path(f"{prefix}_mask.png")
    save_mask_png(mask.labels, mask_path)
    overlay_name = None
    if args.image:
        image = load_image_rgb(args.image)
        overlay = render_overlay(image, mask.labels)
        from PIL import Image

        overlay_path = Path(f"{prefix}_overlay.png")
        Image.fromarray(overlay).save(overlay_path, format="PNG")
        overlay_name = overlay_path.name

    meta = {
        "source_id": stack.source_id,
        "params": {
            "clusters": k,
            "seed": args.seed,
            "weights": args.weights,
            "output_size": list(mask.labels.shape),
        },
        "num_labels": mask.num_labels,
        "outputs": {"mask": mask_path.name, "overlay": overlay_name},
    }
    with open(f"{prefix}_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    print(f"wrote {mask.num_labels}-label mask to {mask_path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except StackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
