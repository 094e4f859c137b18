"""Label-agnostic scoring of predicted masks against ground truth.

Predicted labels carry no semantics, so each image is scored after a
one-to-one Hungarian matching between predicted labels and ground-truth
classes that maximizes the total matched pixel count. Accuracy is the
matched fraction of non-ignore pixels. IoU is computed per ground-truth
class, with unmatched classes scoring 0, and mIoU averages over the
classes present in the image. Pixels labeled ``IGNORE_LABEL`` in the
ground truth never count anywhere.

Dataset aggregation is pixel-weighted for accuracy (total matched over
total valid) and unweighted over images for mIoU. Images whose ground
truth is entirely ignored are skipped in the aggregates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .resample import nearest_resize

__all__ = [
    "IGNORE_LABEL",
    "ImageScore",
    "EvalReport",
    "confusion",
    "hungarian_match",
    "score",
    "evaluate_dataset",
]

IGNORE_LABEL = 255


@dataclass
class ImageScore:
    """Scores for one image; ``skipped`` marks all-ignore ground truth."""

    source_id: str
    acc: float | None
    miou: float | None
    assignment: dict[int, int]  # predicted label -> ground-truth class value
    skipped: bool = False


@dataclass
class EvalReport:
    """Per-image scores plus dataset aggregates."""

    per_image: list[ImageScore]
    acc: float
    miou: float
    images_scored: int

    def to_dict(self) -> dict:
        return {
            "aggregate": {
                "acc": self.acc,
                "miou": self.miou,
                "images": self.images_scored,
            },
            "per_image": [
                {
                    "source_id": s.source_id,
                    "acc": s.acc,
                    "miou": s.miou,
                    "assignment": {str(k): v for k, v in s.assignment.items()},
                    "skipped": s.skipped,
                }
                for s in self.per_image
            ],
        }


def confusion(
    pred: np.ndarray, gt: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Pixel counts per (predicted label, ground-truth class).

    Returns ``(counts, gt_classes)`` where ``counts[p, c]`` is the number
    of non-ignore pixels predicted ``p`` with ground truth
    ``gt_classes[c]``. Rows cover ``0 .. pred.max()``; columns cover the
    distinct non-ignore classes actually present, in sorted order.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    valid = gt != IGNORE_LABEL
    p = pred[valid].ravel()
    g = gt[valid].ravel()
    if p.size == 0:
        return np.zeros((0, 0), dtype=np.int64), np.zeros(0, dtype=gt.dtype)
    if p.min() < 0:
        raise ValueError("predicted labels must be non-negative")
    gt_classes = np.unique(g)
    n_pred = int(p.max()) + 1
    n_gt = len(gt_classes)
    g_idx = np.searchsorted(gt_classes, g)
    counts = np.bincount(
        p.astype(np.int64) * n_gt + g_idx, minlength=n_pred * n_gt
    ).reshape(n_pred, n_gt)
    return counts, gt_classes


def hungarian_match(counts: np.ndarray) -> dict[int, int]:
    """One-to-one row/column matching maximizing total matched pixels.

    Returns ``{row: column}`` with ``min(rows, columns)`` pairs; the
    surplus side stays unmatched.
    """
    counts = np.asarray(counts)
    if counts.size == 0:
        return {}
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return {int(r): int(c) for r, c in zip(rows, cols)}


def score(counts: np.ndarray, assignment: dict[int, int]) -> tuple[float, float]:
    """Accuracy and mIoU of a confusion matrix under an assignment.

    Accuracy is matched pixels over all counted pixels. Each ground-truth
    column scores intersection over union against its matched row, or 0
    if unmatched; mIoU averages the columns with any pixels. Pixels of
    unmatched predictions enter the denominator of accuracy and the
    unions of whatever columns they overlap, but no intersection.
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        raise ValueError("confusion matrix has no counted pixels")
    row_total = counts.sum(axis=1)
    col_total = counts.sum(axis=0)
    col_to_row = {c: r for r, c in assignment.items()}

    matched = 0
    ious = []
    for c in range(counts.shape[1]):
        if col_total[c] == 0:
            continue
        r = col_to_row.get(c)
        if r is None:
            ious.append(0.0)
            continue
        inter = int(counts[r, c])
        matched += inter
        union = int(row_total[r]) + int(col_total[c]) - inter
        ious.append(inter / union if union > 0 else 0.0)
    acc = matched / total
    miou = float(np.mean(ious)) if ious else 0.0
    return acc, miou


def evaluate_dataset(
    pairs: list[tuple[np.ndarray, np.ndarray]],
    ids: list[str] | None = None,
) -> EvalReport:
    """Score a list of (pred, gt) label maps.

    Predictions whose shape differs from their ground truth are resized
    to it with nearest-neighbor sampling before scoring.
    """
    if ids is None:
        ids = [f"image_{k:03d}" for k in range(len(pairs))]
    if len(ids) != len(pairs):
        raise ValueError("ids and pairs must have equal length")

    per_image: list[ImageScore] = []
    total_valid = 0
    total_matched = 0
    mious = []
    for source_id, (pred, gt) in zip(ids, pairs):
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            pred = nearest_resize(pred, gt.shape[0], gt.shape[1])
        counts, gt_classes = confusion(pred, gt)
        if counts.size == 0 or counts.sum() == 0:
            per_image.append(ImageScore(source_id, None, None, {}, skipped=True))
            continue
        row_to_col = hungarian_match(counts)
        acc, miou = score(counts, row_to_col)
        assignment = {
            int(r): int(gt_classes[c]) for r, c in row_to_col.items()
        }
        per_image.append(ImageScore(source_id, acc, miou, assignment))
        total_valid += int(counts.sum())
        total_matched += int(sum(counts[r, c] for r, c in row_to_col.items()))
        mious.append(miou)

    agg_acc = total_matched / total_valid if total_valid else 0.0
    agg_miou = float(np.mean(mious)) if mious else 0.0
    return EvalReport(
        per_image=per_image,
        acc=agg_acc,
        miou=agg_miou,
        images_scored=len(mious),
    )
