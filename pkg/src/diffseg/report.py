"""Evaluation report artifacts: CSV table and summary figures.

The eval command emits three things next to each other: the JSON report,
a per-image CSV for spreadsheet work, and a rendered PNG chart of the
per-image scores with the aggregates drawn as reference lines. Rendering
uses the Agg backend, so it works headless.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluator import EvalReport

__all__ = ["write_metrics_csv", "render_metrics_figure"]


def write_metrics_csv(report: EvalReport, path: str | Path) -> None:
    """One row per image: source_id, acc, miou, labels matched, skipped."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id", "acc", "miou", "matched_labels", "skipped"])
        for image in report.per_image:
            writer.writerow([
                image.source_id,
                "" if image.acc is None else f"{image.acc:.6f}",
                "" if image.miou is None else f"{image.miou:.6f}",
                len(image.assignment),
                int(image.skipped),
            ])
        writer.writerow(["aggregate", f"{report.acc:.6f}", f"{report.miou:.6f}",
                         "", ""])


def render_metrics_figure(report: EvalReport, path: str | Path) -> None:
    """Grouped per-image bar chart of acc and mIoU with aggregate lines."""
    scored = [s for s in report.per_image if not s.skipped]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(scored) + 2.0), 4.0))
    if scored:
        xs = range(len(scored))
        width = 0.38
        ax.bar(
            [x - width / 2 for x in xs],
            [s.acc for s in scored],
            width=width,
            label="acc",
            color="#4878cf",
        )
        ax.bar(
            [x + width / 2 for x in xs],
            [s.miou for s in scored],
            width=width,
            label="mIoU",
            color="#6acc65",
        )
        ax.axhline(report.acc, color="#4878cf", linestyle="--", linewidth=1,
                   label=f"acc aggregate {report.acc:.3f}")
        ax.axhline(report.miou, color="#6acc65", linestyle="--", linewidth=1,
                   label=f"mIoU aggregate {report.miou:.3f}")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(
            [s.source_id for s in scored], rotation=45, ha="right", fontsize=8
        )
    else:
        ax.text(0.5, 0.5, "no scored images", ha="center", va="center",
                transform=ax.transAxes)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"evaluation over {report.images_scored} image(s)")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
