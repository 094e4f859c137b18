"""Mask serialization and visualization helpers.

Masks travel as single-channel 8-bit PNGs whose pixel value is the label
id, so they round-trip losslessly and diff byte-for-byte. Overlays blend
the source image with a fixed 256-color palette built by golden-ratio
hue stepping; the palette depends on nothing but the label id, so colors
are stable across runs and machines.
"""

from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "label_palette",
    "save_mask_png",
    "load_label_png",
    "load_image_rgb",
    "render_overlay",
]

_GOLDEN_RATIO_CONJUGATE = 0.6180339887498949


def label_palette(num_colors: int = 256) -> np.ndarray:
    """(num_colors, 3) uint8 palette; well-separated hues, fixed forever."""
    colors = np.empty((num_colors, 3), dtype=np.uint8)
    for i in range(num_colors):
        hue = (i * _GOLDEN_RATIO_CONJUGATE) % 1.0
        r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
        colors[i] = (round(r * 255), round(g * 255), round(b * 255))
    return colors


def save_mask_png(labels: np.ndarray, path: str | Path) -> None:
    """Write a label map as a single-channel 8-bit PNG."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"expected a 2D label map, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError(
            f"labels must fit 8 bits, got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    Image.fromarray(labels.astype(np.uint8), mode="L").save(path, format="PNG")


def load_label_png(path: str | Path) -> np.ndarray:
    """Read a label map from an 8-bit single-channel or palette PNG."""
    with Image.open(path) as img:
        if img.mode == "P":
            # palette indices are the labels
            return np.asarray(img, dtype=np.uint8).copy()
        if img.mode != "L":
            raise ValueError(
                f"{path}: expected a single-channel label PNG, got mode "
                f"{img.mode}"
            )
        return np.asarray(img, dtype=np.uint8).copy()


def load_image_rgb(path: str | Path) -> np.ndarray:
    """Read any raster image as (h, w, 3) uint8 RGB."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB")).copy()


def render_overlay(
    image: np.ndarray, labels: np.ndarray, alpha: float = 0.5
) -> np.ndarray:
    """Blend segment colors over an RGB image.

    The label map is nearest-resized to the image size when they differ.
    Returns (h, w, 3) uint8.
    """
    from .resample import nearest_resize

    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB image, got {image.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    labels = np.asarray(labels)
    if labels.shape != image.shape[:2]:
        labels = nearest_resize(labels, image.shape[0], image.shape[1])
    colors = label_palette()[labels % 256]
    blended = (1.0 - alpha) * image.astype(np.float64) + alpha * colors
    return np.clip(np.round(blended), 0, 255).astype(np.uint8)
