"""PNG round trips and overlay blending."""

import numpy as np
import pytest
from PIL import Image

from diffseg import (
    label_palette,
    load_image_rgb,
    load_label_png,
    render_overlay,
    save_mask_png,
)


def test_palette_is_stable_and_distinct():
    a = label_palette()
    b = label_palette()
    assert np.array_equal(a, b)
    assert a.shape == (256, 3)
    assert a.dtype == np.uint8
    # golden-ratio stepping keeps nearby ids visually apart
    rows = {row.tobytes() for row in a[:64]}
    assert len(rows) == 64


def test_mask_png_round_trip(tmp_path):
    labels = np.arange(20, dtype=np.int32).reshape(4, 5) % 7
    path = tmp_path / "mask.png"
    save_mask_png(labels, path)
    back = load_label_png(path)
    assert back.dtype == np.uint8
    assert np.array_equal(back, labels.astype(np.uint8))


def test_save_rejects_out_of_range_labels(tmp_path):
    with pytest.raises(ValueError, match="8 bits"):
        save_mask_png(np.array([[0, 256]]), tmp_path / "bad.png")
    with pytest.raises(ValueError, match="8 bits"):
        save_mask_png(np.array([[-1, 0]]), tmp_path / "bad.png")
    with pytest.raises(ValueError, match="2D"):
        save_mask_png(np.zeros((2, 2, 2), dtype=np.uint8), tmp_path / "bad.png")


def test_load_accepts_palette_png(tmp_path):
    labels = np.array([[0, 1], [2, 3]], dtype=np.uint8)
    img = Image.fromarray(labels, mode="L").convert("P")
    path = tmp_path / "pal.png"
    img.save(path, format="PNG")
    assert np.array_equal(load_label_png(path), labels)


def test_load_rejects_rgb_png(tmp_path):
    path = tmp_path / "rgb.png"
    Image.new("RGB", (4, 4), (10, 20, 30)).save(path, format="PNG")
    with pytest.raises(ValueError, match="single-channel"):
        load_label_png(path)


def test_load_image_rgb_converts_grayscale(tmp_path):
    path = tmp_path / "gray.png"
    Image.fromarray(np.full((3, 3), 77, dtype=np.uint8), mode="L").save(path)
    rgb = load_image_rgb(path)
    assert rgb.shape == (3, 3, 3)
    assert np.all(rgb == 77)


def test_overlay_blends_half_and_half():
    image = np.full((2, 2, 3), 100, dtype=np.uint8)
    labels = np.zeros((2, 2), dtype=np.int32)
    color = label_palette()[0].astype(np.float64)
    out = render_overlay(image, labels, alpha=0.5)
    expected = np.round(0.5 * 100 + 0.5 * color).astype(np.uint8)
    assert np.array_equal(out[0, 0], expected)


def test_overlay_alpha_extremes():
    image = np.full((2, 2, 3), 42, dtype=np.uint8)
    labels = np.ones((2, 2), dtype=np.int32)
    assert np.array_equal(render_overlay(image, labels, alpha=0.0), image)
    pure = render_overlay(image, labels, alpha=1.0)
    assert np.array_equal(pure[0, 0], label_palette()[1])


def test_overlay_resizes_label_grid():
    image = np.zeros((4, 4, 3), dtype=np.uint8)
    labels = np.array([[0, 1], [2, 3]], dtype=np.int32)
    out = render_overlay(image, labels, alpha=1.0)
    palette = label_palette()
    lifted = np.kron(labels, np.ones((2, 2), dtype=np.int32))
    assert np.array_equal(out, palette[lifted])


def test_overlay_input_validation():
    labels = np.zeros((2, 2), dtype=np.int32)
    with pytest.raises(ValueError, match="RGB"):
        render_overlay(np.zeros((2, 2)), labels)
    with pytest.raises(ValueError, match="alpha"):
        render_overlay(np.zeros((2, 2, 3), dtype=np.uint8), labels, alpha=1.5)
